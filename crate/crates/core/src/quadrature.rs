//! Gauss–Hermite quadrature for expectations under the standard normal law.

use crate::error::{Error, Result};

/// Nodes and weights with `sum_i w_i g(x_i) ≈ E[g(Z)]`, `Z ~ N(0, 1)`.
///
/// Exact for polynomials of degree below `2n`.
#[derive(Debug, Clone)]
pub struct GaussHermite {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussHermite {
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("quadrature needs at least one node".into()));
        }
        if n > 512 {
            return Err(Error::InvalidArgument(format!("{n} nodes is beyond the supported range")));
        }
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = n.div_ceil(2);
        let nf = n as f64;
        let mut z = 0.0f64;
        for i in 0..m {
            // Initial guesses for the physicists' roots, largest first.
            z = match i {
                0 => (2.0 * nf + 1.0).sqrt() - 1.855_75 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
                1 => z - 1.14 * nf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * nodes[0],
                3 => 1.91 * z - 0.91 * nodes[1],
                _ => 2.0 * z - nodes[i - 2],
            };
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = orthonormal_physicists(n, z);
                dp = d;
                let z1 = z;
                z = z1 - p / d;
                if (z - z1).abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            let (_, d) = orthonormal_physicists(n, z);
            if d != 0.0 {
                dp = d;
            }
            nodes[i] = z;
            nodes[n - 1 - i] = -z;
            let w = 2.0 / (dp * dp);
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        // Convert from weight e^{-x^2} to the standard normal density.
        let sqrt_pi = std::f64::consts::PI.sqrt();
        let mut out_nodes: Vec<f64> = nodes.iter().map(|x| x * std::f64::consts::SQRT_2).collect();
        let mut out_weights: Vec<f64> = weights.iter().map(|w| w / sqrt_pi).collect();
        out_nodes.reverse();
        out_weights.reverse();
        Ok(Self {
            nodes: out_nodes,
            weights: out_weights,
        })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn expect<F: FnMut(f64) -> f64>(&self, mut g: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * g(x))
            .sum()
    }
}

// Orthonormal physicists' Hermite value and derivative at z (Numerical
// Recipes normalization, pi^{-1/4} leading term).
fn orthonormal_physicists(n: usize, z: f64) -> (f64, f64) {
    let pim4 = std::f64::consts::PI.powf(-0.25);
    let mut p1 = pim4;
    let mut p2 = 0.0;
    for j in 0..n {
        let p3 = p2;
        p2 = p1;
        let jf = j as f64;
        p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
    }
    let dp = (2.0 * n as f64).sqrt() * p2;
    (p1, dp)
}
