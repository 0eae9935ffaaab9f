//! Chaos control variates `M_{K,Δ} = Σ_k Σ_j a_{k,j}(X_{j-1}) H_k(ΔW_j/√Δ)`.

use std::fmt;
use std::sync::Arc;

use crate::brownian::BrownianGrid;
use crate::error::{Error, Result};
use crate::hermite::{hermite_all, hermite_eval, HermiteOrder, MAX_HERMITE_ORDER};
use crate::quadrature::GaussHermite;
use crate::regression::FittedFamily;
use crate::sde::{gbm_quartic_euler_growth, gbm_quartic_milstein_growth, Scheme, SdeModel, Stepper};

type CoeffClosure = Arc<dyn Fn(usize, usize, f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub enum Coefficients {
    /// `a_{k,j}(y) = weights[k-1] · y^power · rho[j-1]`
    Separable {
        weights: Vec<f64>,
        power: i32,
        rho: Vec<f64>,
    },
    Fitted(FittedFamily),
    /// Arbitrary `(k, j, y) ↦ a_{k,j}(y)` with 1-based `k` and `j`.
    Closure(CoeffClosure),
}

impl fmt::Debug for Coefficients {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Coefficients::Separable { weights, power, .. } => f
                .debug_struct("Separable")
                .field("weights", weights)
                .field("power", power)
                .finish_non_exhaustive(),
            Coefficients::Fitted(fam) => f.debug_tuple("Fitted").field(fam).finish(),
            Coefficients::Closure(_) => f.write_str("Closure(..)"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ChaosControlVariate {
    order: usize,
    delta: f64,
    steps: usize,
    coeffs: Coefficients,
}

impl ChaosControlVariate {
    pub fn new(order: usize, delta: f64, steps: usize, coeffs: Coefficients) -> Result<Self> {
        if order == 0 || order > MAX_HERMITE_ORDER {
            return Err(Error::HermiteOrderTooLarge(order));
        }
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::InvalidStepSize(delta));
        }
        if steps == 0 {
            return Err(Error::ZeroSteps);
        }
        match &coeffs {
            Coefficients::Separable { weights, rho, .. } => {
                if weights.len() != order || rho.len() != steps {
                    return Err(Error::ShapeMismatch(format!(
                        "separable family has {} weights and {} step factors, expected {order} and {steps}",
                        weights.len(),
                        rho.len()
                    )));
                }
            }
            Coefficients::Fitted(fam) => {
                if fam.order() != order || fam.steps() != steps {
                    return Err(Error::ShapeMismatch(format!(
                        "fitted family is {}x{}, expected {order}x{steps}",
                        fam.order(),
                        fam.steps()
                    )));
                }
            }
            Coefficients::Closure(_) => {}
        }
        Ok(Self {
            order,
            delta,
            steps,
            coeffs,
        })
    }

    pub fn from_fn(
        order: usize,
        delta: f64,
        steps: usize,
        f: impl Fn(usize, usize, f64) -> f64 + Send + Sync + 'static,
    ) -> Result<Self> {
        Self::new(order, delta, steps, Coefficients::Closure(Arc::new(f)))
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn coefficients(&self) -> &Coefficients {
        &self.coeffs
    }

    /// The same family cut down to its first `order` chaos terms.
    pub fn truncated(&self, order: usize) -> Result<Self> {
        if order == 0 || order > self.order {
            return Err(Error::InvalidArgument(format!(
                "cannot truncate an order-{} control variate to order {order}",
                self.order
            )));
        }
        let coeffs = match &self.coeffs {
            Coefficients::Separable { weights, power, rho } => Coefficients::Separable {
                weights: weights[..order].to_vec(),
                power: *power,
                rho: rho.clone(),
            },
            Coefficients::Fitted(fam) => Coefficients::Fitted(fam.truncated(order)),
            Coefficients::Closure(c) => Coefficients::Closure(c.clone()),
        };
        Self::new(order, self.delta, self.steps, coeffs)
    }

    /// `a_{k,j}(x)`, 1-based indices.
    pub fn coefficient(&self, k: usize, j: usize, x: f64) -> f64 {
        assert!((1..=self.order).contains(&k) && (1..=self.steps).contains(&j));
        match &self.coeffs {
            Coefficients::Separable { weights, power, rho } => weights[k - 1] * x.powi(*power) * rho[j - 1],
            Coefficients::Fitted(fam) => fam.value(k, j, x),
            Coefficients::Closure(c) => c(k, j, x),
        }
    }

    /// Contribution `Σ_k a_{k,j}(x_prev) H_k(dw/√Δ)` of step `j` (1-based).
    #[inline]
    pub fn step_term(&self, j: usize, x_prev: f64, dw: f64) -> f64 {
        let mut h = [0.0; MAX_HERMITE_ORDER + 1];
        let h = &mut h[..=self.order];
        hermite_all(dw / self.delta.sqrt(), h);
        match &self.coeffs {
            Coefficients::Separable { weights, power, rho } => {
                let s: f64 = weights.iter().zip(&h[1..]).map(|(w, hk)| w * hk).sum();
                s * x_prev.powi(*power) * rho[j - 1]
            }
            Coefficients::Fitted(fam) => fam.step_term(j, x_prev, &h[1..]),
            Coefficients::Closure(c) => (1..=self.order).map(|k| c(k, j, x_prev) * h[k]).sum(),
        }
    }

    /// Per-order contributions `a_{k,j}(x_prev) H_k(dw/√Δ)` of step `j`,
    /// written to `out[k-1]` for `k = 1..=out.len()` (at most the order).
    pub fn step_terms(&self, j: usize, x_prev: f64, dw: f64, out: &mut [f64]) {
        let k_max = out.len().min(self.order);
        let mut h = [0.0; MAX_HERMITE_ORDER + 1];
        hermite_all(dw / self.delta.sqrt(), &mut h[..=k_max]);
        match &self.coeffs {
            Coefficients::Separable { weights, power, rho } => {
                let g = x_prev.powi(*power) * rho[j - 1];
                for k in 1..=k_max {
                    out[k - 1] = weights[k - 1] * g * h[k];
                }
            }
            _ => {
                for k in 1..=k_max {
                    out[k - 1] = self.coefficient(k, j, x_prev) * h[k];
                }
            }
        }
    }

    fn check_grid(&self, steps: usize, delta: f64) -> Result<()> {
        if steps != self.steps || (delta - self.delta).abs() > 1e-12 * self.delta {
            return Err(Error::ShapeMismatch(format!(
                "control variate built for J={} Δ={}, path has J={steps} Δ={delta}",
                self.steps, self.delta
            )));
        }
        Ok(())
    }

    /// Steps the scheme through `increments` while accumulating the control
    /// variate; returns `(X_T, M)`.
    #[inline]
    pub fn run_along(&self, stepper: &Stepper<'_>, x0: f64, increments: &[f64]) -> Result<(f64, f64)> {
        self.check_grid(increments.len(), self.delta)?;
        let mut x = x0;
        let mut m = 0.0;
        for (j, &dw) in increments.iter().enumerate() {
            m += self.step_term(j + 1, x, dw);
            x = stepper.step(x, dw, self.delta);
        }
        Ok((x, m))
    }
}

/// Evaluates `M_{K,Δ}` on a stored path.
pub fn cv_evaluate(cv: &ChaosControlVariate, path_states: &[f64], grid: &BrownianGrid) -> Result<f64> {
    cv.check_grid(grid.steps(), grid.delta())?;
    if path_states.len() != grid.steps() + 1 {
        return Err(Error::ShapeMismatch(format!(
            "{} states for a grid of {} steps",
            path_states.len(),
            grid.steps()
        )));
    }
    Ok(grid
        .increments()
        .iter()
        .enumerate()
        .map(|(j, &dw)| cv.step_term(j + 1, path_states[j], dw))
        .sum())
}

fn rho_table(growth: f64, steps: usize) -> Vec<f64> {
    (1..=steps).map(|j| growth.powi((steps - j) as i32)).collect()
}

fn check_family_args(delta: f64, steps: usize) -> Result<()> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(Error::InvalidStepSize(delta));
    }
    if steps == 0 {
        return Err(Error::ZeroSteps);
    }
    Ok(())
}

/// Pads or truncates `published` to `order` terms. Chaos terms beyond the
/// published list are zero for families whose decomposition terminates.
fn weights_for(
    family: &'static str,
    published: &[f64],
    order: usize,
    terminates: bool,
) -> Result<Vec<f64>> {
    let max = if terminates { MAX_HERMITE_ORDER } else { published.len() };
    if order == 0 || order > max {
        return Err(Error::ChaosOrderUnavailable {
            family,
            requested: order,
            max,
        });
    }
    let mut w = published.to_vec();
    w.resize(order, 0.0);
    Ok(w)
}

/// Euler GBM with `f(x) = x²`: the decomposition is exact at `K = 2`.
pub fn gbm_square_euler_coeffs(sigma: f64, delta: f64, steps: usize, order: usize) -> Result<ChaosControlVariate> {
    check_family_args(delta, steps)?;
    let sd = delta.sqrt();
    let published = [2.0 * sigma * sd, std::f64::consts::SQRT_2 * sigma * sigma * delta];
    let weights = weights_for("gbm_square_euler", &published, order, true)?;
    let rho = rho_table(1.0 + sigma * sigma * delta, steps);
    ChaosControlVariate::new(order, delta, steps, Coefficients::Separable { weights, power: 2, rho })
}

/// Euler GBM with `f(x) = x⁴`: the decomposition is exact at `K = 4`.
pub fn gbm_quartic_euler_coeffs(sigma: f64, delta: f64, steps: usize, order: usize) -> Result<ChaosControlVariate> {
    check_family_args(delta, steps)?;
    let sd = delta.sqrt();
    let (s2, s3, s4) = (sigma.powi(2), sigma.powi(3), sigma.powi(4));
    let published = [
        4.0 * (sigma * sd + 3.0 * s3 * delta * sd),
        6.0 * 2f64.sqrt() * (delta * s2 + s4 * delta * delta),
        4.0 * 6f64.sqrt() * delta * sd * s3,
        s4 * delta * delta * 2.0 * 6f64.sqrt(),
    ];
    let weights = weights_for("gbm_quartic_euler", &published, order, true)?;
    let rho = rho_table(gbm_quartic_euler_growth(sigma, delta), steps);
    ChaosControlVariate::new(order, delta, steps, Coefficients::Separable { weights, power: 4, rho })
}

/// Milstein GBM with `f(x) = x⁴`, first four chaos terms.
pub fn gbm_quartic_milstein_coeffs(sigma: f64, delta: f64, steps: usize, order: usize) -> Result<ChaosControlVariate> {
    check_family_args(delta, steps)?;
    let d = delta;
    let sd = d.sqrt();
    let s = |p: i32| sigma.powi(p);
    let published = [
        34.0 * d.powi(3) * sd * s(7) + 54.0 * d * d * sd * s(5) + 24.0 * d * sd * s(3) + 4.0 * sd * sigma,
        (34.0 * d.powi(4) * s(8) + 132.0 * d.powi(3) * s(6) + 84.0 * d * d * s(4) + 16.0 * d * s(2)) / 2f64.sqrt(),
        (234.0 * d.powi(3) * sd * s(7) + 252.0 * d * d * sd * s(5) + 60.0 * d * sd * s(3)) / 6f64.sqrt(),
        (234.0 * d.powi(4) * s(8) + 612.0 * d.powi(3) * s(6) + 204.0 * d * d * s(4)) / 24f64.sqrt(),
    ];
    let weights = weights_for("gbm_quartic_milstein", &published, order, false)?;
    let rho = rho_table(gbm_quartic_milstein_growth(sigma, delta), steps);
    ChaosControlVariate::new(order, delta, steps, Coefficients::Separable { weights, power: 4, rho })
}

/// Analytic family for a GBM model under `scheme`, if one is known.
pub fn analytic_coeffs(model: &SdeModel, scheme: Scheme, delta: f64, steps: usize, order: usize) -> Result<ChaosControlVariate> {
    let unsupported = || {
        Error::InvalidArgument(format!(
            "no analytic chaos coefficients for {} under {scheme}; supported: gbm x^2 (euler), gbm x^4 (euler, milstein)",
            model.name()
        ))
    };
    let sigma = model.gbm_sigma().ok_or_else(unsupported)?;
    match (model.payoff_power(), scheme) {
        (Some(2), Scheme::Euler) => gbm_square_euler_coeffs(sigma, delta, steps, order),
        (Some(4), Scheme::Euler) => gbm_quartic_euler_coeffs(sigma, delta, steps, order),
        (Some(4), Scheme::Milstein { .. }) => gbm_quartic_milstein_coeffs(sigma, delta, steps, order),
        _ => Err(unsupported()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CoefficientOracleConfig {
    quadrature_nodes: usize,
    max_steps: usize,
}

impl CoefficientOracleConfig {
    pub fn new(quadrature_nodes: usize, max_steps: usize) -> Result<Self> {
        if quadrature_nodes < 8 {
            return Err(Error::InvalidArgument(format!(
                "oracle needs at least 8 quadrature nodes, got {quadrature_nodes}"
            )));
        }
        if max_steps == 0 || max_steps > 4 {
            return Err(Error::InvalidArgument(format!("oracle depth must be in 1..=4, got {max_steps}")));
        }
        Ok(Self {
            quadrature_nodes,
            max_steps,
        })
    }

    pub fn quadrature_nodes(&self) -> usize {
        self.quadrature_nodes
    }

    pub fn max_steps(&self) -> usize {
        self.max_steps
    }
}

impl Default for CoefficientOracleConfig {
    fn default() -> Self {
        Self {
            quadrature_nodes: 32,
            max_steps: 4,
        }
    }
}

/// `a_{k,j}(x) = E[f(X_T) H_k(ΔW_j/√Δ) | X_{(j-1)Δ} = x]` by nested
/// Gauss–Hermite quadrature over the remaining increments.
#[allow(clippy::too_many_arguments)]
pub fn oracle_coefficient(
    model: &SdeModel,
    scheme: Scheme,
    cfg: &CoefficientOracleConfig,
    k: usize,
    j: usize,
    x: f64,
    delta: f64,
    steps: usize,
) -> Result<f64> {
    if steps > cfg.max_steps {
        return Err(Error::OracleTooDeep {
            steps,
            max: cfg.max_steps,
        });
    }
    if j == 0 || j > steps {
        return Err(Error::InvalidArgument(format!("step index {j} outside 1..={steps}")));
    }
    let order = HermiteOrder::new(k)?;
    let stepper = scheme.bind(model)?;
    let q = GaussHermite::new(cfg.quadrature_nodes)?;
    let sd = delta.sqrt();
    let remaining = steps - j;
    Ok(q
        .nodes()
        .iter()
        .zip(q.weights())
        .map(|(&z, &w)| {
            let y = stepper.step(x, sd * z, delta);
            w * hermite_eval(order, z) * conditional_value(&stepper, &q, y, remaining, delta)
        })
        .sum())
}

fn conditional_value(stepper: &Stepper<'_>, q: &GaussHermite, y: f64, remaining: usize, delta: f64) -> f64 {
    if remaining == 0 {
        return stepper.model().payoff(y);
    }
    let sd = delta.sqrt();
    q.nodes()
        .iter()
        .zip(q.weights())
        .map(|(&z, &w)| w * conditional_value(stepper, q, stepper.step(y, sd * z, delta), remaining - 1, delta))
        .sum()
}
