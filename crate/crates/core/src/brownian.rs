use crate::error::{Error, Result};
use crate::rng::SeedStream;

/// Brownian increments on a uniform grid of `J` steps of size `delta`.
#[derive(Debug, Clone, PartialEq)]
pub struct BrownianGrid {
    delta: f64,
    increments: Vec<f64>,
}

fn check_delta(delta: f64) -> Result<()> {
    if delta > 0.0 && delta.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidStepSize(delta))
    }
}

impl BrownianGrid {
    pub fn new(delta: f64, increments: Vec<f64>) -> Result<Self> {
        check_delta(delta)?;
        if increments.is_empty() {
            return Err(Error::ZeroSteps);
        }
        Ok(Self { delta, increments })
    }

    pub fn steps(&self) -> usize {
        self.increments.len()
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn increments(&self) -> &[f64] {
        &self.increments
    }

    pub fn horizon(&self) -> f64 {
        self.delta * self.steps() as f64
    }

    /// Pairwise sums of adjacent increments on a grid of twice the step size.
    pub fn coarsen(&self) -> Result<Self> {
        if !self.steps().is_multiple_of(2) {
            return Err(Error::OddStepCount(self.steps()));
        }
        let increments = self.increments.chunks_exact(2).map(|p| p[0] + p[1]).collect();
        Ok(Self {
            delta: 2.0 * self.delta,
            increments,
        })
    }
}

/// Draws `steps` independent `N(0, delta)` increments from `stream`.
pub fn sample_increments(stream: &SeedStream, steps: usize, delta: f64) -> Result<BrownianGrid> {
    if steps == 0 {
        return Err(Error::ZeroSteps);
    }
    check_delta(delta)?;
    let mut increments = vec![0.0; steps];
    fill_increments(stream, delta, &mut increments);
    Ok(BrownianGrid { delta, increments })
}

/// Allocation-free variant used by the samplers.
#[inline]
pub(crate) fn fill_increments(stream: &SeedStream, delta: f64, out: &mut [f64]) {
    stream.fill_standard_normal(out);
    let scale = delta.sqrt();
    for v in out.iter_mut() {
        *v *= scale;
    }
}
