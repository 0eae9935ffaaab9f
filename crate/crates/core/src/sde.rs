//! Scalar SDE models `dX = b(X) dt + σ(X) dW`, one-step schemes and path
//! simulation on Brownian grids.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::brownian::BrownianGrid;
use crate::error::{Error, Result};

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum Dynamics {
    /// `dX = σ X dW`
    Gbm { sigma: f64 },
    /// `dX = -sin X cos³X dt + cos²X dW`, solved by `arctan(W_t)` from 0.
    Arctan,
    Custom {
        drift: ScalarFn,
        diffusion: ScalarFn,
        diffusion_prime: Option<ScalarFn>,
    },
}

#[derive(Clone)]
enum Payoff {
    Power(i32),
    Cos,
    Custom(ScalarFn),
}

/// A scalar SDE together with the functional `f` whose expectation at the
/// horizon is estimated.
#[derive(Clone)]
pub struct SdeModel {
    name: String,
    dynamics: Dynamics,
    payoff: Payoff,
    x0: f64,
    horizon: f64,
    exact_value: Option<f64>,
}

impl fmt::Debug for SdeModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SdeModel")
            .field("name", &self.name)
            .field("x0", &self.x0)
            .field("horizon", &self.horizon)
            .field("exact_value", &self.exact_value)
            .finish_non_exhaustive()
    }
}

/// High-precision value of `E cos(arctan W_1) = E (1 + W_1²)^{-1/2}`.
pub const ARCTAN_COS_REFERENCE: f64 = 0.789_639_959_235_657_1;

impl SdeModel {
    /// Geometric Brownian motion without drift and payoff `x^power`.
    pub fn gbm(sigma: f64, x0: f64, horizon: f64, power: i32) -> Self {
        let exact = x0.powi(power) * (0.5 * (power * (power - 1)) as f64 * sigma * sigma * horizon).exp();
        Self {
            name: format!("gbm(sigma={sigma}, f=x^{power})"),
            dynamics: Dynamics::Gbm { sigma },
            payoff: Payoff::Power(power),
            x0,
            horizon,
            exact_value: Some(exact),
        }
    }

    /// The arctan model with payoff `cos x`, started at 0 on `[0, 1]`.
    pub fn arctan() -> Self {
        Self {
            name: "arctan".into(),
            dynamics: Dynamics::Arctan,
            payoff: Payoff::Cos,
            x0: 0.0,
            horizon: 1.0,
            exact_value: Some(ARCTAN_COS_REFERENCE),
        }
    }

    pub fn custom(
        name: impl Into<String>,
        drift: impl Fn(f64) -> f64 + Send + Sync + 'static,
        diffusion: impl Fn(f64) -> f64 + Send + Sync + 'static,
        payoff: impl Fn(f64) -> f64 + Send + Sync + 'static,
        x0: f64,
        horizon: f64,
    ) -> Self {
        Self {
            name: name.into(),
            dynamics: Dynamics::Custom {
                drift: Arc::new(drift),
                diffusion: Arc::new(diffusion),
                diffusion_prime: None,
            },
            payoff: Payoff::Custom(Arc::new(payoff)),
            x0,
            horizon,
            exact_value: None,
        }
    }

    /// Attaches σ′ to a custom model. Built-in models already carry it.
    pub fn with_diffusion_prime(mut self, d: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        if let Dynamics::Custom { diffusion_prime, .. } = &mut self.dynamics {
            *diffusion_prime = Some(Arc::new(d));
        }
        self
    }

    pub fn with_payoff(mut self, payoff: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        self.payoff = Payoff::Custom(Arc::new(payoff));
        self.exact_value = None;
        self
    }

    pub fn with_exact_value(mut self, v: Option<f64>) -> Self {
        self.exact_value = v;
        self
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn x0(&self) -> f64 {
        self.x0
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn exact_value(&self) -> Option<f64> {
        self.exact_value
    }

    /// Volatility parameter when the model is a GBM.
    pub fn gbm_sigma(&self) -> Option<f64> {
        match self.dynamics {
            Dynamics::Gbm { sigma } => Some(sigma),
            _ => None,
        }
    }

    /// Exponent when the payoff is a power `x^n`.
    pub fn payoff_power(&self) -> Option<i32> {
        match self.payoff {
            Payoff::Power(n) => Some(n),
            _ => None,
        }
    }

    #[inline]
    pub fn drift(&self, x: f64) -> f64 {
        match &self.dynamics {
            Dynamics::Gbm { .. } => 0.0,
            Dynamics::Arctan => {
                let (s, c) = x.sin_cos();
                -s * c * c * c
            }
            Dynamics::Custom { drift, .. } => drift(x),
        }
    }

    #[inline]
    pub fn diffusion(&self, x: f64) -> f64 {
        match &self.dynamics {
            Dynamics::Gbm { sigma } => sigma * x,
            Dynamics::Arctan => {
                let c = x.cos();
                c * c
            }
            Dynamics::Custom { diffusion, .. } => diffusion(x),
        }
    }

    pub fn has_diffusion_prime(&self) -> bool {
        !matches!(
            self.dynamics,
            Dynamics::Custom {
                diffusion_prime: None,
                ..
            }
        )
    }

    #[inline]
    pub fn diffusion_prime(&self, x: f64) -> Option<f64> {
        match &self.dynamics {
            Dynamics::Gbm { sigma } => Some(*sigma),
            Dynamics::Arctan => {
                let (s, c) = x.sin_cos();
                Some(-2.0 * c * s)
            }
            Dynamics::Custom { diffusion_prime, .. } => diffusion_prime.as_ref().map(|d| d(x)),
        }
    }

    #[inline]
    pub fn payoff(&self, x: f64) -> f64 {
        match &self.payoff {
            Payoff::Power(n) => x.powi(*n),
            Payoff::Cos => x.cos(),
            Payoff::Custom(f) => f(x),
        }
    }

    /// Number of steps of size `delta` covering the horizon.
    pub fn steps_for(&self, delta: f64) -> Result<usize> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(Error::InvalidStepSize(delta));
        }
        let j = (self.horizon / delta).round();
        if j < 1.0 || ((j * delta - self.horizon).abs() > 1e-9 * self.horizon) {
            return Err(Error::IncommensurateStep {
                horizon: self.horizon,
                delta,
            });
        }
        Ok(j as usize)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scheme {
    Euler,
    /// Milstein stepping. `weak_order` only labels the run; for the GBM the
    /// simplified second-order weak Taylor scheme is the same map.
    Milstein { weak_order: u8 },
}

impl Scheme {
    pub const MILSTEIN: Scheme = Scheme::Milstein { weak_order: 1 };
    pub const WEAK2: Scheme = Scheme::Milstein { weak_order: 2 };

    pub fn weak_order(&self) -> u8 {
        match self {
            Scheme::Euler => 1,
            Scheme::Milstein { weak_order } => *weak_order,
        }
    }

    pub fn is_milstein(&self) -> bool {
        matches!(self, Scheme::Milstein { .. })
    }

    /// Checks that the model supplies what this scheme needs.
    pub fn bind<'a>(&self, model: &'a SdeModel) -> Result<Stepper<'a>> {
        if self.is_milstein() && !model.has_diffusion_prime() {
            return Err(Error::MissingDiffusionDerivative(model.name().to_string()));
        }
        Ok(Stepper {
            model,
            milstein: self.is_milstein(),
        })
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scheme::Euler => write!(f, "euler"),
            Scheme::Milstein { weak_order: 1 } => write!(f, "milstein"),
            Scheme::Milstein { weak_order } => write!(f, "milstein(weak{weak_order})"),
        }
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "euler" => Ok(Scheme::Euler),
            "milstein" => Ok(Scheme::MILSTEIN),
            "weak2" | "weak-2" | "milstein-weak2" => Ok(Scheme::WEAK2),
            other => Err(Error::InvalidArgument(format!("unknown scheme `{other}`"))),
        }
    }
}

/// `x + b(x)Δ + σ(x)ΔW`
#[inline]
pub fn euler_step(model: &SdeModel, x: f64, dw: f64, delta: f64) -> f64 {
    x + model.drift(x) * delta + model.diffusion(x) * dw
}

/// `x + b(x)Δ + σ(x)ΔW + ½σ(x)σ′(x)(ΔW² − Δ)`
pub fn milstein_step(model: &SdeModel, x: f64, dw: f64, delta: f64) -> Result<f64> {
    let sp = model
        .diffusion_prime(x)
        .ok_or_else(|| Error::MissingDiffusionDerivative(model.name().to_string()))?;
    Ok(milstein_kernel(model, x, dw, delta, sp))
}

#[inline]
fn milstein_kernel(model: &SdeModel, x: f64, dw: f64, delta: f64, sp: f64) -> f64 {
    let s = model.diffusion(x);
    x + model.drift(x) * delta + s * dw + 0.5 * s * sp * (dw * dw - delta)
}

/// A scheme bound to a model that has been checked to support it.
#[derive(Clone, Copy)]
pub struct Stepper<'a> {
    model: &'a SdeModel,
    milstein: bool,
}

impl<'a> Stepper<'a> {
    pub fn model(&self) -> &'a SdeModel {
        self.model
    }

    #[inline]
    pub fn step(&self, x: f64, dw: f64, delta: f64) -> f64 {
        if self.milstein {
            // bind() guaranteed σ′ exists
            let sp = self.model.diffusion_prime(x).unwrap_or(0.0);
            milstein_kernel(self.model, x, dw, delta, sp)
        } else {
            euler_step(self.model, x, dw, delta)
        }
    }

    /// Terminal state after stepping through `increments` from `x`.
    #[inline]
    pub fn terminal(&self, mut x: f64, increments: &[f64], delta: f64) -> f64 {
        for &dw in increments {
            x = self.step(x, dw, delta);
        }
        x
    }

    /// Terminal state of the coarse leg driven by pairwise sums of the fine
    /// increments (identical arithmetic to [`BrownianGrid::coarsen`]).
    #[inline]
    pub fn terminal_coarse(&self, mut x: f64, fine_increments: &[f64], fine_delta: f64) -> f64 {
        let d = 2.0 * fine_delta;
        for p in fine_increments.chunks_exact(2) {
            x = self.step(x, p[0] + p[1], d);
        }
        x
    }

    /// Writes all states `x_0..x_J` into `out` (length `J + 1`).
    pub fn trajectory_into(&self, x0: f64, increments: &[f64], delta: f64, out: &mut [f64]) {
        debug_assert_eq!(out.len(), increments.len() + 1);
        out[0] = x0;
        for (j, &dw) in increments.iter().enumerate() {
            out[j + 1] = self.step(out[j], dw, delta);
        }
    }

    pub fn trajectory(&self, x0: f64, grid: &BrownianGrid) -> Vec<f64> {
        let mut out = vec![0.0; grid.steps() + 1];
        self.trajectory_into(x0, grid.increments(), grid.delta(), &mut out);
        out
    }
}

/// Fine and coarse trajectories driven by one Brownian sample.
#[derive(Debug, Clone, PartialEq)]
pub struct CoupledPath {
    pub fine_states: Vec<f64>,
    pub coarse_states: Option<Vec<f64>>,
    pub grid: BrownianGrid,
    pub payoff_fine: f64,
    pub payoff_coarse: Option<f64>,
}

impl CoupledPath {
    /// Scheme steps executed to produce this path.
    pub fn cost(&self) -> u64 {
        let coarse = self.coarse_states.as_ref().map_or(0, |c| c.len() - 1);
        (self.fine_states.len() - 1 + coarse) as u64
    }
}

/// Simulates the fine leg on `grid` and the coarse leg on `grid.coarsen()`.
pub fn simulate_coupled(model: &SdeModel, scheme: Scheme, grid: &BrownianGrid) -> Result<CoupledPath> {
    let stepper = scheme.bind(model)?;
    let coarse_grid = grid.coarsen()?;
    let fine_states = stepper.trajectory(model.x0(), grid);
    let coarse_states = stepper.trajectory(model.x0(), &coarse_grid);
    let payoff_fine = model.payoff(*fine_states.last().unwrap());
    let payoff_coarse = model.payoff(*coarse_states.last().unwrap());
    Ok(CoupledPath {
        fine_states,
        coarse_states: Some(coarse_states),
        grid: grid.clone(),
        payoff_fine,
        payoff_coarse: Some(payoff_coarse),
    })
}

/// Single-level path: the coarse leg is omitted.
pub fn simulate_path(model: &SdeModel, scheme: Scheme, grid: &BrownianGrid) -> Result<CoupledPath> {
    let stepper = scheme.bind(model)?;
    let fine_states = stepper.trajectory(model.x0(), grid);
    let payoff_fine = model.payoff(*fine_states.last().unwrap());
    Ok(CoupledPath {
        fine_states,
        coarse_states: None,
        grid: grid.clone(),
        payoff_fine,
        payoff_coarse: None,
    })
}

/// Problems with a closed-form reference expectation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ReferenceProblem {
    /// `E[X_T^4] = x0^4 exp(6σ²T)`
    GbmQuarticExact { x0: f64, sigma: f64, horizon: f64 },
    /// Euler mean `x0^4 (1 + 6Δσ² + 3σ⁴Δ²)^J`
    GbmQuarticEuler { x0: f64, sigma: f64, delta: f64, steps: usize },
    /// Milstein mean `x0^4 (3.75Δ⁴σ⁸ + 19Δ³σ⁶ + 18Δ²σ⁴ + 6Δσ² + 1)^J`
    GbmQuarticMilstein { x0: f64, sigma: f64, delta: f64, steps: usize },
    /// Euler mean `x0² (1 + σ²Δ)^J`
    GbmSquareEuler { x0: f64, sigma: f64, delta: f64, steps: usize },
    /// `E cos(arctan W_1)`
    ArctanCos,
}

pub fn gbm_quartic_euler_growth(sigma: f64, delta: f64) -> f64 {
    let s2d = sigma * sigma * delta;
    1.0 + 6.0 * s2d + 3.0 * s2d * s2d
}

pub fn gbm_quartic_milstein_growth(sigma: f64, delta: f64) -> f64 {
    let x = sigma * sigma * delta;
    3.75 * x.powi(4) + 19.0 * x.powi(3) + 18.0 * x * x + 6.0 * x + 1.0
}

pub fn reference_moment(problem: ReferenceProblem) -> f64 {
    use ReferenceProblem::*;
    match problem {
        GbmQuarticExact { x0, sigma, horizon } => x0.powi(4) * (6.0 * sigma * sigma * horizon).exp(),
        GbmQuarticEuler { x0, sigma, delta, steps } => {
            x0.powi(4) * gbm_quartic_euler_growth(sigma, delta).powi(steps as i32)
        }
        GbmQuarticMilstein { x0, sigma, delta, steps } => {
            x0.powi(4) * gbm_quartic_milstein_growth(sigma, delta).powi(steps as i32)
        }
        GbmSquareEuler { x0, sigma, delta, steps } => {
            x0 * x0 * (1.0 + sigma * sigma * delta).powi(steps as i32)
        }
        ArctanCos => ARCTAN_COS_REFERENCE,
    }
}

impl ReferenceProblem {
    /// Builds a problem from its tag, e.g. `gbm_quartic_euler`.
    pub fn from_tag(tag: &str, x0: f64, sigma: f64, delta: f64, steps: usize) -> Result<Self> {
        Ok(match tag {
            "gbm_quartic_exact" => ReferenceProblem::GbmQuarticExact {
                x0,
                sigma,
                horizon: delta * steps as f64,
            },
            "gbm_quartic_euler" => ReferenceProblem::GbmQuarticEuler { x0, sigma, delta, steps },
            "gbm_quartic_milstein" => ReferenceProblem::GbmQuarticMilstein { x0, sigma, delta, steps },
            "gbm_square_euler" => ReferenceProblem::GbmSquareEuler { x0, sigma, delta, steps },
            "arctan_cos" => ReferenceProblem::ArctanCos,
            other => return Err(Error::InvalidArgument(format!("unknown reference problem `{other}`"))),
        })
    }
}
