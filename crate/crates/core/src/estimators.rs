//! Single-level and multilevel estimators with and without chaos control
//! variates, sample allocation and cost accounting.
//!
//! Every level draws paths from its own stream `(experiment, level,
//! BATCH_EVALUATION, path)`. Paths are processed in fixed-size chunks whose
//! statistics are merged in a fixed tree order, so an estimate does not depend
//! on how many worker threads produced it.

use std::ops::Range;

use crate::brownian::fill_increments;
use crate::chaos::{analytic_coeffs, ChaosControlVariate};
use crate::error::{Error, Result};
use crate::exec::map_chunks;
use crate::regression::{build_regression_cv, select_basis_parameters, BasisSelection};
use crate::rng::{SeedStream, BATCH_EVALUATION, BATCH_TRAINING};
use crate::sde::{Scheme, SdeModel, Stepper};
use crate::stats::{pairwise_merge, RunningStats};

/// Deepest supported level (`2^MAX_LEVEL` steps per path).
pub const MAX_LEVEL: u32 = 24;

const CHUNK: u64 = 2048;

/// Rate parameters of the complexity analysis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rates {
    /// Weak order: bias `≲ Δ^α`.
    pub alpha: f64,
    /// Level-difference variance `≲ Δ^β`.
    pub beta: f64,
    /// Control-variate residual variance `≲ Δ^γ` with exact coefficients.
    pub gamma: f64,
    pub theta: f64,
    pub kappa1: f64,
    pub kappa2: f64,
    pub mu: f64,
}

impl Rates {
    /// Exact (analytic) coefficients: `θ = 1`, `κ₁ = κ₂ = 0`.
    pub fn analytic(alpha: f64, beta: f64, gamma: f64) -> Self {
        Self {
            alpha,
            beta,
            gamma,
            theta: 1.0,
            kappa1: 0.0,
            kappa2: 0.0,
            mu: f64::INFINITY,
        }
    }

    /// Coefficients from piecewise-polynomial regression of degree `p`:
    /// `θ = 2p/(2p+1) = 1 - ϰ`, `κ₁ = ϰ + θ/(θ+μ)`, `κ₂ = 1/(θ+μ)`.
    pub fn regression(alpha: f64, beta: f64, gamma: f64, degree: usize, mu: f64) -> Self {
        let theta = 2.0 * degree as f64 / (2.0 * degree as f64 + 1.0);
        let kappa = 1.0 - theta;
        let (k1, k2) = if mu.is_infinite() {
            (kappa, 0.0)
        } else {
            (kappa + theta / (theta + mu), 1.0 / (theta + mu))
        };
        Self {
            alpha,
            beta,
            gamma,
            theta,
            kappa1: k1,
            kappa2: k2,
            mu,
        }
    }

    fn theta_eff(&self) -> f64 {
        self.theta * (1.0 - self.kappa2)
    }

    /// `η = -2(κ₁ - θ(1-κ₂)) / (1 + κ₁ + θ(1-κ₂))`
    pub fn eta(&self) -> f64 {
        let te = self.theta_eff();
        -2.0 * (self.kappa1 - te) / (1.0 + self.kappa1 + te)
    }

    /// Exponent `e` in `Δ_{L0} = ε^e`.
    pub fn start_level_exponent(&self) -> f64 {
        let eta = self.eta();
        eta / (self.beta + 1.0 - 2.0 * self.kappa2 - eta)
    }

    /// Training paths `N ≍ Δ_{L0} (ε Δ_{L0})^{-2/(1+κ₁+θ(1-κ₂))}`.
    pub fn training_paths(&self, epsilon: f64, delta_l0: f64) -> f64 {
        delta_l0 * (epsilon * delta_l0).powf(-2.0 / (1.0 + self.kappa1 + self.theta_eff()))
    }

    /// Predicted exponent of `ε` in the cost of the control-variate MLMC
    /// estimator (negative).
    pub fn predicted_cost_exponent(&self) -> f64 {
        let te = self.theta_eff();
        let num = (2.0 * te - 2.0 * self.kappa1) * (self.beta - 1.0);
        -2.0 + num / self.denominator()
    }

    fn denominator(&self) -> f64 {
        let te = self.theta_eff();
        (self.beta + 1.0 - 2.0 * self.kappa2) * (1.0 + self.kappa1 + te) + 2.0 * self.kappa1 - 2.0 * te
    }

    /// Hypotheses of the complexity theorem that these rates violate.
    pub fn theorem_violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let te = self.theta_eff();
        if !(self.beta > 1.0) {
            out.push(format!("beta = {} is not above 1", self.beta));
        }
        if !(self.theta > self.kappa1 / (1.0 - self.kappa2)) {
            out.push(format!(
                "theta = {} does not exceed kappa1/(1-kappa2) = {}",
                self.theta,
                self.kappa1 / (1.0 - self.kappa2)
            ));
        }
        if !(self.denominator() > 0.0) {
            out.push("rate denominator is not positive".into());
        }
        if te > self.kappa1 {
            let need = self.beta - self.kappa2 + (self.beta + 1.0 - 2.0 * self.kappa2) * self.kappa1 / (te - self.kappa1);
            if self.gamma < need {
                out.push(format!("gamma = {} is below the required {need:.4}", self.gamma));
            }
        }
        out
    }

    /// Model variance of the control-variate level with `n` training paths
    /// (`n = None` for exact coefficients).
    fn start_level_variance(&self, delta: f64, n: Option<usize>) -> f64 {
        let estimation = match n {
            Some(n) => delta.powf(-1.0 + self.kappa2) * (delta / n as f64).powf(self.theta_eff()),
            None => 0.0,
        };
        estimation + delta.powf(self.gamma)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorConfig {
    /// `c` in the bias model `c Δ^α`; the finest level satisfies
    /// `c Δ_L^α ≤ ε/√2`.
    pub bias_constant: f64,
    /// `Δ_{L0} = c_start ε^e`.
    pub c_start: f64,
    /// Multiplier on the training-path formula.
    pub c_train: f64,
    /// Multiplier on the rate-model sample counts that size the pilot runs.
    pub pilot_scale: f64,
    /// Smallest pilot on any level.
    pub pilot_min: u64,
    pub max_level: u32,
    pub basis: BasisSelection,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            bias_constant: 1.0,
            c_start: 1.0,
            c_train: 1.0,
            pilot_scale: 1.0,
            pilot_min: 4,
            max_level: MAX_LEVEL,
            basis: BasisSelection::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelStats {
    pub level: u32,
    /// Fine steps per path on this level.
    pub steps: usize,
    pub mean: f64,
    pub variance: f64,
    pub samples: u64,
    /// Scheme steps executed on this level.
    pub cost_units: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelPlan {
    pub l0: u32,
    pub l: u32,
    pub n: Vec<u64>,
    pub n_train: usize,
    pub epsilon: f64,
    pub rates: Rates,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateReport {
    pub estimate: f64,
    /// Level costs plus `training_cost`.
    pub total_cost: u64,
    pub training_cost: u64,
    pub per_level: Vec<LevelStats>,
    pub target_epsilon: f64,
    pub plan: Option<LevelPlan>,
    pub warnings: Vec<String>,
}

impl EstimateReport {
    /// `Σ V_l / n_l`, the estimated variance of the estimate.
    pub fn estimator_variance(&self) -> f64 {
        self.per_level.iter().map(|s| s.variance / s.samples as f64).sum()
    }
}

/// What one sample on a level computes.
#[derive(Debug, Clone, Copy)]
pub enum LevelKind<'a> {
    /// `f(X_T)` on one grid.
    Single,
    /// `f(X_fine) - f(X_coarse)` with the coarse leg on pairwise-summed increments.
    Coupled,
    /// `f(X_T) - M_{K,Δ}`.
    ControlVariate(&'a ChaosControlVariate),
}

impl LevelKind<'_> {
    fn cost_per_sample(&self, steps: usize) -> u64 {
        match self {
            LevelKind::Coupled => (steps + steps / 2) as u64,
            _ => steps as u64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelSample {
    pub stats: RunningStats,
    pub cost: u64,
}

fn level_steps(level: u32) -> Result<usize> {
    if level > MAX_LEVEL {
        return Err(Error::LevelTooDeep(level));
    }
    Ok(1usize << level)
}

/// Samples paths `paths` on a grid of `steps` steps of size `delta`.
pub fn sample_paths(
    model: &SdeModel,
    scheme: Scheme,
    steps: usize,
    delta: f64,
    kind: LevelKind<'_>,
    stream: SeedStream,
    paths: Range<u64>,
) -> Result<LevelSample> {
    let stepper = scheme.bind(model)?;
    match kind {
        LevelKind::Coupled if !steps.is_multiple_of(2) => return Err(Error::OddStepCount(steps)),
        LevelKind::ControlVariate(cv) if cv.steps() != steps || (cv.delta() - delta).abs() > 1e-12 * delta => {
            return Err(Error::ShapeMismatch(format!(
                "control variate built for J={} Δ={}, level has J={steps} Δ={delta}",
                cv.steps(),
                cv.delta()
            )))
        }
        _ => {}
    }
    let n = paths.end.saturating_sub(paths.start);
    let start = paths.start;
    let parts = map_chunks(n, CHUNK, |r| {
        chunk_stats(model, &stepper, steps, delta, kind, &stream, start + r.start..start + r.end)
    });
    Ok(LevelSample {
        stats: pairwise_merge(&parts),
        cost: n * kind.cost_per_sample(steps),
    })
}

fn chunk_stats(
    model: &SdeModel,
    stepper: &Stepper<'_>,
    steps: usize,
    delta: f64,
    kind: LevelKind<'_>,
    stream: &SeedStream,
    paths: Range<u64>,
) -> RunningStats {
    let mut incs = vec![0.0; steps];
    let mut s = RunningStats::new();
    let x0 = model.x0();
    for i in paths {
        fill_increments(&stream.with_path(i), delta, &mut incs);
        let y = match kind {
            LevelKind::Single => model.payoff(stepper.terminal(x0, &incs, delta)),
            LevelKind::Coupled => {
                let fine = stepper.terminal(x0, &incs, delta);
                let coarse = stepper.terminal_coarse(x0, &incs, delta);
                model.payoff(fine) - model.payoff(coarse)
            }
            LevelKind::ControlVariate(cv) => {
                // shape checked by the caller
                let (x, m) = cv.run_along(stepper, x0, &incs).unwrap_or((f64::NAN, 0.0));
                model.payoff(x) - m
            }
        };
        s.push(y);
    }
    s
}

/// Samples paths `paths` on dyadic level `level` (`2^level` steps over the horizon).
pub fn sample_level(
    model: &SdeModel,
    scheme: Scheme,
    level: u32,
    kind: LevelKind<'_>,
    seed: SeedStream,
    paths: Range<u64>,
) -> Result<LevelSample> {
    let steps = level_steps(level)?;
    let delta = model.horizon() / steps as f64;
    let stream = seed.with_level(level).with_batch(BATCH_EVALUATION);
    sample_paths(model, scheme, steps, delta, kind, stream, paths)
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if epsilon > 0.0 && epsilon.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidEpsilon(epsilon))
    }
}

/// Smallest `n_l` with `Σ V_l/n_l ≤ ε²/2` in the cost-optimal proportion
/// `n_l ∝ √(V_l / C_l)`. Levels with zero variance get one sample.
pub fn allocate_samples_with_costs(variances: &[f64], costs: &[f64], epsilon: f64) -> Result<Vec<u64>> {
    check_epsilon(epsilon)?;
    if variances.len() != costs.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} variances and {} costs",
            variances.len(),
            costs.len()
        )));
    }
    if let Some(v) = variances.iter().find(|v| !(**v >= 0.0)) {
        return Err(Error::InvalidArgument(format!("negative variance {v}")));
    }
    if let Some(c) = costs.iter().find(|c| !(**c > 0.0)) {
        return Err(Error::InvalidArgument(format!("nonpositive cost {c}")));
    }
    let sum: f64 = variances.iter().zip(costs).map(|(v, c)| (v * c).sqrt()).sum();
    let budget = epsilon * epsilon / 2.0;
    Ok(variances
        .iter()
        .zip(costs)
        .map(|(v, c)| {
            if *v == 0.0 {
                1
            } else {
                ((v / c).sqrt() * sum / budget * (1.0 - 1e-12)).ceil().max(1.0) as u64
            }
        })
        .collect())
}

/// [`allocate_samples_with_costs`] with cost per sample `1/Δ_l`.
pub fn allocate_samples(variances: &[f64], deltas: &[f64], epsilon: f64) -> Result<Vec<u64>> {
    let costs: Vec<f64> = deltas.iter().map(|d| 1.0 / d).collect();
    allocate_samples_with_costs(variances, &costs, epsilon)
}

/// Finest dyadic level with `c Δ_L^α ≤ ε/√2`.
pub fn finest_level(horizon: f64, alpha: f64, epsilon: f64, cfg: &EstimatorConfig) -> Result<u32> {
    check_epsilon(epsilon)?;
    if !(alpha > 0.0) {
        return Err(Error::InvalidArgument(format!("weak order must be positive, got {alpha}")));
    }
    let target = (epsilon / (std::f64::consts::SQRT_2 * cfg.bias_constant)).powf(1.0 / alpha);
    let l = (horizon / target).log2().ceil().max(0.0);
    if l > cfg.max_level as f64 {
        return Err(Error::LevelTooDeep(l as u32));
    }
    Ok(l as u32)
}

/// Fixed-`n` single-level estimate of `E f(X_T)` (or of `E[f - M]` with a control variate).
pub fn smc(
    model: &SdeModel,
    scheme: Scheme,
    delta: f64,
    n: u64,
    cv: Option<&ChaosControlVariate>,
    seed: SeedStream,
) -> Result<EstimateReport> {
    if n < 2 {
        return Err(Error::InvalidArgument(format!("single-level estimate needs n >= 2, got {n}")));
    }
    let steps = model.steps_for(delta)?;
    let kind = cv.map_or(LevelKind::Single, LevelKind::ControlVariate);
    let stream = seed.with_batch(BATCH_EVALUATION);
    let s = sample_paths(model, scheme, steps, delta, kind, stream, 0..n)?;
    let level = LevelStats {
        level: 0,
        steps,
        mean: s.stats.mean(),
        variance: s.stats.variance(),
        samples: n,
        cost_units: s.cost,
    };
    Ok(EstimateReport {
        estimate: level.mean,
        total_cost: s.cost,
        training_cost: 0,
        per_level: vec![level],
        target_epsilon: f64::NAN,
        plan: None,
        warnings: Vec::new(),
    })
}

struct LevelSpec<'a> {
    level: u32,
    kind: LevelKind<'a>,
    model_variance: f64,
}

/// Pilot sized by the rate model, empirical allocation, then extension of
/// each level up to the larger of the two counts. Pilot samples are reused.
fn run_levels(
    model: &SdeModel,
    scheme: Scheme,
    epsilon: f64,
    specs: &[LevelSpec<'_>],
    cfg: &EstimatorConfig,
    seed: SeedStream,
) -> Result<(f64, Vec<LevelStats>, Vec<u64>)> {
    let steps: Vec<usize> = specs.iter().map(|s| level_steps(s.level)).collect::<Result<_>>()?;
    let costs: Vec<f64> = specs
        .iter()
        .zip(&steps)
        .map(|(s, &j)| s.kind.cost_per_sample(j) as f64)
        .collect();
    let model_vars: Vec<f64> = specs.iter().map(|s| s.model_variance).collect();
    let model_n = allocate_samples_with_costs(&model_vars, &costs, epsilon)?;
    let pilot: Vec<u64> = model_n
        .iter()
        .map(|&n| ((n as f64 * cfg.pilot_scale).ceil() as u64).max(cfg.pilot_min).max(2))
        .collect();

    let mut samples = Vec::with_capacity(specs.len());
    for (spec, &p) in specs.iter().zip(&pilot) {
        samples.push(sample_level(model, scheme, spec.level, spec.kind, seed, 0..p)?);
    }
    let vars: Vec<f64> = samples.iter().map(|s| s.stats.variance()).collect();
    let alloc = allocate_samples_with_costs(&vars, &costs, epsilon)?;

    let mut out = Vec::with_capacity(specs.len());
    let mut estimate = 0.0;
    let mut counts = Vec::with_capacity(specs.len());
    for ((spec, pilot_sample), (&p, &a)) in specs.iter().zip(samples).zip(pilot.iter().zip(&alloc)) {
        let n = p.max(a);
        let mut stats = pilot_sample.stats;
        let mut cost = pilot_sample.cost;
        if n > p {
            let ext = sample_level(model, scheme, spec.level, spec.kind, seed, p..n)?;
            stats = stats.merge(&ext.stats);
            cost += ext.cost;
        }
        estimate += stats.mean();
        counts.push(n);
        out.push(LevelStats {
            level: spec.level,
            steps: level_steps(spec.level)?,
            mean: stats.mean(),
            variance: stats.variance(),
            samples: n,
            cost_units: cost,
        });
    }
    Ok((estimate, out, counts))
}

fn level_delta(model: &SdeModel, level: u32) -> f64 {
    model.horizon() / (1u64 << level) as f64
}

/// Single-level estimate on the coarsest dyadic grid meeting the bias
/// target, optionally with an analytic control variate of order `cv_order`.
pub fn smc_for_accuracy(
    model: &SdeModel,
    scheme: Scheme,
    epsilon: f64,
    rates: &Rates,
    cv_order: Option<usize>,
    cfg: &EstimatorConfig,
    seed: SeedStream,
) -> Result<EstimateReport> {
    let l = finest_level(model.horizon(), rates.alpha, epsilon, cfg)?;
    let delta = level_delta(model, l);
    let cv = match cv_order {
        Some(k) => Some(analytic_coeffs(model, scheme, delta, 1usize << l, k)?),
        None => None,
    };
    let (kind, model_variance) = match &cv {
        Some(cv) => (LevelKind::ControlVariate(cv), delta.powf(rates.gamma)),
        None => (LevelKind::Single, 1.0),
    };
    let specs = [LevelSpec {
        level: l,
        kind,
        model_variance,
    }];
    let (estimate, per_level, n) = run_levels(model, scheme, epsilon, &specs, cfg, seed)?;
    let total_cost = per_level.iter().map(|s| s.cost_units).sum();
    Ok(EstimateReport {
        estimate,
        total_cost,
        training_cost: 0,
        per_level,
        target_epsilon: epsilon,
        plan: Some(LevelPlan {
            l0: l,
            l,
            n,
            n_train: 0,
            epsilon,
            rates: *rates,
        }),
        warnings: Vec::new(),
    })
}

/// Standard multilevel estimator over levels `0..=L` with Giles allocation.
pub fn mlmc_standard(
    model: &SdeModel,
    scheme: Scheme,
    epsilon: f64,
    rates: &Rates,
    cfg: &EstimatorConfig,
    seed: SeedStream,
) -> Result<EstimateReport> {
    let l = finest_level(model.horizon(), rates.alpha, epsilon, cfg)?;
    let specs: Vec<LevelSpec<'_>> = (0..=l)
        .map(|lvl| LevelSpec {
            level: lvl,
            kind: if lvl == 0 { LevelKind::Single } else { LevelKind::Coupled },
            model_variance: if lvl == 0 {
                1.0
            } else {
                level_delta(model, lvl).powf(rates.beta)
            },
        })
        .collect();
    let (estimate, per_level, n) = run_levels(model, scheme, epsilon, &specs, cfg, seed)?;
    let total_cost = per_level.iter().map(|s| s.cost_units).sum();
    Ok(EstimateReport {
        estimate,
        total_cost,
        training_cost: 0,
        per_level,
        target_epsilon: epsilon,
        plan: Some(LevelPlan {
            l0: 0,
            l,
            n,
            n_train: 0,
            epsilon,
            rates: *rates,
        }),
        warnings: Vec::new(),
    })
}

/// Where the control variate on the start level comes from.
#[derive(Debug, Clone)]
pub enum CvSource {
    Analytic { order: usize },
    Regression { order: usize, degree: usize },
    /// A ready-made variate; must match the start level chosen for `ε`.
    Prebuilt(ChaosControlVariate),
}

/// Start level `L0` for accuracy `ε`, clamped to `[0, L]`.
pub fn start_level(horizon: f64, rates: &Rates, epsilon: f64, finest: u32, cfg: &EstimatorConfig) -> u32 {
    let delta = cfg.c_start * epsilon.powf(rates.start_level_exponent());
    let l0 = (horizon / delta).log2().round();
    (l0.max(0.0) as u32).min(finest)
}

/// Multilevel estimator started at `L0` with a control variate on that level.
pub fn mlmc_cv(
    model: &SdeModel,
    scheme: Scheme,
    epsilon: f64,
    rates: &Rates,
    source: &CvSource,
    cfg: &EstimatorConfig,
    seed: SeedStream,
) -> Result<EstimateReport> {
    let l = finest_level(model.horizon(), rates.alpha, epsilon, cfg)?;
    let l0 = start_level(model.horizon(), rates, epsilon, l, cfg);
    let delta0 = level_delta(model, l0);
    let steps0 = 1usize << l0;
    let warnings = rates.theorem_violations();

    let (cv, n_train, training_cost) = match source {
        CvSource::Analytic { order } => (analytic_coeffs(model, scheme, delta0, steps0, *order)?, 0, 0),
        CvSource::Regression { order, degree } => {
            let n = (cfg.c_train * rates.training_paths(epsilon, delta0)).round().max(2.0) as usize;
            let basis = select_basis_parameters(n, delta0, *degree, rates.mu, &cfg.basis)?;
            let stream = seed.with_level(l0).with_batch(BATCH_TRAINING).with_path(0);
            let (cv, cost) = build_regression_cv(model, scheme, *order, delta0, steps0, n, &basis, stream)?;
            (cv, n, cost.total())
        }
        CvSource::Prebuilt(cv) => (cv.clone(), 0, 0),
    };

    let model_n = match source {
        CvSource::Regression { .. } => Some(n_train),
        _ => None,
    };
    let mut specs = vec![LevelSpec {
        level: l0,
        kind: LevelKind::ControlVariate(&cv),
        model_variance: rates.start_level_variance(delta0, model_n),
    }];
    specs.extend((l0 + 1..=l).map(|lvl| LevelSpec {
        level: lvl,
        kind: LevelKind::Coupled,
        model_variance: level_delta(model, lvl).powf(rates.beta),
    }));
    let (estimate, per_level, n) = run_levels(model, scheme, epsilon, &specs, cfg, seed)?;
    let total_cost = per_level.iter().map(|s| s.cost_units).sum::<u64>() + training_cost;
    Ok(EstimateReport {
        estimate,
        total_cost,
        training_cost,
        per_level,
        target_epsilon: epsilon,
        plan: Some(LevelPlan {
            l0,
            l,
            n,
            n_train,
            epsilon,
            rates: *rates,
        }),
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sde::{reference_moment, ReferenceProblem};

    fn gbm() -> SdeModel {
        SdeModel::gbm(0.2, 1.0, 1.0, 4)
    }

    #[test]
    fn allocation_single_level() {
        // n = 2V/ε² with ε = 0.1
        assert_eq!(allocate_samples(&[1.0], &[1.0], 0.1).unwrap(), vec![200]);
        assert_eq!(allocate_samples(&[1.0], &[0.25], 0.1).unwrap(), vec![200]);
    }

    #[test]
    fn allocation_zero_variance_floor() {
        let n = allocate_samples(&[1.0, 0.0], &[1.0, 0.5], 0.1).unwrap();
        assert_eq!(n[1], 1);
    }

    #[test]
    fn allocation_two_levels() {
        let eps = 0.2f64.sqrt();
        let v = [4.0, 1.0];
        let d = [1.0, 0.5];
        let n = allocate_samples(&v, &d, eps).unwrap();
        let s = 2.0 + 2f64.sqrt();
        assert_eq!(n[0], (2.0 * s / 0.1f64).ceil() as u64);
        assert_eq!(n[1], (0.5f64.sqrt() * s / 0.1).ceil() as u64);
        let total: f64 = v.iter().zip(&n).map(|(v, n)| v / *n as f64).sum();
        assert!(total <= 0.1 && total > 0.095, "{total}");
    }

    #[test]
    fn allocation_rejects_bad_input() {
        assert!(allocate_samples(&[1.0], &[1.0], 0.0).is_err());
        assert!(allocate_samples(&[-1.0], &[1.0], 0.1).is_err());
        assert!(allocate_samples(&[1.0, 2.0], &[1.0], 0.1).is_err());
    }

    #[test]
    fn rate_formulas() {
        let a = Rates::analytic(1.0, 2.0, 2.0);
        assert!((a.predicted_cost_exponent() + 1.5).abs() < 1e-12);
        assert!((a.start_level_exponent() - 0.5).abs() < 1e-12);
        assert!(a.theorem_violations().is_empty());

        let r = Rates::regression(1.0, 2.0, 2.0, 3, f64::INFINITY);
        assert!((r.theta - 6.0 / 7.0).abs() < 1e-15);
        assert!((r.kappa1 - 1.0 / 7.0).abs() < 1e-15);
        assert!((r.predicted_cost_exponent() + 27.0 / 16.0).abs() < 1e-12);
        assert!((r.start_level_exponent() - 5.0 / 16.0).abs() < 1e-12);
        // N ≍ 1/ε for these rates.
        let n = r.training_paths(2f64.powi(-6), 0.25);
        assert!((n - 64.0).abs() < 1e-9, "{n}");
        // gamma = 2 is below what the theorem asks for.
        assert_eq!(r.theorem_violations().len(), 1);
    }

    #[test]
    fn finest_level_from_bias() {
        let cfg = EstimatorConfig::default();
        assert_eq!(finest_level(1.0, 1.0, 0.25, &cfg).unwrap(), 3);
        assert_eq!(finest_level(1.0, 1.0, 10.0, &cfg).unwrap(), 0);
        assert!(finest_level(1.0, 1.0, -1.0, &cfg).is_err());
        assert!(finest_level(1.0, 1.0, 1e-12, &cfg).is_err());
    }

    #[test]
    fn smc_minimal_and_bias() {
        let seed = SeedStream::new(7, 1, 0, 0, 0);
        let r = smc(&gbm(), Scheme::Euler, 0.5, 2, None, seed).unwrap();
        assert_eq!(r.per_level[0].samples, 2);
        assert!(r.per_level[0].variance >= 0.0);
        assert!(smc(&gbm(), Scheme::Euler, 0.5, 1, None, seed).is_err());

        let n = 200_000;
        let r = smc(&gbm(), Scheme::Euler, 0.1, n, None, seed).unwrap();
        let target = reference_moment(ReferenceProblem::GbmQuarticEuler {
            x0: 1.0,
            sigma: 0.2,
            delta: 0.1,
            steps: 10,
        });
        let se = (r.per_level[0].variance / n as f64).sqrt();
        assert!((r.estimate - target).abs() < 4.0 * se, "{} vs {target}", r.estimate);
        assert_eq!(r.total_cost, n * 10);
    }

    #[test]
    fn smc_with_exact_cv() {
        let seed = SeedStream::new(7, 2, 0, 0, 0);
        let cv = crate::chaos::gbm_quartic_euler_coeffs(0.2, 0.1, 10, 4).unwrap();
        let r = smc(&gbm(), Scheme::Euler, 0.1, 1000, Some(&cv), seed).unwrap();
        let target = reference_moment(ReferenceProblem::GbmQuarticEuler {
            x0: 1.0,
            sigma: 0.2,
            delta: 0.1,
            steps: 10,
        });
        assert!((r.estimate - target).abs() < 1e-8);
        let wrong = crate::chaos::gbm_quartic_euler_coeffs(0.2, 0.2, 5, 4).unwrap();
        assert!(smc(&gbm(), Scheme::Euler, 0.1, 10, Some(&wrong), seed).is_err());
    }

    #[test]
    fn mlmc_degenerates_to_smc_at_level_zero() {
        let seed = SeedStream::new(3, 4, 0, 0, 0);
        let rates = Rates::analytic(1.0, 2.0, 2.0);
        let r = mlmc_standard(&gbm(), Scheme::MILSTEIN, 4.0, &rates, &EstimatorConfig::default(), seed).unwrap();
        assert_eq!(r.per_level.len(), 1);
        assert_eq!(r.per_level[0].steps, 1);
        assert!(mlmc_standard(&gbm(), Scheme::MILSTEIN, 0.0, &rates, &EstimatorConfig::default(), seed).is_err());
    }

    #[test]
    fn thread_count_does_not_change_estimates() {
        let seed = SeedStream::new(11, 5, 0, 0, 0);
        let rates = Rates::analytic(1.0, 2.0, 2.0);
        let cfg = EstimatorConfig::default();
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| mlmc_standard(&gbm(), Scheme::MILSTEIN, 2f64.powi(-6), &rates, &cfg, seed).unwrap())
        };
        let a = run(1);
        let b = run(4);
        assert_eq!(a.estimate.to_bits(), b.estimate.to_bits());
        assert_eq!(a.total_cost, b.total_cost);
    }
}
