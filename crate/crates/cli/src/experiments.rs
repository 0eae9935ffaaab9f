//! The three experiment drivers.

use mlmc_chaos::chaos::analytic_coeffs;
use mlmc_chaos::estimators::{mlmc_cv, mlmc_standard, smc_for_accuracy, CvSource, EstimateReport, Rates};
use mlmc_chaos::rng::{mix_words, BATCH_EVALUATION};
use mlmc_chaos::stats::pairwise_merge;
use mlmc_chaos::{fit_slope, Error, Result, RunningStats, Scheme, SdeModel, SeedStream, SlopeFit};
use rayon::prelude::*;

use crate::config::{Algorithm, ExperimentConfig, ExperimentKind, ModelKind};

const CHUNK: u64 = 2048;

/// Experiment tags mixed into every seed stream.
const TAG_VARIANCE: u64 = 0x5641_5244;
const TAG_COST: u64 = 0x434f_5354;
const TAG_REGRESSION: u64 = 0x5245_4752;

/// Cost exponent reported alongside the regression experiment.
pub const REGRESSION_THEORY_EXPONENT: f64 = 27.0 / 16.0;
pub const REGRESSION_PAPER_STANDARD: f64 = 2.0773;
pub const REGRESSION_PAPER_CV: f64 = 1.7687;

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceRow {
    pub j: usize,
    pub delta: f64,
    pub k: usize,
    pub variance: f64,
    /// `variance / E[f]²`.
    pub relative_variance: f64,
    pub samples: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceDecay {
    pub rows: Vec<VarianceRow>,
    /// Slope of `log V` against `log Δ` per `K`.
    pub fits: Vec<(usize, SlopeFit)>,
}

/// `count` integers log-spaced over `[lo, hi]`, deduplicated.
pub fn log_spaced(lo: usize, hi: usize, count: usize) -> Vec<usize> {
    if count <= 1 || lo == hi {
        return vec![lo];
    }
    let (a, b) = ((lo as f64).ln(), (hi as f64).ln());
    let mut out: Vec<usize> = (0..count)
        .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp().round() as usize)
        .collect();
    out.dedup();
    out
}

/// Residual variances `Var[f(Y_J) − M_{K,Δ}]` on a log-spaced grid of `J`.
/// `K = 0` is the plain payoff. All orders share the same paths.
pub fn run_variance_decay(cfg: &ExperimentConfig) -> Result<VarianceDecay> {
    cfg.validate()?;
    if cfg.model != ModelKind::Gbm {
        return Err(Error::InvalidArgument(
            "variance_decay needs analytic coefficients; supported: gbm x^4 (euler, milstein)".into(),
        ));
    }
    let model = cfg.model();
    let stepper = cfg.scheme.bind(&model)?;
    let k_max = *cfg.k_list.iter().max().unwrap_or(&0);
    let grid = log_spaced(cfg.j_min, cfg.j_max, cfg.j_count);
    let mut rows = Vec::new();

    for &j in &grid {
        let delta = cfg.horizon / j as f64;
        let cv = if k_max > 0 {
            Some(analytic_coeffs(&model, cfg.scheme, delta, j, k_max)?)
        } else {
            None
        };
        let stream = SeedStream::new(cfg.master_seed, TAG_VARIANCE, j as u32, BATCH_EVALUATION, 0);
        let chunks = cfg.samples.div_ceil(CHUNK);
        let parts: Vec<Vec<RunningStats>> = (0..chunks)
            .into_par_iter()
            .map(|c| {
                let paths = c * CHUNK..((c + 1) * CHUNK).min(cfg.samples);
                let mut stats = vec![RunningStats::new(); k_max + 1];
                let mut incs = vec![0.0; j];
                let mut terms = vec![0.0; k_max];
                let mut partial = vec![0.0; k_max + 1];
                let sd = delta.sqrt();
                for p in paths {
                    stream.with_path(p).fill_standard_normal(&mut incs);
                    partial.iter_mut().for_each(|v| *v = 0.0);
                    let mut x = model.x0();
                    for (step, z) in incs.iter().enumerate() {
                        let dw = z * sd;
                        if let Some(cv) = &cv {
                            cv.step_terms(step + 1, x, dw, &mut terms);
                            for k in 1..=k_max {
                                partial[k] += terms[k - 1];
                            }
                        }
                        x = stepper.step(x, dw, delta);
                    }
                    let f = model.payoff(x);
                    let mut m = 0.0;
                    for k in 0..=k_max {
                        m += partial[k];
                        stats[k].push(f - m);
                    }
                }
                stats
            })
            .collect();
        for &k in &cfg.k_list {
            let per_k: Vec<RunningStats> = parts.iter().map(|p| p[k]).collect();
            let s = pairwise_merge(&per_k);
            let scale = model.exact_value().map_or(1.0, |v| v * v);
            rows.push(VarianceRow {
                j,
                delta,
                k,
                variance: s.variance(),
                relative_variance: s.variance() / scale,
                samples: s.count(),
            });
        }
    }

    let mut fits = Vec::new();
    for &k in &cfg.k_list {
        let pts: Vec<(f64, f64)> = rows
            .iter()
            .filter(|r| r.k == k && r.variance > 0.0)
            .map(|r| (r.delta, r.variance))
            .collect();
        if let Ok(fit) = fit_slope(&pts) {
            fits.push((k, fit));
        }
    }
    Ok(VarianceDecay { rows, fits })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub algorithm: Algorithm,
    pub eps_exp: u32,
    pub epsilon: f64,
    pub run_id: usize,
    pub estimate: f64,
    pub cost_units: u64,
    pub l0: u32,
    pub l: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub algorithm: Algorithm,
    pub epsilon: f64,
    pub runs: usize,
    pub rmse: f64,
    pub mean_cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlgorithmFit {
    pub algorithm: Algorithm,
    /// `log(mean cost)` against `log ε`.
    pub cost_vs_eps: SlopeFit,
    /// `log RMSE` against `log(mean cost)`.
    pub rmse_vs_cost: SlopeFit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostStudy {
    pub kind: ExperimentKind,
    pub reference: f64,
    pub rows: Vec<RunRow>,
    pub summary: Vec<SummaryRow>,
    pub fits: Vec<AlgorithmFit>,
    pub warnings: Vec<String>,
}

impl CostStudy {
    pub fn fit(&self, alg: Algorithm) -> Option<&AlgorithmFit> {
        self.fits.iter().find(|f| f.algorithm == alg)
    }

    /// Cost exponent `e` in `cost ≍ ε^{-e}`.
    pub fn exponent(&self, alg: Algorithm) -> Option<f64> {
        self.fit(alg).map(|f| -f.cost_vs_eps.slope)
    }
}

/// Runs one estimator at accuracy `ε`.
pub fn run_algorithm(
    alg: Algorithm,
    model: &SdeModel,
    epsilon: f64,
    cfg: &ExperimentConfig,
    seed: SeedStream,
) -> Result<EstimateReport> {
    let e = &cfg.estimator;
    match alg {
        Algorithm::Smc => smc_for_accuracy(model, Scheme::Euler, epsilon, &Rates::analytic(1.0, 1.0, 1.0), None, e, seed),
        Algorithm::SmcCv1 => {
            smc_for_accuracy(model, Scheme::Euler, epsilon, &Rates::analytic(1.0, 1.0, 1.0), Some(1), e, seed)
        }
        Algorithm::SmcCv2Weak2 => {
            smc_for_accuracy(model, Scheme::WEAK2, epsilon, &Rates::analytic(2.0, 2.0, 2.0), Some(2), e, seed)
        }
        Algorithm::Mlmc => mlmc_standard(model, Scheme::MILSTEIN, epsilon, &Rates::analytic(1.0, 2.0, 2.0), e, seed),
        Algorithm::MlmcCv => {
            let source = CvSource::Analytic { order: cfg.cv_order };
            mlmc_cv(model, Scheme::MILSTEIN, epsilon, &Rates::analytic(1.0, 2.0, 2.0), &source, e, seed)
        }
        Algorithm::MlmcCvRegression => {
            let rates = Rates::regression(1.0, 2.0, 2.0, cfg.degree, cfg.mu);
            let source = CvSource::Regression {
                order: cfg.cv_order,
                degree: cfg.degree,
            };
            mlmc_cv(model, Scheme::MILSTEIN, epsilon, &rates, &source, e, seed)
        }
    }
}

/// Repeated runs of every configured algorithm over the dyadic `ε` grid.
pub fn run_cost_study(cfg: &ExperimentConfig) -> Result<CostStudy> {
    cfg.validate()?;
    let model = cfg.model();
    let reference = model
        .exact_value()
        .ok_or_else(|| Error::InvalidArgument(format!("model `{}` has no exact reference", model.name())))?;
    let tag = match cfg.experiment {
        ExperimentKind::RegressionMlmc => TAG_REGRESSION,
        _ => TAG_COST,
    };

    let mut tasks = Vec::new();
    for &alg in &cfg.algorithms {
        for i in cfg.eps_min_exp..=cfg.max_exp_for(alg) {
            for run in 0..cfg.runs {
                tasks.push((alg, i, run));
            }
        }
    }
    let results: Vec<Result<(RunRow, Vec<String>)>> = tasks
        .par_iter()
        .map(|&(alg, i, run)| {
            let epsilon = 0.5f64.powi(i as i32);
            let experiment = mix_words(&[tag, alg.tag(), i as u64, run as u64]);
            let seed = SeedStream::new(cfg.master_seed, experiment, 0, BATCH_EVALUATION, 0);
            let rep = run_algorithm(alg, &model, epsilon, cfg, seed)?;
            let (l0, l) = rep.plan.as_ref().map_or((0, 0), |p| (p.l0, p.l));
            Ok((
                RunRow {
                    algorithm: alg,
                    eps_exp: i,
                    epsilon,
                    run_id: run,
                    estimate: rep.estimate,
                    cost_units: rep.total_cost,
                    l0,
                    l,
                },
                rep.warnings,
            ))
        })
        .collect();

    let mut rows = Vec::with_capacity(results.len());
    let mut warnings: Vec<String> = Vec::new();
    for r in results {
        let (row, w) = r?;
        for msg in w {
            let msg = format!("{}: {msg}", row.algorithm);
            if !warnings.contains(&msg) {
                warnings.push(msg);
            }
        }
        rows.push(row);
    }

    let summary = summarize(&rows, reference);
    let mut fits = Vec::new();
    for &alg in &cfg.algorithms {
        let pts: Vec<&SummaryRow> = summary.iter().filter(|s| s.algorithm == alg).collect();
        let cost_eps: Vec<(f64, f64)> = pts.iter().map(|s| (s.epsilon, s.mean_cost)).collect();
        let rmse_cost: Vec<(f64, f64)> = pts.iter().map(|s| (s.mean_cost, s.rmse)).collect();
        if let (Ok(cost_vs_eps), Ok(rmse_vs_cost)) = (fit_slope(&cost_eps), fit_slope(&rmse_cost)) {
            fits.push(AlgorithmFit {
                algorithm: alg,
                cost_vs_eps,
                rmse_vs_cost,
            });
        }
    }
    Ok(CostStudy {
        kind: cfg.experiment,
        reference,
        rows,
        summary,
        fits,
        warnings,
    })
}

/// Per `(algorithm, ε)`: RMSE against `reference` and mean cost, in row order.
pub fn summarize(rows: &[RunRow], reference: f64) -> Vec<SummaryRow> {
    let mut out: Vec<SummaryRow> = Vec::new();
    let mut i = 0;
    while i < rows.len() {
        let (alg, e) = (rows[i].algorithm, rows[i].eps_exp);
        let group: Vec<&RunRow> = rows[i..]
            .iter()
            .take_while(|r| r.algorithm == alg && r.eps_exp == e)
            .collect();
        let n = group.len() as f64;
        let mse = group.iter().map(|r| (r.estimate - reference).powi(2)).sum::<f64>() / n;
        let mean_cost = group.iter().map(|r| r.cost_units as f64).sum::<f64>() / n;
        out.push(SummaryRow {
            algorithm: alg,
            epsilon: rows[i].epsilon,
            runs: group.len(),
            rmse: mse.sqrt(),
            mean_cost,
        });
        i += group.len();
    }
    out
}

/// One acceptance check on a finished experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub target: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl Check {
    fn within(name: String, value: f64, target: f64, tolerance: f64) -> Self {
        Self {
            pass: (value - target).abs() <= tolerance,
            name,
            value,
            target,
            tolerance,
        }
    }
}

pub fn variance_checks(res: &VarianceDecay) -> Vec<Check> {
    res.fits
        .iter()
        .filter(|(k, _)| (1..=3).contains(k))
        .map(|(k, f)| Check::within(format!("slope K={k}"), f.slope, *k as f64, 0.4))
        .collect()
}

/// Expected cost-vs-ε slope per algorithm.
pub fn expected_cost_slope(alg: Algorithm) -> f64 {
    match alg {
        Algorithm::Smc => -3.0,
        Algorithm::SmcCv1 | Algorithm::Mlmc => -2.0,
        Algorithm::SmcCv2Weak2 | Algorithm::MlmcCv => -1.5,
        Algorithm::MlmcCvRegression => -REGRESSION_PAPER_CV,
    }
}

pub fn cost_checks(study: &CostStudy) -> Vec<Check> {
    let mut out = Vec::new();
    match study.kind {
        ExperimentKind::RegressionMlmc => {
            let std = study.exponent(Algorithm::Mlmc);
            let cv = study.exponent(Algorithm::MlmcCvRegression);
            if let Some(s) = std {
                out.push(Check::within("mlmc exponent".into(), s, REGRESSION_PAPER_STANDARD, 0.3));
            }
            if let Some(c) = cv {
                out.push(Check::within("mlmc_cv_regression exponent".into(), c, REGRESSION_PAPER_CV, 0.3));
            }
            if let (Some(s), Some(c)) = (std, cv) {
                out.push(Check {
                    name: "exponent gap (standard - cv)".into(),
                    value: s - c,
                    target: 0.15,
                    tolerance: 0.0,
                    pass: s - c >= 0.15,
                });
            }
        }
        _ => {
            for f in &study.fits {
                if f.algorithm != Algorithm::Smc {
                    out.push(Check::within(
                        format!("{} cost slope", f.algorithm),
                        f.cost_vs_eps.slope,
                        expected_cost_slope(f.algorithm),
                        0.25,
                    ));
                }
            }
        }
    }
    for s in &study.summary {
        out.push(Check {
            name: format!("{} rmse at eps={}", s.algorithm, s.epsilon),
            value: s.rmse,
            target: s.epsilon,
            tolerance: 0.0,
            pass: s.rmse <= s.epsilon,
        });
    }
    out
}
