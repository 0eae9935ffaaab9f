//! Browser bindings: Hermite curves, residual-variance decay and a
//! multilevel estimate with or without the control variate.

use mlmc_chaos::chaos::analytic_coeffs;
use mlmc_chaos::estimators::{mlmc_cv, mlmc_standard, CvSource, EstimatorConfig, Rates};
use mlmc_chaos::hermite::{hermite_all, MAX_HERMITE_ORDER};
use mlmc_chaos::rng::BATCH_EVALUATION;
use mlmc_chaos::{RunningStats, Scheme, SdeModel, SeedStream};
use wasm_bindgen::prelude::*;

fn js(r: Result<Vec<f64>, String>) -> Result<Vec<f64>, JsError> {
    r.map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = hermiteCurves)]
pub fn hermite_curves_js(order: usize, points: usize) -> Result<Vec<f64>, JsError> {
    js(hermite_curves(order, points))
}

#[wasm_bindgen(js_name = varianceDecay)]
pub fn variance_decay_js(scheme: &str, k_max: usize, samples: u32, seed: u32) -> Result<Vec<f64>, JsError> {
    js(variance_decay(scheme, k_max, samples, seed.into()))
}

#[wasm_bindgen(js_name = mlmcEstimate)]
pub fn mlmc_estimate_js(epsilon: f64, with_cv: bool, seed: u32) -> Result<Vec<f64>, JsError> {
    js(mlmc_estimate(epsilon, with_cv, seed.into()))
}

#[wasm_bindgen(js_name = decaySteps)]
pub fn decay_steps() -> Vec<u32> {
    DECAY_STEPS.iter().map(|&j| j as u32).collect()
}

/// `H_0..H_order` on `points` equally spaced abscissae in `[-4, 4]`,
/// row-major by order.
pub fn hermite_curves(order: usize, points: usize) -> Result<Vec<f64>, String> {
    if order > MAX_HERMITE_ORDER || points < 2 {
        return Err(format!("need order <= {MAX_HERMITE_ORDER} and at least 2 points"));
    }
    let mut out = vec![0.0; (order + 1) * points];
    let mut h = vec![0.0; order + 1];
    for i in 0..points {
        let x = -4.0 + 8.0 * i as f64 / (points - 1) as f64;
        hermite_all(x, &mut h);
        for (k, v) in h.iter().enumerate() {
            out[k * points + i] = *v;
        }
    }
    Ok(out)
}

/// Step counts used by [`variance_decay`].
pub const DECAY_STEPS: [usize; 5] = [4, 8, 16, 32, 64];

/// `Var[X_T^4 − M_K]` for GBM (σ = 0.2) at each entry of [`DECAY_STEPS`]
/// and `K = 0..=k_max`, row-major by `K`. `scheme` is `euler` or `milstein`.
pub fn variance_decay(scheme: &str, k_max: usize, samples: u32, seed: u64) -> Result<Vec<f64>, String> {
    let scheme: Scheme = scheme.parse().map_err(|e: mlmc_chaos::Error| e.to_string())?;
    if samples < 2 {
        return Err("need at least 2 samples".into());
    }
    let model = SdeModel::gbm(0.2, 1.0, 1.0, 4);
    let stepper = scheme.bind(&model).map_err(|e| e.to_string())?;
    let mut out = vec![0.0; (k_max + 1) * DECAY_STEPS.len()];
    for (col, &j) in DECAY_STEPS.iter().enumerate() {
        let delta = 1.0 / j as f64;
        let cv = if k_max > 0 {
            Some(analytic_coeffs(&model, scheme, delta, j, k_max).map_err(|e| e.to_string())?)
        } else {
            None
        };
        let stream = SeedStream::new(seed, 0xDE40, j as u32, BATCH_EVALUATION, 0);
        let mut stats = vec![RunningStats::new(); k_max + 1];
        let mut incs = vec![0.0; j];
        let mut terms = vec![0.0; k_max];
        let mut partial = vec![0.0; k_max + 1];
        for p in 0..samples as u64 {
            stream.with_path(p).fill_standard_normal(&mut incs);
            partial.iter_mut().for_each(|v| *v = 0.0);
            let mut x = model.x0();
            for (step, z) in incs.iter().enumerate() {
                let dw = z * delta.sqrt();
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
            for (k, s) in stats.iter_mut().enumerate() {
                m += partial[k];
                s.push(f - m);
            }
        }
        for (k, s) in stats.iter().enumerate() {
            out[k * DECAY_STEPS.len() + col] = s.variance();
        }
    }
    Ok(out)
}

/// Multilevel estimate of `E X_T^4` for GBM under Milstein at accuracy
/// `epsilon`. Returns `[estimate, exact, cost, l0, l]`.
pub fn mlmc_estimate(epsilon: f64, with_cv: bool, seed: u64) -> Result<Vec<f64>, String> {
    if !(1e-3..=1.0).contains(&epsilon) {
        return Err("epsilon must lie in [0.001, 1]".into());
    }
    let model = SdeModel::gbm(0.2, 1.0, 1.0, 4);
    let rates = Rates::analytic(1.0, 2.0, 2.0);
    let cfg = EstimatorConfig::default();
    let stream = SeedStream::new(seed, 0xDE41, 0, BATCH_EVALUATION, 0);
    let rep = if with_cv {
        mlmc_cv(&model, Scheme::MILSTEIN, epsilon, &rates, &CvSource::Analytic { order: 2 }, &cfg, stream)
    } else {
        mlmc_standard(&model, Scheme::MILSTEIN, epsilon, &rates, &cfg, stream)
    }
    .map_err(|e| e.to_string())?;
    let (l0, l) = rep.plan.as_ref().map_or((0, 0), |p| (p.l0, p.l));
    Ok(vec![
        rep.estimate,
        model.exact_value().unwrap_or(f64::NAN),
        rep.total_cost as f64,
        l0 as f64,
        l as f64,
    ])
}
