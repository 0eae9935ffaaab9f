use mlmc_chaos::chaos::{analytic_coeffs, gbm_quartic_milstein_coeffs, oracle_coefficient, Coefficients};
use mlmc_chaos::estimators::{sample_paths, LevelKind};
use mlmc_chaos::hermite::hermite_all;
use mlmc_chaos::regression::{
    build_regression_cv, fit_coefficient, normal_equation_residual, FittedFamily, PiecewiseBasis, RegressionTarget,
};
use mlmc_chaos::rng::{BATCH_EVALUATION, BATCH_TRAINING};
use mlmc_chaos::{ChaosControlVariate, CoefficientOracleConfig, RunningStats, Scheme, SdeModel, SeedStream};

fn eval_stream(tag: u64) -> SeedStream {
    SeedStream::new(77, tag, 0, BATCH_EVALUATION, 0)
}

fn cv_mean(model: &SdeModel, scheme: Scheme, cv: &ChaosControlVariate, n: u64, tag: u64) -> RunningStats {
    let stepper = scheme.bind(model).unwrap();
    let mut incs = vec![0.0; cv.steps()];
    let sd = cv.delta().sqrt();
    (0..n)
        .map(|p| {
            eval_stream(tag).with_path(p).fill_standard_normal(&mut incs);
            incs.iter_mut().for_each(|z| *z *= sd);
            cv.run_along(&stepper, model.x0(), &incs).unwrap().1
        })
        .collect()
}

#[test]
fn analytic_cv_has_zero_mean() {
    let model = SdeModel::gbm(0.2, 1.0, 1.0, 4);
    let cv = gbm_quartic_milstein_coeffs(0.2, 1.0 / 16.0, 16, 4).unwrap();
    let s = cv_mean(&model, Scheme::MILSTEIN, &cv, 100_000, 1);
    assert!(s.mean().abs() < 4.0 * s.std_error(), "{} +- {}", s.mean(), s.std_error());
}

#[test]
fn milstein_family_matches_oracle() {
    let model = SdeModel::gbm(0.3, 1.0, 1.0, 4);
    let cfg = CoefficientOracleConfig::default();
    let delta = 0.2;
    let steps = 3;
    let cv = analytic_coeffs(&model, Scheme::MILSTEIN, delta, steps, 4).unwrap();
    for k in 1..=4 {
        for j in 1..=steps {
            for x in [0.7, 1.3] {
                let a = cv.coefficient(k, j, x);
                let o = oracle_coefficient(&model, Scheme::MILSTEIN, &cfg, k, j, x, delta, steps).unwrap();
                assert!((a - o).abs() <= 1e-9 * a.abs().max(1.0), "k={k} j={j} x={x}: {a} vs {o}");
            }
        }
    }
}

#[test]
fn oracle_agrees_with_monte_carlo_for_arctan() {
    // a_{1,1}(x0) = E[f(X_T) H_1(ξ_1)] by brute force
    let model = SdeModel::arctan();
    let (steps, delta) = (2usize, 0.5);
    let o = oracle_coefficient(&model, Scheme::MILSTEIN, &CoefficientOracleConfig::default(), 1, 1, 0.0, delta, steps)
        .unwrap();
    let stepper = Scheme::MILSTEIN.bind(&model).unwrap();
    let mut z = [0.0; 2];
    let s: RunningStats = (0..400_000u64)
        .map(|p| {
            eval_stream(2).with_path(p).fill_standard_normal(&mut z);
            let incs = [z[0] * delta.sqrt(), z[1] * delta.sqrt()];
            model.payoff(stepper.terminal(0.0, &incs, delta)) * z[0]
        })
        .collect();
    assert!((s.mean() - o).abs() < 4.0 * s.std_error(), "oracle {o}, mc {} +- {}", s.mean(), s.std_error());
}

fn training_pairs(n: usize) -> (Vec<f64>, Vec<f64>) {
    let model = SdeModel::gbm(0.2, 1.0, 1.0, 4);
    let stepper = Scheme::Euler.bind(&model).unwrap();
    let delta: f64 = 0.25;
    let mut z = [0.0; 4];
    let mut h = [0.0; 2];
    (0..n as u64)
        .map(|p| {
            SeedStream::new(5, 9, 0, BATCH_TRAINING, p).fill_standard_normal(&mut z);
            let incs: Vec<f64> = z.iter().map(|v| v * delta.sqrt()).collect();
            let x_prev = stepper.terminal(1.0, &incs[..3], delta);
            let x_t = stepper.step(x_prev, incs[3], delta);
            hermite_all(z[3], &mut h);
            (x_prev, model.payoff(x_t) * h[1])
        })
        .unzip()
}

#[test]
fn normal_equations_hold_and_fit_is_a_projection() {
    let (x, y) = training_pairs(20_000);
    let basis = PiecewiseBasis::new(3, 8, 3.0).unwrap();
    let target = RegressionTarget::new(1, 4, x.clone(), y.clone()).unwrap();
    let fit = fit_coefficient(&target, &basis).unwrap();
    assert!(normal_equation_residual(&target, &basis, &fit) < 1e-10);

    let sse = |alpha: &[f64]| -> f64 {
        let f = mlmc_chaos::regression::FittedCoefficient {
            alpha: alpha.to_vec(),
            truncation_bound: f64::INFINITY,
        };
        x.iter().zip(&y).map(|(&a, &b)| (f.raw_value(&basis, a) - b).powi(2)).sum()
    };
    let best = sse(&fit.alpha);
    for i in 0..fit.alpha.len() {
        for h in [-1e-3, 1e-3] {
            let mut a = fit.alpha.clone();
            a[i] += h;
            assert!(sse(&a) >= best - 1e-9 * best, "perturbing alpha[{i}] lowered the error");
        }
    }
}

#[test]
fn regression_cv_reduces_variance_and_is_unbiased_on_fresh_paths() {
    let model = SdeModel::gbm(0.2, 1.0, 1.0, 4);
    let (steps, delta) = (16usize, 1.0 / 16.0);
    let basis = PiecewiseBasis::new(3, 8, 3.0).unwrap();
    let seed = SeedStream::new(3, 4, 0, BATCH_TRAINING, 0);
    let (cv, cost) = build_regression_cv(&model, Scheme::Euler, 2, delta, steps, 100_000, &basis, seed).unwrap();
    assert!(cost.total() > 0);

    let plain = sample_paths(&model, Scheme::Euler, steps, delta, LevelKind::Single, eval_stream(5), 0..50_000).unwrap();
    let with = sample_paths(
        &model,
        Scheme::Euler,
        steps,
        delta,
        LevelKind::ControlVariate(&cv),
        eval_stream(5),
        0..50_000,
    )
    .unwrap();
    let factor = plain.stats.variance() / with.stats.variance();
    assert!(factor >= 10.0, "variance reduction only {factor}");

    let m = cv_mean(&model, Scheme::Euler, &cv, 100_000, 6);
    assert!(m.mean().abs() < 4.0 * m.std_error(), "{} +- {}", m.mean(), m.std_error());
}

#[test]
fn fitted_family_survives_text_round_trip() {
    let model = SdeModel::gbm(0.2, 1.0, 1.0, 4);
    let basis = PiecewiseBasis::new(2, 4, 2.5).unwrap();
    let seed = SeedStream::new(8, 8, 0, BATCH_TRAINING, 0);
    let (cv, _) = build_regression_cv(&model, Scheme::Euler, 2, 0.25, 4, 2_000, &basis, seed).unwrap();
    let Coefficients::Fitted(fam) = cv.coefficients() else {
        panic!("regression cv should hold a fitted family");
    };
    let back = FittedFamily::from_text(&fam.to_text()).unwrap();
    assert_eq!(&back, fam);
}
