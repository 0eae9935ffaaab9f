use mlmc_chaos::estimators::{sample_paths, LevelKind};
use mlmc_chaos::rng::BATCH_EVALUATION;
use mlmc_chaos::sde::{reference_moment, simulate_coupled, simulate_path, ReferenceProblem};
use mlmc_chaos::{fit_slope, sample_increments, Scheme, SdeModel, SeedStream};

fn stream(tag: u64) -> SeedStream {
    SeedStream::new(2024, tag, 0, BATCH_EVALUATION, 0)
}

#[test]
fn euler_mean_matches_closed_form() {
    let model = SdeModel::gbm(0.2, 1.0, 1.0, 4);
    for steps in [4usize, 16] {
        let delta = 1.0 / steps as f64;
        let s = sample_paths(&model, Scheme::Euler, steps, delta, LevelKind::Single, stream(1), 0..200_000).unwrap();
        let exact = reference_moment(ReferenceProblem::GbmQuarticEuler {
            x0: 1.0,
            sigma: 0.2,
            delta,
            steps,
        });
        let z = (s.stats.mean() - exact) / s.stats.std_error();
        assert!(z.abs() < 4.0, "J={steps}: mean {} exact {exact} z {z}", s.stats.mean());
    }
}

#[test]
fn euler_weak_error_is_first_order() {
    // closed-form Euler means against the exact moment; no sampling involved
    let exact = reference_moment(ReferenceProblem::GbmQuarticExact {
        x0: 1.0,
        sigma: 0.2,
        horizon: 1.0,
    });
    let pts: Vec<(f64, f64)> = [8usize, 16, 32, 64, 128]
        .iter()
        .map(|&j| {
            let delta = 1.0 / j as f64;
            let e = reference_moment(ReferenceProblem::GbmQuarticEuler {
                x0: 1.0,
                sigma: 0.2,
                delta,
                steps: j,
            });
            (delta, (exact - e).abs())
        })
        .collect();
    let fit = fit_slope(&pts).unwrap();
    assert!((fit.slope - 1.0).abs() < 0.05, "{fit:?}");
}

#[test]
fn coupling_variance_rates() {
    let model = SdeModel::gbm(0.2, 1.0, 1.0, 4);
    for (scheme, beta) in [(Scheme::Euler, 1.0), (Scheme::MILSTEIN, 2.0)] {
        let pts: Vec<(f64, f64)> = (4..=8u32)
            .map(|l| {
                let steps = 1usize << l;
                let delta = 1.0 / steps as f64;
                let s = sample_paths(&model, scheme, steps, delta, LevelKind::Coupled, stream(2), 0..40_000).unwrap();
                (delta, s.stats.variance())
            })
            .collect();
        let fit = fit_slope(&pts).unwrap();
        assert!((fit.slope - beta).abs() < 0.3, "{scheme}: {fit:?}");
    }
}

#[test]
fn milstein_arctan_weak_error_small() {
    let model = SdeModel::arctan();
    let s = sample_paths(&model, Scheme::MILSTEIN, 64, 1.0 / 64.0, LevelKind::Single, stream(3), 0..100_000).unwrap();
    let err = (s.stats.mean() - model.exact_value().unwrap()).abs();
    assert!(err < 0.01 + 4.0 * s.stats.std_error(), "error {err}");
}

#[test]
fn telescoping_sum_is_exact_per_path() {
    let model = SdeModel::arctan();
    let grid = sample_increments(&stream(4).with_path(17), 64, 1.0 / 64.0).unwrap();
    let mut g = grid.clone();
    let mut sum = 0.0;
    let mut finest = None;
    while g.steps() > 1 {
        let p = simulate_coupled(&model, Scheme::MILSTEIN, &g).unwrap();
        finest.get_or_insert(p.payoff_fine);
        sum += p.payoff_fine - p.payoff_coarse.unwrap();
        g = g.coarsen().unwrap();
    }
    let coarsest = simulate_path(&model, Scheme::MILSTEIN, &g).unwrap();
    let total = coarsest.payoff_fine + sum;
    assert!((total - finest.unwrap()).abs() < 1e-14);
}
