//! CSV and summary rendering. Floats use 17 significant digits.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use mlmc_chaos::{Error, Result, SlopeFit};

use crate::config::ExperimentConfig;
use crate::experiments::{Check, CostStudy, VarianceDecay, REGRESSION_THEORY_EXPONENT};

pub const VARIANCE_COLUMNS: &[&str] = &[
    "J",
    "delta",
    "K",
    "variance",
    "relative_variance",
    "samples",
    "master_seed",
    "config_hash",
];
pub const RUN_COLUMNS: &[&str] = &[
    "algorithm",
    "epsilon",
    "run_id",
    "estimate",
    "cost_units",
    "l0",
    "l",
    "master_seed",
    "config_hash",
];
pub const SUMMARY_COLUMNS: &[&str] = &[
    "algorithm",
    "epsilon",
    "runs",
    "rmse",
    "mean_cost",
    "master_seed",
    "config_hash",
];
pub const FIT_COLUMNS: &[&str] = &[
    "series",
    "x",
    "y",
    "slope",
    "intercept",
    "r_squared",
    "points",
    "master_seed",
    "config_hash",
];

pub fn float(v: f64) -> String {
    format!("{v:.16e}")
}

fn to_csv(header: &[&str], records: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::InvalidArgument(format!("csv: {e}"));
    w.write_record(header).map_err(io)?;
    for r in records {
        w.write_record(&r).map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidArgument(format!("csv: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::InvalidArgument(format!("csv: {e}")))
}

fn fit_record(series: &str, x: &str, y: &str, f: &SlopeFit, prov: &[String; 2]) -> Vec<String> {
    vec![
        series.to_string(),
        x.to_string(),
        y.to_string(),
        float(f.slope),
        float(f.intercept),
        float(f.r_squared),
        f.points.len().to_string(),
        prov[0].clone(),
        prov[1].clone(),
    ]
}

/// Named output files with their contents.
pub type Rendered = Vec<(&'static str, String)>;

fn provenance(cfg: &ExperimentConfig) -> [String; 2] {
    [cfg.master_seed.to_string(), cfg.hash()]
}

pub fn render_variance(cfg: &ExperimentConfig, res: &VarianceDecay) -> Result<Rendered> {
    let p = provenance(cfg);
    let rows = to_csv(
        VARIANCE_COLUMNS,
        res.rows.iter().map(|r| {
            vec![
                r.j.to_string(),
                float(r.delta),
                r.k.to_string(),
                float(r.variance),
                float(r.relative_variance),
                r.samples.to_string(),
                p[0].clone(),
                p[1].clone(),
            ]
        }),
    )?;
    let fits = to_csv(
        FIT_COLUMNS,
        res.fits
            .iter()
            .map(|(k, f)| fit_record(&format!("K={k}"), "delta", "variance", f, &p)),
    )?;
    let mut s = header(cfg);
    for (k, f) in &res.fits {
        let _ = writeln!(s, "K={k}: variance slope vs delta {:.4} (r^2 {:.4})", f.slope, f.r_squared);
    }
    s.push_str(&checks_text(&crate::experiments::variance_checks(res)));
    Ok(vec![("variance_decay.csv", rows), ("fits.csv", fits), ("summary.txt", s)])
}

pub fn render_cost(cfg: &ExperimentConfig, study: &CostStudy) -> Result<Rendered> {
    let p = provenance(cfg);
    let runs = to_csv(
        RUN_COLUMNS,
        study.rows.iter().map(|r| {
            vec![
                r.algorithm.to_string(),
                float(r.epsilon),
                r.run_id.to_string(),
                float(r.estimate),
                r.cost_units.to_string(),
                r.l0.to_string(),
                r.l.to_string(),
                p[0].clone(),
                p[1].clone(),
            ]
        }),
    )?;
    let summary = to_csv(
        SUMMARY_COLUMNS,
        study.summary.iter().map(|s| {
            vec![
                s.algorithm.to_string(),
                float(s.epsilon),
                s.runs.to_string(),
                float(s.rmse),
                float(s.mean_cost),
                p[0].clone(),
                p[1].clone(),
            ]
        }),
    )?;
    let fits = to_csv(
        FIT_COLUMNS,
        study.fits.iter().flat_map(|f| {
            let name = f.algorithm.to_string();
            [
                fit_record(&name, "epsilon", "mean_cost", &f.cost_vs_eps, &p),
                fit_record(&name, "mean_cost", "rmse", &f.rmse_vs_cost, &p),
            ]
        }),
    )?;

    let mut s = header(cfg);
    let _ = writeln!(s, "reference value {}", float(study.reference));
    s.push_str(
        "convention: slopes are d log(cost) / d log(eps), so cost ~ eps^slope; the exponent is -slope.\n\
         the rmse-vs-cost slope is -1/exponent when rmse tracks eps.\n",
    );
    for f in &study.fits {
        let _ = writeln!(
            s,
            "{}: cost slope {:.4} (exponent {:.4}, r^2 {:.4}); rmse vs cost slope {:.4}",
            f.algorithm,
            f.cost_vs_eps.slope,
            -f.cost_vs_eps.slope,
            f.cost_vs_eps.r_squared,
            f.rmse_vs_cost.slope
        );
    }
    if study.kind == crate::config::ExperimentKind::RegressionMlmc {
        let _ = writeln!(s, "theoretical regression-cv exponent 27/16 = {REGRESSION_THEORY_EXPONENT}");
    }
    for w in &study.warnings {
        let _ = writeln!(s, "warning: {w}");
    }
    s.push_str(&checks_text(&crate::experiments::cost_checks(study)));
    Ok(vec![
        ("runs.csv", runs),
        ("summary.csv", summary),
        ("fits.csv", fits),
        ("summary.txt", s),
    ])
}

fn header(cfg: &ExperimentConfig) -> String {
    format!(
        "experiment {}\nmaster_seed {}\nconfig_hash {}\n",
        cfg.experiment.name(),
        cfg.master_seed,
        cfg.hash()
    )
}

fn checks_text(checks: &[Check]) -> String {
    let mut s = String::new();
    for c in checks {
        let _ = writeln!(
            s,
            "{} {}: {:.6} (target {}, tolerance {})",
            if c.pass { "PASS" } else { "FAIL" },
            c.name,
            c.value,
            c.target,
            c.tolerance
        );
    }
    s
}

/// Writes `files` under `dir` along with the effective configuration.
pub fn write_all(dir: &Path, cfg: &ExperimentConfig, files: &Rendered) -> Result<Vec<PathBuf>> {
    let io = |e: std::io::Error| Error::InvalidArgument(format!("{}: {e}", dir.display()));
    fs::create_dir_all(dir).map_err(io)?;
    let config = cfg.canonical();
    let mut written = Vec::new();
    for (name, body) in files.iter().map(|(n, b)| (*n, b.as_str())).chain([("config.txt", config.as_str())]) {
        let path = dir.join(name);
        fs::write(&path, body).map_err(io)?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for v in [0.1, 1.0 / 3.0, 6.02e23, -2.5e-300] {
            let s = float(v);
            assert_eq!(s.parse::<f64>().unwrap(), v);
        }
        assert_eq!(float(0.1), "1.0000000000000001e-1");
    }
}
