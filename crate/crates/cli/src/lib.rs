//! Experiment harness for the chaos control-variate estimators.

pub mod config;
pub mod experiments;
pub mod output;

use std::path::Path;

pub use config::{Algorithm, ExperimentConfig, ExperimentKind};
use mlmc_chaos::Result;

/// Command-line overrides applied after the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub paper_scale: bool,
    pub seed: Option<u64>,
    pub out: Option<std::path::PathBuf>,
}

/// Defaults, then `path`, then `--paper-scale`, then seed and output path.
pub fn resolve_config(kind: ExperimentKind, path: Option<&Path>, ov: &Overrides) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::defaults(kind);
    if let Some(p) = path {
        cfg.load(p)?;
    }
    if ov.paper_scale {
        cfg.apply_paper_scale();
    }
    if let Some(s) = ov.seed {
        cfg.master_seed = s;
    }
    if let Some(o) = &ov.out {
        cfg.output_path = o.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Runs the experiment and renders its output files in memory.
pub fn render(cfg: &ExperimentConfig) -> Result<output::Rendered> {
    match cfg.experiment {
        ExperimentKind::VarianceDecay => output::render_variance(cfg, &experiments::run_variance_decay(cfg)?),
        ExperimentKind::CostRmse | ExperimentKind::RegressionMlmc => {
            output::render_cost(cfg, &experiments::run_cost_study(cfg)?)
        }
    }
}
