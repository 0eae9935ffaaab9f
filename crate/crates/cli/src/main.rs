use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use mlmc_chaos_cli::{output, render, resolve_config, ExperimentKind, Overrides};

const AFTER_HELP: &str = "\
Experiments: variance_decay, cost_rmse, regression_mlmc.

Config files hold one `key = value` per line; `#` starts a comment.
Precedence: built-in defaults, config file, --paper-scale, --seed/--out.

Output files (floats with 17 significant digits; every row ends with
master_seed,config_hash):
  variance_decay.csv  J,delta,K,variance,relative_variance,samples
  runs.csv            algorithm,epsilon,run_id,estimate,cost_units,l0,l
  summary.csv         algorithm,epsilon,runs,rmse,mean_cost
  fits.csv            series,x,y,slope,intercept,r_squared,points
                      (slope of log y against log x)
  summary.txt         fitted slopes and PASS/FAIL against tolerances
  config.txt          effective configuration";

#[derive(Parser, Debug)]
#[command(name = "mlmc-chaos", version, about = "Multilevel Monte Carlo with chaos control variates", after_help = AFTER_HELP)]
struct Cli {
    /// variance_decay, cost_rmse or regression_mlmc
    experiment: String,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Use the full grids and repetition counts (slow)
    #[arg(long)]
    paper_scale: bool,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: all cores)
    #[arg(long)]
    threads: Option<usize>,
}

fn run(cli: Cli) -> Result<(), String> {
    let kind: ExperimentKind = cli.experiment.parse().map_err(|e| format!("{e}"))?;
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| e.to_string())?;
    }
    let ov = Overrides {
        paper_scale: cli.paper_scale,
        seed: cli.seed,
        out: cli.out,
    };
    let cfg = resolve_config(kind, cli.config.as_deref(), &ov).map_err(|e| e.to_string())?;
    let files = render(&cfg).map_err(|e| e.to_string())?;
    let written = output::write_all(&cfg.output_path, &cfg, &files).map_err(|e| e.to_string())?;
    if let Some((_, summary)) = files.iter().find(|(n, _)| *n == "summary.txt") {
        print!("{summary}");
    }
    for p in written {
        eprintln!("wrote {}", p.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
