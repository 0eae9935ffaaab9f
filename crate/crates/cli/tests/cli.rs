use std::fs;
use std::path::Path;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mlmc-chaos"))
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let p = dir.join("run.cfg");
    fs::write(&p, body).unwrap();
    p
}

const SMALL_COST: &str = "\
# tiny grid
experiment = cost_rmse
algorithms = mlmc, mlmc_cv, smc_cv1
eps_min_exp = 2
eps_max_exp = 5
runs = 4
";

#[test]
fn help_documents_columns() {
    let out = bin().arg("--help").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for col in ["algorithm,epsilon,run_id,estimate,cost_units", "J,delta,K,variance", "--paper-scale", "--threads"] {
        assert!(text.contains(col), "help is missing {col}");
    }
}

#[test]
fn rejects_bad_input_with_nonzero_exit() {
    let dir = tempfile::tempdir().unwrap();
    let out = bin().arg("fig5").output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown experiment"));

    let cfg = write_config(dir.path(), "colour = blue\n");
    let out = bin().args(["cost_rmse", "--config"]).arg(&cfg).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("unknown key"));

    let cfg = write_config(dir.path(), "runs = 0\n");
    let out = bin().args(["cost_rmse", "--config"]).arg(&cfg).output().unwrap();
    assert!(!out.status.success());

    let cfg = write_config(dir.path(), "model = gbm\n");
    let out = bin().args(["regression_mlmc", "--config"]).arg(&cfg).output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn cost_run_is_deterministic_and_consistent() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL_COST);
    let run = |name: &str, threads: &str| {
        let out_dir = dir.path().join(name);
        let st = bin()
            .args(["cost_rmse", "--config"])
            .arg(&cfg)
            .args(["--seed", "314", "--threads", threads, "--out"])
            .arg(&out_dir)
            .output()
            .unwrap();
        assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
        out_dir
    };
    let a = run("a", "1");
    let b = run("b", "3");
    for f in ["runs.csv", "summary.csv", "fits.csv", "summary.txt", "config.txt"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f} differs");
    }

    let mut runs = csv::Reader::from_path(a.join("runs.csv")).unwrap();
    let header = runs.headers().unwrap().clone();
    assert_eq!(&header[header.len() - 2], "master_seed");
    let rows: Vec<csv::StringRecord> = runs.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 3 * 4 * 4);
    assert!(rows.iter().all(|r| &r[7] == "314" && r[8].len() == 16));

    let exact = 0.24f64.exp();
    let mut summary = csv::Reader::from_path(a.join("summary.csv")).unwrap();
    for s in summary.records().map(|r| r.unwrap()) {
        let group: Vec<f64> = rows
            .iter()
            .filter(|r| r[0] == s[0] && r[1] == s[1])
            .map(|r| r[3].parse::<f64>().unwrap())
            .collect();
        let rmse = (group.iter().map(|e| (e - exact).powi(2)).sum::<f64>() / group.len() as f64).sqrt();
        let reported: f64 = s[3].parse().unwrap();
        assert!((rmse - reported).abs() <= 1e-12, "{rmse} vs {reported}");
    }
}

#[test]
fn seed_changes_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "samples = 500\nJ_min = 4\nJ_max = 32\nJ_count = 4\nK_list = 0, 1, 2\n");
    let hash = |seed: &str| {
        let out = dir.path().join(seed);
        let st = bin()
            .args(["variance_decay", "--config"])
            .arg(&cfg)
            .args(["--seed", seed, "--out"])
            .arg(&out)
            .output()
            .unwrap();
        assert!(st.status.success(), "{}", String::from_utf8_lossy(&st.stderr));
        let text = fs::read_to_string(out.join("variance_decay.csv")).unwrap();
        let line = text.lines().nth(1).unwrap().to_string();
        line.rsplit(',').next().unwrap().to_string()
    };
    assert_ne!(hash("1"), hash("2"));
}

#[test]
fn paper_scale_overrides_file_but_not_seed() {
    use mlmc_chaos_cli::{resolve_config, ExperimentKind, Overrides};
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "runs = 3\nmaster_seed = 9\n");
    let ov = Overrides {
        paper_scale: true,
        seed: Some(12),
        out: None,
    };
    let c = resolve_config(ExperimentKind::CostRmse, Some(&cfg), &ov).unwrap();
    assert_eq!(c.runs, 100);
    assert_eq!(c.eps_max_exp, 16);
    assert_eq!(c.master_seed, 12);
}
