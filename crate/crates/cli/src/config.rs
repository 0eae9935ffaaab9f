//! Flat `key = value` experiment configuration.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use mlmc_chaos::estimators::EstimatorConfig;
use mlmc_chaos::regression::BasisSelection;
use mlmc_chaos::{Error, Result, Scheme, SdeModel};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    VarianceDecay,
    CostRmse,
    RegressionMlmc,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::VarianceDecay => "variance_decay",
            ExperimentKind::CostRmse => "cost_rmse",
            ExperimentKind::RegressionMlmc => "regression_mlmc",
        }
    }
}

impl FromStr for ExperimentKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "variance_decay" => Ok(Self::VarianceDecay),
            "cost_rmse" => Ok(Self::CostRmse),
            "regression_mlmc" => Ok(Self::RegressionMlmc),
            other => Err(Error::InvalidArgument(format!(
                "unknown experiment `{other}` (expected variance_decay, cost_rmse or regression_mlmc)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    Gbm,
    Arctan,
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gbm" => Ok(Self::Gbm),
            "arctan" => Ok(Self::Arctan),
            other => Err(Error::InvalidArgument(format!("unknown model `{other}` (expected gbm or arctan)"))),
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Gbm => "gbm",
            ModelKind::Arctan => "arctan",
        })
    }
}

/// Estimators run by the cost experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    /// Plain single-level Monte Carlo, Euler.
    Smc,
    /// Single level with the order-1 analytic control variate, Euler.
    SmcCv1,
    /// Single level with the order-2 analytic control variate, weak order 2 scheme.
    SmcCv2Weak2,
    /// Standard multilevel, Milstein.
    Mlmc,
    /// Multilevel from `L0` with the analytic control variate, Milstein.
    MlmcCv,
    /// Multilevel from `L0` with a regression-fitted control variate, Milstein.
    MlmcCvRegression,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::Smc,
        Algorithm::SmcCv1,
        Algorithm::SmcCv2Weak2,
        Algorithm::Mlmc,
        Algorithm::MlmcCv,
        Algorithm::MlmcCvRegression,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Algorithm::Smc => "smc",
            Algorithm::SmcCv1 => "smc_cv1",
            Algorithm::SmcCv2Weak2 => "smc_cv2_weak2",
            Algorithm::Mlmc => "mlmc",
            Algorithm::MlmcCv => "mlmc_cv",
            Algorithm::MlmcCvRegression => "mlmc_cv_regression",
        }
    }

    pub fn tag(&self) -> u64 {
        *self as u64 + 1
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown algorithm `{s}`")))
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: ExperimentKind,
    pub model: ModelKind,
    pub scheme: Scheme,
    pub sigma: f64,
    pub x0: f64,
    pub horizon: f64,
    pub k_list: Vec<usize>,
    pub j_min: usize,
    pub j_max: usize,
    pub j_count: usize,
    /// Accuracies `ε = 2^{-i}` for `i` in `eps_min_exp..=eps_max_exp`.
    pub eps_min_exp: u32,
    pub eps_max_exp: u32,
    /// Finest accuracy for plain SMC, whose cost grows like `ε^{-3}`.
    pub smc_max_exp: u32,
    pub algorithms: Vec<Algorithm>,
    pub runs: usize,
    pub samples: u64,
    pub master_seed: u64,
    pub output_path: PathBuf,
    pub cv_order: usize,
    pub degree: usize,
    pub mu: f64,
    pub estimator: EstimatorConfig,
}

impl ExperimentConfig {
    /// Desk-scale defaults for `kind`.
    pub fn defaults(kind: ExperimentKind) -> Self {
        let base = Self {
            experiment: kind,
            model: ModelKind::Gbm,
            scheme: Scheme::Euler,
            sigma: 0.2,
            x0: 1.0,
            horizon: 1.0,
            k_list: vec![0, 1, 2, 3, 4],
            j_min: 10,
            j_max: 1000,
            j_count: 10,
            eps_min_exp: 2,
            eps_max_exp: 9,
            smc_max_exp: 7,
            algorithms: vec![
                Algorithm::Smc,
                Algorithm::SmcCv1,
                Algorithm::SmcCv2Weak2,
                Algorithm::Mlmc,
                Algorithm::MlmcCv,
            ],
            runs: 20,
            samples: 100_000,
            master_seed: 20_240_611,
            output_path: PathBuf::from("out"),
            cv_order: 2,
            degree: 3,
            mu: f64::INFINITY,
            estimator: EstimatorConfig::default(),
        };
        match kind {
            ExperimentKind::VarianceDecay | ExperimentKind::CostRmse => base,
            ExperimentKind::RegressionMlmc => Self {
                model: ModelKind::Arctan,
                scheme: Scheme::MILSTEIN,
                eps_max_exp: 8,
                algorithms: vec![Algorithm::Mlmc, Algorithm::MlmcCvRegression],
                ..base
            },
        }
    }

    /// Grids and repetition counts of the original study.
    pub fn apply_paper_scale(&mut self) {
        self.runs = 100;
        self.samples = 1_000_000;
        match self.experiment {
            ExperimentKind::VarianceDecay => self.j_max = 10_000,
            ExperimentKind::CostRmse => {
                self.eps_max_exp = 16;
                self.smc_max_exp = 13;
            }
            ExperimentKind::RegressionMlmc => self.eps_max_exp = 12,
        }
    }

    pub fn model(&self) -> SdeModel {
        match self.model {
            ModelKind::Gbm => SdeModel::gbm(self.sigma, self.x0, self.horizon, 4),
            ModelKind::Arctan => SdeModel::arctan(),
        }
    }

    /// Finest accuracy exponent used for `alg`. The analytic-CV estimators
    /// run on the full grid; the original study also stopped plain SMC and
    /// standard MLMC earlier than the variance-reduced runs.
    pub fn max_exp_for(&self, alg: Algorithm) -> u32 {
        match alg {
            Algorithm::Smc => self.smc_max_exp.min(self.eps_max_exp),
            _ => self.eps_max_exp,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.runs < 1 {
            return bad("runs must be at least 1".into());
        }
        if self.samples < 2 {
            return bad("samples must be at least 2".into());
        }
        if self.k_list.is_empty() {
            return bad("K_list is empty".into());
        }
        if self.j_min < 1 || self.j_max < self.j_min || self.j_count < 1 {
            return bad(format!(
                "invalid step grid J_min={} J_max={} J_count={}",
                self.j_min, self.j_max, self.j_count
            ));
        }
        if self.eps_min_exp > self.eps_max_exp {
            return bad("eps_min_exp exceeds eps_max_exp".into());
        }
        if self.algorithms.is_empty() {
            return bad("no algorithms selected".into());
        }
        if !(self.sigma > 0.0 && self.horizon > 0.0) {
            return bad("sigma and horizon must be positive".into());
        }
        if self.cv_order < 1 {
            return bad("cv_order must be at least 1".into());
        }
        match self.experiment {
            ExperimentKind::RegressionMlmc => {
                if self.model != ModelKind::Arctan || !self.scheme.is_milstein() {
                    return bad("regression_mlmc runs the arctan model with the milstein scheme".into());
                }
            }
            ExperimentKind::CostRmse if self.model != ModelKind::Gbm => {
                return bad("cost_rmse needs the gbm model (analytic control variates)".into());
            }
            _ => {}
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::InvalidArgument(format!("line {}: expected `key = value`", no + 1)))?;
            self.set(key.trim(), value.trim())
                .map_err(|e| Error::InvalidArgument(format!("line {}: {e}", no + 1)))?;
        }
        Ok(())
    }

    pub fn load(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::InvalidArgument(format!("cannot read {}: {e}", path.display())))?;
        self.apply_text(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn num<T: FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::InvalidArgument(format!("`{key}`: cannot parse `{v}`")))
        }
        fn list<T: FromStr>(key: &str, v: &str) -> Result<Vec<T>> {
            v.split(',').map(|s| num(key, s.trim())).collect()
        }
        match key {
            "experiment" => {
                let kind: ExperimentKind = value.parse()?;
                if kind != self.experiment {
                    return Err(Error::InvalidArgument(format!(
                        "config is for `{value}` but `{}` was requested",
                        self.experiment.name()
                    )));
                }
            }
            "model" => self.model = value.parse()?,
            "scheme" => self.scheme = value.parse()?,
            "sigma" => self.sigma = num(key, value)?,
            "x0" => self.x0 = num(key, value)?,
            "horizon" => self.horizon = num(key, value)?,
            "K_list" => self.k_list = list(key, value)?,
            "J_min" => self.j_min = num(key, value)?,
            "J_max" => self.j_max = num(key, value)?,
            "J_count" => self.j_count = num(key, value)?,
            "eps_min_exp" => self.eps_min_exp = num(key, value)?,
            "eps_max_exp" => self.eps_max_exp = num(key, value)?,
            "smc_max_exp" => self.smc_max_exp = num(key, value)?,
            "algorithms" => {
                self.algorithms = value
                    .split(',')
                    .map(|s| s.trim().parse())
                    .collect::<Result<Vec<Algorithm>>>()?
            }
            "runs" => self.runs = num(key, value)?,
            "samples" => self.samples = num(key, value)?,
            "master_seed" => self.master_seed = num(key, value)?,
            "output_path" => self.output_path = PathBuf::from(value),
            "cv_order" => self.cv_order = num(key, value)?,
            "degree" => self.degree = num(key, value)?,
            "mu" => {
                self.mu = match value {
                    "inf" | "infinity" => f64::INFINITY,
                    v => num(key, v)?,
                }
            }
            "bias_constant" => self.estimator.bias_constant = num(key, value)?,
            "c_start" => self.estimator.c_start = num(key, value)?,
            "c_train" => self.estimator.c_train = num(key, value)?,
            "pilot_scale" => self.estimator.pilot_scale = num(key, value)?,
            "pilot_min" => self.estimator.pilot_min = num(key, value)?,
            "basis_radius" => self.estimator.basis.radius0 = num(key, value)?,
            "c_q" => self.estimator.basis.c_q = num(key, value)?,
            other => return Err(Error::InvalidArgument(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Every effective setting as `key = value` lines in a fixed order.
    pub fn canonical(&self) -> String {
        let join = |v: &[String]| v.join(",");
        let BasisSelection { radius0, c_q } = self.estimator.basis;
        let e = &self.estimator;
        [
            ("experiment", self.experiment.name().to_string()),
            ("model", self.model.to_string()),
            ("scheme", self.scheme.to_string()),
            ("sigma", format!("{:?}", self.sigma)),
            ("x0", format!("{:?}", self.x0)),
            ("horizon", format!("{:?}", self.horizon)),
            ("K_list", join(&self.k_list.iter().map(|k| k.to_string()).collect::<Vec<_>>())),
            ("J_min", self.j_min.to_string()),
            ("J_max", self.j_max.to_string()),
            ("J_count", self.j_count.to_string()),
            ("eps_min_exp", self.eps_min_exp.to_string()),
            ("eps_max_exp", self.eps_max_exp.to_string()),
            ("smc_max_exp", self.smc_max_exp.to_string()),
            ("algorithms", join(&self.algorithms.iter().map(|a| a.to_string()).collect::<Vec<_>>())),
            ("runs", self.runs.to_string()),
            ("samples", self.samples.to_string()),
            ("master_seed", self.master_seed.to_string()),
            ("cv_order", self.cv_order.to_string()),
            ("degree", self.degree.to_string()),
            ("mu", format!("{:?}", self.mu)),
            ("bias_constant", format!("{:?}", e.bias_constant)),
            ("c_start", format!("{:?}", e.c_start)),
            ("c_train", format!("{:?}", e.c_train)),
            ("pilot_scale", format!("{:?}", e.pilot_scale)),
            ("pilot_min", e.pilot_min.to_string()),
            ("basis_radius", format!("{radius0:?}")),
            ("c_q", format!("{c_q:?}")),
        ]
        .iter()
        .map(|(k, v)| format!("{k} = {v}\n"))
        .collect()
    }

    /// First 16 hex digits of the SHA-256 of [`canonical`](Self::canonical).
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.canonical().as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_flat_file() {
        let mut c = ExperimentConfig::defaults(ExperimentKind::CostRmse);
        c.apply_text(
            "# desk run\nruns = 5\nK_list = 1, 2\nalgorithms = mlmc, mlmc_cv # two\nmu = inf\nscheme = milstein\n",
        )
        .unwrap();
        assert_eq!(c.runs, 5);
        assert_eq!(c.k_list, vec![1, 2]);
        assert_eq!(c.algorithms, vec![Algorithm::Mlmc, Algorithm::MlmcCv]);
        assert_eq!(c.scheme, Scheme::MILSTEIN);
        assert!(c.mu.is_infinite());
    }

    #[test]
    fn rejects_bad_lines() {
        let mut c = ExperimentConfig::defaults(ExperimentKind::CostRmse);
        assert!(c.apply_text("runs 5").is_err());
        assert!(c.apply_text("bogus = 1").is_err());
        assert!(c.apply_text("runs = many").is_err());
        assert!(c.apply_text("experiment = variance_decay").is_err());
    }

    #[test]
    fn validation() {
        let mut c = ExperimentConfig::defaults(ExperimentKind::VarianceDecay);
        assert!(c.validate().is_ok());
        c.samples = 1;
        assert!(c.validate().is_err());
        let mut c = ExperimentConfig::defaults(ExperimentKind::RegressionMlmc);
        assert!(c.validate().is_ok());
        c.model = ModelKind::Gbm;
        assert!(c.validate().is_err());
    }

    #[test]
    fn hash_tracks_settings() {
        let a = ExperimentConfig::defaults(ExperimentKind::CostRmse);
        let mut b = a.clone();
        assert_eq!(a.hash(), b.hash());
        b.master_seed += 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
    }
}
