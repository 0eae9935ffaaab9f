use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("hermite order {0} exceeds the supported maximum of {max}", max = crate::hermite::MAX_HERMITE_ORDER)]
    HermiteOrderTooLarge(usize),

    #[error("step count must be positive")]
    ZeroSteps,

    #[error("step size must be positive and finite, got {0}")]
    InvalidStepSize(f64),

    #[error("cannot coarsen a grid with an odd number of steps ({0})")]
    OddStepCount(usize),

    #[error("horizon {horizon} is not an integer multiple of step size {delta}")]
    IncommensurateStep { horizon: f64, delta: f64 },

    #[error("scheme requires the diffusion derivative, which model `{0}` does not provide")]
    MissingDiffusionDerivative(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("chaos order {requested} not available for {family} (maximum {max})")]
    ChaosOrderUnavailable {
        family: &'static str,
        requested: usize,
        max: usize,
    },

    #[error("oracle step count {steps} exceeds the configured maximum {max}")]
    OracleTooDeep { steps: usize, max: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("regression target has no samples")]
    EmptyTarget,

    #[error("negative truncation bound {0}")]
    NegativeBound(f64),

    #[error("target accuracy must be positive, got {0}")]
    InvalidEpsilon(f64),

    #[error("level {0} exceeds the maximum supported level")]
    LevelTooDeep(u32),

    #[error("malformed control variate artifact: {0}")]
    Artifact(String),
}

pub type Result<T> = std::result::Result<T, Error>;
