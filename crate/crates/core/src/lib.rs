//! Multilevel Monte Carlo for scalar SDEs with Wiener-chaos control variates.
//!
//! The crate estimates `E f(X_T)` for `dX = b(X) dt + σ(X) dW` by plain and
//! multilevel Monte Carlo. The variance-reduced estimators subtract a control
//! variate built from normalized Hermite polynomials of the Brownian
//! increments, with coefficients known in closed form or fitted by
//! least-squares regression on independent training paths.

pub mod brownian;
pub mod chaos;
pub mod error;
pub mod estimators;
mod exec;
pub mod hermite;
pub mod quadrature;
pub mod regression;
pub mod rng;
pub mod sde;
pub mod stats;

pub use brownian::{sample_increments, BrownianGrid};
pub use chaos::{cv_evaluate, ChaosControlVariate, CoefficientOracleConfig};
pub use error::{Error, Result};
pub use estimators::{mlmc_cv, mlmc_standard, smc, CvSource, EstimateReport, EstimatorConfig, Rates};
pub use hermite::{hermite_eval, HermiteOrder};
pub use regression::{build_regression_cv, PiecewiseBasis};
pub use rng::SeedStream;
pub use sde::{reference_moment, ReferenceProblem, Scheme, SdeModel};
pub use stats::{fit_slope, RunningStats, SlopeFit};
