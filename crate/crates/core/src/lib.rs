//! Minimax signal detection in the sequence model
//! `y_k = b_k θ_k + ε ξ_k` when the noise is only known to have bounded
//! fourth moments.
//!
//! The crate provides the spectral cut-off test and its calibration, the
//! upper and lower bounds on the separation radius, noise families ranging
//! from i.i.d. laws to the equicorrelated construction used for the lower
//! bound, and seeded Monte Carlo estimators for all of them.
//!
//! ```
//! use seqdetect_core::{CBetaMode, DetectorConfig, OperatorFamily, ProblemSpec, SmoothnessFamily};
//!
//! let spec = ProblemSpec::new(OperatorFamily::mildly_ill_posed(1.0), SmoothnessFamily::ordinary(2.0), 0.01)?;
//! let test = DetectorConfig::calibrate(&spec, 0.05, 0.05, None, CBetaMode::Exact)?;
//! assert!(test.threshold > 0.0);
//! # Ok::<(), seqdetect_core::Error>(())
//! ```

pub mod bounds;
pub mod detector;
pub mod error;
pub mod exec;
pub mod montecarlo;
pub mod noise;
pub mod rng;
mod search;
pub mod sequences;

pub use bounds::{theorem1_bounds, FitMode, RadiusBounds, RateCell, RateFit};
pub use detector::{CBeta, CBetaMode, Decision, DetectorConfig, DetectorConstants};
pub use error::{Error, Result};
pub use exec::Execution;
pub use montecarlo::{McEstimate, McPlan};
pub use noise::{CorrelationMatrix, NoiseModel, NoiseSpec};
pub use rng::RandomStream;
pub use search::PATIENCE;
pub use sequences::{IndexMode, OperatorFamily, ProblemSpec, Signal, SmoothnessFamily};
