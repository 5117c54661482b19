//! Shrinkage estimation of a high-dimensional mean vector toward a data-driven
//! common target, with Monte Carlo risk evaluation.
//!
//! The estimator is `alpha * xbar + beta * e`, where both coefficients come from
//! unbiased U-statistics of the sample (see [`ustats`]).

// `!(x > 0.0)` is used deliberately so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod estimators;
pub mod io;
pub mod model;
pub mod quadform;
pub mod risk;
pub mod ustats;

pub use error::{Error, Result};
pub use estimators::{Estimator, EstimatorInput, EstimatorOutput, GroundTruth, Registry};
pub use model::{CovarianceSpec, DataMatrix, ErrorDist, MeanSpec, ProblemInstance};
pub use quadform::{QSpec, QuadraticForm};
pub use risk::{Design, McOptions, RiskReport};
pub use ustats::{CoefficientPolicy, ShrinkageCoefficients, YStats};
