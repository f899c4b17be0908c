//! Doubly debiased Lasso: inference for single coefficients of a
//! high-dimensional linear model in the presence of hidden confounders.
//!
//! The numerical core ([`spectral`], [`lasso`], [`ddl`]) is generic over the
//! scalar type ([`Real`], implemented for `f32` and `f64`). Simulation and
//! benchmarking ([`simgen`], [`bench`]) work in `f64`.

pub mod bench;
pub mod ddl;
pub mod error;
pub mod format;
pub mod lasso;
pub mod scalar;
pub mod seeding;
pub mod simgen;
pub mod spectral;

pub use ddl::{
    are, confidence_interval, debiased_lasso_baseline, fit, fit_detailed, initial_estimator,
    noise_level, normal_quantile, point_estimate, projection_direction, variance_estimate,
    TransformChoice, Tuning,
};
pub use error::{DdlError, Result};
pub use scalar::Real;

/// Double-precision aliases.
pub type DdlConfig = ddl::DdlConfig<f64>;
pub type DdlResult = ddl::DdlResult<f64>;
pub type DdlFit = ddl::DdlFit<f64>;
pub type ProjectionDirection = ddl::ProjectionDirection<f64>;
pub type InitialEstimate = ddl::InitialEstimate<f64>;
pub type SpectralTransform = spectral::SpectralTransform<f64>;
pub type LassoFit = lasso::LassoFit<f64>;
pub type Matrix = nalgebra::DMatrix<f64>;
pub type Vector = nalgebra::DVector<f64>;

/// Single-precision aliases.
pub type DdlConfigF32 = ddl::DdlConfig<f32>;
pub type DdlResultF32 = ddl::DdlResult<f32>;
pub type SpectralTransformF32 = spectral::SpectralTransform<f32>;
