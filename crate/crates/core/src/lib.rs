//! Synthetic-image detection toolkit.
//!
//! The pipeline goes raster -> texture-ranked patches -> per-patch class
//! distributions -> per-image vote. Everything downstream of pixel I/O is
//! deterministic for a fixed seed, including parallel runs.

pub mod alterations;
pub mod backends;
pub mod datasets;
pub mod error;
pub mod evaluation;
pub mod fixtures;
pub mod imageops;
pub mod refmodel;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Real;

/// Default scalar for the shipped pipeline. The numeric core is generic over
/// [`Real`]; these aliases pin the precision used by the CLI and reports.
pub type Glcm = imageops::GlcmMatrix<f64>;
pub type Features = refmodel::FeatureVector<f64>;
pub type Model = refmodel::RefModel<f64>;
pub type Prediction = backends::PredictionDistribution<f64>;
