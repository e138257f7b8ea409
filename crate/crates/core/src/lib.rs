//! Tabular benchmarking toolkit for housing price models.
//!
//! The crate covers the full experiment: a typed [`data::Dataset`], a seeded
//! synthetic generator ([`synth`]), the preprocessing pipeline
//! ([`preprocess`]), four regressors ([`hedonic`], [`ann`], [`forest`],
//! [`knn`]) and the repeated-split comparison harness ([`eval`]).

pub mod ann;
pub mod data;
pub mod error;
pub mod eval;
pub mod forest;
pub mod hedonic;
pub mod knn;
pub mod linalg;
pub mod model;
pub mod preprocess;
pub mod stats;
pub mod synth;

pub use error::{Error, Result};
