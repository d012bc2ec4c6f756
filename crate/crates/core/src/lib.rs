//! Core of the varying-coefficient load forecasting toolkit.
//!
//! Interval-level electricity loads are modeled as a weighted average of past
//! loads plus a weather effect expressed through a basis expansion whose
//! coefficients vary smoothly over the time-of-day index. Estimation is by
//! ridge-penalized (nonnegative) least squares; forecasts decompose into a
//! past-load component and per-covariate weather effects, and post-selection
//! forecast intervals are available for the NNLS support.
//!
//! The crate is `no_std` (with `alloc`); all IO, file formats, and the CLI
//! live in the companion `loadcast-cli` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod basis;
pub mod design;
pub mod eval;
pub mod forecast;
pub mod inference;
pub mod linalg;
pub mod solver;

pub use basis::{BasisKind, BasisSet, BasisSpec};
pub use design::{CovariateTable, DesignSystem, LoadPanel, WeightKind, WeightScheme};
pub use eval::{BacktestProtocol, BacktestReport, Candidate, TuningGrid};
pub use forecast::{BasisFamily, FittedModel, ForecastBundle, ModelConfig};
pub use solver::{Method, SolveOptions, Solution};
