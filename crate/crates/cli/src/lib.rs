//! IO, file formats, and batch commands for the load forecasting toolkit.

pub mod commands;
pub mod config;
pub mod ingest;
pub mod persist;
