//! Queuing-theory-guided adaptive traffic signal control.
//!
//! The pipeline: synthetic (or recorded) optical-flow observations are
//! clustered frame by frame with a streaming Dirichlet process mixture model,
//! cluster centers form tracklets, ROI crossings flag arrivals and
//! departures, and the flagged tracklets feed a kernel-regression
//! departure-rate curve plus a per-cycle green duration predictor. A seeded
//! lane simulator provides data and ground truth for end-to-end runs.

pub mod config;
pub mod dpmm;
pub mod error;
pub mod flowmodel;
pub mod predictor;
pub mod rates;
pub mod run;
pub mod simulator;
pub mod stats;
pub mod tracklets;

pub use error::{Error, Result};
