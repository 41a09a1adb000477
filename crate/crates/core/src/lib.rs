//! GPS mobility analytics.
//!
//! Raw traces are segmented into local days ([`ingest`]), reduced to 47-value
//! Daily Displacement Profiles ([`ddp`]) and summarised three ways: principal
//! components ([`analysis`]), rest-activity rhythm metrics ([`circadian`]) and
//! seven daily mobility phenotypes ([`phenotypes`]). [`predict`] evaluates
//! severe-sadness classifiers with leave-one-participant-out validation, and
//! [`synth`] generates cohorts with known ground truth for end-to-end checks.

pub mod analysis;
pub mod circadian;
pub mod ddp;
pub mod error;
pub mod geo;
pub mod ingest;
pub mod linalg;
pub mod phenotypes;
pub mod pipeline;
pub mod places;
pub mod predict;
pub mod seed;
pub mod synth;
pub mod stats;

pub use error::{Error, Result};
