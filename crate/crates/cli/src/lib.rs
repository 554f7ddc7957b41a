//! Experiment driver for the latent-langevin samplers: simulate an
//! observation, calibrate `theta` and `rho2` by SAPG, sample, and compare runs.
//!
//! Every command writes into `<output>/<stage>/` and leaves a
//! `manifest.json` from which the run can be repeated.
// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod error;
pub mod manifest;
pub mod output;

pub use config::{ExperimentConfig, Overrides};
pub use error::{CliError, Result};
pub use manifest::RunManifest;
