//! Bayesian imaging with latent-space Langevin samplers.
//!
//! The crate provides a TV-regularised linear-Gaussian imaging model, the
//! MYULA / SK-ROCK samplers and their split latent-space variants, a
//! stochastic approximation scheme for estimating the regularisation and
//! splitting parameters, and chain diagnostics.
// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diagnostics;
pub mod error;
pub mod exec;
pub mod forward;
pub mod grid;
pub mod prior;
pub mod samplers;
pub mod sapg;

pub use error::{Error, Result};
pub use exec::Execution;
pub use grid::ImageGrid;
