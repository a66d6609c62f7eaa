//! Stochastic NPZD (nutrient, phytoplankton, zooplankton, detritus) mixed-layer
//! model cast as a Bayesian state-space model, with a bootstrap particle filter
//! and particle-marginal Metropolis-Hastings sampler for joint state and
//! parameter estimation.
//!
//! Layout:
//! - [`model`]: deterministic NPZD rate functions and the daily integration step.
//! - [`ar`]: lognormal AR(1) processes for drifting community properties.
//! - [`prior`]: the parameter level (independent lognormal / truncated normal priors).
//! - [`obs`]: lognormal multiplicative observation error.
//! - [`smc`]: model-generic particle filter and PMMH.
//! - [`npzd`]: the NPZD state-space model tying the above together.
//! - [`harness`]: forcing I/O, experiments, summaries and file formats.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ar;
pub mod error;
pub mod harness;
pub mod model;
pub mod npzd;
pub mod obs;
pub mod prior;
pub mod rng;
pub mod smc;

pub use error::{Error, Result};
