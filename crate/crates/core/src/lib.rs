//! Learning SDE laws with Brownian and α-stable Lévy noise from short
//! bursts of simulation data.
//!
//! The pipeline is: simulate bursts ([`dataset`]), fit one normalizing flow
//! per burst ([`flow`]), then apply nonlocal Kramers–Moyal estimators
//! ([`km`]) to recover the jump parameters, drift and diffusion.

// `!(x > 0.0)` is the idiom here for rejecting NaN along with non-positives.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod error;
pub mod expr;
pub mod flow;
pub mod km;
pub mod sde;
pub mod stable;

pub use error::{Error, Result};
