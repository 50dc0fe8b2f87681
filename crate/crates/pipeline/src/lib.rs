//! End-to-end pipeline: simulate bursts, train flows, extract the SDE law
//! and report errors against the known truth.

// `!(x > 0.0)` is the idiom here for rejecting NaN along with non-positives.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod plot;
pub mod report;
pub mod stages;

pub use config::{RunConfig, OUTPUT_ROOT_ENV};
pub use error::{PipelineError, Result};
pub use report::{ComponentError, RunReport};
pub use stages::{Outcome, Pipeline, Stage};
