#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod besov_ipm;
pub mod error;
pub mod estimator;
pub mod haar_mra;
pub mod hard_instances;
pub mod harness;
pub mod lecam;
pub mod moment_priors;

pub use error::{Error, Result};
