//! Effect-aware query scheduling for pull-based status-update systems.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![cfg_attr(test, allow(clippy::field_reassign_with_default, clippy::approx_constant, clippy::needless_range_loop))]

pub mod cmdp;
pub mod config;
pub mod cpt;
pub mod env;
pub mod error;
pub mod exec;
pub mod gateway;
pub mod harness;
pub mod qlearn;
pub mod schedulers;
pub mod solver;
pub mod validate;

pub use config::SystemConfig;
pub use error::{Error, Result};
pub use exec::Execution;
