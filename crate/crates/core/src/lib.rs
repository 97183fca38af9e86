#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::too_many_arguments)]

pub mod dynamics;
pub mod error;

pub use error::{Error, Result};
pub mod statkit;
pub mod epoch;
pub mod radar;
pub mod attributable;
pub mod ukf;
pub mod alg1;
pub mod alg2;
pub mod mdf;
pub mod harness;
pub mod config;
pub use config::Config;
