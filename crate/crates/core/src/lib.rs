#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod hrv;
pub mod io;
pub mod metrics;
pub mod morphology;
pub mod pipeline;
pub mod rpeak;
pub mod signal;
pub mod study;
pub mod survival;

pub use error::{Error, Result};
