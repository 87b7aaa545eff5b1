//! Experiment CLI over the core optimization library: seeded, reproducible
//! runs described by a JSON config, written out as CSV/JSON artifacts.

// `!(x > 0.0)` guards reject NaN; the comparison-op rewrite would let it through.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod artifacts;
pub mod compare;
pub mod config;
pub mod error;
pub mod experiments;
pub mod fd;

pub use error::CliError;
