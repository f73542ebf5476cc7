//! Machine-assisted annotation of text units with error-aware statistics.
//!
//! The crate covers the whole quantitizing workflow: ingesting and unitizing
//! texts ([`corpus`]), labelling them with an instructable model or a
//! deterministic mock ([`annotator`]), scoring labels against expert gold
//! ([`agreement`]), and carrying annotation error into downstream estimates
//! through a confusion-matrix bootstrap ([`bootstrap`], [`stats`]).

pub mod agreement;
pub mod annotator;
pub mod bootstrap;
pub mod corpus;
mod error;
pub mod rng;
pub mod stats;
pub mod synth;
pub mod tasks;

pub use error::{Error, ErrorKind, Result};
