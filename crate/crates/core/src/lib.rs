//! Quantum-trajectory simulation of a driven atom-cavity system and
//! maximum-likelihood identification of the atom-cavity coupling from
//! photodetection records.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

#[cfg(feature = "cli")]
pub mod cli;
pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod inference;
pub mod io;
pub mod mastereq;
pub mod model;
mod sparse;

pub use error::{Error, Result};
