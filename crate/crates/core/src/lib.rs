//! Continuum relaxation of bilayer moiré superlattices.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod cli;
pub mod domainwall;
pub mod error;
pub mod fft;
pub mod gsfe;
pub mod io;
pub mod lattice;
pub mod relax;

pub use error::{Error, Result};
