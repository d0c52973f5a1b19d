//! Command-line plumbing for `qcrf`: file formats, run configuration,
//! synthetic instances, benchmark sweeps and IoU evaluation.

pub mod bench;
pub mod config;
pub mod error;
pub mod eval;
pub mod io;
pub mod pipeline;
pub mod synth;

pub use error::{CliError, Result};
