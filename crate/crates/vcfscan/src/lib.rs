//! File formats, dataset evaluation and the command-line front end of the
//! vertebral compression fracture detector. The geometry and the rule
//! models live in `vcfscan-core`.

pub mod bench;
pub mod config;
pub mod dataset;
pub mod error;
pub mod eval;
pub mod io;

pub use error::{Error, Result};
