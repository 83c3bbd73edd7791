//! Geometry and rule layer of the vertebral compression fracture detector.
//!
//! Everything here is `no_std` with `alloc`; file formats, the CLI and
//! dataset evaluation live in the `vcfscan` crate.

#![cfg_attr(not(feature = "std"), no_std)]
// `!(x > 0.0)` style checks are meant to reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

pub mod error;
pub mod features;
pub mod geom;
pub mod heightmap;
pub mod meshing;
pub mod metrics;
pub mod orientation;
pub mod phantom;
pub mod pipeline;
pub mod rulefit;
pub mod rules;
pub mod volume;

pub use error::{Error, Result};
