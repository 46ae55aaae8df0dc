//! Simulation and estimation toolkit for germ-grain random closed sets.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod density;
pub mod error;
pub mod geometry;
mod mc;
pub mod model;
pub mod pointproc;
pub mod rng;
pub mod surface;

pub use error::{Error, Result};
