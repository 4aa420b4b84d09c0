//! Variable-exponent Lebesgue spaces with matrix weights, and a solver for
//! the degenerate `p(.)`-Laplacian Neumann problem on 1D and 2D boxes.

pub mod commands;
pub mod config;
pub mod error;
pub mod grid;
pub mod io;
pub mod mweight;
pub mod neumann;
pub mod poincare;
pub mod sampling;
pub mod sobolev;
pub mod vxnorm;

pub use error::{Error, Result};
