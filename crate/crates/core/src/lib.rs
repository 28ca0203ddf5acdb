//! Threshold dynamics for anisotropic fractional mean curvature flow with
//! a time-dependent forcing term.

pub mod anisotropy;
pub mod cli;
pub mod convolution;
pub mod curvature;
pub mod distance;
pub mod error;
pub mod grid;
pub mod kernel;
pub mod mobility;
pub mod quadrature;
pub mod scheme;
pub mod splitting;

pub use error::{Error, Result};
