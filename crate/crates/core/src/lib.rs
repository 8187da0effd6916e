//! Stabilization of the saturated complex double integrator and numerical
//! verification of its Lyapunov certificates.

pub mod averaging;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod integrator;
pub mod lyapunov;
pub mod quadrature;
pub mod saturation;
pub mod systems;

pub use error::{Error, Result};
