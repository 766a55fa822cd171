//! Reconstruction of the 2D radial attenuation map of a 3D axisymmetric
//! object from a single cone-beam x-ray projection.
//!
//! The object is discretized into annular-cylinder cells on an `(r, z)`
//! grid. [`projector`] assembles the exact sparse matrix of intersection
//! lengths between every detector ray and every cell, exploiting the mirror
//! symmetry of the detector; [`frame`] provides the data-driven tight frame
//! (analysis/synthesis operators, hard thresholding, SVD filter update);
//! [`solver`] couples them in an alternating reconstruction loop with a
//! primal-dual inner solver and a TV baseline; [`sim`] supplies phantoms,
//! synthetic projections and error metrics.
//!
//! The crate is `no_std` (with `alloc`); all floating-point math is routed
//! through `libm`, and every random quantity comes from seeded generators,
//! so results are reproducible bit-for-bit.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod frame;
pub mod geometry;
pub mod image;
pub mod projector;
pub mod rng;
pub mod sim;
pub mod solver;

mod math;
mod svd;

pub use geometry::{ConeBeamGeometry, RadialGrid, Ray};
pub use image::{Image, ProjectionData, Volume};
pub use projector::SystemMatrix;
