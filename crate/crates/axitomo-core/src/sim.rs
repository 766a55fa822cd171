//! Phantom definition and rasterization, synthetic projection generation
//! with Gaussian noise, and RMSE evaluation.

use crate::geometry::{ConeBeamGeometry, RadialGrid};
use crate::image::{ProjectionData, Volume};
use crate::math;
use crate::projector::SystemMatrix;
use crate::rng::GaussianSource;
use alloc::vec::Vec;
use core::fmt;

#[derive(Clone, Debug, PartialEq)]
pub enum SimError {
    PieceOutsideGrid { index: usize },
    InvalidPiece { index: usize, reason: &'static str },
    ShapeMismatch(&'static str),
}

impl fmt::Display for SimError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SimError::PieceOutsideGrid { index } => {
                write!(f, "phantom piece {index} lies outside the grid cylinder")
            }
            SimError::InvalidPiece { index, reason } => {
                write!(f, "phantom piece {index} invalid: {reason}")
            }
            SimError::ShapeMismatch(msg) => write!(f, "shape mismatch: {msg}"),
        }
    }
}

impl core::error::Error for SimError {}

/// One axisymmetric region: an annular cylinder with constant attenuation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhantomPiece {
    pub r_inner: f64,
    pub r_outer: f64,
    pub z_min: f64,
    pub z_max: f64,
    pub value: f64,
}

impl PhantomPiece {
    pub fn contains(&self, rho: f64, z: f64) -> bool {
        self.r_inner <= rho && rho < self.r_outer && self.z_min <= z && z < self.z_max
    }
}

/// Stack of pieces; later pieces overwrite earlier ones where they overlap.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PhantomSpec {
    pub pieces: Vec<PhantomPiece>,
}

impl PhantomSpec {
    pub fn validate(&self, grid: &RadialGrid) -> Result<(), SimError> {
        let r0 = grid.outer_radius();
        let z0 = grid.half_height();
        let slack_r = 1e-9 * r0;
        let slack_z = 1e-9 * z0;
        for (index, piece) in self.pieces.iter().enumerate() {
            if piece.r_inner.is_nan()
                || piece.r_outer.is_nan()
                || piece.r_inner < 0.0
                || piece.r_inner >= piece.r_outer
            {
                return Err(SimError::InvalidPiece {
                    index,
                    reason: "need 0 <= r_inner < r_outer",
                });
            }
            if piece.z_min.is_nan() || piece.z_max.is_nan() || piece.z_min >= piece.z_max {
                return Err(SimError::InvalidPiece {
                    index,
                    reason: "need z_min < z_max",
                });
            }
            if !piece.value.is_finite() {
                return Err(SimError::InvalidPiece {
                    index,
                    reason: "value must be finite",
                });
            }
            if piece.r_outer > r0 + slack_r
                || piece.z_min < -z0 - slack_z
                || piece.z_max > z0 + slack_z
            {
                return Err(SimError::PieceOutsideGrid { index });
            }
        }
        Ok(())
    }

    /// Attenuation at a point, honoring the overwrite order.
    pub fn value_at(&self, rho: f64, z: f64) -> f64 {
        let mut value = 0.0;
        for piece in &self.pieces {
            if piece.contains(rho, z) {
                value = piece.value;
            }
        }
        value
    }
}

/// The built-in test object: a unit-value outer shell (0.6 <= r < 1.0,
/// |z| <= 1.0) around a half-value core (r < 0.3, |z| <= 0.8) with a void
/// between them. Intended for grids with `R0 = Z0 = 1`.
pub fn default_phantom() -> PhantomSpec {
    PhantomSpec {
        pieces: alloc::vec![
            PhantomPiece {
                r_inner: 0.6,
                r_outer: 1.0,
                z_min: -1.0,
                z_max: 1.0,
                value: 1.0,
            },
            PhantomPiece {
                r_inner: 0.0,
                r_outer: 0.3,
                z_min: -0.8,
                z_max: 0.8,
                value: 0.5,
            },
        ],
    }
}

/// Uniform cylinder filling the whole grid (value 1).
pub fn uniform_cylinder(grid: &RadialGrid) -> PhantomSpec {
    PhantomSpec {
        pieces: alloc::vec![PhantomPiece {
            r_inner: 0.0,
            r_outer: grid.outer_radius(),
            z_min: -grid.half_height(),
            z_max: grid.half_height(),
            value: 1.0,
        }],
    }
}

/// Sample the phantom at cell centers: cell `(i, j)` takes the value at
/// `((i - 1/2) dr, (j + 1/2) dz)`.
pub fn rasterize(spec: &PhantomSpec, grid: &RadialGrid) -> Result<Volume, SimError> {
    spec.validate(grid)?;
    let mut volume = Volume::zeros(*grid);
    let n = grid.n as i64;
    for piece in &spec.pieces {
        for j in -n..n {
            let zc = (j as f64 + 0.5) * grid.dz;
            if !(piece.z_min <= zc && zc < piece.z_max) {
                continue;
            }
            let row = (j + n) as usize;
            for i in 1..=grid.m {
                let rc = (i as f64 - 0.5) * grid.dr;
                if piece.r_inner <= rc && rc < piece.r_outer {
                    *volume.image.at_mut(row, i - 1) = piece.value;
                }
            }
        }
    }
    Ok(volume)
}

/// Forward-project a volume and add i.i.d. Gaussian noise of the given
/// variance from a seeded generator. Variance zero gives the exact
/// projection.
pub fn simulate(
    matrix: &SystemMatrix,
    geom: &ConeBeamGeometry,
    volume: &Volume,
    noise_variance: f64,
    seed: u64,
) -> Result<ProjectionData, SimError> {
    assert!(noise_variance >= 0.0, "variance must be nonnegative");
    if matrix.n_cols() != volume.data().len() {
        return Err(SimError::ShapeMismatch("matrix columns != volume cells"));
    }
    if matrix.n_rows() != geom.ray_count() {
        return Err(SimError::ShapeMismatch("matrix rows != detector cells"));
    }
    let mut g = matrix.matvec(volume.data());
    if noise_variance > 0.0 {
        let std = math::sqrt(noise_variance);
        let mut noise = GaussianSource::new(seed);
        for value in &mut g {
            *value += std * noise.sample();
        }
    }
    ProjectionData::new(geom.p, geom.q, g).map_err(|_| SimError::ShapeMismatch("projection shape"))
}

/// Root of the mean squared cell difference.
pub fn rmse(a: &Volume, b: &Volume) -> Result<f64, SimError> {
    if a.grid != b.grid {
        return Err(SimError::ShapeMismatch("volumes on different grids"));
    }
    Ok(rmse_values(a.data(), b.data()).expect("same grid implies same length"))
}

/// RMSE over two flat arrays of equal length.
pub fn rmse_values(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.is_empty() {
        return None;
    }
    let sum: f64 = a
        .iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum();
    Some(math::sqrt(sum / a.len() as f64))
}
