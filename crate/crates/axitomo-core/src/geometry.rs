//! Cone-beam ray parametrization and ray/cylinder intersection primitives.
//!
//! The imaging layout: a point source sits on the x-axis at `(source_x, 0, 0)`,
//! the planar detector occupies the plane `x = detector_x` on the far side of
//! the object, and the object lives inside the cylinder
//! `sqrt(x^2 + y^2) <= R0`, `|z| <= Z0` centered at the origin. A ray is
//! described by the angle `gamma` it makes with the horizontal plane and the
//! angle `alpha` its horizontal projection makes with the x-axis:
//!
//! ```text
//! point(t) = (source_x + t*cos(gamma)*cos(alpha),
//!                        t*cos(gamma)*sin(alpha),
//!                        t*sin(gamma))
//! ```
//!
//! `t` is arc length along the ray. Intersections with the coaxial cylinders
//! `rho = i*dr` reduce to a quadratic in the planar parameter `s = t*cos(gamma)`.

use crate::math;
use core::fmt;

/// Errors from geometry construction and detector indexing.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum GeometryError {
    InvalidGeometry(&'static str),
    InvalidGrid(&'static str),
    DetectorIndex { s: i64, t: i64 },
}

impl fmt::Display for GeometryError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GeometryError::InvalidGeometry(msg) => write!(f, "invalid geometry: {msg}"),
            GeometryError::InvalidGrid(msg) => write!(f, "invalid grid: {msg}"),
            GeometryError::DetectorIndex { s, t } => {
                write!(f, "detector cell ({s}, {t}) out of range")
            }
        }
    }
}

impl core::error::Error for GeometryError {}

/// Source position, detector plane and detector sampling.
///
/// The detector has `2p x 2q` cells indexed by `s in -p..p-1` (y direction)
/// and `t in -q..q-1` (z direction); cell centers sit at half-integer
/// multiples of the pitch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ConeBeamGeometry {
    pub source_x: f64,
    pub detector_x: f64,
    pub pitch_y: f64,
    pub pitch_z: f64,
    pub p: usize,
    pub q: usize,
}

impl ConeBeamGeometry {
    pub fn new(
        source_x: f64,
        detector_x: f64,
        pitch_y: f64,
        pitch_z: f64,
        p: usize,
        q: usize,
    ) -> Result<Self, GeometryError> {
        if !source_x.is_finite() || !detector_x.is_finite() || source_x == detector_x {
            return Err(GeometryError::InvalidGeometry(
                "source and detector planes must be distinct and finite",
            ));
        }
        if source_x <= 0.0 || detector_x >= 0.0 {
            return Err(GeometryError::InvalidGeometry(
                "expected source_x > 0 and detector_x < 0 (object at the origin)",
            ));
        }
        if pitch_y.is_nan() || pitch_y <= 0.0 || pitch_z.is_nan() || pitch_z <= 0.0 {
            return Err(GeometryError::InvalidGeometry("detector pitch must be positive"));
        }
        if p == 0 || q == 0 {
            return Err(GeometryError::InvalidGeometry(
                "detector half-counts must be at least 1",
            ));
        }
        Ok(Self {
            source_x,
            detector_x,
            pitch_y,
            pitch_z,
            p,
            q,
        })
    }

    /// Total number of detector cells, `4*p*q`.
    pub fn ray_count(&self) -> usize {
        4 * self.p * self.q
    }

    /// Center of detector cell `(s, t)`, without range checking.
    pub fn cell_center(&self, s: i64, t: i64) -> (f64, f64, f64) {
        (
            self.detector_x,
            (s as f64 + 0.5) * self.pitch_y,
            (t as f64 + 0.5) * self.pitch_z,
        )
    }

    /// Row index of cell `(s, t)` in the full system matrix:
    /// `k = (t+q)*2p + (s+p)`.
    pub fn row_of(&self, s: i64, t: i64) -> usize {
        let p = self.p as i64;
        let q = self.q as i64;
        ((t + q) * 2 * p + (s + p)) as usize
    }
}

/// Discretization of the reconstruction cylinder into annular-cylinder cells.
///
/// Annulus `i in 1..=m` is the region `(i-1)*dr <= rho < i*dr`; slab
/// `j in -n..n-1` is `j*dz <= z < (j+1)*dz`. Cell `(i, j)` maps to the
/// linear column `l = (j+n)*m + (i-1)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RadialGrid {
    pub m: usize,
    pub n: usize,
    pub dr: f64,
    pub dz: f64,
}

impl RadialGrid {
    pub fn new(m: usize, n: usize, dr: f64, dz: f64) -> Result<Self, GeometryError> {
        if m == 0 || n == 0 {
            return Err(GeometryError::InvalidGrid("cell counts must be at least 1"));
        }
        if !dr.is_finite() || dr <= 0.0 || !dz.is_finite() || dz <= 0.0 {
            return Err(GeometryError::InvalidGrid("step sizes must be positive and finite"));
        }
        Ok(Self { m, n, dr, dz })
    }

    /// Outer radius `R0 = m*dr`.
    pub fn outer_radius(&self) -> f64 {
        self.m as f64 * self.dr
    }

    /// Half height `Z0 = n*dz`.
    pub fn half_height(&self) -> f64 {
        self.n as f64 * self.dz
    }

    /// Number of cells, `2*m*n`; the column count of a matching system matrix.
    pub fn cell_count(&self) -> usize {
        2 * self.m * self.n
    }

    /// Linear column of annulus `i` (1-based) and slab `j`.
    pub fn column_of(&self, annulus: usize, slab: i64) -> usize {
        debug_assert!((1..=self.m).contains(&annulus));
        debug_assert!(self.slab_in_range(slab));
        ((slab + self.n as i64) as usize) * self.m + (annulus - 1)
    }

    /// Inverse of [`Self::column_of`].
    pub fn cell_of(&self, column: usize) -> (usize, i64) {
        let annulus = column % self.m + 1;
        let slab = (column / self.m) as i64 - self.n as i64;
        (annulus, slab)
    }

    pub fn slab_in_range(&self, slab: i64) -> bool {
        let n = self.n as i64;
        (-n..n).contains(&slab)
    }

    /// Slab containing height `h` (floor, so indices stay consistent across z = 0).
    pub fn slab_of(&self, h: f64) -> i64 {
        math::floor(h / self.dz) as i64
    }
}

/// A source ray, parametrized by arc length from the source.
///
/// The trigonometric values are cached at construction. Rays built from
/// detector cells derive them from the direction vector components rather
/// than from the angles, so cells mirrored in y or z produce exactly
/// negated `sin_alpha` / `sin_gamma` and bit-identical even quantities.
#[derive(Clone, Copy, Debug)]
pub struct Ray {
    pub source_x: f64,
    pub gamma: f64,
    pub alpha: f64,
    cos_gamma: f64,
    sin_gamma: f64,
    cos_alpha: f64,
    sin_alpha: f64,
}

impl Ray {
    /// Build a ray from its two angles. Requires `|gamma| < pi/2`.
    pub fn from_angles(source_x: f64, gamma: f64, alpha: f64) -> Self {
        assert!(
            gamma.abs() < core::f64::consts::FRAC_PI_2,
            "ray may not be vertical"
        );
        Self {
            source_x,
            gamma,
            alpha,
            cos_gamma: math::cos(gamma),
            sin_gamma: math::sin(gamma),
            cos_alpha: math::cos(alpha),
            sin_alpha: math::sin(alpha),
        }
    }

    /// Build a ray from a direction vector. The cached trigonometric values
    /// come straight from the components, so mirrored directions give
    /// exactly negated odd quantities.
    pub fn from_direction(source_x: f64, dx: f64, dy: f64, dz: f64) -> Self {
        let planar = math::hypot(dx, dy);
        let norm = math::hypot(planar, dz);
        Self {
            source_x,
            gamma: math::atan2(dz, planar),
            alpha: math::atan2(dy, dx),
            cos_gamma: planar / norm,
            sin_gamma: dz / norm,
            cos_alpha: dx / planar,
            sin_alpha: dy / planar,
        }
    }

    pub fn sin_gamma(&self) -> f64 {
        self.sin_gamma
    }

    pub fn cos_gamma(&self) -> f64 {
        self.cos_gamma
    }

    /// Point on the ray at arc length `t` from the source.
    pub fn point_at(&self, t: f64) -> (f64, f64, f64) {
        (
            self.source_x + t * self.cos_gamma * self.cos_alpha,
            t * self.cos_gamma * self.sin_alpha,
            t * self.sin_gamma,
        )
    }

    /// Closest approach of the ray's horizontal projection to the z-axis,
    /// `|source_x * sin(alpha)|`.
    pub fn planar_min_radius(&self) -> f64 {
        (self.source_x * self.sin_alpha).abs()
    }

    /// Arc-length parameters of the two crossings with the cylinder
    /// `rho` (infinite in z), ordered ascending. `None` when the ray misses
    /// or is exactly tangent.
    pub fn cylinder_hits(&self, rho: f64) -> Option<(f64, f64)> {
        let rp = self.planar_min_radius();
        // rho^2 - (x0 sin a)^2, factored to avoid cancellation near tangency.
        let disc = (rho - rp) * (rho + rp);
        if disc <= 0.0 {
            return None;
        }
        let sq = math::sqrt(disc);
        // s^2 + 2 b s + (x0^2 - rho^2) = 0 with b = x0 cos(alpha); the roots
        // -b +- sq never cancel because sq <= rho << |b| in this layout.
        let b = self.source_x * self.cos_alpha;
        let s0 = -b - sq;
        let s1 = -b + sq;
        Some((s0 / self.cos_gamma, s1 / self.cos_gamma))
    }

    /// Heights of the two crossing points, `h = t * sin(gamma)`.
    pub fn hit_heights(&self, hits: (f64, f64)) -> (f64, f64) {
        (hits.0 * self.sin_gamma, hits.1 * self.sin_gamma)
    }
}

/// Ray from the source through the center of detector cell `(s, t)`.
pub fn ray_from_detector(geom: &ConeBeamGeometry, s: i64, t: i64) -> Result<Ray, GeometryError> {
    let p = geom.p as i64;
    let q = geom.q as i64;
    if !(-p..p).contains(&s) || !(-q..q).contains(&t) {
        return Err(GeometryError::DetectorIndex { s, t });
    }
    let (cx, cy, cz) = geom.cell_center(s, t);
    Ok(Ray::from_direction(
        geom.source_x,
        cx - geom.source_x,
        cy,
        cz,
    ))
}

/// Innermost annulus reached by the ray: the smallest `i in 1..=m` with
/// `i*dr > planar_min_radius`. `None` when the ray misses the object
/// cylinder (tangency counts as a miss).
pub fn min_annulus_index(grid: &RadialGrid, ray: &Ray) -> Option<usize> {
    let rp = ray.planar_min_radius();
    if rp >= grid.outer_radius() {
        return None;
    }
    let mut i = math::floor(rp / grid.dr) as usize + 1;
    while i as f64 * grid.dr <= rp {
        i += 1;
    }
    (i <= grid.m).then_some(i)
}
