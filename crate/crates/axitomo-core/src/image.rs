//! Dense 2D arrays and the domain containers built on them.
//!
//! A [`Volume`] stores the radial unknown `u(i, j)` on a [`RadialGrid`]; its
//! backing [`Image`] has one row per axial slab (`2n` rows) and one column
//! per annulus (`m` columns), matching the linear column order
//! `l = (j+n)*m + (i-1)` of the system matrix.

use crate::geometry::RadialGrid;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

/// Shape disagreement between two containers.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShapeMismatch {
    pub context: &'static str,
    pub expected: (usize, usize),
    pub found: (usize, usize),
}

impl fmt::Display for ShapeMismatch {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}: expected {}x{}, found {}x{}",
            self.context, self.expected.0, self.expected.1, self.found.0, self.found.1
        )
    }
}

impl core::error::Error for ShapeMismatch {}

/// Row-major 2D array of `f64`.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    /// Wrap an existing buffer; `data.len()` must equal `rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "image buffer length");
        Self { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> f64 {
        debug_assert!(row < self.rows && col < self.cols);
        self.data[row * self.cols + col]
    }

    #[inline]
    pub fn at_mut(&mut self, row: usize, col: usize) -> &mut f64 {
        debug_assert!(row < self.rows && col < self.cols);
        &mut self.data[row * self.cols + col]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }
}

/// The radial unknown on its grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Volume {
    pub grid: RadialGrid,
    pub image: Image,
}

impl Volume {
    /// The image must have `2n` rows (axial slabs) and `m` columns (annuli).
    pub fn new(grid: RadialGrid, image: Image) -> Result<Self, ShapeMismatch> {
        if image.rows() != 2 * grid.n || image.cols() != grid.m {
            return Err(ShapeMismatch {
                context: "volume image",
                expected: (2 * grid.n, grid.m),
                found: (image.rows(), image.cols()),
            });
        }
        Ok(Self { grid, image })
    }

    pub fn zeros(grid: RadialGrid) -> Self {
        Self {
            image: Image::zeros(2 * grid.n, grid.m),
            grid,
        }
    }

    /// Value of annulus `i` (1-based) in slab `j in -n..n-1`.
    pub fn value_at(&self, annulus: usize, slab: i64) -> f64 {
        let row = (slab + self.grid.n as i64) as usize;
        self.image.at(row, annulus - 1)
    }

    pub fn data(&self) -> &[f64] {
        self.image.data()
    }
}

/// Line integrals on the detector array, in system-matrix row order
/// `k = (t+q)*2p + (s+p)`.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionData {
    pub p: usize,
    pub q: usize,
    data: Vec<f64>,
}

impl ProjectionData {
    pub fn new(p: usize, q: usize, data: Vec<f64>) -> Result<Self, ShapeMismatch> {
        if data.len() != 4 * p * q {
            return Err(ShapeMismatch {
                context: "projection data",
                expected: (4 * p * q, 1),
                found: (data.len(), 1),
            });
        }
        Ok(Self { p, q, data })
    }

    pub fn index_of(&self, s: i64, t: i64) -> usize {
        let p = self.p as i64;
        let q = self.q as i64;
        debug_assert!((-p..p).contains(&s) && (-q..q).contains(&t));
        ((t + q) * 2 * p + (s + p)) as usize
    }

    pub fn at(&self, s: i64, t: i64) -> f64 {
        self.data[self.index_of(s, t)]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }
}
