//! Sparse imaging matrix: intersection lengths of detector rays with
//! annular-cylinder cells, plus the matrix-vector products the solvers need.
//!
//! A row is assembled by walking the ray's crossings of the coaxial cylinders
//! `rho = i*dr` from the outermost inward (near side), through the turning
//! chord in the innermost reached annulus, and back out (far side). Each
//! inter-cylinder segment is split over axial slabs by its endpoint heights.
//!
//! Only one detector quadrant is traced; the other three quadrants follow by
//! mirror symmetry of the cell centers (a y-mirror leaves annuli untouched, a
//! z-mirror flips slab indices).

use crate::geometry::{min_annulus_index, ray_from_detector, ConeBeamGeometry, RadialGrid, Ray};
use crate::rng::SplitMix64;
use crate::math;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

/// Below this |sin(gamma)| a ray is treated as horizontal: the whole segment
/// lies in one slab and slab splitting (which divides by sin(gamma)) is skipped.
const SIN_GAMMA_GUARD: f64 = 1e-12;

/// Fixed seed for the power-iteration start vector.
const NORM_SEED: u64 = 0x6a09_e667_f3bc_c908;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ProjectorError {
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },
    InvalidCsr(&'static str),
    GeometryTooTight(&'static str),
}

impl fmt::Display for ProjectorError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ProjectorError::DimensionMismatch {
                context,
                expected,
                found,
            } => write!(f, "{context}: expected length {expected}, found {found}"),
            ProjectorError::InvalidCsr(msg) => write!(f, "invalid sparse matrix: {msg}"),
            ProjectorError::GeometryTooTight(msg) => write!(f, "{msg}"),
        }
    }
}

impl core::error::Error for ProjectorError {}

/// Compressed-row sparse matrix of ray/cell intersection lengths.
///
/// `slab_cols` is the number of columns per axial slab (the grid's `m`); the
/// row products in [`Self::matvec`] reduce slab partial sums in mirror-paired
/// order so that detector rows related by the z-mirror see bit-identical sums
/// on z-symmetric volumes.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemMatrix {
    n_rows: usize,
    n_cols: usize,
    slab_cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
}

impl SystemMatrix {
    /// Assemble from finalized rows (each sorted by column, no duplicates).
    pub fn from_rows(
        n_cols: usize,
        slab_cols: usize,
        rows: Vec<Vec<(usize, f64)>>,
    ) -> Self {
        assert!(slab_cols > 0 && n_cols.is_multiple_of(slab_cols), "slab layout");
        let nnz = rows.iter().map(Vec::len).sum();
        let mut row_offsets = Vec::with_capacity(rows.len() + 1);
        let mut col_indices = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        row_offsets.push(0);
        for row in &rows {
            for &(col, val) in row {
                debug_assert!(col < n_cols);
                col_indices.push(col);
                values.push(val);
            }
            row_offsets.push(col_indices.len());
        }
        Self {
            n_rows: rows.len(),
            n_cols,
            slab_cols,
            row_offsets,
            col_indices,
            values,
        }
    }

    /// Rebuild from raw CSR arrays (e.g. a file), validating the structure.
    pub fn from_raw(
        n_rows: usize,
        n_cols: usize,
        slab_cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self, ProjectorError> {
        if slab_cols == 0 || !n_cols.is_multiple_of(slab_cols) {
            return Err(ProjectorError::InvalidCsr("slab width must divide column count"));
        }
        if row_offsets.len() != n_rows + 1 || row_offsets.first() != Some(&0) {
            return Err(ProjectorError::InvalidCsr("row offset table malformed"));
        }
        if row_offsets.windows(2).any(|w| w[0] > w[1]) {
            return Err(ProjectorError::InvalidCsr("row offsets must be non-decreasing"));
        }
        if *row_offsets.last().unwrap() != col_indices.len() || col_indices.len() != values.len() {
            return Err(ProjectorError::InvalidCsr("offset/index/value lengths disagree"));
        }
        for w in row_offsets.windows(2) {
            let row = &col_indices[w[0]..w[1]];
            if row.windows(2).any(|c| c[0] >= c[1]) {
                return Err(ProjectorError::InvalidCsr(
                    "columns must be strictly increasing within a row",
                ));
            }
            if row.last().is_some_and(|&c| c >= n_cols) {
                return Err(ProjectorError::InvalidCsr("column index out of range"));
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(ProjectorError::InvalidCsr("values must be finite"));
        }
        Ok(Self {
            n_rows,
            n_cols,
            slab_cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn slab_cols(&self) -> usize {
        self.slab_cols
    }

    pub fn nnz(&self) -> usize {
        self.col_indices.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, k: usize) -> (&[usize], &[f64]) {
        let lo = self.row_offsets[k];
        let hi = self.row_offsets[k + 1];
        (&self.col_indices[lo..hi], &self.values[lo..hi])
    }

    /// `A u`. Panics if `u.len() != n_cols`.
    ///
    /// Each row accumulates a partial sum per axial slab and reduces the
    /// slabs in mirror-paired order (`slab k` with `slab 2n-1-k`), so the
    /// result is invariant under the z-mirror relabeling of a row.
    pub fn matvec(&self, u: &[f64]) -> Vec<f64> {
        assert_eq!(u.len(), self.n_cols, "matvec input length");
        let blocks = self.n_cols / self.slab_cols;
        let mut block_sum = vec![0.0; blocks];
        let mut out = Vec::with_capacity(self.n_rows);
        for k in 0..self.n_rows {
            let (cols, vals) = self.row(k);
            if blocks > 1 {
                block_sum.fill(0.0);
                for (&c, &v) in cols.iter().zip(vals) {
                    block_sum[c / self.slab_cols] += v * u[c];
                }
                let mut acc = 0.0;
                for b in 0..blocks / 2 {
                    let pair = block_sum[b] + block_sum[blocks - 1 - b];
                    acc += pair;
                }
                if blocks % 2 == 1 {
                    acc += block_sum[blocks / 2];
                }
                out.push(acc);
            } else {
                let mut acc = 0.0;
                for (&c, &v) in cols.iter().zip(vals) {
                    acc += v * u[c];
                }
                out.push(acc);
            }
        }
        out
    }

    /// `A^T w` (exact transpose product). Panics if `w.len() != n_rows`.
    pub fn rmatvec(&self, w: &[f64]) -> Vec<f64> {
        assert_eq!(w.len(), self.n_rows, "rmatvec input length");
        let mut out = vec![0.0; self.n_cols];
        for (k, &wk) in w.iter().enumerate() {
            if wk == 0.0 {
                continue;
            }
            let (cols, vals) = self.row(k);
            for (&c, &v) in cols.iter().zip(vals) {
                out[c] += v * wk;
            }
        }
        out
    }

    /// Spectral norm estimate by power iteration on `A^T A` from a
    /// fixed-seed start vector; deterministic.
    pub fn operator_norm(&self, iters: usize) -> f64 {
        assert!(iters >= 1);
        if self.n_rows == 0 || self.n_cols == 0 || self.values.iter().all(|&v| v == 0.0) {
            return 0.0;
        }
        let mut rng = SplitMix64::new(NORM_SEED);
        let mut v: Vec<f64> = (0..self.n_cols).map(|_| rng.next_centered()).collect();
        let nrm = math::norm2(&v);
        v.iter_mut().for_each(|x| *x /= nrm);
        for _ in 0..iters {
            let av = self.matvec(&v);
            let atav = self.rmatvec(&av);
            let nrm = math::norm2(&atav);
            if nrm == 0.0 {
                return 0.0;
            }
            v = atav;
            v.iter_mut().for_each(|x| *x /= nrm);
        }
        math::norm2(&self.matvec(&v))
    }
}

/// Per-ray accumulator of column contributions. The same cell can receive
/// two contributions (near- and far-side segments of one annulus), so
/// entries are merged by summation at finalization.
#[derive(Clone, Debug, Default)]
pub struct RowAccumulator {
    entries: Vec<(usize, f64)>,
}

impl RowAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, col: usize, length: f64) {
        self.entries.push((col, length));
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Sort by column and merge duplicates (sums run in insertion order).
    pub fn finalize(mut self) -> Vec<(usize, f64)> {
        self.entries.sort_by_key(|&(col, _)| col);
        let mut merged: Vec<(usize, f64)> = Vec::with_capacity(self.entries.len());
        for (col, val) in self.entries {
            match merged.last_mut() {
                Some((last, acc)) if *last == col => *acc += val,
                _ => merged.push((col, val)),
            }
        }
        merged
    }
}

/// Distribute one inter-cylinder segment of a ray over axial slabs.
///
/// `h_a`, `h_b` are the heights of the segment endpoints and `t_a`, `t_b`
/// the corresponding arc-length parameters. The segment lies entirely in
/// `annulus`. The 3D length contributed to slab `j` is the slab's height
/// overlap divided by `|sin(gamma)|`; for horizontal rays the arc-length
/// difference `|t_b - t_a|` is used directly. Portions outside `|z| <= Z0`
/// are discarded.
#[allow(clippy::too_many_arguments)]
pub fn accumulate_segment(
    acc: &mut RowAccumulator,
    grid: &RadialGrid,
    annulus: usize,
    h_a: f64,
    h_b: f64,
    t_a: f64,
    t_b: f64,
    sin_gamma: f64,
) {
    let sin_abs = sin_gamma.abs();
    if sin_abs < SIN_GAMMA_GUARD {
        let slab = grid.slab_of(h_a);
        if grid.slab_in_range(slab) {
            let len = (t_b - t_a).abs();
            if len > 0.0 {
                acc.add(grid.column_of(annulus, slab), len);
            }
        }
        return;
    }
    let (h1, h2) = if h_a <= h_b { (h_a, h_b) } else { (h_b, h_a) };
    let lo = grid.slab_of(h1);
    let hi = grid.slab_of(h2);
    let n = grid.n as i64;
    if lo == hi {
        if grid.slab_in_range(lo) {
            let len = (h2 - h1) / sin_abs;
            if len > 0.0 {
                acc.add(grid.column_of(annulus, lo), len);
            }
        }
        return;
    }
    if grid.slab_in_range(lo) {
        let len = ((lo + 1) as f64 * grid.dz - h1) / sin_abs;
        if len > 0.0 {
            acc.add(grid.column_of(annulus, lo), len);
        }
    }
    if grid.slab_in_range(hi) {
        let len = (h2 - hi as f64 * grid.dz) / sin_abs;
        if len > 0.0 {
            acc.add(grid.column_of(annulus, hi), len);
        }
    }
    let full = grid.dz / sin_abs;
    let start = (lo + 1).max(-n);
    let end = (hi - 1).min(n - 1);
    for slab in start..=end {
        acc.add(grid.column_of(annulus, slab), full);
    }
}

/// Trace one ray through every annulus it reaches and accumulate its row.
///
/// Rays missing the object cylinder return an empty accumulator. The row is
/// built from the cylinder crossings at radii `i*dr` for `i` from the
/// innermost reached annulus out to `m`: between consecutive radii the near-
/// and far-side segments belong to the outer annulus of the pair, and the
/// turning chord between the two crossings of the innermost cylinder belongs
/// to the innermost annulus.
pub fn build_row(grid: &RadialGrid, ray: &Ray) -> RowAccumulator {
    let mut acc = RowAccumulator::new();
    let Some(n_min) = min_annulus_index(grid, ray) else {
        return acc;
    };
    let count = grid.m - n_min + 1;
    let mut hits = Vec::with_capacity(count);
    for i in n_min..=grid.m {
        let rho = i as f64 * grid.dr;
        // Every radius from n_min outward is crossed by construction.
        let Some(pair) = ray.cylinder_hits(rho) else {
            debug_assert!(false, "annulus {i} expected to be hit");
            continue;
        };
        hits.push(pair);
    }
    let sg = ray.sin_gamma();
    for idx in 0..count - 1 {
        let inner = hits[idx];
        let outer = hits[idx + 1];
        let annulus = n_min + idx + 1;
        // Near side: between the outer and inner entry crossings.
        let (ha, hb) = (inner.0 * sg, outer.0 * sg);
        accumulate_segment(&mut acc, grid, annulus, ha, hb, inner.0, outer.0, sg);
        // Far side: between the inner and outer exit crossings.
        let (ha, hb) = (inner.1 * sg, outer.1 * sg);
        accumulate_segment(&mut acc, grid, annulus, ha, hb, inner.1, outer.1, sg);
    }
    // Turning chord through the innermost reached annulus.
    let innermost = hits[0];
    let (ha, hb) = (innermost.0 * sg, innermost.1 * sg);
    accumulate_segment(&mut acc, grid, n_min, ha, hb, innermost.0, innermost.1, sg);
    acc
}

fn check_layout(geom: &ConeBeamGeometry, grid: &RadialGrid) -> Result<(), ProjectorError> {
    if geom.source_x <= grid.outer_radius() || geom.detector_x >= -grid.outer_radius() {
        return Err(ProjectorError::GeometryTooTight(
            "source and detector must lie outside the object cylinder on opposite sides",
        ));
    }
    Ok(())
}

/// Rows for the detector quadrant `s in 0..p`, `t in 0..q` only, in row
/// order `k = t*p + s`.
pub fn build_quadrant(
    geom: &ConeBeamGeometry,
    grid: &RadialGrid,
) -> Result<SystemMatrix, ProjectorError> {
    check_layout(geom, grid)?;
    let mut rows = Vec::with_capacity(geom.p * geom.q);
    for t in 0..geom.q as i64 {
        for s in 0..geom.p as i64 {
            let ray = ray_from_detector(geom, s, t).expect("quadrant index in range");
            rows.push(build_row(grid, &ray).finalize());
        }
    }
    Ok(SystemMatrix::from_rows(grid.cell_count(), grid.m, rows))
}

/// All `4*p*q` rows traced directly, without the symmetry shortcut.
/// Used to cross-check [`expand_by_symmetry`].
pub fn build_full(
    geom: &ConeBeamGeometry,
    grid: &RadialGrid,
) -> Result<SystemMatrix, ProjectorError> {
    check_layout(geom, grid)?;
    let p = geom.p as i64;
    let q = geom.q as i64;
    let mut rows = Vec::with_capacity(geom.ray_count());
    for t in -q..q {
        for s in -p..p {
            let ray = ray_from_detector(geom, s, t).expect("index in range");
            rows.push(build_row(grid, &ray).finalize());
        }
    }
    Ok(SystemMatrix::from_rows(grid.cell_count(), grid.m, rows))
}

/// Mirror a finalized row across z: cell `(i, j)` moves to `(i, -1-j)`.
fn mirror_row_z(row: &[(usize, f64)], grid: &RadialGrid) -> Vec<(usize, f64)> {
    let m = grid.m;
    let top = 2 * grid.n - 1;
    let mut mirrored: Vec<(usize, f64)> = row
        .iter()
        .map(|&(col, val)| {
            let slab = col / m;
            ((top - slab) * m + col % m, val)
        })
        .collect();
    mirrored.sort_by_key(|&(col, _)| col);
    mirrored
}

/// Expand a quadrant matrix to the full detector by mirror symmetry.
///
/// Cell `(-1-s, t)` reuses the row of `(s, t)` unchanged (the y-mirror does
/// not move annuli); cell `(s, -1-t)` reuses it with slab indices flipped;
/// `(-1-s, -1-t)` combines both. Full row order is `k = (t+q)*2p + (s+p)`.
pub fn expand_by_symmetry(
    quadrant: &SystemMatrix,
    geom: &ConeBeamGeometry,
    grid: &RadialGrid,
) -> Result<SystemMatrix, ProjectorError> {
    if quadrant.n_rows() != geom.p * geom.q {
        return Err(ProjectorError::DimensionMismatch {
            context: "quadrant row count",
            expected: geom.p * geom.q,
            found: quadrant.n_rows(),
        });
    }
    if quadrant.n_cols() != grid.cell_count() {
        return Err(ProjectorError::DimensionMismatch {
            context: "quadrant column count",
            expected: grid.cell_count(),
            found: quadrant.n_cols(),
        });
    }
    let p = geom.p as i64;
    let q = geom.q as i64;
    let mut rows = Vec::with_capacity(geom.ray_count());
    for t in -q..q {
        for s in -p..p {
            let sq = if s >= 0 { s } else { -1 - s } as usize;
            let tq = if t >= 0 { t } else { -1 - t } as usize;
            let (cols, vals) = quadrant.row(tq * geom.p + sq);
            let base: Vec<(usize, f64)> = cols.iter().copied().zip(vals.iter().copied()).collect();
            let row = if t >= 0 { base } else { mirror_row_z(&base, grid) };
            rows.push(row);
        }
    }
    Ok(SystemMatrix::from_rows(grid.cell_count(), grid.m, rows))
}
