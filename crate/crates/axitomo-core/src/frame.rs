//! Data-driven tight frame: patch extraction, analysis/synthesis operators,
//! hard thresholding and the SVD filter-bank update.
//!
//! A bank of `r*r` filters, each `r x r`, defines the analysis operator
//! `W(b): g -> (b_i (*) g)_i` (correlation, periodic boundary) and its
//! adjoint synthesis operator. Stacking vectorized filters as the rows of a
//! matrix `B`, the analysis coefficients of image `g` equal `B * G` where
//! `G` collects the vectorized patches of `g`; `W^T W = I` holds exactly iff
//! `B^T B = E / r^2`. The bank adapts to an image by alternating hard
//! thresholding of the coefficients with the orthogonal-Procrustes filter
//! update.
//!
//! Periodic boundaries are load-bearing: with any other padding the
//! perfect-reconstruction identity fails at the borders.

use crate::image::Image;
use crate::math;
use crate::svd::svd_square;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum FrameError {
    EvenPatchSize(usize),
    PatchTooLarge {
        r: usize,
        rows: usize,
        cols: usize,
    },
    ShapeMismatch(&'static str),
}

impl fmt::Display for FrameError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FrameError::EvenPatchSize(r) => write!(f, "patch side must be odd, got {r}"),
            FrameError::PatchTooLarge { r, rows, cols } => {
                write!(f, "patch side {r} exceeds image extent {rows}x{cols}")
            }
            FrameError::ShapeMismatch(msg) => write!(f, "shape mismatch: {msg}"),
        }
    }
}

impl core::error::Error for FrameError {}

/// `r*r` filters of size `r x r`, stored as the rows of the `r^2 x r^2`
/// matrix `B` (filters and rows both vectorized row-major).
#[derive(Clone, Debug, PartialEq)]
pub struct FilterBank {
    r: usize,
    matrix: Vec<f64>,
}

impl FilterBank {
    /// Wrap a raw `r^2 x r^2` coefficient matrix. Only shape and finiteness
    /// are checked here; see [`Self::constraint_deviation`] for the tight
    /// frame condition.
    pub fn from_matrix(r: usize, matrix: Vec<f64>) -> Result<Self, FrameError> {
        if r == 0 || r.is_multiple_of(2) {
            return Err(FrameError::EvenPatchSize(r));
        }
        let r2 = r * r;
        if matrix.len() != r2 * r2 {
            return Err(FrameError::ShapeMismatch("filter matrix must be r^2 x r^2"));
        }
        if matrix.iter().any(|v| !v.is_finite()) {
            return Err(FrameError::ShapeMismatch("filter matrix must be finite"));
        }
        Ok(Self { r, matrix })
    }

    pub fn patch_side(&self) -> usize {
        self.r
    }

    pub fn channels(&self) -> usize {
        self.r * self.r
    }

    /// The full `r^2 x r^2` matrix `B`, row-major.
    pub fn matrix(&self) -> &[f64] {
        &self.matrix
    }

    /// Taps of filter `i`, vectorized row-major.
    pub fn filter(&self, i: usize) -> &[f64] {
        let r2 = self.channels();
        &self.matrix[i * r2..(i + 1) * r2]
    }

    /// Largest entry of `|B^T B - E / r^2|`; zero for an exact tight frame.
    pub fn constraint_deviation(&self) -> f64 {
        let r2 = self.channels();
        let scale = 1.0 / (r2 as f64);
        let mut worst: f64 = 0.0;
        for a in 0..r2 {
            for b in a..r2 {
                let mut dot = 0.0;
                for i in 0..r2 {
                    dot += self.matrix[i * r2 + a] * self.matrix[i * r2 + b];
                }
                let target = if a == b { scale } else { 0.0 };
                worst = worst.max((dot - target).abs());
            }
        }
        worst
    }
}

/// The `r^2` coefficient channels of an analysis transform, each the size
/// of the source image.
#[derive(Clone, Debug, PartialEq)]
pub struct CoefficientStack {
    channels: usize,
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl CoefficientStack {
    pub fn zeros(channels: usize, rows: usize, cols: usize) -> Self {
        Self {
            channels,
            rows,
            cols,
            data: vec![0.0; channels * rows * cols],
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn channel(&self, i: usize) -> &[f64] {
        let len = self.rows * self.cols;
        &self.data[i * len..(i + 1) * len]
    }

    pub fn channel_mut(&mut self, i: usize) -> &mut [f64] {
        let len = self.rows * self.cols;
        &mut self.data[i * len..(i + 1) * len]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Number of nonzero coefficients.
    pub fn nnz(&self) -> usize {
        self.data.iter().filter(|&&v| v != 0.0).count()
    }
}

/// `r^2 x N` matrix whose column `j` is the vectorized patch centered at
/// pixel `j` (periodic boundary). Stored column-major: patches contiguous.
#[derive(Clone, Debug, PartialEq)]
pub struct PatchMatrix {
    r: usize,
    n: usize,
    data: Vec<f64>,
}

impl PatchMatrix {
    pub fn patch_side(&self) -> usize {
        self.r
    }

    pub fn patch_len(&self) -> usize {
        self.r * self.r
    }

    pub fn n_patches(&self) -> usize {
        self.n
    }

    pub fn patch(&self, j: usize) -> &[f64] {
        let len = self.patch_len();
        &self.data[j * len..(j + 1) * len]
    }
}

#[inline]
fn wrap(idx: isize, n: usize) -> usize {
    idx.rem_euclid(n as isize) as usize
}

/// Vectorized `r x r` neighborhoods of every pixel, wrap-around boundary.
pub fn extract_patches(image: &Image, r: usize) -> Result<PatchMatrix, FrameError> {
    if r == 0 || r.is_multiple_of(2) {
        return Err(FrameError::EvenPatchSize(r));
    }
    if r > image.rows() || r > image.cols() {
        return Err(FrameError::PatchTooLarge {
            r,
            rows: image.rows(),
            cols: image.cols(),
        });
    }
    let c = (r / 2) as isize;
    let n = image.len();
    let mut data = Vec::with_capacity(n * r * r);
    for row in 0..image.rows() as isize {
        for col in 0..image.cols() as isize {
            for du in -c..=c {
                for dv in -c..=c {
                    data.push(image.at(wrap(row + du, image.rows()), wrap(col + dv, image.cols())));
                }
            }
        }
    }
    Ok(PatchMatrix { r, n, data })
}

/// Analysis transform: channel `i` is the correlation of the image with
/// filter `i` (periodic boundary). Equivalent to `B * G` on the patch
/// matrix `G`.
pub fn analysis(bank: &FilterBank, image: &Image) -> CoefficientStack {
    let r = bank.patch_side();
    let c = (r / 2) as isize;
    let rows = image.rows();
    let cols = image.cols();
    let mut stack = CoefficientStack::zeros(bank.channels(), rows, cols);
    for i in 0..bank.channels() {
        let taps = bank.filter(i);
        let out = stack.channel_mut(i);
        for row in 0..rows as isize {
            for col in 0..cols as isize {
                let mut acc = 0.0;
                let mut tap = 0;
                for du in -c..=c {
                    let wr = wrap(row + du, rows);
                    for dv in -c..=c {
                        acc += taps[tap] * image.at(wr, wrap(col + dv, cols));
                        tap += 1;
                    }
                }
                out[row as usize * cols + col as usize] = acc;
            }
        }
    }
    stack
}

/// Synthesis transform: the exact adjoint of [`analysis`] (sum over channels
/// of the convolution with each filter, periodic boundary).
pub fn synthesis(bank: &FilterBank, coeffs: &CoefficientStack) -> Result<Image, FrameError> {
    if coeffs.channels() != bank.channels() {
        return Err(FrameError::ShapeMismatch("coefficient channels != r^2"));
    }
    let r = bank.patch_side();
    let c = (r / 2) as isize;
    let rows = coeffs.rows();
    let cols = coeffs.cols();
    if r > rows || r > cols {
        return Err(FrameError::PatchTooLarge { r, rows, cols });
    }
    let mut out = Image::zeros(rows, cols);
    for i in 0..bank.channels() {
        let taps = bank.filter(i);
        let chan = coeffs.channel(i);
        for row in 0..rows as isize {
            for col in 0..cols as isize {
                let mut acc = 0.0;
                let mut tap = 0;
                for du in -c..=c {
                    let wr = wrap(row - du, rows);
                    for dv in -c..=c {
                        acc += taps[tap] * chan[wr * cols + wrap(col - dv, cols)];
                        tap += 1;
                    }
                }
                *out.at_mut(row as usize, col as usize) += acc;
            }
        }
    }
    Ok(out)
}

/// Entrywise hard thresholding: keep `v` where `|v| > thresh`, else zero.
pub fn hard_threshold(coeffs: &CoefficientStack, thresh: f64) -> CoefficientStack {
    assert!(thresh >= 0.0, "threshold must be nonnegative");
    let mut out = coeffs.clone();
    for v in out.data_mut() {
        if v.abs() <= thresh {
            *v = 0.0;
        }
    }
    out
}

/// Coefficients `B * G` as a stack shaped like the source image.
fn bank_times_patches(bank: &FilterBank, g: &PatchMatrix, rows: usize, cols: usize) -> CoefficientStack {
    let r2 = bank.channels();
    let mut stack = CoefficientStack::zeros(r2, rows, cols);
    for i in 0..r2 {
        let b_row = bank.filter(i);
        let out = stack.channel_mut(i);
        for (j, slot) in out.iter_mut().enumerate() {
            let patch = g.patch(j);
            let mut acc = 0.0;
            for e in 0..r2 {
                acc += b_row[e] * patch[e];
            }
            *slot = acc;
        }
    }
    stack
}

/// Orthogonal-Procrustes filter update: the minimizer of `||V - B G||_F^2`
/// subject to `B^T B = E / r^2`, namely `B = U_L U_R^T / r` from the SVD of
/// `V G^T`.
pub fn procrustes_update(
    coeffs: &CoefficientStack,
    patches: &PatchMatrix,
) -> Result<FilterBank, FrameError> {
    let r = patches.patch_side();
    let r2 = patches.patch_len();
    if coeffs.channels() != r2 {
        return Err(FrameError::ShapeMismatch("coefficient channels != r^2"));
    }
    if coeffs.rows() * coeffs.cols() != patches.n_patches() {
        return Err(FrameError::ShapeMismatch("coefficient size != patch count"));
    }
    // M = V G^T, r^2 x r^2.
    let mut m = vec![0.0; r2 * r2];
    for a in 0..r2 {
        let chan = coeffs.channel(a);
        let row = &mut m[a * r2..(a + 1) * r2];
        for (j, &va) in chan.iter().enumerate() {
            if va == 0.0 {
                continue;
            }
            let patch = patches.patch(j);
            for e in 0..r2 {
                row[e] += va * patch[e];
            }
        }
    }
    let svd = svd_square(&m, r2);
    let mut b = svd.orthogonal_product();
    let scale = 1.0 / r as f64;
    b.iter_mut().for_each(|x| *x *= scale);
    FilterBank::from_matrix(r, b)
}

/// Separable cosine-transform bank scaled to the tight-frame constraint;
/// the standard starting point for the adaptive scheme.
pub fn spectral_initial_bank(r: usize) -> FilterBank {
    assert!(r % 2 == 1, "patch side must be odd");
    let rf = r as f64;
    // Orthonormal 1D DCT-II basis.
    let mut basis = vec![0.0; r * r];
    for k in 0..r {
        let scale = if k == 0 {
            math::sqrt(1.0 / rf)
        } else {
            math::sqrt(2.0 / rf)
        };
        for x in 0..r {
            basis[k * r + x] =
                scale * math::cos(core::f64::consts::PI * k as f64 * (2 * x + 1) as f64 / (2.0 * rf));
        }
    }
    let r2 = r * r;
    let mut matrix = vec![0.0; r2 * r2];
    for ku in 0..r {
        for kv in 0..r {
            let filter = ku * r + kv;
            for u in 0..r {
                for v in 0..r {
                    matrix[filter * r2 + u * r + v] =
                        basis[ku * r + u] * basis[kv * r + v] / rf;
                }
            }
        }
    }
    FilterBank::from_matrix(r, matrix).expect("spectral bank is well formed")
}

/// Options for [`learn_filter_bank`].
#[derive(Clone, Copy, Debug)]
pub struct LearnOptions {
    /// Number of threshold/Procrustes alternations (at least 1).
    pub n_alt: usize,
    /// Early exit when the objective drops by less than this relative
    /// amount between alternations; `0.0` disables the early exit.
    pub rel_tol: f64,
}

impl Default for LearnOptions {
    fn default() -> Self {
        Self {
            n_alt: 20,
            rel_tol: 1e-8,
        }
    }
}

/// A learned bank together with the objective value recorded after each
/// alternation (`||V - B G||_F^2 + thresh^2 * ||V||_0`); the sequence is
/// non-increasing.
#[derive(Clone, Debug)]
pub struct LearnedBank {
    pub bank: FilterBank,
    pub objectives: Vec<f64>,
}

/// Adapt a filter bank to an image by alternating hard thresholding of
/// `B * G` with the Procrustes update.
pub fn learn_filter_bank(
    image: &Image,
    initial: &FilterBank,
    thresh: f64,
    opts: LearnOptions,
) -> Result<LearnedBank, FrameError> {
    assert!(opts.n_alt >= 1, "at least one alternation required");
    assert!(thresh >= 0.0, "threshold must be nonnegative");
    let patches = extract_patches(image, initial.patch_side())?;
    let mut bank = initial.clone();
    let mut objectives = Vec::with_capacity(opts.n_alt);
    for _ in 0..opts.n_alt {
        let coeffs = bank_times_patches(&bank, &patches, image.rows(), image.cols());
        let kept = hard_threshold(&coeffs, thresh);
        bank = procrustes_update(&kept, &patches)?;
        let objective = sparsity_objective(&bank, &patches, &kept, thresh);
        if let Some(&prev) = objectives.last() {
            debug_assert!(
                objective <= prev + 1e-9,
                "learning objective increased: {prev} -> {objective}"
            );
        }
        let converged = objectives.last().is_some_and(|&prev: &f64| {
            opts.rel_tol > 0.0 && (prev - objective).abs() <= opts.rel_tol * prev.abs().max(1e-30)
        });
        objectives.push(objective);
        if converged {
            break;
        }
    }
    Ok(LearnedBank { bank, objectives })
}

/// `||V - B G||_F^2 + thresh^2 * ||V||_0` for a coefficient stack `V`.
pub fn sparsity_objective(
    bank: &FilterBank,
    patches: &PatchMatrix,
    coeffs: &CoefficientStack,
    thresh: f64,
) -> f64 {
    let r2 = bank.channels();
    let mut quad = 0.0;
    for a in 0..r2 {
        let chan = coeffs.channel(a);
        let b_row = bank.filter(a);
        for (j, &v) in chan.iter().enumerate() {
            let patch = patches.patch(j);
            let mut bg = 0.0;
            for e in 0..r2 {
                bg += b_row[e] * patch[e];
            }
            let diff = v - bg;
            quad += diff * diff;
        }
    }
    quad + thresh * thresh * coeffs.nnz() as f64
}
