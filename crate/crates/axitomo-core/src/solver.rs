//! Reconstruction engines: the primal-dual solver for the quadratic
//! u-subproblem, the outer alternating loop that couples it with filter-bank
//! learning and hard thresholding, and the TV baseline used both for
//! comparison and to initialize the outer loop.

use crate::frame::{
    analysis, hard_threshold, learn_filter_bank, spectral_initial_bank, synthesis,
    CoefficientStack, FilterBank, FrameError, LearnOptions,
};
use crate::image::Image;
use crate::math;
use crate::projector::SystemMatrix;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

#[derive(Clone, Debug, PartialEq)]
pub enum SolverError {
    InvalidParams(&'static str),
    Shape(&'static str),
    /// Iterates left the finite range; the step sizes are too large for the
    /// operator norm.
    NonFinite { iteration: usize },
    Frame(FrameError),
}

impl fmt::Display for SolverError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SolverError::InvalidParams(msg) => write!(f, "invalid solver parameters: {msg}"),
            SolverError::Shape(msg) => write!(f, "shape mismatch: {msg}"),
            SolverError::NonFinite { iteration } => write!(
                f,
                "non-finite iterate at iteration {iteration} (step sizes too large?)"
            ),
            SolverError::Frame(e) => write!(f, "frame error: {e}"),
        }
    }
}

impl core::error::Error for SolverError {}

impl From<FrameError> for SolverError {
    fn from(e: FrameError) -> Self {
        SolverError::Frame(e)
    }
}

/// Parameters of the full reconstruction model and its solvers.
#[derive(Clone, Copy, Debug)]
pub struct SolverParams {
    /// Penalty weight coupling the image to its frame approximation.
    pub lambda: f64,
    /// Regularization weight; the hard threshold is `gamma1 / sqrt(lambda)`.
    pub gamma1: f64,
    /// Primal step size; `None` resolves to `1 / L`.
    pub tau: Option<f64>,
    /// Dual step size; `None` resolves to `1 / L`.
    pub sigma: Option<f64>,
    /// Extrapolation weight in `[0, 1]`.
    pub theta: f64,
    /// Inner (primal-dual) iteration count.
    pub n1: usize,
    /// Outer (alternation) iteration cap.
    pub n2: usize,
    /// Relative-change tolerance for the outer early exit.
    pub eps: f64,
    /// Filter patch side (odd).
    pub patch_size: usize,
    /// Filter-learning alternations per outer iteration.
    pub n_alt: usize,
    /// Relative early-exit tolerance of the filter learning.
    pub learn_rel_tol: f64,
    /// TV weight for the initializer / baseline.
    pub lambda_tv: f64,
    /// TV solver iterations.
    pub tv_iters: usize,
    /// Power iterations for the operator norm.
    pub norm_iters: usize,
}

impl Default for SolverParams {
    fn default() -> Self {
        Self {
            lambda: 0.01,
            gamma1: 0.003,
            tau: None,
            sigma: None,
            theta: 1.0,
            n1: 2000,
            n2: 3,
            eps: 1e-4,
            patch_size: 7,
            n_alt: 20,
            learn_rel_tol: 1e-8,
            lambda_tv: 0.01,
            tv_iters: 1000,
            norm_iters: 100,
        }
    }
}

fn positive(x: f64) -> bool {
    x.is_finite() && x > 0.0
}

impl SolverParams {
    pub fn validate(&self) -> Result<(), SolverError> {
        if !positive(self.lambda) {
            return Err(SolverError::InvalidParams("lambda must be positive"));
        }
        if !positive(self.gamma1) {
            return Err(SolverError::InvalidParams("gamma1 must be positive"));
        }
        if self.tau.is_some_and(|t| !positive(t)) || self.sigma.is_some_and(|s| !positive(s)) {
            return Err(SolverError::InvalidParams("step sizes must be positive"));
        }
        if !(0.0..=1.0).contains(&self.theta) {
            return Err(SolverError::InvalidParams("theta must lie in [0, 1]"));
        }
        if self.n1 == 0 || self.n2 == 0 {
            return Err(SolverError::InvalidParams("iteration counts must be at least 1"));
        }
        if self.eps.is_nan() || self.eps < 0.0 {
            return Err(SolverError::InvalidParams("eps must be nonnegative"));
        }
        if self.patch_size == 0 || self.patch_size.is_multiple_of(2) {
            return Err(SolverError::InvalidParams("patch size must be odd"));
        }
        if self.n_alt == 0 {
            return Err(SolverError::InvalidParams("n_alt must be at least 1"));
        }
        if !positive(self.lambda_tv) {
            return Err(SolverError::InvalidParams("lambda_tv must be positive"));
        }
        if self.tv_iters == 0 || self.norm_iters == 0 {
            return Err(SolverError::InvalidParams("iteration counts must be at least 1"));
        }
        Ok(())
    }

    /// Hard threshold applied to frame coefficients: `gamma1 / sqrt(lambda)`.
    pub fn threshold(&self) -> f64 {
        self.gamma1 / math::sqrt(self.lambda)
    }
}

/// Options of one primal-dual run.
#[derive(Clone, Copy, Debug)]
pub struct PdOptions {
    pub lambda: f64,
    pub tau: f64,
    pub sigma: f64,
    pub theta: f64,
    pub n1: usize,
    /// Record the subproblem residual every this many iterations
    /// (0 disables recording).
    pub residual_stride: usize,
}

/// Result of one primal-dual run.
#[derive(Clone, Debug)]
pub struct PdRun {
    pub u: Vec<f64>,
    /// `(iteration, residual)` samples when recording was enabled.
    pub residuals: Vec<(usize, f64)>,
}

/// Optimality residual of the u-subproblem,
/// `|| A^T (A u - g) + 2 lambda (u - target) ||_2`.
pub fn subproblem_residual(
    a: &SystemMatrix,
    g: &[f64],
    u: &[f64],
    target: &[f64],
    lambda: f64,
) -> f64 {
    let mut au = a.matvec(u);
    for (x, y) in au.iter_mut().zip(g) {
        *x -= y;
    }
    let at = a.rmatvec(&au);
    let mut sum = 0.0;
    for i in 0..u.len() {
        let r = at[i] + 2.0 * lambda * (u[i] - target[i]);
        sum += r * r;
    }
    math::sqrt(sum)
}

/// Solve the u-subproblem
/// `min_u 1/2 ||A u - g||^2 + lambda ||u - W^T(b) v||^2`
/// by the primal-dual iteration, warm-started from `u0` (the dual variable
/// restarts at zero). Runs exactly `n1` iterations:
///
/// ```text
/// omega <- (omega + sigma (A ubar - g)) / (1 + sigma)
/// u     <- (2 lambda tau W^T v + u - tau A^T omega) / (2 lambda tau + 1)
/// ubar  <- u + theta (u - u_prev)
/// ```
pub fn pd_solve(
    a: &SystemMatrix,
    g: &[f64],
    bank: &FilterBank,
    coeffs: &CoefficientStack,
    u0: &[f64],
    opts: &PdOptions,
) -> Result<PdRun, SolverError> {
    if g.len() != a.n_rows() {
        return Err(SolverError::Shape("data length != matrix rows"));
    }
    if u0.len() != a.n_cols() {
        return Err(SolverError::Shape("start vector length != matrix columns"));
    }
    let rows = a.n_cols() / a.slab_cols();
    let cols = a.slab_cols();
    if coeffs.rows() != rows || coeffs.cols() != cols {
        return Err(SolverError::Shape("coefficient stack does not match the grid"));
    }
    if opts.lambda.is_nan() || opts.lambda < 0.0 || !positive(opts.tau) || !positive(opts.sigma) {
        return Err(SolverError::InvalidParams("bad primal-dual step sizes"));
    }
    let target = synthesis(bank, coeffs)?.into_vec();

    let c2 = 2.0 * opts.lambda * opts.tau;
    let mut u = u0.to_vec();
    let mut ubar = u.clone();
    let mut u_prev = vec![0.0; u.len()];
    let mut omega = vec![0.0; g.len()];
    let mut residuals = Vec::new();

    for iter in 0..opts.n1 {
        let au = a.matvec(&ubar);
        for k in 0..omega.len() {
            omega[k] = (omega[k] + opts.sigma * (au[k] - g[k])) / (1.0 + opts.sigma);
        }
        let atw = a.rmatvec(&omega);
        core::mem::swap(&mut u_prev, &mut u);
        let mut finite = true;
        for i in 0..u.len() {
            let next = (c2 * target[i] + u_prev[i] - opts.tau * atw[i]) / (c2 + 1.0);
            finite &= next.is_finite();
            u[i] = next;
            ubar[i] = next + opts.theta * (next - u_prev[i]);
        }
        if !finite {
            return Err(SolverError::NonFinite { iteration: iter + 1 });
        }
        if opts.residual_stride > 0 && (iter + 1) % opts.residual_stride == 0 {
            residuals.push((
                iter + 1,
                subproblem_residual(a, g, &u, &target, opts.lambda),
            ));
        }
    }
    Ok(PdRun { u, residuals })
}

/// Diagnostics of one TV iteration sample.
#[derive(Clone, Copy, Debug)]
pub struct TvRecord {
    pub iter: usize,
    /// `1/2 ||A u - g||^2 + lambda_tv TV(u)`.
    pub objective: f64,
    pub data_residual: f64,
}

/// Result of a TV run.
#[derive(Clone, Debug)]
pub struct TvRun {
    pub u: Vec<f64>,
    pub records: Vec<TvRecord>,
}

/// Forward differences with a reflexive boundary (last difference zero).
fn tv_gradient(u: &[f64], rows: usize, cols: usize, out_r: &mut [f64], out_c: &mut [f64]) {
    for i in 0..rows {
        for j in 0..cols {
            let idx = i * cols + j;
            out_r[idx] = if i + 1 < rows { u[idx + cols] - u[idx] } else { 0.0 };
            out_c[idx] = if j + 1 < cols { u[idx + 1] - u[idx] } else { 0.0 };
        }
    }
}

/// Adjoint of [`tv_gradient`]: `<grad u, p> = <u, grad_adjoint p>`.
fn tv_gradient_adjoint(p_r: &[f64], p_c: &[f64], rows: usize, cols: usize, out: &mut [f64]) {
    for i in 0..rows {
        for j in 0..cols {
            let idx = i * cols + j;
            let mut acc = 0.0;
            if i >= 1 {
                acc += p_r[idx - cols];
            }
            if i + 1 < rows {
                acc -= p_r[idx];
            }
            if j >= 1 {
                acc += p_c[idx - 1];
            }
            if j + 1 < cols {
                acc -= p_c[idx];
            }
            out[idx] = acc;
        }
    }
}

/// Isotropic total variation of an image given as a flat slice.
pub fn total_variation(u: &[f64], rows: usize, cols: usize) -> f64 {
    let mut tv = 0.0;
    for i in 0..rows {
        for j in 0..cols {
            let idx = i * cols + j;
            let dr = if i + 1 < rows { u[idx + cols] - u[idx] } else { 0.0 };
            let dc = if j + 1 < cols { u[idx + 1] - u[idx] } else { 0.0 };
            tv += math::hypot(dr, dc);
        }
    }
    tv
}

/// TV-regularized reconstruction:
/// `min_u 1/2 ||A u - g||^2 + lambda_tv TV(u)` with isotropic discrete TV
/// (forward differences, reflexive boundary), solved by the primal-dual
/// scheme from a zero start. Deterministic.
pub fn tv_reconstruct(
    a: &SystemMatrix,
    g: &[f64],
    lambda_tv: f64,
    n_iter: usize,
) -> Result<Vec<f64>, SolverError> {
    let l = a.operator_norm(100);
    Ok(tv_reconstruct_with(a, g, lambda_tv, n_iter, l, 0, |_| {})?.u)
}

/// [`tv_reconstruct`] with the operator norm supplied by the caller and
/// optional per-iteration diagnostics every `log_every` iterations.
pub fn tv_reconstruct_with(
    a: &SystemMatrix,
    g: &[f64],
    lambda_tv: f64,
    n_iter: usize,
    op_norm: f64,
    log_every: usize,
    mut on_record: impl FnMut(&TvRecord),
) -> Result<TvRun, SolverError> {
    if g.len() != a.n_rows() {
        return Err(SolverError::Shape("data length != matrix rows"));
    }
    if !positive(lambda_tv) {
        return Err(SolverError::InvalidParams("lambda_tv must be positive"));
    }
    let rows = a.n_cols() / a.slab_cols();
    let cols = a.slab_cols();
    let n = a.n_cols();

    // ||K||^2 <= ||A||^2 + 8 for the stacked operator (A, grad).
    let step = 1.0 / math::sqrt(op_norm * op_norm + 8.0);
    let (tau, sigma) = (step, step);

    let mut u = vec![0.0; n];
    let mut ubar = u.clone();
    let mut u_prev = vec![0.0; n];
    let mut omega = vec![0.0; g.len()];
    let mut phi_r = vec![0.0; n];
    let mut phi_c = vec![0.0; n];
    let mut grad_r = vec![0.0; n];
    let mut grad_c = vec![0.0; n];
    let mut div = vec![0.0; n];
    let mut records = Vec::new();

    for iter in 0..n_iter {
        let au = a.matvec(&ubar);
        for k in 0..omega.len() {
            omega[k] = (omega[k] + sigma * (au[k] - g[k])) / (1.0 + sigma);
        }
        tv_gradient(&ubar, rows, cols, &mut grad_r, &mut grad_c);
        for i in 0..n {
            let pr = phi_r[i] + sigma * grad_r[i];
            let pc = phi_c[i] + sigma * grad_c[i];
            let norm = math::hypot(pr, pc);
            let scale = if norm > lambda_tv { lambda_tv / norm } else { 1.0 };
            phi_r[i] = pr * scale;
            phi_c[i] = pc * scale;
        }
        let atw = a.rmatvec(&omega);
        tv_gradient_adjoint(&phi_r, &phi_c, rows, cols, &mut div);
        core::mem::swap(&mut u_prev, &mut u);
        let mut finite = true;
        for i in 0..n {
            let next = u_prev[i] - tau * (atw[i] + div[i]);
            finite &= next.is_finite();
            u[i] = next;
            ubar[i] = 2.0 * next - u_prev[i];
        }
        if !finite {
            return Err(SolverError::NonFinite { iteration: iter + 1 });
        }
        if log_every > 0 && (iter + 1) % log_every == 0 {
            let mut residual = 0.0;
            let au = a.matvec(&u);
            for (x, y) in au.iter().zip(g) {
                let d = x - y;
                residual += d * d;
            }
            let record = TvRecord {
                iter: iter + 1,
                objective: 0.5 * residual + lambda_tv * total_variation(&u, rows, cols),
                data_residual: math::sqrt(residual),
            };
            on_record(&record);
            records.push(record);
        }
    }
    Ok(TvRun { u, records })
}

/// The relaxed model objective
/// `||A u - g||^2 + lambda ||W(b) u - v||^2 + gamma1^2 ||v||_0`
/// (the l0 weight is `lambda * gamma2^2` with `gamma2^2 = gamma1^2 / lambda`).
pub fn objective(
    a: &SystemMatrix,
    g: &[f64],
    u: &[f64],
    coeffs: &CoefficientStack,
    bank: &FilterBank,
    lambda: f64,
    gamma1: f64,
) -> Result<f64, SolverError> {
    if g.len() != a.n_rows() || u.len() != a.n_cols() {
        return Err(SolverError::Shape("objective operand shapes"));
    }
    let rows = a.n_cols() / a.slab_cols();
    let cols = a.slab_cols();
    let mut data_term = 0.0;
    for (x, y) in a.matvec(u).iter().zip(g) {
        let d = x - y;
        data_term += d * d;
    }
    let image = Image::from_vec(rows, cols, u.to_vec());
    let wu = analysis(bank, &image);
    if wu.channels() != coeffs.channels()
        || wu.rows() != coeffs.rows()
        || wu.cols() != coeffs.cols()
    {
        return Err(SolverError::Shape("coefficient stack does not match the grid"));
    }
    let mut frame_term = 0.0;
    for (x, y) in wu.data().iter().zip(coeffs.data()) {
        let d = x - y;
        frame_term += d * d;
    }
    Ok(data_term + lambda * frame_term + gamma1 * gamma1 * coeffs.nnz() as f64)
}

/// One outer-iteration diagnostic row.
#[derive(Clone, Copy, Debug)]
pub struct OuterRecord {
    pub outer: usize,
    /// Relaxed model objective after the u-update.
    pub objective: f64,
    pub data_residual: f64,
    /// `||u_next - u|| / max(||u||, tiny)`.
    pub rel_change: f64,
    /// Final filter-learning objective of this outer iteration.
    pub bank_objective: f64,
}

/// Full reconstruction result.
#[derive(Clone, Debug)]
pub struct Reconstruction {
    pub u: Vec<f64>,
    pub outer: Vec<OuterRecord>,
    pub bank: FilterBank,
}

/// Adaptive-tight-frame reconstruction: TV initialization, then up to `n2`
/// rounds of (learn bank on the current image, hard-threshold its analysis
/// coefficients, re-solve the quadratic u-subproblem warm-started from the
/// current image). Exits early when the relative change drops below
/// `params.eps`. The filter bank carries over between rounds; the dual
/// variable does not.
pub fn reconstruct(
    a: &SystemMatrix,
    g: &[f64],
    params: &SolverParams,
    on_outer: impl FnMut(&OuterRecord),
) -> Result<Reconstruction, SolverError> {
    params.validate()?;
    if g.len() != a.n_rows() {
        return Err(SolverError::Shape("data length != matrix rows"));
    }
    let op_norm = a.operator_norm(params.norm_iters);
    let init = tv_reconstruct_with(a, g, params.lambda_tv, params.tv_iters, op_norm, 0, |_| {})?;
    reconstruct_from(a, g, init.u, params, on_outer)
}

/// [`reconstruct`] with the initial estimate supplied by the caller
/// (resuming a run, or reusing one TV solution across a parameter sweep).
pub fn reconstruct_from(
    a: &SystemMatrix,
    g: &[f64],
    initial: Vec<f64>,
    params: &SolverParams,
    mut on_outer: impl FnMut(&OuterRecord),
) -> Result<Reconstruction, SolverError> {
    params.validate()?;
    if g.len() != a.n_rows() {
        return Err(SolverError::Shape("data length != matrix rows"));
    }
    if initial.len() != a.n_cols() {
        return Err(SolverError::Shape("start vector length != matrix columns"));
    }
    let rows = a.n_cols() / a.slab_cols();
    let cols = a.slab_cols();

    let op_norm = a.operator_norm(params.norm_iters);
    let fallback = if op_norm > 0.0 { 1.0 / op_norm } else { 1.0 };
    let tau = params.tau.unwrap_or(fallback);
    let sigma = params.sigma.unwrap_or(fallback);

    let mut u = initial;
    let mut bank = spectral_initial_bank(params.patch_size);
    let thresh = params.threshold();
    let learn_opts = LearnOptions {
        n_alt: params.n_alt,
        rel_tol: params.learn_rel_tol,
    };
    let pd_opts = PdOptions {
        lambda: params.lambda,
        tau,
        sigma,
        theta: params.theta,
        n1: params.n1,
        residual_stride: 0,
    };

    let mut records = Vec::new();
    for outer in 0..params.n2 {
        let u_image = Image::from_vec(rows, cols, u.clone());
        let learned = learn_filter_bank(&u_image, &bank, thresh, learn_opts)?;
        bank = learned.bank;
        let coeffs = hard_threshold(&analysis(&bank, &u_image), thresh);
        let run = pd_solve(a, g, &bank, &coeffs, &u, &pd_opts)?;

        let mut change = 0.0;
        let mut base = 0.0;
        for (new, old) in run.u.iter().zip(&u) {
            let d = new - old;
            change += d * d;
            base += old * old;
        }
        let rel_change = math::sqrt(change) / math::sqrt(base).max(1e-30);
        let mut data_residual = 0.0;
        for (x, y) in a.matvec(&run.u).iter().zip(g) {
            let d = x - y;
            data_residual += d * d;
        }
        u = run.u;
        let record = OuterRecord {
            outer,
            objective: objective(a, g, &u, &coeffs, &bank, params.lambda, params.gamma1)?,
            data_residual: math::sqrt(data_residual),
            rel_change,
            bank_objective: learned.objectives.last().copied().unwrap_or(0.0),
        };
        on_outer(&record);
        records.push(record);
        if rel_change < params.eps {
            break;
        }
    }
    Ok(Reconstruction {
        u,
        outer: records,
        bank,
    })
}
