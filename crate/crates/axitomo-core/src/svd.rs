//! One-sided Jacobi SVD for small square matrices.
//!
//! Right rotations orthogonalize column pairs of a working copy `H = A*V`;
//! after convergence the singular values are the column norms of `H`, the
//! right factor is the accumulated rotation product and the left factor the
//! normalized columns. Columns with (numerically) zero singular value are
//! completed to an orthonormal basis from canonical vectors, so the left
//! factor is always fully orthogonal.

use crate::math;
use alloc::vec;
use alloc::vec::Vec;

const MAX_SWEEPS: usize = 64;
const PAIR_TOL: f64 = 1e-15;
/// Singular values below `sigma_max * RANK_TOL` count as zero.
const RANK_TOL: f64 = 1e-12;

pub(crate) struct Svd {
    pub n: usize,
    /// Left singular vectors, column-major, fully orthogonal.
    pub u: Vec<f64>,
    /// Singular values, descending.
    #[allow(dead_code)]
    pub sigma: Vec<f64>,
    /// Right singular vectors, column-major.
    pub v: Vec<f64>,
}

impl Svd {
    /// `U * V^T`, returned row-major.
    pub fn orthogonal_product(&self) -> Vec<f64> {
        let n = self.n;
        let mut out = vec![0.0; n * n];
        for row in 0..n {
            for col in 0..n {
                let mut acc = 0.0;
                for k in 0..n {
                    acc += self.u[k * n + row] * self.v[k * n + col];
                }
                out[row * n + col] = acc;
            }
        }
        out
    }
}

/// Decompose a dense row-major `n x n` matrix.
pub(crate) fn svd_square(a_row_major: &[f64], n: usize) -> Svd {
    assert_eq!(a_row_major.len(), n * n);
    // Column-major working copy.
    let mut h = vec![0.0; n * n];
    for row in 0..n {
        for col in 0..n {
            h[col * n + row] = a_row_major[row * n + col];
        }
    }
    let mut v = vec![0.0; n * n];
    for k in 0..n {
        v[k * n + k] = 1.0;
    }

    for _ in 0..MAX_SWEEPS {
        let mut rotated = false;
        for i in 0..n.saturating_sub(1) {
            for j in i + 1..n {
                let (ni, nj, d) = {
                    let ci = &h[i * n..(i + 1) * n];
                    let cj = &h[j * n..(j + 1) * n];
                    let mut ni = 0.0;
                    let mut nj = 0.0;
                    let mut d = 0.0;
                    for k in 0..n {
                        ni += ci[k] * ci[k];
                        nj += cj[k] * cj[k];
                        d += ci[k] * cj[k];
                    }
                    (ni, nj, d)
                };
                if d.abs() <= PAIR_TOL * math::sqrt(ni * nj) || d == 0.0 {
                    continue;
                }
                rotated = true;
                let zeta = (nj - ni) / (2.0 * d);
                let t = if zeta >= 0.0 {
                    1.0 / (zeta + math::sqrt(1.0 + zeta * zeta))
                } else {
                    -1.0 / (-zeta + math::sqrt(1.0 + zeta * zeta))
                };
                let c = 1.0 / math::sqrt(1.0 + t * t);
                let s = c * t;
                rotate_columns(&mut h, n, i, j, c, s);
                rotate_columns(&mut v, n, i, j, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let norms: Vec<f64> = (0..n)
        .map(|k| math::norm2(&h[k * n..(k + 1) * n]))
        .collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]));

    let sigma_max = order.first().map_or(0.0, |&k| norms[k]);
    let mut u = vec![0.0; n * n];
    let mut v_sorted = vec![0.0; n * n];
    let mut sigma = Vec::with_capacity(n);
    let mut zero_cols = Vec::new();
    for (dst, &src) in order.iter().enumerate() {
        let nrm = norms[src];
        sigma.push(nrm);
        v_sorted[dst * n..(dst + 1) * n].copy_from_slice(&v[src * n..(src + 1) * n]);
        if sigma_max > 0.0 && nrm > sigma_max * RANK_TOL {
            for k in 0..n {
                u[dst * n + k] = h[src * n + k] / nrm;
            }
        } else {
            zero_cols.push(dst);
        }
    }
    complete_orthogonal(&mut u, n, &zero_cols);

    Svd {
        n,
        u,
        sigma,
        v: v_sorted,
    }
}

fn rotate_columns(mat: &mut [f64], n: usize, i: usize, j: usize, c: f64, s: f64) {
    for k in 0..n {
        let a = mat[i * n + k];
        let b = mat[j * n + k];
        mat[i * n + k] = c * a - s * b;
        mat[j * n + k] = s * a + c * b;
    }
}

/// Fill the listed (zeroed) columns with an orthonormal completion drawn
/// from canonical basis vectors, deterministically.
fn complete_orthogonal(u: &mut [f64], n: usize, zero_cols: &[usize]) {
    let mut next_candidate = 0usize;
    for &col in zero_cols {
        loop {
            assert!(next_candidate < n, "orthogonal completion exhausted candidates");
            let mut cand = vec![0.0; n];
            cand[next_candidate] = 1.0;
            next_candidate += 1;
            // Two Gram-Schmidt passes against every filled column.
            for _ in 0..2 {
                for other in 0..n {
                    if other == col || (zero_cols.contains(&other) && other >= col) {
                        continue;
                    }
                    let base = &u[other * n..(other + 1) * n];
                    let dot: f64 = base.iter().zip(cand.iter()).map(|(a, b)| a * b).sum();
                    for k in 0..n {
                        cand[k] -= dot * u[other * n + k];
                    }
                }
            }
            let nrm = math::norm2(&cand);
            if nrm > 0.5 {
                for k in 0..n {
                    u[col * n + k] = cand[k] / nrm;
                }
                break;
            }
        }
    }
}
