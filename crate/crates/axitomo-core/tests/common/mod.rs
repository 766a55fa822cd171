//! Shared test fixtures and independent oracles.
//!
//! Everything here deliberately avoids the library's assembly path: the
//! line-integral oracle samples the ray densely, the spectral-norm oracle
//! runs a dense Jacobi eigensolver, and the chord formula is closed form.

#![allow(dead_code)]

use axitomo_core::geometry::{ConeBeamGeometry, RadialGrid, Ray};
use std::collections::BTreeMap;

/// Reference imaging layout: source at x = 40,
/// detector plane at x = -50 spanning |y| <= 2.45, |z| <= 2.51.
pub fn desk_geometry(p: usize, q: usize) -> ConeBeamGeometry {
    ConeBeamGeometry::new(40.0, -50.0, 2.45 / p as f64, 2.51 / q as f64, p, q).unwrap()
}

/// Unit-cylinder grid (`R0 = Z0 = 1`).
pub fn desk_grid(m: usize, n: usize) -> RadialGrid {
    RadialGrid::new(m, n, 1.0 / m as f64, 1.0 / n as f64).unwrap()
}

/// Dense-sampling line integral of every cell indicator along the ray,
/// midpoint rule with step `step_scale * dr`.
pub fn sampled_row(grid: &RadialGrid, ray: &Ray, step_scale: f64) -> BTreeMap<usize, f64> {
    let mut acc = BTreeMap::new();
    let Some((t_in, t_out)) = ray.cylinder_hits(grid.outer_radius()) else {
        return acc;
    };
    let span = t_out - t_in;
    let steps = (span / (step_scale * grid.dr)).ceil().max(1.0) as usize;
    let h = span / steps as f64;
    let n = grid.n as i64;
    for k in 0..steps {
        let t = t_in + (k as f64 + 0.5) * h;
        let (x, y, z) = ray.point_at(t);
        let rho = x.hypot(y);
        let annulus = (rho / grid.dr).floor() as usize + 1;
        if annulus > grid.m {
            continue;
        }
        let slab = (z / grid.dz).floor() as i64;
        if !(-n..n).contains(&slab) {
            continue;
        }
        *acc.entry(grid.column_of(annulus, slab)).or_insert(0.0) += h;
    }
    acc
}

/// Number of disjoint runs of samples falling inside the given annulus.
pub fn annulus_segment_count(grid: &RadialGrid, ray: &Ray, annulus: usize, step_scale: f64) -> usize {
    let Some((t_in, t_out)) = ray.cylinder_hits(grid.outer_radius()) else {
        return 0;
    };
    let span = t_out - t_in;
    let steps = (span / (step_scale * grid.dr)).ceil().max(1.0) as usize;
    let h = span / steps as f64;
    let mut segments = 0;
    let mut inside = false;
    for k in 0..steps {
        let t = t_in + (k as f64 + 0.5) * h;
        let (x, y, _) = ray.point_at(t);
        let rho = x.hypot(y);
        let now = (annulus - 1) as f64 * grid.dr <= rho && rho < annulus as f64 * grid.dr;
        if now && !inside {
            segments += 1;
        }
        inside = now;
    }
    segments
}

/// Closed-form length of the ray's chord through the object cylinder,
/// clipped to `|z| <= Z0`.
pub fn clipped_chord(grid: &RadialGrid, ray: &Ray) -> f64 {
    let Some((t0, t1)) = ray.cylinder_hits(grid.outer_radius()) else {
        return 0.0;
    };
    let sg = ray.sin_gamma();
    if sg.abs() < 1e-12 {
        return t1 - t0;
    }
    let cap = grid.half_height();
    let (lo_cap, hi_cap) = if sg > 0.0 {
        (-cap / sg, cap / sg)
    } else {
        (cap / sg, -cap / sg)
    };
    (t1.min(hi_cap) - t0.max(lo_cap)).max(0.0)
}

/// Spectral norm of a dense row-major matrix via a cyclic Jacobi
/// eigensolver on `A^T A`; independent of the power-iteration path.
pub fn dense_spectral_norm(a: &[f64], n_rows: usize, n_cols: usize) -> f64 {
    assert_eq!(a.len(), n_rows * n_cols);
    let mut s = vec![0.0; n_cols * n_cols];
    for i in 0..n_cols {
        for j in 0..n_cols {
            let mut acc = 0.0;
            for k in 0..n_rows {
                acc += a[k * n_cols + i] * a[k * n_cols + j];
            }
            s[i * n_cols + j] = acc;
        }
    }
    let n = n_cols;
    for _sweep in 0..200 {
        let mut off: f64 = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                off = off.max(s[i * n + j].abs());
            }
        }
        let scale = (0..n).map(|i| s[i * n + i].abs()).fold(0.0, f64::max);
        if off <= 1e-15 * scale.max(1e-300) {
            break;
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let spq = s[p * n + q];
                if spq == 0.0 {
                    continue;
                }
                let theta = (s[q * n + q] - s[p * n + p]) / (2.0 * spq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let sn = c * t;
                for k in 0..n {
                    let skp = s[k * n + p];
                    let skq = s[k * n + q];
                    s[k * n + p] = c * skp - sn * skq;
                    s[k * n + q] = sn * skp + c * skq;
                }
                for k in 0..n {
                    let spk = s[p * n + k];
                    let sqk = s[q * n + k];
                    s[p * n + k] = c * spk - sn * sqk;
                    s[q * n + k] = sn * spk + c * sqk;
                }
            }
        }
    }
    (0..n)
        .map(|i| s[i * n + i])
        .fold(0.0f64, f64::max)
        .max(0.0)
        .sqrt()
}

/// Solve a dense symmetric positive-definite system in place by Gaussian
/// elimination with partial pivoting; returns the solution.
pub fn solve_dense(mut a: Vec<f64>, mut b: Vec<f64>, n: usize) -> Vec<f64> {
    assert_eq!(a.len(), n * n);
    assert_eq!(b.len(), n);
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i * n + col].abs().total_cmp(&a[j * n + col].abs()))
            .unwrap();
        if pivot != col {
            for k in 0..n {
                a.swap(col * n + k, pivot * n + k);
            }
            b.swap(col, pivot);
        }
        let diag = a[col * n + col];
        assert!(diag.abs() > 1e-12, "singular system");
        for row in col + 1..n {
            let factor = a[row * n + col] / diag;
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                a[row * n + k] -= factor * a[col * n + k];
            }
            b[row] -= factor * b[col];
        }
    }
    for col in (0..n).rev() {
        let mut acc = b[col];
        for k in col + 1..n {
            acc -= a[col * n + k] * b[k];
        }
        b[col] = acc / a[col * n + col];
    }
    b
}

/// Ray aimed so its horizontal projection passes at distance `rp` from the
/// axis (for near-tangency cases), with the given inclination.
pub fn ray_with_min_radius(source_x: f64, rp: f64, gamma: f64) -> Ray {
    let alpha = std::f64::consts::PI - (rp / source_x).asin();
    Ray::from_angles(source_x, gamma, alpha)
}
