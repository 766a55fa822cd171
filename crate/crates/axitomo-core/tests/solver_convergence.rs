mod common;

use axitomo_core::frame::{analysis, hard_threshold, spectral_initial_bank, synthesis};
use axitomo_core::projector::{build_quadrant, expand_by_symmetry};
use axitomo_core::rng::SplitMix64;
use axitomo_core::sim::{default_phantom, rasterize, rmse_values};
use axitomo_core::solver::{
    pd_solve, reconstruct, subproblem_residual, tv_reconstruct_with, PdOptions, SolverParams,
};
use axitomo_core::{Image, SystemMatrix};
use common::*;

fn desk_matrix(m: usize, p: usize) -> SystemMatrix {
    let geom = desk_geometry(p, p);
    let grid = desk_grid(m, m);
    expand_by_symmetry(&build_quadrant(&geom, &grid).unwrap(), &geom, &grid).unwrap()
}

#[test]
fn lambda_zero_reduces_to_least_squares() {
    // Full-column-rank random sparse system; the plain primal-dual iteration
    // must find the unique least-squares solution.
    let (rows, cols) = (12usize, 6usize);
    let mut rng = SplitMix64::new(8080);
    let mut dense = vec![0.0; rows * cols];
    let mut sparse: Vec<Vec<(usize, f64)>> = Vec::new();
    for r in 0..rows {
        let mut row = Vec::new();
        for c in 0..cols {
            if rng.next_f64() < 0.7 {
                let v = rng.next_centered() * 2.0 + if r % cols == c { 1.0 } else { 0.0 };
                dense[r * cols + c] = v;
                row.push((c, v));
            }
        }
        sparse.push(row);
    }
    let a = SystemMatrix::from_rows(cols, cols, sparse);
    let g: Vec<f64> = (0..rows).map(|_| rng.next_centered()).collect();

    // Dense normal equations oracle.
    let mut ata = vec![0.0; cols * cols];
    let mut atg = vec![0.0; cols];
    for i in 0..cols {
        for j in 0..cols {
            let mut acc = 0.0;
            for k in 0..rows {
                acc += dense[k * cols + i] * dense[k * cols + j];
            }
            ata[i * cols + j] = acc;
        }
        atg[i] = (0..rows).map(|k| dense[k * cols + i] * g[k]).sum();
    }
    let expected = solve_dense(ata, atg, cols);

    let l = a.operator_norm(200);
    let opts = PdOptions {
        lambda: 0.0,
        tau: 1.0 / l,
        sigma: 1.0 / l,
        theta: 1.0,
        n1: 6000,
        residual_stride: 0,
    };
    let bank = spectral_initial_bank(1);
    let coeffs = axitomo_core::frame::CoefficientStack::zeros(1, 1, cols);
    let run = pd_solve(&a, &g, &bank, &coeffs, &vec![0.0; cols], &opts).unwrap();
    for (got, want) in run.u.iter().zip(&expected) {
        assert!((got - want).abs() <= 1e-6 * want.abs().max(1.0), "{got} vs {want}");
    }
}

#[test]
fn subproblem_residual_drops_and_iterates_stay_finite() {
    let m = 16usize;
    let a = desk_matrix(m, 16);
    let grid = desk_grid(m, m);
    let truth = rasterize(&default_phantom(), &grid).unwrap();
    let g = a.matvec(truth.data());

    let bank = spectral_initial_bank(7);
    let image = Image::from_vec(2 * m, m, truth.data().to_vec());
    let coeffs = hard_threshold(&analysis(&bank, &image), 0.02);

    let l = a.operator_norm(100);
    let opts = PdOptions {
        lambda: 0.05,
        tau: 1.0 / l,
        sigma: 1.0 / l,
        theta: 1.0,
        n1: 5000,
        residual_stride: 10,
    };
    let run = pd_solve(&a, &g, &bank, &coeffs, &vec![0.0; a.n_cols()], &opts).unwrap();
    assert!(run.u.iter().all(|x| x.is_finite()));

    let first = run
        .residuals
        .iter()
        .find(|(it, _)| *it == 10)
        .expect("residual at iteration 10")
        .1;
    let last = run.residuals.last().unwrap().1;
    assert!(
        first >= 100.0 * last,
        "residual should drop 100x: {first} -> {last}"
    );

    // And the final iterate satisfies first-order optimality well.
    let target = synthesis(&bank, &coeffs).unwrap().into_vec();
    let res = subproblem_residual(&a, &g, &run.u, &target, opts.lambda);
    let scale = {
        let atg = a.rmatvec(&g);
        atg.iter().map(|x| x * x).sum::<f64>().sqrt()
    };
    assert!(res / scale < 1e-6, "relative residual {}", res / scale);
}

/// Independent TV prox: projected gradient on the dual of
/// `argmin_x 1/2 ||x - y||^2 + w TV(x)`, same discretization (forward
/// differences, reflexive boundary, isotropic). The dual variables persist
/// across calls so repeated prox evaluations converge to the exact map.
fn tv_prox(
    y: &[f64],
    rows: usize,
    cols: usize,
    w: f64,
    iters: usize,
    pr: &mut [f64],
    pc: &mut [f64],
) -> Vec<f64> {
    let n = y.len();
    let grad = |u: &[f64], gr: &mut [f64], gc: &mut [f64]| {
        for i in 0..rows {
            for j in 0..cols {
                let idx = i * cols + j;
                gr[idx] = if i + 1 < rows { u[idx + cols] - u[idx] } else { 0.0 };
                gc[idx] = if j + 1 < cols { u[idx + 1] - u[idx] } else { 0.0 };
            }
        }
    };
    let adj = |pr: &[f64], pc: &[f64], out: &mut [f64]| {
        for i in 0..rows {
            for j in 0..cols {
                let idx = i * cols + j;
                let mut acc = 0.0;
                if i >= 1 {
                    acc += pr[idx - cols];
                }
                if i + 1 < rows {
                    acc -= pr[idx];
                }
                if j >= 1 {
                    acc += pc[idx - 1];
                }
                if j + 1 < cols {
                    acc -= pc[idx];
                }
                out[idx] = acc;
            }
        }
    };
    // The ball radius scales with w between calls; rescale the warm start.
    let carried: f64 = pr.iter().chain(pc.iter()).map(|v| v.abs()).fold(0.0, f64::max);
    if carried > w {
        let shrink = w / carried;
        pr.iter_mut().for_each(|v| *v *= shrink);
        pc.iter_mut().for_each(|v| *v *= shrink);
    }
    let mut x = vec![0.0; n];
    let mut gr = vec![0.0; n];
    let mut gc = vec![0.0; n];
    let step = 0.2;
    for _ in 0..iters {
        adj(pr, pc, &mut x);
        for i in 0..n {
            x[i] -= y[i]; // D* p - y
        }
        grad(&x, &mut gr, &mut gc);
        for i in 0..n {
            let cr = pr[i] - step * gr[i];
            let cc = pc[i] - step * gc[i];
            let norm = cr.hypot(cc);
            let scale = if norm > w { w / norm } else { 1.0 };
            pr[i] = cr * scale;
            pc[i] = cc * scale;
        }
    }
    adj(pr, pc, &mut x);
    for i in 0..n {
        x[i] = y[i] - x[i];
    }
    x
}

#[test]
fn tv_matches_independent_proximal_gradient_solver() {
    let m = 8usize;
    let a = desk_matrix(m, 8);
    let grid = desk_grid(m, m);
    let truth = rasterize(&default_phantom(), &grid).unwrap();
    let g = a.matvec(truth.data());
    let lambda_tv = 0.05;
    let l = a.operator_norm(200);

    let cp = tv_reconstruct_with(&a, &g, lambda_tv, 100_000, l, 0, |_| {}).unwrap();

    // Proximal-gradient oracle with a warm-started prox dual.
    let (rows, cols) = (2 * m, m);
    let eta = 0.9 / (l * l);
    let n = a.n_cols();
    let mut u = vec![0.0; n];
    let mut pr = vec![0.0; n];
    let mut pc = vec![0.0; n];
    for _ in 0..8_000 {
        let mut au = a.matvec(&u);
        for (x, y) in au.iter_mut().zip(&g) {
            *x -= y;
        }
        let at = a.rmatvec(&au);
        let z: Vec<f64> = u.iter().zip(&at).map(|(ui, gi)| ui - eta * gi).collect();
        u = tv_prox(&z, rows, cols, eta * lambda_tv, 50, &mut pr, &mut pc);
    }

    let worst = cp
        .u
        .iter()
        .zip(&u)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(worst < 1e-4, "max deviation {worst}");
}

#[test]
fn tv_smooths_more_with_larger_weight() {
    let m = 16usize;
    let a = desk_matrix(m, 16);
    let grid = desk_grid(m, m);
    let truth = rasterize(&default_phantom(), &grid).unwrap();
    let mut g = a.matvec(truth.data());
    let mut noise = axitomo_core::rng::GaussianSource::new(7);
    for x in &mut g {
        *x += 0.1 * noise.sample();
    }
    let l = a.operator_norm(100);

    // Variance inside the constant shell region must fall as the weight grows.
    let mut variances = Vec::new();
    for lambda_tv in [0.002, 0.02, 0.2] {
        let run = tv_reconstruct_with(&a, &g, lambda_tv, 1500, l, 0, |_| {}).unwrap();
        let vol = Image::from_vec(2 * m, m, run.u);
        let mut values = Vec::new();
        for row in 0..2 * m {
            for col in 0..m {
                let rc = (col as f64 + 0.5) * grid.dr;
                let zc = (row as f64 - m as f64 + 0.5) * grid.dz;
                if rc > 0.65 && rc < 0.95 && zc.abs() < 0.9 {
                    values.push(vol.at(row, col));
                }
            }
        }
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
            / values.len() as f64;
        variances.push(var);
    }
    assert!(
        variances[0] > variances[1] && variances[1] > variances[2],
        "variances {variances:?}"
    );
}

#[test]
fn noiseless_reconstruction_improves_on_the_tv_start() {
    let m = 64usize;
    let a = desk_matrix(m, 48);
    let grid = desk_grid(m, m);
    let truth = rasterize(&default_phantom(), &grid).unwrap();
    let g = a.matvec(truth.data());

    let params = SolverParams {
        lambda: 0.01,
        gamma1: 0.004,
        n1: 250,
        n2: 2,
        eps: 0.0,
        n_alt: 5,
        tv_iters: 250,
        lambda_tv: 0.01,
        norm_iters: 60,
        ..SolverParams::default()
    };
    let l = a.operator_norm(params.norm_iters);
    let init = tv_reconstruct_with(&a, &g, params.lambda_tv, params.tv_iters, l, 0, |_| {})
        .unwrap();
    let out = reconstruct(&a, &g, &params, |_| {}).unwrap();

    let rmse_init = rmse_values(&init.u, truth.data()).unwrap();
    let rmse_final = rmse_values(&out.u, truth.data()).unwrap();
    assert!(
        rmse_final < rmse_init,
        "final {rmse_final} should beat init {rmse_init}"
    );
    assert_eq!(out.outer.len(), 2);
}

#[test]
fn reconstruction_is_deterministic() {
    let m = 12usize;
    let a = desk_matrix(m, 8);
    let grid = desk_grid(m, m);
    let truth = rasterize(&default_phantom(), &grid).unwrap();
    let g = a.matvec(truth.data());
    let params = SolverParams {
        n1: 50,
        n2: 2,
        tv_iters: 50,
        n_alt: 3,
        norm_iters: 30,
        ..SolverParams::default()
    };
    let a_run = reconstruct(&a, &g, &params, |_| {}).unwrap();
    let b_run = reconstruct(&a, &g, &params, |_| {}).unwrap();
    assert_eq!(a_run.u, b_run.u);
}
