//! The pipeline stages behind the CLI subcommands: each one reads its
//! inputs, validates them against the run configuration, calls into the
//! core library and writes the output files.

use crate::config::{GeometryConfig, GridConfig, RunConfig};
use crate::export::{central_section, profile_csv, row_section, write_pgm16, ExportKind};
use crate::formats;
use crate::parallel::{build_full_parallel, build_quadrant_parallel};
use anyhow::{bail, Context, Result};
use axitomo_core::projector::expand_by_symmetry;
use axitomo_core::sim::{rasterize, rmse, simulate};
use axitomo_core::solver::{reconstruct, tv_reconstruct_with, SolverParams};
use axitomo_core::{Image, SystemMatrix, Volume};
use serde::Serialize;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Atf,
    Tv,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Atf => "atf",
            Method::Tv => "tv",
        }
    }
}

pub struct BuildReport {
    pub path: PathBuf,
    pub rows: usize,
    pub cols: usize,
    pub nnz: usize,
    pub symmetry: bool,
    pub elapsed_s: f64,
}

fn geometry_config(cfg: &RunConfig) -> GeometryConfig {
    cfg.geometry.clone()
}

fn grid_config(cfg: &RunConfig) -> GridConfig {
    cfg.grid.clone()
}

/// Assemble the system matrix and write it with its sidecar.
pub fn cmd_build_matrix(
    cfg: &RunConfig,
    use_symmetry: bool,
    threads: usize,
    out: Option<&Path>,
) -> Result<BuildReport> {
    let geom = cfg.geometry()?;
    let grid = cfg.radial_grid()?;
    let path = out.unwrap_or(&cfg.paths.matrix).to_path_buf();
    let start = Instant::now();
    let matrix = if use_symmetry {
        let quadrant = build_quadrant_parallel(&geom, &grid, threads)?;
        expand_by_symmetry(&quadrant, &geom, &grid)?
    } else {
        build_full_parallel(&geom, &grid, threads)?
    };
    let elapsed_s = start.elapsed().as_secs_f64();
    formats::write_system_matrix(
        &path,
        &matrix,
        &geometry_config(cfg),
        &grid_config(cfg),
        use_symmetry,
    )?;
    Ok(BuildReport {
        path,
        rows: matrix.n_rows(),
        cols: matrix.n_cols(),
        nnz: matrix.nnz(),
        symmetry: use_symmetry,
        elapsed_s,
    })
}

/// Rasterize the configured phantom into the reference volume file.
pub fn cmd_phantom(cfg: &RunConfig, out: Option<&Path>) -> Result<PathBuf> {
    let grid = cfg.radial_grid()?;
    let volume = rasterize(&cfg.phantom_spec(), &grid)?;
    let path = out.unwrap_or(&cfg.paths.reference).to_path_buf();
    formats::write_volume(&path, &volume, Some("phantom"), None)?;
    Ok(path)
}

fn load_matrix_checked(cfg: &RunConfig, path: &Path) -> Result<SystemMatrix> {
    let (matrix, sidecar) = formats::read_system_matrix(path)?;
    if sidecar.grid != grid_config(cfg) {
        bail!(
            "matrix {} was built for a different grid (sidecar {:?})",
            path.display(),
            sidecar.grid
        );
    }
    if sidecar.geometry != geometry_config(cfg) {
        bail!(
            "matrix {} was built for a different geometry",
            path.display()
        );
    }
    let geom = cfg.geometry()?;
    let grid = cfg.radial_grid()?;
    if matrix.n_rows() != geom.ray_count() || matrix.n_cols() != grid.cell_count() {
        bail!("matrix shape disagrees with the configuration");
    }
    Ok(matrix)
}

/// Forward-project the configured phantom and add the configured noise.
pub fn cmd_simulate(cfg: &RunConfig, matrix: Option<&Path>, out: Option<&Path>) -> Result<PathBuf> {
    let matrix_path = matrix.unwrap_or(&cfg.paths.matrix);
    let a = load_matrix_checked(cfg, matrix_path)?;
    let geom = cfg.geometry()?;
    let grid = cfg.radial_grid()?;
    let volume = rasterize(&cfg.phantom_spec(), &grid)?;
    let projection = simulate(&a, &geom, &volume, cfg.noise.variance, cfg.noise.seed)?;
    let path = out.unwrap_or(&cfg.paths.projection).to_path_buf();
    formats::write_projection(
        &path,
        &projection,
        &geometry_config(cfg),
        cfg.noise.variance,
        cfg.noise.seed,
        matrix_path.file_name().and_then(|n| n.to_str()),
    )?;
    Ok(path)
}

pub struct ReconstructReport {
    pub volume_path: PathBuf,
    pub diagnostics_path: PathBuf,
    pub outer_iterations: usize,
}

/// Run one reconstruction method against a projection file and write the
/// volume plus a diagnostics CSV (and, for the adaptive method, the learned
/// filter bank).
pub fn cmd_reconstruct(
    cfg: &RunConfig,
    method: Method,
    matrix: Option<&Path>,
    projection: Option<&Path>,
    out: Option<&Path>,
    diagnostics: Option<&Path>,
) -> Result<ReconstructReport> {
    let matrix_path = matrix.unwrap_or(&cfg.paths.matrix);
    let a = load_matrix_checked(cfg, matrix_path)?;
    let projection_path = projection.unwrap_or(&cfg.paths.projection);
    let (g, _sidecar) = formats::read_projection(projection_path)?;
    if g.data().len() != a.n_rows() {
        bail!("projection length disagrees with the matrix row count");
    }
    let grid = cfg.radial_grid()?;
    let params: SolverParams = cfg.solver_params()?;
    let volume_path = out.unwrap_or(&cfg.paths.volume).to_path_buf();
    let diagnostics_path = diagnostics.unwrap_or(&cfg.paths.diagnostics).to_path_buf();

    let start = Instant::now();
    let mut csv = String::new();
    let (u, outer_iterations) = match method {
        Method::Atf => {
            writeln!(csv, "outer,objective,data_residual,rel_change,bank_objective,elapsed_s")?;
            let run = reconstruct(&a, g.data(), &params, |record| {
                let _ = writeln!(
                    csv,
                    "{},{},{},{},{},{}",
                    record.outer,
                    record.objective,
                    record.data_residual,
                    record.rel_change,
                    record.bank_objective,
                    start.elapsed().as_secs_f64()
                );
            })?;
            let bank_path = bank_path_for(&volume_path);
            formats::write_filter_bank(&bank_path, &run.bank)?;
            (run.u, run.outer.len())
        }
        Method::Tv => {
            writeln!(csv, "iter,objective,data_residual,elapsed_s")?;
            let op_norm = a.operator_norm(params.norm_iters);
            let log_every = (params.tv_iters / 100).max(1);
            let run = tv_reconstruct_with(
                &a,
                g.data(),
                params.lambda_tv,
                params.tv_iters,
                op_norm,
                log_every,
                |record| {
                    let _ = writeln!(
                        csv,
                        "{},{},{},{}",
                        record.iter,
                        record.objective,
                        record.data_residual,
                        start.elapsed().as_secs_f64()
                    );
                },
            )?;
            (run.u, run.records.len())
        }
    };
    let volume = Volume::new(grid, Image::from_vec(2 * grid.n, grid.m, u))
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    formats::write_volume(
        &volume_path,
        &volume,
        Some(method.name()),
        projection_path.file_name().and_then(|n| n.to_str()),
    )?;
    if let Some(parent) = diagnostics_path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    std::fs::write(&diagnostics_path, csv)
        .with_context(|| format!("writing {}", diagnostics_path.display()))?;
    Ok(ReconstructReport {
        volume_path,
        diagnostics_path,
        outer_iterations,
    })
}

/// Path of the learned-bank JSON written next to a reconstruction.
pub fn bank_path_for(volume_path: &Path) -> PathBuf {
    let mut name = volume_path.file_name().unwrap_or_default().to_os_string();
    name.push(".bank.json");
    volume_path.with_file_name(name)
}

#[derive(Serialize)]
pub struct EvaluationReport {
    pub rmse: f64,
    pub volume: String,
    pub reference: String,
}

/// RMSE of a volume against a reference; writes a JSON report.
pub fn cmd_evaluate(
    volume_path: &Path,
    reference_path: &Path,
    report: Option<&Path>,
) -> Result<EvaluationReport> {
    let (volume, _) = formats::read_volume(volume_path)?;
    let (reference, _) = formats::read_volume(reference_path)?;
    let value = rmse(&volume, &reference)?;
    let report_struct = EvaluationReport {
        rmse: value,
        volume: volume_path.display().to_string(),
        reference: reference_path.display().to_string(),
    };
    let report_path = report.map(Path::to_path_buf).unwrap_or_else(|| {
        let mut name = volume_path.file_name().unwrap_or_default().to_os_string();
        name.push(".rmse.json");
        volume_path.with_file_name(name)
    });
    std::fs::write(
        &report_path,
        serde_json::to_string_pretty(&report_struct)? + "\n",
    )?;
    Ok(report_struct)
}

/// Export a section image or a radial profile from a volume file.
pub fn cmd_export(cfg: &RunConfig, volume_path: &Path, what: &str, out: &Path) -> Result<()> {
    let (volume, _) = formats::read_volume(volume_path)?;
    match ExportKind::parse(what)? {
        ExportKind::CentralSection => {
            let (w, h, samples) = central_section(&volume, &cfg.export);
            write_pgm16(out, w, h, &samples)?;
        }
        ExportKind::RowSection { slab } => {
            let (w, h, samples) = row_section(&volume, slab, &cfg.export)?;
            write_pgm16(out, w, h, &samples)?;
        }
        ExportKind::Profile { z } => {
            let csv = profile_csv(&volume, z)?;
            if let Some(parent) = out.parent() {
                if !parent.as_os_str().is_empty() {
                    std::fs::create_dir_all(parent)?;
                }
            }
            std::fs::write(out, csv)?;
        }
    }
    Ok(())
}
