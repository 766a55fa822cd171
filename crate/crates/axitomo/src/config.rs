//! Run configuration: one JSON file carries the geometry, grid, phantom,
//! solver, noise and path settings for a whole pipeline run. Unknown keys
//! are rejected so typos fail loudly.

use anyhow::{Context, Result};
use axitomo_core::sim::{default_phantom, PhantomPiece, PhantomSpec};
use axitomo_core::solver::SolverParams;
use axitomo_core::{ConeBeamGeometry, RadialGrid};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: GeometryConfig,
    pub grid: GridConfig,
    /// Omitted: the built-in default phantom.
    #[serde(default)]
    pub phantom: Option<PhantomConfig>,
    pub solver: SolverConfig,
    pub noise: NoiseConfig,
    #[serde(default)]
    pub export: ExportConfig,
    pub paths: PathsConfig,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub source_x: f64,
    pub detector_x: f64,
    pub pitch_y: f64,
    pub pitch_z: f64,
    pub p: usize,
    pub q: usize,
}

#[derive(Clone, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub m: usize,
    pub n: usize,
    pub dr: f64,
    pub dz: f64,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomConfig {
    pub pieces: Vec<PieceConfig>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PieceConfig {
    pub r_inner: f64,
    pub r_outer: f64,
    pub z_min: f64,
    pub z_max: f64,
    pub value: f64,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SolverConfig {
    pub lambda: f64,
    pub gamma1: f64,
    /// Primal step size; omitted or null resolves to `1 / L`.
    #[serde(default)]
    pub tau: Option<f64>,
    /// Dual step size; omitted or null resolves to `1 / L`.
    #[serde(default)]
    pub sigma: Option<f64>,
    #[serde(default = "default_theta")]
    pub theta: f64,
    pub n1: usize,
    pub n2: usize,
    pub eps: f64,
    #[serde(default = "default_patch_size")]
    pub patch_size: usize,
    #[serde(default = "default_n_alt")]
    pub n_alt: usize,
    #[serde(default = "default_learn_rel_tol")]
    pub learn_rel_tol: f64,
    pub lambda_tv: f64,
    pub tv_iters: usize,
    #[serde(default = "default_norm_iters")]
    pub norm_iters: usize,
}

fn default_theta() -> f64 {
    1.0
}

fn default_patch_size() -> usize {
    7
}

fn default_n_alt() -> usize {
    20
}

fn default_learn_rel_tol() -> f64 {
    1e-8
}

fn default_norm_iters() -> usize {
    100
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub variance: f64,
    pub seed: u64,
}

/// Display window for image export; values are mapped affinely from
/// `[min, max]` to the full gray range, never auto-scaled.
#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ExportConfig {
    pub window_min: f64,
    pub window_max: f64,
}

impl Default for ExportConfig {
    fn default() -> Self {
        Self {
            window_min: 0.0,
            window_max: 1.0,
        }
    }
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PathsConfig {
    pub matrix: PathBuf,
    pub projection: PathBuf,
    pub volume: PathBuf,
    pub reference: PathBuf,
    pub diagnostics: PathBuf,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let config: RunConfig = serde_json::from_str(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry()?;
        self.radial_grid()?;
        self.solver_params()?.validate()?;
        anyhow::ensure!(self.noise.variance >= 0.0, "noise variance must be nonnegative");
        anyhow::ensure!(
            self.export.window_max > self.export.window_min,
            "export window must be nonempty"
        );
        Ok(())
    }

    pub fn geometry(&self) -> Result<ConeBeamGeometry> {
        let g = &self.geometry;
        Ok(ConeBeamGeometry::new(
            g.source_x, g.detector_x, g.pitch_y, g.pitch_z, g.p, g.q,
        )?)
    }

    pub fn radial_grid(&self) -> Result<RadialGrid> {
        let g = &self.grid;
        Ok(RadialGrid::new(g.m, g.n, g.dr, g.dz)?)
    }

    pub fn phantom_spec(&self) -> PhantomSpec {
        match &self.phantom {
            None => default_phantom(),
            Some(spec) => PhantomSpec {
                pieces: spec
                    .pieces
                    .iter()
                    .map(|p| PhantomPiece {
                        r_inner: p.r_inner,
                        r_outer: p.r_outer,
                        z_min: p.z_min,
                        z_max: p.z_max,
                        value: p.value,
                    })
                    .collect(),
            },
        }
    }

    pub fn solver_params(&self) -> Result<SolverParams> {
        let s = &self.solver;
        Ok(SolverParams {
            lambda: s.lambda,
            gamma1: s.gamma1,
            tau: s.tau,
            sigma: s.sigma,
            theta: s.theta,
            n1: s.n1,
            n2: s.n2,
            eps: s.eps,
            patch_size: s.patch_size,
            n_alt: s.n_alt,
            learn_rel_tol: s.learn_rel_tol,
            lambda_tv: s.lambda_tv,
            tv_iters: s.tv_iters,
            norm_iters: s.norm_iters,
        })
    }
}
