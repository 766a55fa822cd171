//! On-disk formats.
//!
//! Bulk arrays are flat little-endian binaries; every binary file gets a
//! JSON sidecar at `<file>.json` recording its shape and provenance so files
//! are self-describing. System matrices use the `AXSM` container:
//!
//! ```text
//! magic  "AXSM"            4 bytes
//! version                  u32 LE
//! n_rows, n_cols, nnz      u64 LE each
//! row offsets              (n_rows + 1) x u64 LE
//! column indices           nnz x u64 LE
//! values                   nnz x f64 LE
//! ```
//!
//! Sidecars carry no timestamps, so identical runs produce byte-identical
//! files.

use crate::config::{GeometryConfig, GridConfig};
use anyhow::{bail, Context, Result};
use axitomo_core::frame::FilterBank;
use axitomo_core::{Image, ProjectionData, RadialGrid, SystemMatrix, Volume};
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

pub const AXSM_MAGIC: [u8; 4] = *b"AXSM";
pub const AXSM_VERSION: u32 = 1;

fn tool_tag() -> String {
    format!("axitomo {}", env!("CARGO_PKG_VERSION"))
}

/// Sidecar path of a binary file: `<file>.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".json");
    path.with_file_name(name)
}

#[derive(Clone, Debug, Deserialize, Serialize)]
pub struct MatrixSidecar {
    pub kind: String,
    pub tool: String,
    pub geometry: GeometryConfig,
    pub grid: GridConfig,
    /// Whether the quadrant-plus-mirror build path produced the file.
    pub symmetry: bool,
    pub n_rows: u64,
    pub n_cols: u64,
    pub nnz: u64,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
pub struct VolumeSidecar {
    pub kind: String,
    pub tool: String,
    pub grid: GridConfig,
    #[serde(default)]
    pub method: Option<String>,
    #[serde(default)]
    pub source: Option<String>,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
pub struct ProjectionSidecar {
    pub kind: String,
    pub tool: String,
    pub geometry: GeometryConfig,
    pub noise_variance: f64,
    pub seed: u64,
    #[serde(default)]
    pub source: Option<String>,
}

fn write_sidecar<T: Serialize>(path: &Path, sidecar: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(sidecar)?;
    std::fs::write(sidecar_path(path), text + "\n")
        .with_context(|| format!("writing sidecar of {}", path.display()))?;
    Ok(())
}

fn read_sidecar<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let sidecar = sidecar_path(path);
    let text = std::fs::read_to_string(&sidecar)
        .with_context(|| format!("reading sidecar {}", sidecar.display()))?;
    serde_json::from_str(&text)
        .with_context(|| format!("parsing sidecar {}", sidecar.display()))
}

fn ensure_parent(path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)
                .with_context(|| format!("creating directory {}", parent.display()))?;
        }
    }
    Ok(())
}

pub fn write_system_matrix(
    path: &Path,
    matrix: &SystemMatrix,
    geometry: &GeometryConfig,
    grid: &GridConfig,
    symmetry: bool,
) -> Result<()> {
    ensure_parent(path)?;
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    w.write_all(&AXSM_MAGIC)?;
    w.write_all(&AXSM_VERSION.to_le_bytes())?;
    w.write_all(&(matrix.n_rows() as u64).to_le_bytes())?;
    w.write_all(&(matrix.n_cols() as u64).to_le_bytes())?;
    w.write_all(&(matrix.nnz() as u64).to_le_bytes())?;
    for &offset in matrix.row_offsets() {
        w.write_all(&(offset as u64).to_le_bytes())?;
    }
    for &col in matrix.col_indices() {
        w.write_all(&(col as u64).to_le_bytes())?;
    }
    for &value in matrix.values() {
        w.write_all(&value.to_le_bytes())?;
    }
    w.flush()?;
    write_sidecar(
        path,
        &MatrixSidecar {
            kind: "system-matrix".into(),
            tool: tool_tag(),
            geometry: geometry.clone(),
            grid: grid.clone(),
            symmetry,
            n_rows: matrix.n_rows() as u64,
            n_cols: matrix.n_cols() as u64,
            nnz: matrix.nnz() as u64,
        },
    )
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut buf = [0u8; 4];
    r.read_exact(&mut buf)?;
    Ok(u32::from_le_bytes(buf))
}

fn read_u64(r: &mut impl Read) -> Result<u64> {
    let mut buf = [0u8; 8];
    r.read_exact(&mut buf)?;
    Ok(u64::from_le_bytes(buf))
}

fn read_u64_vec(r: &mut impl Read, count: usize) -> Result<Vec<usize>> {
    let mut bytes = vec![0u8; count * 8];
    r.read_exact(&mut bytes)?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| u64::from_le_bytes(c.try_into().unwrap()) as usize)
        .collect())
}

fn read_f64_vec(r: &mut impl Read, count: usize) -> Result<Vec<f64>> {
    let mut bytes = vec![0u8; count * 8];
    r.read_exact(&mut bytes)?;
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

/// Read an `AXSM` file together with its sidecar.
pub fn read_system_matrix(path: &Path) -> Result<(SystemMatrix, MatrixSidecar)> {
    let sidecar: MatrixSidecar = read_sidecar(path)?;
    if sidecar.kind != "system-matrix" {
        bail!("{} is not a system matrix (kind {})", path.display(), sidecar.kind);
    }
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut r = BufReader::new(file);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if magic != AXSM_MAGIC {
        bail!("{}: bad magic", path.display());
    }
    let version = read_u32(&mut r)?;
    if version != AXSM_VERSION {
        bail!("{}: unsupported version {version}", path.display());
    }
    let n_rows = read_u64(&mut r)? as usize;
    let n_cols = read_u64(&mut r)? as usize;
    let nnz = read_u64(&mut r)? as usize;
    let offsets = read_u64_vec(&mut r, n_rows + 1)?;
    let cols = read_u64_vec(&mut r, nnz)?;
    let values = read_f64_vec(&mut r, nnz)?;
    let mut trailing = Vec::new();
    r.read_to_end(&mut trailing)?;
    if !trailing.is_empty() {
        bail!("{}: trailing bytes", path.display());
    }
    let matrix = SystemMatrix::from_raw(n_rows, n_cols, sidecar.grid.m, offsets, cols, values)?;
    Ok((matrix, sidecar))
}

fn write_f64_file(path: &Path, data: &[f64]) -> Result<()> {
    ensure_parent(path)?;
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    for &v in data {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

fn read_f64_file(path: &Path) -> Result<Vec<f64>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut r = BufReader::new(file);
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    if bytes.len() % 8 != 0 {
        bail!("{}: length is not a multiple of 8", path.display());
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect())
}

pub fn write_volume(
    path: &Path,
    volume: &Volume,
    method: Option<&str>,
    source: Option<&str>,
) -> Result<()> {
    write_f64_file(path, volume.data())?;
    write_sidecar(
        path,
        &VolumeSidecar {
            kind: "volume".into(),
            tool: tool_tag(),
            grid: GridConfig {
                m: volume.grid.m,
                n: volume.grid.n,
                dr: volume.grid.dr,
                dz: volume.grid.dz,
            },
            method: method.map(str::to_owned),
            source: source.map(str::to_owned),
        },
    )
}

pub fn read_volume(path: &Path) -> Result<(Volume, VolumeSidecar)> {
    let sidecar: VolumeSidecar = read_sidecar(path)?;
    if sidecar.kind != "volume" {
        bail!("{} is not a volume (kind {})", path.display(), sidecar.kind);
    }
    let grid = RadialGrid::new(sidecar.grid.m, sidecar.grid.n, sidecar.grid.dr, sidecar.grid.dz)?;
    let data = read_f64_file(path)?;
    if data.len() != grid.cell_count() {
        bail!(
            "{}: expected {} cells, found {}",
            path.display(),
            grid.cell_count(),
            data.len()
        );
    }
    let volume = Volume::new(grid, Image::from_vec(2 * grid.n, grid.m, data))
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    Ok((volume, sidecar))
}

pub fn write_projection(
    path: &Path,
    projection: &ProjectionData,
    geometry: &GeometryConfig,
    noise_variance: f64,
    seed: u64,
    source: Option<&str>,
) -> Result<()> {
    write_f64_file(path, projection.data())?;
    write_sidecar(
        path,
        &ProjectionSidecar {
            kind: "projection".into(),
            tool: tool_tag(),
            geometry: geometry.clone(),
            noise_variance,
            seed,
            source: source.map(str::to_owned),
        },
    )
}

pub fn read_projection(path: &Path) -> Result<(ProjectionData, ProjectionSidecar)> {
    let sidecar: ProjectionSidecar = read_sidecar(path)?;
    if sidecar.kind != "projection" {
        bail!("{} is not a projection (kind {})", path.display(), sidecar.kind);
    }
    let data = read_f64_file(path)?;
    let projection = ProjectionData::new(sidecar.geometry.p, sidecar.geometry.q, data)
        .map_err(|e| anyhow::anyhow!("{e}"))?;
    Ok((projection, sidecar))
}

#[derive(Clone, Debug, Deserialize, Serialize)]
pub struct BankFile {
    pub kind: String,
    pub tool: String,
    /// Patch side length.
    pub r: usize,
    /// Row-major taps of each of the `r^2` filters.
    pub filters: Vec<Vec<f64>>,
}

pub fn write_filter_bank(path: &Path, bank: &FilterBank) -> Result<()> {
    ensure_parent(path)?;
    let r2 = bank.channels();
    let file = BankFile {
        kind: "filter-bank".into(),
        tool: tool_tag(),
        r: bank.patch_side(),
        filters: (0..r2).map(|i| bank.filter(i).to_vec()).collect(),
    };
    std::fs::write(path, serde_json::to_string_pretty(&file)? + "\n")
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

pub fn read_filter_bank(path: &Path) -> Result<FilterBank> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let file: BankFile = serde_json::from_str(&text)?;
    if file.kind != "filter-bank" {
        bail!("{} is not a filter bank", path.display());
    }
    let r2 = file.r * file.r;
    if file.filters.len() != r2 || file.filters.iter().any(|f| f.len() != r2) {
        bail!("{}: filter shape mismatch", path.display());
    }
    let matrix: Vec<f64> = file.filters.into_iter().flatten().collect();
    Ok(FilterBank::from_matrix(file.r, matrix)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use axitomo_core::frame::spectral_initial_bank;
    use axitomo_core::projector::{build_quadrant, expand_by_symmetry};
    use axitomo_core::sim::{default_phantom, rasterize};
    use axitomo_core::ConeBeamGeometry;

    fn fixtures() -> (ConeBeamGeometry, RadialGrid, GeometryConfig, GridConfig) {
        let geom = ConeBeamGeometry::new(40.0, -50.0, 0.30625, 0.31375, 4, 4).unwrap();
        let grid = RadialGrid::new(8, 8, 0.125, 0.125).unwrap();
        let gc = GeometryConfig {
            source_x: 40.0,
            detector_x: -50.0,
            pitch_y: 0.30625,
            pitch_z: 0.31375,
            p: 4,
            q: 4,
        };
        let grc = GridConfig {
            m: 8,
            n: 8,
            dr: 0.125,
            dz: 0.125,
        };
        (geom, grid, gc, grc)
    }

    #[test]
    fn matrix_round_trip_is_lossless() {
        let (geom, grid, gc, grc) = fixtures();
        let a = expand_by_symmetry(&build_quadrant(&geom, &grid).unwrap(), &geom, &grid).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.axsm");
        write_system_matrix(&path, &a, &gc, &grc, true).unwrap();
        let (back, sidecar) = read_system_matrix(&path).unwrap();
        assert_eq!(a, back);
        assert!(sidecar.symmetry);
        assert_eq!(sidecar.nnz as usize, a.nnz());
    }

    #[test]
    fn volume_round_trip_is_lossless() {
        let (_, grid, _, _) = fixtures();
        let vol = rasterize(&default_phantom(), &grid).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("u.f64");
        write_volume(&path, &vol, Some("raster"), None).unwrap();
        let (back, sidecar) = read_volume(&path).unwrap();
        assert_eq!(vol, back);
        assert_eq!(sidecar.method.as_deref(), Some("raster"));
    }

    #[test]
    fn projection_round_trip_is_lossless() {
        let (geom, grid, gc, _) = fixtures();
        let a = expand_by_symmetry(&build_quadrant(&geom, &grid).unwrap(), &geom, &grid).unwrap();
        let vol = rasterize(&default_phantom(), &grid).unwrap();
        let proj = axitomo_core::sim::simulate(&a, &geom, &vol, 0.03, 99).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("g.f64");
        write_projection(&path, &proj, &gc, 0.03, 99, None).unwrap();
        let (back, sidecar) = read_projection(&path).unwrap();
        assert_eq!(proj, back);
        assert_eq!(sidecar.seed, 99);
    }

    #[test]
    fn bank_round_trip_preserves_constraint() {
        let bank = spectral_initial_bank(5);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bank.json");
        write_filter_bank(&path, &bank).unwrap();
        let back = read_filter_bank(&path).unwrap();
        assert_eq!(bank.matrix(), back.matrix());
    }

    #[test]
    fn corrupted_matrix_is_rejected() {
        let (geom, grid, gc, grc) = fixtures();
        let a = expand_by_symmetry(&build_quadrant(&geom, &grid).unwrap(), &geom, &grid).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.axsm");
        write_system_matrix(&path, &a, &gc, &grc, true).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 4);
        std::fs::write(&path, bytes).unwrap();
        assert!(read_system_matrix(&path).is_err());
    }
}
