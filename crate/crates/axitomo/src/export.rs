//! Figure-style exports: grayscale sections as 16-bit PGM and radial
//! profiles as CSV.

use crate::config::ExportConfig;
use anyhow::{bail, Context, Result};
use axitomo_core::Volume;
use std::io::Write;
use std::path::Path;

/// What to export from a volume.
#[derive(Clone, Debug, PartialEq)]
pub enum ExportKind {
    /// The full `(r, z)` map mirrored about `r = 0`.
    CentralSection,
    /// A circular slice at axial slab `j`, rasterized by rotating the
    /// radial profile.
    RowSection { slab: i64 },
    /// `(r, u(r, z))` pairs at the given height.
    Profile { z: f64 },
}

impl ExportKind {
    /// Parse the CLI selector: `central-section`, `row-section:<j>` or
    /// `profile:<z>`.
    pub fn parse(what: &str) -> Result<Self> {
        if what == "central-section" {
            return Ok(ExportKind::CentralSection);
        }
        if let Some(rest) = what.strip_prefix("row-section:") {
            let slab: i64 = rest.parse().context("row-section slab index")?;
            return Ok(ExportKind::RowSection { slab });
        }
        if let Some(rest) = what.strip_prefix("profile:") {
            let z: f64 = rest.parse().context("profile height")?;
            return Ok(ExportKind::Profile { z });
        }
        bail!("unknown export selector {what:?} (expected central-section, row-section:<j> or profile:<z>)")
    }
}

fn to_gray(value: f64, window: &ExportConfig) -> u16 {
    let t = (value - window.window_min) / (window.window_max - window.window_min);
    (t.clamp(0.0, 1.0) * 65535.0).round() as u16
}

/// Write a binary 16-bit PGM (`P5`, maxval 65535, big-endian samples).
pub fn write_pgm16(path: &Path, width: usize, height: usize, samples: &[u16]) -> Result<()> {
    assert_eq!(samples.len(), width * height);
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let file = std::fs::File::create(path)
        .with_context(|| format!("creating {}", path.display()))?;
    let mut w = std::io::BufWriter::new(file);
    write!(w, "P5\n{width} {height}\n65535\n")?;
    for &s in samples {
        w.write_all(&s.to_be_bytes())?;
    }
    w.flush()?;
    Ok(())
}

/// The `(r, z)` map mirrored about `r = 0`: `2m` columns, `2n` rows, z
/// decreasing downward.
pub fn central_section(volume: &Volume, window: &ExportConfig) -> (usize, usize, Vec<u16>) {
    let m = volume.grid.m;
    let n = volume.grid.n as i64;
    let width = 2 * m;
    let height = 2 * volume.grid.n;
    let mut samples = Vec::with_capacity(width * height);
    for row in 0..height {
        let slab = n - 1 - row as i64;
        for col in 0..width {
            let annulus = if col < m { m - col } else { col - m + 1 };
            samples.push(to_gray(volume.value_at(annulus, slab), window));
        }
    }
    (width, height, samples)
}

/// A `2m x 2m` circular slice at axial slab `j`: each pixel takes the value
/// of the annulus containing its radius.
pub fn row_section(
    volume: &Volume,
    slab: i64,
    window: &ExportConfig,
) -> Result<(usize, usize, Vec<u16>)> {
    let grid = &volume.grid;
    if !grid.slab_in_range(slab) {
        bail!("slab {slab} out of range -{}..{}", grid.n, grid.n);
    }
    let m = grid.m;
    let side = 2 * m;
    let mut samples = Vec::with_capacity(side * side);
    for py in 0..side {
        let yc = (py as f64 - m as f64 + 0.5) * grid.dr;
        for px in 0..side {
            let xc = (px as f64 - m as f64 + 0.5) * grid.dr;
            let rho = xc.hypot(yc);
            let annulus = (rho / grid.dr).floor() as usize + 1;
            let value = if annulus <= m {
                volume.value_at(annulus, slab)
            } else {
                0.0
            };
            samples.push(to_gray(value, window));
        }
    }
    Ok((side, side, samples))
}

/// CSV of `(r, u(r, z))` down the radius at the slab containing height `z`.
pub fn profile_csv(volume: &Volume, z: f64) -> Result<String> {
    let grid = &volume.grid;
    let slab = grid.slab_of(z);
    if !grid.slab_in_range(slab) {
        bail!(
            "height {z} outside the grid (|z| < {})",
            grid.half_height()
        );
    }
    let mut out = String::from("r,value\n");
    for annulus in 1..=grid.m {
        let r = (annulus as f64 - 0.5) * grid.dr;
        out.push_str(&format!("{r},{}\n", volume.value_at(annulus, slab)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use axitomo_core::sim::{default_phantom, rasterize};
    use axitomo_core::{Image, RadialGrid};

    fn window() -> ExportConfig {
        ExportConfig {
            window_min: 0.0,
            window_max: 1.0,
        }
    }

    #[test]
    fn parse_selectors() {
        assert_eq!(ExportKind::parse("central-section").unwrap(), ExportKind::CentralSection);
        assert_eq!(
            ExportKind::parse("row-section:-3").unwrap(),
            ExportKind::RowSection { slab: -3 }
        );
        assert_eq!(
            ExportKind::parse("profile:0.25").unwrap(),
            ExportKind::Profile { z: 0.25 }
        );
        assert!(ExportKind::parse("sideways").is_err());
    }

    #[test]
    fn constant_volume_maps_to_constant_gray() {
        let grid = RadialGrid::new(4, 4, 0.25, 0.25).unwrap();
        let vol = Volume::new(grid, Image::from_fn(8, 4, |_, _| 0.5)).unwrap();
        let (w, h, samples) = central_section(&vol, &window());
        assert_eq!((w, h), (8, 8));
        assert!(samples.iter().all(|&s| s == 32768));
    }

    #[test]
    fn profile_matches_rasterized_phantom() {
        let grid = RadialGrid::new(16, 16, 1.0 / 16.0, 1.0 / 16.0).unwrap();
        let vol = rasterize(&default_phantom(), &grid).unwrap();
        let csv = profile_csv(&vol, 0.0).unwrap();
        for (k, line) in csv.lines().skip(1).enumerate() {
            let mut parts = line.split(',');
            let r: f64 = parts.next().unwrap().parse().unwrap();
            let v: f64 = parts.next().unwrap().parse().unwrap();
            assert!((r - (k as f64 + 0.5) / 16.0).abs() < 1e-12);
            let expect = if r < 0.3 {
                0.5
            } else if r >= 0.6 {
                1.0
            } else {
                0.0
            };
            assert_eq!(v, expect, "at r = {r}");
        }
    }

    #[test]
    fn profile_out_of_range_errors() {
        let grid = RadialGrid::new(4, 4, 0.25, 0.25).unwrap();
        let vol = Volume::zeros(grid);
        assert!(profile_csv(&vol, 2.0).is_err());
        assert!(profile_csv(&vol, 1.0).is_err()); // z = Z0 is already outside
        assert!(profile_csv(&vol, 0.9999).is_ok());
        assert!(profile_csv(&vol, -1.0).is_ok()); // bottom boundary is inside
        assert!(profile_csv(&vol, -1.0001).is_err());
    }

    #[test]
    fn row_section_pixels_read_their_annulus() {
        let grid = RadialGrid::new(8, 4, 0.125, 0.25).unwrap();
        let vol = Volume::new(
            grid,
            Image::from_fn(8, 8, |_, c| c as f64 / 8.0),
        )
        .unwrap();
        let win = window();
        let (side, _, samples) = row_section(&vol, 0, &win).unwrap();
        // Independent check pixel by pixel.
        for py in 0..side {
            for px in 0..side {
                let xc = (px as f64 - 8.0 + 0.5) * 0.125;
                let yc = (py as f64 - 8.0 + 0.5) * 0.125;
                let rho = (xc * xc + yc * yc).sqrt();
                let annulus = (rho / 0.125).floor() as usize + 1;
                let expect = if annulus <= 8 {
                    to_gray(vol.value_at(annulus, 0), &win)
                } else {
                    to_gray(0.0, &win)
                };
                assert_eq!(samples[py * side + px], expect);
            }
        }
        assert!(row_section(&vol, 4, &win).is_err());
    }
}
