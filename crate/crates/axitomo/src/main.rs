use anyhow::Result;
use axitomo::config::RunConfig;
use axitomo::parallel::thread_count;
use axitomo::pipeline::{
    cmd_build_matrix, cmd_evaluate, cmd_export, cmd_phantom, cmd_reconstruct, cmd_simulate, Method,
};
use clap::{Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::process::ExitCode;

/// Reconstruction of axisymmetric objects from a single cone-beam
/// radiograph: matrix assembly, simulation, reconstruction and evaluation.
#[derive(Parser)]
#[command(name = "axitomo", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MethodArg {
    /// Adaptive tight-frame regularization.
    Atf,
    /// Total-variation baseline.
    Tv,
}

#[derive(Subcommand)]
enum Command {
    /// Assemble the sparse system matrix and write it to disk.
    BuildMatrix {
        #[arg(long)]
        config: PathBuf,
        /// Trace all detector rays directly instead of mirroring one quadrant.
        #[arg(long)]
        no_symmetry: bool,
        /// Output path (default: paths.matrix from the config).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rasterize the configured phantom into the reference volume file.
    Phantom {
        #[arg(long)]
        config: PathBuf,
        /// Output path (default: paths.reference).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Forward-project the phantom and add the configured noise.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// System matrix file (default: paths.matrix).
        #[arg(long)]
        matrix: Option<PathBuf>,
        /// Output path (default: paths.projection).
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Reconstruct a volume from a projection file.
    Reconstruct {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_enum)]
        method: MethodArg,
        /// System matrix file (default: paths.matrix).
        #[arg(long)]
        matrix: Option<PathBuf>,
        /// Projection file (default: paths.projection).
        #[arg(long)]
        projection: Option<PathBuf>,
        /// Output volume path (default: paths.volume).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Diagnostics CSV path (default: paths.diagnostics).
        #[arg(long)]
        diagnostics: Option<PathBuf>,
    },
    /// RMSE of a volume against a reference volume.
    Evaluate {
        #[arg(long)]
        volume: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        /// JSON report path (default: <volume>.rmse.json).
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Export a section image (16-bit PGM) or a radial profile (CSV).
    Export {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        volume: PathBuf,
        /// central-section, row-section:<j> or profile:<z>.
        #[arg(long)]
        what: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::BuildMatrix {
            config,
            no_symmetry,
            out,
        } => {
            let cfg = RunConfig::load(&config)?;
            let report = cmd_build_matrix(&cfg, !no_symmetry, thread_count(), out.as_deref())?;
            println!(
                "matrix {} rows x {} cols, nnz {}, symmetry {}, built in {:.3} s -> {}",
                report.rows,
                report.cols,
                report.nnz,
                report.symmetry,
                report.elapsed_s,
                report.path.display()
            );
        }
        Command::Phantom { config, out } => {
            let cfg = RunConfig::load(&config)?;
            let path = cmd_phantom(&cfg, out.as_deref())?;
            println!("phantom volume -> {}", path.display());
        }
        Command::Simulate {
            config,
            matrix,
            out,
        } => {
            let cfg = RunConfig::load(&config)?;
            let path = cmd_simulate(&cfg, matrix.as_deref(), out.as_deref())?;
            println!("projection -> {}", path.display());
        }
        Command::Reconstruct {
            config,
            method,
            matrix,
            projection,
            out,
            diagnostics,
        } => {
            let cfg = RunConfig::load(&config)?;
            let method = match method {
                MethodArg::Atf => Method::Atf,
                MethodArg::Tv => Method::Tv,
            };
            let report = cmd_reconstruct(
                &cfg,
                method,
                matrix.as_deref(),
                projection.as_deref(),
                out.as_deref(),
                diagnostics.as_deref(),
            )?;
            println!(
                "{} reconstruction ({} logged iterations) -> {} (diagnostics {})",
                method.name(),
                report.outer_iterations,
                report.volume_path.display(),
                report.diagnostics_path.display()
            );
        }
        Command::Evaluate {
            volume,
            reference,
            report,
        } => {
            let result = cmd_evaluate(&volume, &reference, report.as_deref())?;
            println!("rmse = {}", result.rmse);
        }
        Command::Export {
            config,
            volume,
            what,
            out,
        } => {
            let cfg = RunConfig::load(&config)?;
            cmd_export(&cfg, &volume, &what, &out)?;
            println!("export {} -> {}", what, out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            // One machine-readable line on stderr.
            let line = serde_json::json!({ "error": format!("{err:#}") });
            eprintln!("{line}");
            ExitCode::FAILURE
        }
    }
}
