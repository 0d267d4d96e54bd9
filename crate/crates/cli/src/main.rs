use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use stpod_cli::commands;

/// Parametric reduced-order models from forging snapshots: build POD
/// databases with the oriented SVD, interpolate them on compact Stiefel
/// manifolds, and generate benchmark data with the built-in
/// rigid-viscoplastic FEM solver.
#[derive(Parser)]
#[command(name = "stpod", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// High-fidelity FEM runs.
    #[command(subcommand)]
    Fem(FemCommand),
    /// ROM database construction, interpolation and diagnostics.
    #[command(subcommand)]
    Rom(RomCommand),
}

#[derive(Subcommand)]
enum FemCommand {
    /// Run the forging solver and write snapshot matrices.
    Run {
        /// Configuration file (key-value text).
        #[arg(long)]
        config: PathBuf,
        /// Shear friction factor, overriding the config value.
        #[arg(long)]
        m: Option<f64>,
        /// Output directory for velocity.snap, temperature.snap, run_log.txt.
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Subcommand)]
enum RomCommand {
    /// Oriented SVD + truncation of training snapshots into a database.
    Build {
        /// Training snapshot files (any order; sorted by parameter).
        #[arg(long, num_args = 1.., required = true)]
        snapshots: Vec<PathBuf>,
        /// POD mode p.
        #[arg(long)]
        mode: usize,
        /// Reference parameter value; defaults to the node nearest the median.
        #[arg(long = "ref")]
        ref_lambda: Option<f64>,
        /// Output database directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Reconstruct a snapshot matrix at an unseen parameter value.
    Interp {
        /// ROM database directory from `rom build`.
        #[arg(long)]
        db: PathBuf,
        /// Target parameter value.
        #[arg(long)]
        lambda: f64,
        /// Output snapshot file.
        #[arg(long)]
        out: PathBuf,
        /// Write the text format instead of binary.
        #[arg(long)]
        text: bool,
    },
    /// Error norms of a prediction against a reference snapshot.
    Error {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// Report file to write.
        #[arg(long)]
        report: PathBuf,
    },
    /// Print the cumulative POD energy fractions of a snapshot.
    Spectrum {
        #[arg(long)]
        snapshot: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Fem(FemCommand::Run { config, m, out }) => commands::fem_run(&config, m, &out),
        Command::Rom(cmd) => match cmd {
            RomCommand::Build {
                snapshots,
                mode,
                ref_lambda,
                out,
            } => commands::rom_build(&snapshots, mode, ref_lambda, &out),
            RomCommand::Interp {
                db,
                lambda,
                out,
                text,
            } => commands::rom_interp(&db, lambda, &out, text),
            RomCommand::Error {
                pred,
                truth,
                report,
            } => commands::rom_error(&pred, &truth, &report),
            RomCommand::Spectrum { snapshot } => commands::rom_spectrum(&snapshot),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
