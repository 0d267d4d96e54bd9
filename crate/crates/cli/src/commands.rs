//! Implementations of the CLI subcommands, separated from argument parsing
//! so integration tests can drive them directly.

use std::path::Path;

use anyhow::{bail, Context, Result};

use stpod_core::interp::{st_interpolate, RomDatabase};
use stpod_core::metrics::{energy_spectrum, ErrorReport};
use stpod_core::rvpfem::run_forging;
use stpod_core::Determinism;

use crate::config::parse_config;
use crate::formats::{
    read_rom_database, read_snapshot, write_error_report, write_rom_database, write_run_log,
    write_snapshot, SnapshotFormat,
};
use crate::log;

/// `fem run`: one forging simulation, three output files.
pub fn fem_run(config_path: &Path, friction_m: Option<f64>, out_dir: &Path) -> Result<()> {
    let mut config = parse_config(config_path)?;
    if let Some(m) = friction_m {
        config.material.friction_m = m;
    }
    log::info(format!(
        "fem run: {}x{} elements, m = {}, {} steps of {} s",
        config.mesh_nx, config.mesh_ny, config.material.friction_m, config.steps, config.dt
    ));
    let run = run_forging(&config)
        .with_context(|| format!("forging run for config {}", config_path.display()))?;
    std::fs::create_dir_all(out_dir)
        .with_context(|| format!("creating output directory {}", out_dir.display()))?;
    write_snapshot(
        &out_dir.join("velocity.snap"),
        &run.velocity,
        SnapshotFormat::Binary,
    )?;
    write_snapshot(
        &out_dir.join("temperature.snap"),
        &run.temperature,
        SnapshotFormat::Binary,
    )?;
    write_run_log(
        &out_dir.join("run_log.txt"),
        config.material.friction_m,
        &run.logs,
    )?;
    for step in &run.logs {
        log::debug(format!(
            "  step {}: {} iterations, residual {:.3e}",
            step.step, step.iterations, step.residual_norm
        ));
    }
    log::info(format!(
        "fem run: wrote velocity.snap, temperature.snap, run_log.txt to {}",
        out_dir.display()
    ));
    Ok(())
}

/// `rom build`: oriented SVD + mode-p truncation of training snapshots.
pub fn rom_build(
    snapshot_paths: &[std::path::PathBuf],
    mode: usize,
    ref_lambda: Option<f64>,
    out_dir: &Path,
) -> Result<()> {
    if snapshot_paths.is_empty() {
        bail!("rom build needs at least two --snapshots files");
    }
    let mut snaps = Vec::with_capacity(snapshot_paths.len());
    for path in snapshot_paths {
        snaps.push(
            read_snapshot(path).with_context(|| format!("reading snapshot {}", path.display()))?,
        );
    }
    let db = RomDatabase::build(&snaps, mode, ref_lambda)
        .context("building the ROM database from the training snapshots")?;
    let provenance = format!(
        "stpod rom build --mode {mode} from {}",
        snapshot_paths
            .iter()
            .map(|p| p.display().to_string())
            .collect::<Vec<_>>()
            .join(" ")
    );
    write_rom_database(out_dir, &db, &provenance)?;
    log::info(format!(
        "rom build: {} nodes, mode {}, reference λ = {} -> {}",
        db.params().len(),
        db.mode(),
        db.params()[db.ref_index()],
        out_dir.display()
    ));
    Ok(())
}

/// `rom interp`: space-time reconstruction at one parameter value.
pub fn rom_interp(db_dir: &Path, lambda: f64, out_path: &Path, text: bool) -> Result<()> {
    let db = read_rom_database(db_dir)
        .with_context(|| format!("reading ROM database {}", db_dir.display()))?;
    let out = st_interpolate(&db, lambda)
        .with_context(|| format!("interpolating at λ = {lambda}"))?;
    if out.extrapolated {
        log::warn(format!(
            "λ = {lambda} lies outside the training hull [{}, {}]; extrapolating",
            db.params()[0],
            db.params()[db.params().len() - 1]
        ));
    }
    if out.determinism == Determinism::NonGeneric {
        log::warn(
            "a non-generic intermediate forced a raw SVD; the result is valid but not \
             reproducible across SVD backends",
        );
    }
    let format = if text {
        SnapshotFormat::Text
    } else {
        SnapshotFormat::Binary
    };
    write_snapshot(out_path, &out.snapshot, format)?;
    log::info(format!(
        "rom interp: {} snapshot at λ = {lambda} -> {}",
        db.field_kind(),
        out_path.display()
    ));
    Ok(())
}

/// `rom error`: compare a prediction against a reference snapshot.
pub fn rom_error(pred_path: &Path, truth_path: &Path, report_path: &Path) -> Result<()> {
    let pred = read_snapshot(pred_path)
        .with_context(|| format!("reading prediction {}", pred_path.display()))?;
    let truth = read_snapshot(truth_path)
        .with_context(|| format!("reading reference {}", truth_path.display()))?;
    if pred.kind != truth.kind {
        log::warn(format!(
            "comparing a {} prediction against a {} reference",
            pred.kind, truth.kind
        ));
    }
    let report = ErrorReport::compare(&pred, &truth).context("computing error norms")?;
    write_error_report(report_path, &report, pred_path, truth_path)?;
    log::info(format!(
        "rom error: relative Frobenius error {:.6e} -> {}",
        report.frobenius,
        report_path.display()
    ));
    Ok(())
}

/// `rom spectrum`: cumulative energy fractions of a snapshot matrix.
pub fn rom_spectrum(snapshot_path: &Path) -> Result<()> {
    let snap = read_snapshot(snapshot_path)
        .with_context(|| format!("reading snapshot {}", snapshot_path.display()))?;
    let curve = energy_spectrum(&snap).context("computing the energy spectrum")?;
    println!("mode cumulative_energy");
    for (i, e) in curve.iter().enumerate() {
        println!("{} {e:.12}", i + 1);
    }
    Ok(())
}
