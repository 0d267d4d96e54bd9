//! End-to-end pipeline through the `stpod` binary: three training FEM runs,
//! database construction, interpolation, error report and spectrum, plus
//! the byte-determinism and failure-mode contracts of the command line.

use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use stpod_cli::formats::{read_rom_database, read_snapshot};
use stpod_core::metrics::frob_error;

fn stpod() -> Command {
    Command::new(env!("CARGO_BIN_EXE_stpod"))
}

fn workdir() -> PathBuf {
    let dir = std::env::temp_dir().join(format!("stpod-pipeline-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn config_path(dir: &Path) -> PathBuf {
    let src = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/benchmark.cfg");
    let dst = dir.join("benchmark.cfg");
    std::fs::copy(src, &dst).unwrap();
    dst
}

fn run_ok(cmd: &mut Command) {
    let out = cmd.output().expect("spawn stpod");
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn full_pipeline_runs_and_reproduces_training_data() {
    let started = Instant::now();
    let dir = workdir();
    let cfg = config_path(&dir);

    for m in ["0.1", "0.5", "0.9"] {
        run_ok(stpod().args([
            "fem",
            "run",
            "--config",
            cfg.to_str().unwrap(),
            "--m",
            m,
            "--out",
            dir.join(format!("run_{m}")).to_str().unwrap(),
        ]));
    }

    let snaps: Vec<String> = ["0.1", "0.5", "0.9"]
        .iter()
        .map(|m| dir.join(format!("run_{m}/velocity.snap")).display().to_string())
        .collect();
    let db_dir = dir.join("db_v2");
    run_ok(stpod().args([
        "rom", "build", "--snapshots", &snaps[0], &snaps[1], &snaps[2], "--mode", "2", "--ref",
        "0.5", "--out",
        db_dir.to_str().unwrap(),
    ]));

    // interpolating at a training node reproduces the stored rank-p snapshot
    let at_train = dir.join("interp_0.1.snap");
    run_ok(stpod().args([
        "rom",
        "interp",
        "--db",
        db_dir.to_str().unwrap(),
        "--lambda",
        "0.1",
        "--out",
        at_train.to_str().unwrap(),
    ]));
    let db = read_rom_database(&db_dir).unwrap();
    let interp = read_snapshot(&at_train).unwrap();
    let sp = db.pod_snapshot(0);
    let err = (&interp.data - &sp).norm() / sp.norm();
    assert!(err <= 1e-9, "training-node reproduction error {err:.2e}");

    // at the reference node the reconstruction is exact to roundoff
    let at_ref = dir.join("interp_0.5.snap");
    run_ok(stpod().args([
        "rom",
        "interp",
        "--db",
        db_dir.to_str().unwrap(),
        "--lambda",
        "0.5",
        "--out",
        at_ref.to_str().unwrap(),
    ]));
    let interp_ref = read_snapshot(&at_ref).unwrap();
    let sp_ref = db.pod_snapshot(1);
    assert!((&interp_ref.data - &sp_ref).norm() <= 1e-12 * sp_ref.norm());

    // error report against the full-order training snapshot: the gap is the
    // rank-2 truncation error, well below a few percent
    let report = dir.join("report.txt");
    run_ok(stpod().args([
        "rom",
        "error",
        "--pred",
        at_train.to_str().unwrap(),
        "--truth",
        &snaps[0],
        "--report",
        report.to_str().unwrap(),
    ]));
    let report_text = std::fs::read_to_string(&report).unwrap();
    assert!(report_text.starts_with("stpod-error-report v1"));
    let frob_line = report_text
        .lines()
        .find(|l| l.starts_with("frobenius "))
        .unwrap();
    let fe: f64 = frob_line.split_whitespace().nth(1).unwrap().parse().unwrap();
    let truth = read_snapshot(Path::new(&snaps[0])).unwrap();
    assert!((fe - frob_error(&interp, &truth).unwrap()).abs() < 1e-12);
    assert!(fe < 0.05);

    // spectrum prints a cumulative curve ending at 1
    let out = stpod()
        .args(["rom", "spectrum", "--snapshot", &snaps[0]])
        .output()
        .unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    let last = stdout.trim_end().lines().last().unwrap();
    assert!(last.starts_with("7 "));
    let total: f64 = last.split_whitespace().nth(1).unwrap().parse().unwrap();
    assert!((total - 1.0).abs() < 1e-9);

    // the text format carries the same data bit-for-bit
    let text_out = dir.join("interp_0.1.txt.snap");
    run_ok(stpod().args([
        "rom",
        "interp",
        "--db",
        db_dir.to_str().unwrap(),
        "--lambda",
        "0.1",
        "--out",
        text_out.to_str().unwrap(),
        "--text",
    ]));
    let text_snap = read_snapshot(&text_out).unwrap();
    assert_eq!(text_snap.data, interp.data);

    // byte determinism: rebuilding and re-interpolating yields identical files
    let db_dir2 = dir.join("db_v2_again");
    run_ok(stpod().args([
        "rom", "build", "--snapshots", &snaps[0], &snaps[1], &snaps[2], "--mode", "2", "--ref",
        "0.5", "--out",
        db_dir2.to_str().unwrap(),
    ]));
    for entry in std::fs::read_dir(&db_dir).unwrap() {
        let name = entry.unwrap().file_name();
        if name == "manifest.txt" {
            continue; // provenance line records the invocation, not the data
        }
        let a = std::fs::read(db_dir.join(&name)).unwrap();
        let b = std::fs::read(db_dir2.join(&name)).unwrap();
        assert_eq!(a, b, "database file {name:?} differs between builds");
    }
    let again = dir.join("interp_0.1_again.snap");
    run_ok(stpod().args([
        "rom",
        "interp",
        "--db",
        db_dir2.to_str().unwrap(),
        "--lambda",
        "0.1",
        "--out",
        again.to_str().unwrap(),
    ]));
    assert_eq!(
        std::fs::read(&at_train).unwrap(),
        std::fs::read(&again).unwrap(),
        "interpolation outputs are not byte-identical"
    );

    assert!(
        started.elapsed().as_secs() < 300,
        "pipeline exceeded the five-minute budget: {:?}",
        started.elapsed()
    );
}

#[test]
fn cli_failures_name_the_offending_input() {
    let dir = workdir();
    let cfg = config_path(&dir);

    // missing config file
    let out = stpod()
        .args(["fem", "run", "--config", "no_such.cfg", "--out", "x"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("no_such.cfg"));

    // an oversized mode is refused with a diagnostic
    let run_dir = dir.join("run_small");
    run_ok(stpod().args([
        "fem",
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--m",
        "0.2",
        "--out",
        run_dir.to_str().unwrap(),
    ]));
    let run_dir2 = dir.join("run_small2");
    run_ok(stpod().args([
        "fem",
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--m",
        "0.6",
        "--out",
        run_dir2.to_str().unwrap(),
    ]));
    let out = stpod()
        .args([
            "rom",
            "build",
            "--snapshots",
            run_dir.join("velocity.snap").to_str().unwrap(),
            run_dir2.join("velocity.snap").to_str().unwrap(),
            "--mode",
            "9",
            "--out",
            dir.join("db_bad").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("mode 9"), "stderr was: {stderr}");

    // a reference parameter off the training grid is refused
    let out = stpod()
        .args([
            "rom",
            "build",
            "--snapshots",
            run_dir.join("velocity.snap").to_str().unwrap(),
            run_dir2.join("velocity.snap").to_str().unwrap(),
            "--mode",
            "2",
            "--ref",
            "0.4",
            "--out",
            dir.join("db_bad2").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("0.4"));

    // extrapolation warning goes to the diagnostics stream
    let db_dir = dir.join("db_two");
    run_ok(stpod().args([
        "rom",
        "build",
        "--snapshots",
        run_dir.join("velocity.snap").to_str().unwrap(),
        run_dir2.join("velocity.snap").to_str().unwrap(),
        "--mode",
        "2",
        "--out",
        db_dir.to_str().unwrap(),
    ]));
    let out = stpod()
        .args([
            "rom",
            "interp",
            "--db",
            db_dir.to_str().unwrap(),
            "--lambda",
            "0.9",
            "--out",
            dir.join("extrap.snap").to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("outside the training hull"));
}
