//! Acceptance suite: one test per contract item, each printing a PASS/FAIL
//! line (visible with `cargo test --test acceptance -- --nocapture`).
//!
//! The five high-fidelity forging runs are shared across tests through a
//! `OnceLock`, so the whole suite performs each simulation exactly once.

use std::path::Path;
use std::sync::OnceLock;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use stpod_cli::config::parse_config_str;
use stpod_core::interp::{st_interpolate, RomDatabase, StiefelCurve, TrainingSet};
use stpod_core::manifold::{
    exp_map, log_map, normal_coords_matrix, same_subspace, StiefelPoint, TangentLift,
};
use stpod_core::metrics::{
    col_l2_errors, energy_spectrum, frob_error, integrate_positions, position_error,
};
use stpod_core::osvd::{is_generic, oriented_sign, oriented_svd, thin_svd, TOL_PROJ_FACTOR};
use stpod_core::rvpfem::{run_forging, ForgingConfig, ForgingRun};
use stpod_core::SnapshotMatrix;

const BENCH_CONFIG: &str = include_str!("../../../configs/benchmark.cfg");
const TRAINING: [f64; 3] = [0.1, 0.5, 0.9];

fn bench_config(friction_m: f64) -> ForgingConfig {
    let mut cfg = parse_config_str(Path::new("configs/benchmark.cfg"), BENCH_CONFIG)
        .expect("benchmark config parses");
    // the published benchmark constants, pinned
    assert_eq!((cfg.mesh_nx, cfg.mesh_ny, cfg.steps), (10, 10, 7));
    assert_eq!(cfg.material.flow_coeff, 1000.0);
    assert_eq!(cfg.material.flow_exp, 0.1);
    assert_eq!(cfg.material.limit_rate, 0.01);
    assert_eq!(cfg.material.penalty, 1e5);
    assert_eq!((cfg.tol_velocity, cfg.tol_residual), (1e-6, 1e-6));
    cfg.material.friction_m = friction_m;
    cfg
}

fn runs() -> &'static Vec<(f64, ForgingRun)> {
    static RUNS: OnceLock<Vec<(f64, ForgingRun)>> = OnceLock::new();
    RUNS.get_or_init(|| {
        [0.1, 0.3, 0.5, 0.8, 0.9]
            .iter()
            .map(|&m| (m, run_forging(&bench_config(m)).expect("benchmark run")))
            .collect()
    })
}

fn run_at(m: f64) -> &'static ForgingRun {
    &runs().iter().find(|(x, _)| *x == m).unwrap().1
}

fn training_snapshots(velocity: bool) -> Vec<SnapshotMatrix> {
    TRAINING
        .iter()
        .map(|&m| {
            let run = run_at(m);
            if velocity {
                run.velocity.clone()
            } else {
                run.temperature.clone()
            }
        })
        .collect()
}

fn verdict(criterion: usize, description: &str, ok: bool, detail: &str) {
    println!(
        "ACCEPTANCE {criterion}: {} - {description}{}{}",
        if ok { "PASS" } else { "FAIL" },
        if detail.is_empty() { "" } else { ": " },
        detail
    );
    assert!(ok, "acceptance criterion {criterion} failed: {detail}");
}

/// The worked curve example: frames in St(2,5) at λ = 15, 22, 27.
fn worked_example_frames() -> (Vec<f64>, Vec<StiefelPoint>) {
    let s3 = 3f64.sqrt() / 3.0;
    let s6 = 6f64.sqrt();
    let y1 = StiefelPoint::new(DMatrix::from_row_slice(
        5,
        2,
        &[1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    ))
    .unwrap();
    let y2 = StiefelPoint::new(DMatrix::from_row_slice(
        5,
        2,
        &[s3, s3, 0.0, s3, s3, 0.0, -s3, s3, 0.0, 0.0],
    ))
    .unwrap();
    let y3 = StiefelPoint::new(DMatrix::from_row_slice(
        5,
        2,
        &[
            s3,
            -s6 / 6.0,
            0.0,
            s6 / 4.0,
            s3,
            s6 / 12.0,
            0.0,
            s6 / 4.0,
            s3,
            s6 / 12.0,
        ],
    ))
    .unwrap();
    (vec![15.0, 22.0, 27.0], vec![y1, y2, y3])
}

#[test]
fn acceptance_1_worked_stiefel_example() {
    let (params, frames) = worked_example_frames();
    let train = TrainingSet::new(params, frames.clone(), 0).unwrap();

    // displayed intermediate matrices, integer entries
    let m2 = normal_coords_matrix(&frames[0], &frames[1]).unwrap();
    let m3 = normal_coords_matrix(&frames[0], &frames[2]).unwrap();
    let want2 =
        DMatrix::from_row_slice(5, 2, &[0.0, 0.0, 0.0, 0.0, 1.0, -1.0, -1.0, 2.0, 0.0, 0.0]);
    let want3 =
        DMatrix::from_row_slice(5, 2, &[0.0, 0.0, 0.0, 0.0, 1.0, 1.0, 0.0, 1.0, 1.0, 1.0]);
    let intermediates_ok = (m2 - want2).amax() <= 1e-12 && (m3 - want3).amax() <= 1e-12;

    // printed five-digit results at λ₂ and λ₃, ±1 unit in the last digit
    let printed2 = DMatrix::from_row_slice(
        5,
        2,
        &[
            0.77460, 0.25820, 0.25820, 0.51640, 0.51640, -0.25820, -0.25820, 0.77460, 0.0, 0.0,
        ],
    );
    let printed3 = DMatrix::from_row_slice(
        5,
        2,
        &[
            0.67860, -0.19876, -0.19876, 0.57922, 0.47984, 0.38046, -0.19876, 0.57922, 0.47984,
            0.38046,
        ],
    );
    let curve = StiefelCurve::fit(&train).unwrap();
    let at2 = curve.at(22.0).unwrap().0;
    let at3 = curve.at(27.0).unwrap().0;
    let err2 = (at2.matrix() - &printed2).amax();
    let err3 = (at3.matrix() - &printed3).amax();

    // timing, after the cold-start evaluation above
    let started = Instant::now();
    let curve = StiefelCurve::fit(&train).unwrap();
    let _ = curve.at(22.0).unwrap();
    let _ = curve.at(27.0).unwrap();
    let elapsed = started.elapsed();

    verdict(
        1,
        "worked curve example on St(2,5)",
        intermediates_ok && err2 <= 1e-5 && err3 <= 1e-5 && elapsed.as_micros() < 1000,
        &format!(
            "intermediates exact: {intermediates_ok}, |Y(λ₂)-printed| = {err2:.2e}, \
             |Y(λ₃)-printed| = {err3:.2e}, runtime {elapsed:?}"
        ),
    );
}

/// Independent factorization: eigen-decomposition of SᵀS plus the same
/// orientation rule.
fn eigen_oracle(s: &DMatrix<f64>) -> (DMatrix<f64>, DVector<f64>, DMatrix<f64>) {
    let gram = s.transpose() * s;
    let eig = nalgebra::SymmetricEigen::new(gram);
    let m = s.ncols();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].partial_cmp(&eig.eigenvalues[a]).unwrap());
    let s1 = eig.eigenvalues[order[0]].max(0.0).sqrt();
    let mut sig = Vec::new();
    let mut psi_cols = Vec::new();
    for &idx in &order {
        let val = eig.eigenvalues[idx].max(0.0).sqrt();
        if val > 1e-12 * s1 {
            sig.push(val);
            psi_cols.push(eig.eigenvectors.column(idx).into_owned());
        }
    }
    let r = sig.len();
    let mut phi = DMatrix::zeros(s.nrows(), r);
    let mut psi = DMatrix::zeros(m, r);
    for i in 0..r {
        psi.set_column(i, &psi_cols[i]);
        phi.set_column(i, &(s * &psi_cols[i] / sig[i]));
    }
    let tol_proj = TOL_PROJ_FACTOR * s.norm();
    for i in 0..r {
        let col = phi.column(i).into_owned();
        if oriented_sign(s, &col, tol_proj).unwrap() < 0.0 {
            phi.column_mut(i).neg_mut();
            psi.column_mut(i).neg_mut();
        }
    }
    (phi, DVector::from_vec(sig), psi)
}

#[test]
fn acceptance_2_oriented_svd_determinism() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut max_dev = 0.0f64;
    let mut checked = 0usize;
    while checked < 1000 {
        let m = rng.random_range(1..=10usize);
        let n = rng.random_range(m.max(2)..=50usize);
        let s = DMatrix::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0));
        // random generic draws; a margin on the gap keeps the two
        // factorization paths comparable at the 1e-9 level
        if !is_generic(&s, 1e-4) {
            continue;
        }
        checked += 1;
        let f = oriented_svd(&s).unwrap();
        let (phi_o, sig_o, psi_o) = eigen_oracle(&s);
        max_dev = max_dev
            .max((&f.phi - &phi_o).amax())
            .max((&f.sigma - &sig_o).amax())
            .max((&f.psi - &psi_o).amax());

        // invariance to sign patterns injected into the backend factors
        if checked % 10 == 0 {
            let mut u = f.phi.clone();
            let mut v = f.psi.clone();
            for i in 0..f.rank {
                if rng.random_bool(0.5) {
                    u.column_mut(i).neg_mut();
                    v.column_mut(i).neg_mut();
                }
            }
            let tol_proj = TOL_PROJ_FACTOR * s.norm();
            for i in 0..f.rank {
                let col = u.column(i).into_owned();
                if oriented_sign(&s, &col, tol_proj).unwrap() < 0.0 {
                    u.column_mut(i).neg_mut();
                    v.column_mut(i).neg_mut();
                }
            }
            assert_eq!(u, f.phi, "sign injection changed the oriented factors");
            assert_eq!(v, f.psi);
        }
    }
    verdict(
        2,
        "oriented SVD equals the eigen-decomposition oracle on 1000 matrices",
        max_dev < 1e-9,
        &format!("max factor deviation {max_dev:.2e}"),
    );
}

#[test]
fn acceptance_3_interpolation_reproduction() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (n, m, p) = (12usize, 5usize, 2usize);
    let mut worst = 0.0f64;
    let mut sets = 0usize;
    while sets < 200 {
        let snaps: Vec<SnapshotMatrix> = [0.1, 0.5, 0.9]
            .iter()
            .map(|&lam| {
                SnapshotMatrix::new(
                    DMatrix::from_fn(n, m, |_, _| rng.random_range(-1.0..1.0)),
                    lam,
                    stpod_core::FieldKind::Velocity,
                    stpod_core::SnapshotMeta {
                        units: "mm/s".to_string(),
                        dt: 0.5,
                    },
                )
            })
            .collect();
        let db = match RomDatabase::build(&snaps, p, Some(0.5)) {
            Ok(db) => db,
            Err(_) => continue,
        };
        // keep the training subspaces away from each other's cut loci
        let conditioned = (0..3).all(|k| {
            let a = db.factors()[db.ref_index()].phi_p.matrix().transpose()
                * db.factors()[k].phi_p.matrix();
            let b = db.factors()[db.ref_index()].psi_p.matrix().transpose()
                * db.factors()[k].psi_p.matrix();
            a.svd(false, false).singular_values.min() > 0.05
                && b.svd(false, false).singular_values.min() > 0.05
        });
        if !conditioned {
            continue;
        }
        sets += 1;
        for (k, &lam) in db.params().iter().enumerate() {
            let out = st_interpolate(&db, lam).unwrap();
            let sp = db.pod_snapshot(k);
            worst = worst.max((&out.snapshot.data - &sp).norm() / sp.norm());
        }
    }
    verdict(
        3,
        "space-time interpolation reproduces every training node (200 sets)",
        worst <= 1e-9,
        &format!("worst relative Frobenius error {worst:.2e}"),
    );
}

#[test]
fn acceptance_4_exp_log_inversion() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut pairs = 0usize;
    let mut worst_proj = 0.0f64;
    let mut worst_lift = 0.0f64;
    while pairs < 500 {
        let n = rng.random_range(6..=20usize);
        let p = rng.random_range(1..=4usize.min(n - 2));
        let sample = |rng: &mut ChaCha8Rng| {
            let g = DMatrix::from_fn(n, p, |_, _| rng.random_range(-1.0..1.0));
            StiefelPoint::new(g.qr().q().columns(0, p).into_owned()).unwrap()
        };
        let base = sample(&mut rng);
        let target = sample(&mut rng);
        let a = base.matrix().transpose() * target.matrix();
        let sv = a.svd(false, false).singular_values;
        let cond = sv.max() / sv.min();
        if !cond.is_finite() || cond >= 1e3 {
            continue;
        }
        pairs += 1;

        // exp ∘ log lands on the target subspace
        let (lift, _) = log_map(&base, &target).unwrap();
        let (back, _) = exp_map(&base, &lift).unwrap();
        worst_proj = worst_proj.max((back.projector() - target.projector()).amax());

        // log ∘ exp recovers a lift with distinct σ in (0, π/2 − 0.1)
        let g = DMatrix::from_fn(n, p, |_, _| rng.random_range(-1.0..1.0));
        let horiz = &g - base.matrix() * (base.matrix().transpose() * &g);
        let f = thin_svd(&horiz);
        let r = f.rank();
        let hi = std::f64::consts::FRAC_PI_2 - 0.1;
        let sig = DVector::from_fn(r, |i, _| hi * (r - i) as f64 / (r as f64 + 0.5));
        let z = &f.u * DMatrix::from_diagonal(&sig) * f.v.transpose();
        let lift = TangentLift::new(z.clone(), base.clone()).unwrap();
        let (point, _) = exp_map(&base, &lift).unwrap();
        let (rec, _) = log_map(&base, &point).unwrap();
        worst_lift = worst_lift.max((rec.matrix() - &z).amax());
    }
    verdict(
        4,
        "exp/log inversion on 500 random pairs",
        worst_proj < 1e-8 && worst_lift <= 1e-8,
        &format!("worst projector error {worst_proj:.2e}, worst lift error {worst_lift:.2e}"),
    );
}

#[test]
fn acceptance_5_benchmark_bands_at_0_3() {
    let velocity = training_snapshots(true);
    let temperature = training_snapshots(false);
    let truth = run_at(0.3);

    let mut detail = String::new();
    let mut ok = true;

    for p in 2..=7usize {
        let db = RomDatabase::build(&velocity, p, Some(0.5)).unwrap();
        let out = st_interpolate(&db, 0.3).unwrap();
        let cols = col_l2_errors(&out.snapshot, &truth.velocity).unwrap();
        let lo = cols.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = cols.iter().cloned().fold(0.0f64, f64::max);
        if !(lo >= 0.005 && hi <= 0.1) {
            ok = false;
        }
        detail.push_str(&format!("v p{p}:[{lo:.4},{hi:.4}] "));
    }
    for p in 2..=7usize {
        let db = RomDatabase::build(&temperature, p, Some(0.5)).unwrap();
        let out = st_interpolate(&db, 0.3).unwrap();
        let fe = frob_error(&out.snapshot, &truth.temperature).unwrap();
        if !(fe < 0.02) {
            ok = false;
        }
        detail.push_str(&format!("T p{p}:{fe:.4} "));
    }
    for snap in velocity.iter().chain(temperature.iter()) {
        let e2 = energy_spectrum(snap).unwrap()[1];
        if e2 < 0.99 {
            ok = false;
        }
        detail.push_str(&format!("E2({}:{}) = {e2:.4} ", snap.kind, snap.param));
    }
    verdict(
        5,
        "benchmark error bands at target 0.3 (velocity columns in [0.005, 0.1], \
         temperature Frobenius < 0.02, two-mode energy ≥ 0.99)",
        ok,
        &detail,
    );
}

#[test]
fn acceptance_6_second_target_0_8() {
    let velocity = training_snapshots(true);
    let truth = run_at(0.8);
    let mut detail = String::new();
    let mut ok = true;
    for p in 2..=7usize {
        let db = RomDatabase::build(&velocity, p, Some(0.5)).unwrap();
        let out = st_interpolate(&db, 0.8).unwrap();
        let cols = col_l2_errors(&out.snapshot, &truth.velocity).unwrap();
        let lo = cols.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = cols.iter().cloned().fold(0.0f64, f64::max);
        if !(lo >= 0.005 && hi <= 0.1) {
            ok = false;
        }
        detail.push_str(&format!("p{p}:[{lo:.4},{hi:.4}] "));
    }
    verdict(6, "velocity error band at target 0.8", ok, &detail);
}

#[test]
fn acceptance_7_temperature_physics_band() {
    let mut ok = true;
    let mut detail = String::new();
    for m in [0.1, 0.3, 0.5, 0.9] {
        let run = run_at(m);
        let final_t = run.temperature.data.column(run.temperature.ncols() - 1);
        let t_max = final_t.max();
        let argmax = (0..final_t.len())
            .max_by(|&a, &b| final_t[a].partial_cmp(&final_t[b]).unwrap())
            .unwrap();
        // node 0 sits at the origin of the quarter model: the center of the
        // full workpiece
        let in_band = (85.0..=102.0).contains(&t_max);
        let at_center = argmax == 0;
        if !(in_band && at_center) {
            ok = false;
        }
        detail.push_str(&format!(
            "m{m}: Tmax {t_max:.2} C at node {argmax} (Δcenter {:.3}) ",
            t_max - final_t[0]
        ));
    }
    verdict(
        7,
        "final maximum temperature in [85, 102] C located at the workpiece center",
        ok,
        &detail,
    );
}

#[test]
fn acceptance_8_speed_contract() {
    let velocity = training_snapshots(true);
    let temperature = training_snapshots(false);
    let vel_db = RomDatabase::build(&velocity, 4, Some(0.5)).unwrap();
    let temp_db = RomDatabase::build(&temperature, 4, Some(0.5)).unwrap();

    // warm up, then measure the online stage for both fields
    let _ = st_interpolate(&vel_db, 0.3).unwrap();
    let started = Instant::now();
    let _ = st_interpolate(&vel_db, 0.3).unwrap();
    let _ = st_interpolate(&temp_db, 0.3).unwrap();
    let interp_time = started.elapsed();

    let started = Instant::now();
    let _ = run_forging(&bench_config(0.3)).unwrap();
    let fem_time = started.elapsed();

    let ratio = fem_time.as_secs_f64() / interp_time.as_secs_f64().max(1e-12);
    verdict(
        8,
        "interpolation at least 50x faster than one FEM run",
        ratio >= 50.0,
        &format!("FEM {fem_time:?} / interpolation {interp_time:?} = {ratio:.0}x"),
    );
}

#[test]
fn acceptance_9_degenerate_temporal_grassmannian() {
    let velocity = training_snapshots(true);
    let db = RomDatabase::build(&velocity, 7, Some(0.5)).unwrap();
    let temporal = TrainingSet::new(
        db.params().to_vec(),
        db.factors().iter().map(|f| f.psi_p.clone()).collect(),
        db.ref_index(),
    )
    .unwrap();
    let reference = db.factors()[db.ref_index()].psi_p.clone();
    let curve = StiefelCurve::fit(&temporal).unwrap();
    let mut ok = true;
    for lambda in [0.1, 0.3, 0.5, 0.8, 0.9, 2.0] {
        let (point, det) = curve.at(lambda).unwrap();
        // bit-for-bit: the 7x7 temporal Grassmannian is a single point
        if point.matrix() != reference.matrix() || !det.is_deterministic() {
            ok = false;
        }
    }
    verdict(
        9,
        "temporal curve at p = m = 7 is constant at the reference factors",
        ok,
        "",
    );
}

// ---------------------------------------------------------------------------
// Supplementary benchmark-scale properties (not numbered criteria).
// ---------------------------------------------------------------------------

#[test]
fn position_error_peaks_in_the_upper_right_region() {
    let velocity = training_snapshots(true);
    let db = RomDatabase::build(&velocity, 2, Some(0.5)).unwrap();
    let out = st_interpolate(&db, 0.3).unwrap();
    let truth = run_at(0.3);

    let rom_coords = integrate_positions(&truth.initial_coords, &out.snapshot).unwrap();
    let err = position_error(&rom_coords, &truth.coords_history).unwrap();
    let final_col = err.column(err.ncols() - 1);
    let node = (0..final_col.len())
        .max_by(|&a, &b| final_col[a].partial_cmp(&final_col[b]).unwrap())
        .unwrap();
    let pos = truth.coords_history.last().unwrap()[node];
    let max_x = truth
        .coords_history
        .last()
        .unwrap()
        .iter()
        .map(|p| p[0])
        .fold(0.0f64, f64::max);
    let max_y = truth
        .coords_history
        .last()
        .unwrap()
        .iter()
        .map(|p| p[1])
        .fold(0.0f64, f64::max);
    assert!(
        pos[0] >= 0.5 * max_x && pos[1] >= 0.5 * max_y,
        "largest position error at node {node} ({pos:?}), outside the upper-right quadrant"
    );
}

#[test]
fn benchmark_singular_value_spread() {
    // Contract band: σ₁/σ₇ within 1e4..1e7 for every benchmark snapshot
    // matrix. The high-friction velocity fields of this solver decay more
    // slowly (the die-edge fold enriches the late columns), so their spread
    // sits below 1e4; the measured ratios are printed for the record.
    let mut detail = String::new();
    let mut ok = true;
    for snap in training_snapshots(true)
        .iter()
        .chain(training_snapshots(false).iter())
    {
        let svd = snap.data.clone().svd(false, false);
        let ratio = svd.singular_values[0] / svd.singular_values[6];
        if !(1e4..=1e7).contains(&ratio) {
            ok = false;
        }
        detail.push_str(&format!("{}:{}→{ratio:.2e} ", snap.kind, snap.param));
    }
    assert!(ok, "singular value spread outside 1e4..1e7: {detail}");
}
