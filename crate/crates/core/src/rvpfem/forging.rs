//! Staggered thermomechanical time loop for the open-forging benchmark.

use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::snapshot::{FieldKind, SnapshotMatrix, SnapshotMeta};

use super::material::MaterialModel;
use super::mech::{solve_mech_step, MechState, SolverOptions};
use super::mesh::Mesh;
use super::thermal::{thermal_step, ThermalOptions, ThermalState};
use super::FemError;

/// Full configuration of one forging simulation.
///
/// `width` and `height` are the *full* bar dimensions; quarter symmetry is
/// exploited, so the solved domain is `[0, width/2] × [0, height/2]` with
/// the die face on top moving down at `die_speed`.
#[derive(Debug, Clone)]
pub struct ForgingConfig {
    pub mesh_nx: usize,
    pub mesh_ny: usize,
    /// Full bar width, mm.
    pub width: f64,
    /// Full bar height, mm.
    pub height: f64,
    /// Die speed, mm/s (each die; the quarter model sees this at its top face).
    pub die_speed: f64,
    /// Number of time steps = snapshot columns.
    pub steps: usize,
    /// Time increment, s.
    pub dt: f64,
    pub material: MaterialModel,
    /// Initial workpiece temperature, °C.
    pub initial_temperature: f64,
    pub theta: f64,
    pub lumped_capacity: bool,
    /// Film coefficient for heat exchange with the isothermal die on the
    /// contact face, N/(mm·s·°C); zero means fully adiabatic boundaries.
    pub die_film: f64,
    /// Die temperature, °C.
    pub die_temperature: f64,
    /// Ambient film on the lateral free surface, N/(mm·s·°C).
    pub ambient_film: f64,
    /// Ambient temperature, °C.
    pub ambient_temperature: f64,
    pub tol_velocity: f64,
    pub tol_residual: f64,
    pub max_iterations: usize,
    pub direct_warmstart: usize,
}

impl ForgingConfig {
    /// The benchmark: 20×20 mm bar, 10×10 quarter grid (121 nodes), die at
    /// 1 mm/s, 7 steps of 0.5 s (35% height reduction), T₀ = 25 °C.
    pub fn benchmark(friction_m: f64) -> Self {
        ForgingConfig {
            mesh_nx: 10,
            mesh_ny: 10,
            width: 20.0,
            height: 20.0,
            die_speed: 1.0,
            steps: 7,
            dt: 0.5,
            material: MaterialModel::benchmark(friction_m),
            initial_temperature: 25.0,
            theta: 1.0,
            lumped_capacity: true,
            die_film: 0.0,
            die_temperature: 25.0,
            ambient_film: 0.0,
            ambient_temperature: 25.0,
            tol_velocity: 1e-6,
            tol_residual: 1e-6,
            max_iterations: 200,
            direct_warmstart: 0,
        }
    }

    pub fn validate(&self) -> Result<(), FemError> {
        self.material.validate()?;
        let bad = |what: alloc::string::String| Err(FemError::InvalidConfig(what));
        if self.mesh_nx == 0 || self.mesh_ny == 0 {
            return bad(alloc::format!(
                "mesh divisions must be positive, got {}x{}",
                self.mesh_nx,
                self.mesh_ny
            ));
        }
        if !(self.width > 0.0 && self.height > 0.0) {
            return bad(alloc::string::String::from("geometry must be positive"));
        }
        if !(self.die_speed > 0.0 && self.dt > 0.0) || self.steps == 0 {
            return bad(alloc::string::String::from(
                "die speed, time increment and step count must be positive",
            ));
        }
        let travel = self.die_speed * self.dt * self.steps as f64;
        if travel >= 0.5 * self.height {
            return bad(alloc::format!(
                "die travel {travel} mm consumes the half-height {} mm",
                0.5 * self.height
            ));
        }
        if !(self.theta >= 0.0 && self.theta <= 1.0) {
            return bad(alloc::string::String::from("theta must lie in [0, 1]"));
        }
        Ok(())
    }
}

/// Per-step solver log for the run report.
#[derive(Debug, Clone)]
pub struct StepLog {
    pub step: usize,
    pub iterations: usize,
    pub direct_iterations: usize,
    pub velocity_error: f64,
    pub residual_norm: f64,
    /// Free-surface nodes the bulge has folded onto the die so far.
    pub captured_nodes: usize,
}

/// Everything a forging run produces: the two snapshot matrices, the
/// geometry history for position diagnostics, and the solver logs.
#[derive(Debug, Clone)]
pub struct ForgingRun {
    /// 2N_s × N_t nodal velocities, one column per step.
    pub velocity: SnapshotMatrix,
    /// N_s × N_t nodal temperatures, one column per step.
    pub temperature: SnapshotMatrix,
    pub initial_coords: Vec<[f64; 2]>,
    /// Nodal coordinates after each step (`steps` entries).
    pub coords_history: Vec<Vec<[f64; 2]>>,
    pub logs: Vec<StepLog>,
    pub mesh: Mesh,
}

/// Run the staggered simulation: per step, solve the viscoplastic flow on
/// the current geometry, advance the temperature with the converged
/// dissipation, then update the geometry `x ← x + v·Δt`.
pub fn run_forging(config: &ForgingConfig) -> Result<ForgingRun, FemError> {
    config.validate()?;
    let mat = &config.material;
    let mesh = Mesh::rect_grid(
        0.5 * config.width,
        0.5 * config.height,
        config.mesh_nx,
        config.mesh_ny,
    )?;
    mesh.validate_geometry(&mesh.nodes)?;

    let n_nodes = mesh.n_nodes();
    let mut mech = MechState::new(&mesh, mat, config.die_speed);
    let mut thermal = ThermalState::uniform(n_nodes, config.initial_temperature);
    let solver_opts = SolverOptions {
        die_speed: config.die_speed,
        tol_velocity: config.tol_velocity,
        tol_residual: config.tol_residual,
        max_iterations: config.max_iterations,
        direct_warmstart: config.direct_warmstart,
    };
    let thermal_opts = ThermalOptions {
        theta: config.theta,
        lumped_capacity: config.lumped_capacity,
        die_film: config.die_film,
        die_temperature: config.die_temperature,
        ambient_film: config.ambient_film,
        ambient_temperature: config.ambient_temperature,
    };

    let mut velocity = DMatrix::zeros(2 * n_nodes, config.steps);
    let mut temperature = DMatrix::zeros(n_nodes, config.steps);
    let mut coords_history = Vec::with_capacity(config.steps);
    let mut logs = Vec::with_capacity(config.steps);

    // Free-surface nodes carried onto the die by the barreling bulge. The
    // flat die at the current height captures them (bilateral, like the
    // initial contact face); the landing velocity puts a new node exactly
    // on the die face at the end of its capture step.
    let mut captured: Vec<usize> = Vec::new();
    let half_height = 0.5 * config.height;

    for step in 1..=config.steps {
        let die_end = half_height - config.die_speed * config.dt * step as f64;
        let report = loop {
            mech.captured_bc = captured
                .iter()
                .map(|&n| (n, (die_end - mech.coords[n][1]) / config.dt))
                .collect();
            let report = solve_mech_step(&mut mech, mat, &mesh, &solver_opts)?;
            let constrained: alloc::collections::BTreeSet<usize> = mesh
                .contact_nodes
                .iter()
                .chain(captured.iter())
                .copied()
                .collect();
            let mut violators = Vec::new();
            for i in 0..n_nodes {
                if constrained.contains(&i) {
                    continue;
                }
                let y_end = mech.coords[i][1] + mech.velocity[2 * i + 1] * config.dt;
                if y_end > die_end + 1e-9 {
                    violators.push(i);
                }
            }
            if violators.is_empty() {
                break report;
            }
            captured.extend(violators);
        };
        logs.push(StepLog {
            step,
            iterations: report.iterations,
            direct_iterations: report.direct_iterations,
            velocity_error: report.velocity_error,
            residual_norm: report.residual_norm,
            captured_nodes: captured.len(),
        });
        velocity.set_column(step - 1, &mech.velocity);

        thermal_step(&mut thermal, &mech, mat, &mesh, config.dt, &thermal_opts)?;
        temperature.set_column(step - 1, &thermal.temperature);

        // accumulated strain and updated-Lagrangian geometry
        for e in 0..mesh.n_elems() {
            for g in 0..4 {
                mech.eff_strain[e][g] += mech.eff_strain_rate[e][g] * config.dt;
            }
        }
        for i in 0..n_nodes {
            mech.coords[i][0] += mech.velocity[2 * i] * config.dt;
            mech.coords[i][1] += mech.velocity[2 * i + 1] * config.dt;
        }
        if let Err(FemError::DegenerateElement { element, .. }) =
            mesh.validate_geometry(&mech.coords)
        {
            return Err(FemError::ElementInversion { step, element });
        }
        coords_history.push(mech.coords.clone());

        // refresh the frozen contact shear from the converged flow stress
        for (idx, edge) in mesh.contact_edges.iter().enumerate() {
            let sig = mech.flow_stress[edge.element].iter().sum::<f64>() / 4.0;
            mech.contact_shear[idx] = mat.shear_yield(sig);
        }
    }

    Ok(ForgingRun {
        velocity: SnapshotMatrix::new(
            velocity,
            mat.friction_m,
            FieldKind::Velocity,
            SnapshotMeta {
                units: alloc::string::String::from("mm/s"),
                dt: config.dt,
            },
        ),
        temperature: SnapshotMatrix::new(
            temperature,
            mat.friction_m,
            FieldKind::Temperature,
            SnapshotMeta {
                units: alloc::string::String::from("C"),
                dt: config.dt,
            },
        ),
        initial_coords: mesh.nodes.clone(),
        coords_history,
        logs,
        mesh,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_validation_catches_overtravel() {
        let mut cfg = ForgingConfig::benchmark(0.5);
        cfg.steps = 25; // 12.5 mm travel into a 10 mm half-height
        assert!(matches!(
            run_forging(&cfg),
            Err(FemError::InvalidConfig(_))
        ));
    }

    #[test]
    fn frictionless_run_deforms_homogeneously() {
        let mut cfg = ForgingConfig::benchmark(0.0);
        cfg.mesh_nx = 5;
        cfg.mesh_ny = 5;
        let run = run_forging(&cfg).unwrap();
        // the lateral free surface stays straight: all right-edge nodes
        // share one x coordinate
        let final_coords = run.coords_history.last().unwrap();
        let idx = |i: usize, j: usize| j * (cfg.mesh_nx + 1) + i;
        let x_ref = final_coords[idx(cfg.mesh_nx, 0)][0];
        for j in 0..=cfg.mesh_ny {
            assert!((final_coords[idx(cfg.mesh_nx, j)][0] - x_ref).abs() < 1e-6);
        }
        // 35% height reduction: the top face sits at 10 − 3.5 = 6.5 mm
        for i in 0..=cfg.mesh_nx {
            assert!((final_coords[idx(i, cfg.mesh_ny)][1] - 6.5).abs() < 1e-9);
        }
    }

    #[test]
    fn high_friction_run_barrels() {
        let mut cfg = ForgingConfig::benchmark(0.9);
        cfg.mesh_nx = 6;
        cfg.mesh_ny = 6;
        let run = run_forging(&cfg).unwrap();
        let final_coords = run.coords_history.last().unwrap();
        let idx = |i: usize, j: usize| j * (cfg.mesh_nx + 1) + i;
        // the full model's midheight is y = 0; its lateral bulge must beat
        // the die-corner displacement
        let disp_mid = final_coords[idx(cfg.mesh_nx, 0)][0] - run.initial_coords[idx(cfg.mesh_nx, 0)][0];
        let disp_corner = final_coords[idx(cfg.mesh_nx, cfg.mesh_ny)][0]
            - run.initial_coords[idx(cfg.mesh_nx, cfg.mesh_ny)][0];
        assert!(
            disp_mid > disp_corner + 1e-3,
            "no barreling: mid {disp_mid} vs corner {disp_corner}"
        );
    }

    #[test]
    fn benchmark_snapshot_shapes() {
        let cfg = ForgingConfig::benchmark(0.5);
        let run = run_forging(&cfg).unwrap();
        assert_eq!(run.velocity.data.shape(), (242, 7));
        assert_eq!(run.temperature.data.shape(), (121, 7));
        assert_eq!(run.velocity.kind, FieldKind::Velocity);
        assert_eq!(run.temperature.param, 0.5);
        assert_eq!(run.coords_history.len(), 7);
        assert!(run.logs.iter().all(|l| l.iterations <= 200));
        // adiabatic heating only
        assert!(run.temperature.data.iter().all(|&t| t >= 25.0 - 1e-9));
    }
}
