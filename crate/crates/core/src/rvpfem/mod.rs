//! Desk-scale 2D plane-strain rigid-viscoplastic thermomechanical FEM.
//!
//! The solver targets the open-forging benchmark: a quarter of a
//! rectangular bar compressed between flat dies under plane strain, with a
//! power-law flow stress, penalty-enforced incompressibility, arctan-
//! regularized shear friction on the die face, and a staggered thermal
//! update fed by the plastic dissipation. No remeshing: element inversion
//! aborts the run.

use alloc::string::String;

pub mod forging;
pub mod material;
pub mod mech;
pub mod mesh;
pub mod thermal;

pub use forging::{run_forging, ForgingConfig, ForgingRun, StepLog};
pub use material::MaterialModel;
pub use mech::{
    assemble_mech, friction_traction, solve_mech_step, MechState, MechSystem, SolveReport,
    SolverOptions,
};
pub use mesh::{ContactEdge, Mesh};
pub use thermal::{thermal_step, ThermalOptions, ThermalState};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FemError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid material: {0}")]
    InvalidMaterial(String),
    #[error("element {element} is degenerate: det J = {det:.3e}")]
    DegenerateElement { element: usize, det: f64 },
    #[error("element {element} inverted during the geometry update of step {step}")]
    ElementInversion { step: usize, element: usize },
    #[error("no convergence after {iterations} iterations: velocity error {velocity_error:.3e}, residual norm {residual_norm:.3e}")]
    NoConvergence {
        iterations: usize,
        velocity_error: f64,
        residual_norm: f64,
    },
    #[error("line search stalled at iteration {iteration}: the functional no longer decreases")]
    LineSearchStalled { iteration: usize },
    #[error("mechanical stiffness system is singular")]
    SingularMechSystem,
    #[error("thermal system is singular")]
    SingularThermalSystem,
}
