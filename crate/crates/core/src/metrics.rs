//! A-posteriori error norms and spectrum diagnostics for comparing
//! interpolated snapshots against high-fidelity FEM solutions.

use alloc::vec::Vec;

use nalgebra::DMatrix;

use crate::math;
use crate::snapshot::SnapshotMatrix;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("shape mismatch: {a_rows}x{a_cols} vs {b_rows}x{b_cols}")]
    ShapeMismatch {
        a_rows: usize,
        a_cols: usize,
        b_rows: usize,
        b_cols: usize,
    },
    #[error("reference column {column} has zero norm")]
    ZeroReferenceColumn { column: usize },
    #[error("snapshot matrix is zero; the energy spectrum is undefined")]
    ZeroMatrix,
    #[error("trajectory grids disagree: {a_steps} steps of {a_nodes} nodes vs {b_steps} of {b_nodes}")]
    GridMismatch {
        a_steps: usize,
        a_nodes: usize,
        b_steps: usize,
        b_nodes: usize,
    },
    #[error("velocity matrix has {rows} rows, expected twice the {nodes} nodes")]
    NotAVelocityField { rows: usize, nodes: usize },
}

/// Per-column relative L₂ errors, relative Frobenius error, and the
/// cumulative energy fractions of the reference matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    pub per_column_l2: Vec<f64>,
    pub frobenius: f64,
    pub energy_curve: Vec<f64>,
}

impl ErrorReport {
    pub fn compare(pred: &SnapshotMatrix, truth: &SnapshotMatrix) -> Result<Self, MetricsError> {
        Ok(ErrorReport {
            per_column_l2: col_l2_errors(pred, truth)?,
            frobenius: frob_error(pred, truth)?,
            energy_curve: energy_spectrum(truth)?,
        })
    }
}

fn check_shapes(a: &SnapshotMatrix, b: &SnapshotMatrix) -> Result<(), MetricsError> {
    if a.data.shape() != b.data.shape() {
        return Err(MetricsError::ShapeMismatch {
            a_rows: a.nrows(),
            a_cols: a.ncols(),
            b_rows: b.nrows(),
            b_cols: b.ncols(),
        });
    }
    Ok(())
}

/// Column-wise relative 2-norm errors `‖s̃ᵢ − sᵢ‖ / ‖sᵢ‖`.
pub fn col_l2_errors(
    pred: &SnapshotMatrix,
    truth: &SnapshotMatrix,
) -> Result<Vec<f64>, MetricsError> {
    check_shapes(pred, truth)?;
    let mut errors = Vec::with_capacity(truth.ncols());
    for j in 0..truth.ncols() {
        let denom = truth.data.column(j).norm();
        if denom == 0.0 {
            return Err(MetricsError::ZeroReferenceColumn { column: j });
        }
        let diff = pred.data.column(j) - truth.data.column(j);
        errors.push(diff.norm() / denom);
    }
    Ok(errors)
}

/// Relative Frobenius error `‖S̃ − S‖_F / ‖S‖_F`.
pub fn frob_error(pred: &SnapshotMatrix, truth: &SnapshotMatrix) -> Result<f64, MetricsError> {
    check_shapes(pred, truth)?;
    let denom = truth.data.norm();
    if denom == 0.0 {
        return Err(MetricsError::ZeroMatrix);
    }
    Ok((&pred.data - &truth.data).norm() / denom)
}

/// Cumulative energy fractions `ℰ(k) = Σ_{i≤k} σᵢ² / Σ σᵢ²` for
/// `k = 1..min(n,m)`.
pub fn energy_spectrum(s: &SnapshotMatrix) -> Result<Vec<f64>, MetricsError> {
    let sv = crate::osvd::singular_values(&s.data);
    let total: f64 = sv.iter().map(|x| x * x).sum();
    if total == 0.0 {
        return Err(MetricsError::ZeroMatrix);
    }
    let mut curve = Vec::with_capacity(sv.len());
    let mut acc = 0.0;
    for x in sv.iter() {
        acc += x * x;
        curve.push(acc / total);
    }
    Ok(curve)
}

/// Euclidean nodal distances `‖x̃ᵢ(t_k) − xᵢ(t_k)‖` per node and step.
///
/// Both trajectories are lists of coordinate snapshots on the same node and
/// time grid; the result has one row per node and one column per step.
pub fn position_error(
    x_tilde: &[Vec<[f64; 2]>],
    x_fem: &[Vec<[f64; 2]>],
) -> Result<DMatrix<f64>, MetricsError> {
    let steps = x_fem.len();
    let nodes = x_fem.first().map_or(0, Vec::len);
    if x_tilde.len() != steps
        || x_tilde.iter().any(|c| c.len() != nodes)
        || x_fem.iter().any(|c| c.len() != nodes)
    {
        return Err(MetricsError::GridMismatch {
            a_steps: x_tilde.len(),
            a_nodes: x_tilde.first().map_or(0, Vec::len),
            b_steps: steps,
            b_nodes: nodes,
        });
    }
    let mut out = DMatrix::zeros(nodes, steps);
    for (k, (xa, xb)) in x_tilde.iter().zip(x_fem).enumerate() {
        for i in 0..nodes {
            let dx = xa[i][0] - xb[i][0];
            let dy = xa[i][1] - xb[i][1];
            out[(i, k)] = math::sqrt(dx * dx + dy * dy);
        }
    }
    Ok(out)
}

/// Rebuild nodal trajectories from a velocity snapshot matrix with the same
/// explicit update rule the FEM uses: `x ← x + v·Δt` per column.
///
/// Returns the positions after each step (`ncols` snapshots).
pub fn integrate_positions(
    initial: &[[f64; 2]],
    velocity: &SnapshotMatrix,
) -> Result<Vec<Vec<[f64; 2]>>, MetricsError> {
    let nodes = initial.len();
    if velocity.nrows() != 2 * nodes {
        return Err(MetricsError::NotAVelocityField {
            rows: velocity.nrows(),
            nodes,
        });
    }
    let dt = velocity.meta.dt;
    let mut coords = initial.to_vec();
    let mut history = Vec::with_capacity(velocity.ncols());
    for k in 0..velocity.ncols() {
        for (i, point) in coords.iter_mut().enumerate() {
            point[0] += velocity.data[(2 * i, k)] * dt;
            point[1] += velocity.data[(2 * i + 1, k)] * dt;
        }
        history.push(coords.clone());
    }
    Ok(history)
}
