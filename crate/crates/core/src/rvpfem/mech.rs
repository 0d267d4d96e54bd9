//! Mechanical solver: penalized rigid-viscoplastic flow.
//!
//! The discrete problem minimizes the convex functional
//!
//! ```text
//! Π(v) = ∫ E(ε̇̄) dV + K/2 ∫ ε̇_v² dV + Σ_edges ∫ m·k·G(v_s) dS
//! ```
//!
//! over nodal velocities with the symmetry/die constraints applied, where
//! `E` is the work-rate density of the power law, the penalty term enforces
//! incompressibility through reduced (one-point) integration of the
//! dilatation, and `G` is the arctan friction potential with
//! `G'(v_s) = (2/π)·arctan(v_s/v₀)`. The deviatoric term uses 2×2 Gauss
//! quadrature. Stationarity `∂Π/∂v = 0` is reached by Newton iteration with
//! a backtracking line search on `Π`, optionally warm-started by direct
//! (secant) iterations.
//!
//! The shear yield stress entering the friction terms is frozen over one
//! mechanical solve (taken from the previous converged state, or from the
//! nominal compression rate on the first step) so that `Π` is a fixed
//! functional of `v` within the step.

use alloc::vec::Vec;

use nalgebra::{DMatrix, DVector};

use crate::math;

use super::material::MaterialModel;
use super::mesh::{gather_coords, shape_gradients, Mesh, GAUSS_2X2};
use super::FemError;

/// Mechanical state: the velocity field, the current geometry, and the
/// per-Gauss-point scalars of the last converged solve.
#[derive(Debug, Clone)]
pub struct MechState {
    /// Nodal velocities, interleaved `[vx₀, vy₀, vx₁, vy₁, …]`, mm/s.
    pub velocity: DVector<f64>,
    /// Current nodal coordinates, mm.
    pub coords: Vec<[f64; 2]>,
    /// Effective strain rate ε̇̄ per element per 2×2 Gauss point, 1/s.
    pub eff_strain_rate: Vec<[f64; 4]>,
    /// Flow stress σ̄ per element per Gauss point, MPa.
    pub flow_stress: Vec<[f64; 4]>,
    /// Accumulated effective strain ε̄ per element per Gauss point.
    pub eff_strain: Vec<[f64; 4]>,
    /// Element-center volumetric strain rate ε̇_v, 1/s.
    pub vol_rate: Vec<f64>,
    /// Mean stress σ_m = K·ε̇_v per element, MPa.
    pub mean_stress: Vec<f64>,
    /// Frozen shear yield stress per contact edge for the current step.
    pub contact_shear: Vec<f64>,
    /// Extra die-contact constraints for this step: free-surface nodes the
    /// bulging material has carried onto the die, as `(node, v_y)`.
    pub captured_bc: Vec<(usize, f64)>,
}

impl MechState {
    /// Initial state on the undeformed mesh. The starting velocity guess
    /// interpolates linearly between the die speed on the contact face and
    /// zero on the symmetry planes (with the matching lateral outflow), and
    /// the contact shear is evaluated at the nominal compression rate.
    pub fn new(mesh: &Mesh, mat: &MaterialModel, die_speed: f64) -> Self {
        let n = mesh.n_nodes();
        let height = mesh
            .nodes
            .iter()
            .map(|p| p[1])
            .fold(f64::NEG_INFINITY, f64::max);
        let mut velocity = DVector::zeros(2 * n);
        for (i, p) in mesh.nodes.iter().enumerate() {
            velocity[2 * i] = die_speed * p[0] / height;
            velocity[2 * i + 1] = -die_speed * p[1] / height;
        }
        let nominal_rate = 2.0 / math::sqrt(3.0) * die_speed / height;
        let (sigma, _) = mat.flow_stress(nominal_rate);
        let shear = mat.shear_yield(sigma);
        let ne = mesh.n_elems();
        MechState {
            velocity,
            coords: mesh.nodes.clone(),
            eff_strain_rate: alloc::vec![[0.0; 4]; ne],
            flow_stress: alloc::vec![[0.0; 4]; ne],
            eff_strain: alloc::vec![[0.0; 4]; ne],
            vol_rate: alloc::vec![0.0; ne],
            mean_stress: alloc::vec![0.0; ne],
            contact_shear: alloc::vec![shear; mesh.contact_edges.len()],
            captured_bc: Vec::new(),
        }
    }
}

/// Assembled first and second derivatives of the functional.
#[derive(Debug, Clone)]
pub struct MechSystem {
    /// Π(v).
    pub energy: f64,
    /// ∂Π/∂v, all dofs (prescribed rows carry reaction forces).
    pub residual: DVector<f64>,
    /// ∂²Π/∂v², symmetric.
    pub jacobian: DMatrix<f64>,
}

/// Solver controls. `tol_velocity` and `tol_residual` are the paired
/// convergence criteria `‖Δv‖/‖v‖ ≤ e₁` and `‖∂Π/∂v‖ ≤ e₂`; both must hold.
#[derive(Debug, Clone)]
pub struct SolverOptions {
    pub die_speed: f64,
    pub tol_velocity: f64,
    pub tol_residual: f64,
    pub max_iterations: usize,
    /// Direct (secant) iterations before switching to Newton.
    pub direct_warmstart: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            die_speed: 1.0,
            tol_velocity: 1e-6,
            tol_residual: 1e-6,
            max_iterations: 200,
            direct_warmstart: 0,
        }
    }
}

/// Convergence record of one mechanical solve.
#[derive(Debug, Clone)]
pub struct SolveReport {
    /// Newton updates performed.
    pub iterations: usize,
    pub velocity_error: f64,
    pub residual_norm: f64,
    /// Functional values at the start and after every accepted update.
    pub energy_trace: Vec<f64>,
    pub direct_iterations: usize,
}

/// Regularized friction traction, MPa: `t_f = −m·k·(2/π)·arctan(v_s/v₀)`
/// with `k = σ̄/√3`. Odd in `v_s` and saturating at `±m·k`.
pub fn friction_traction(v_s: f64, sigma_bar: f64, mat: &MaterialModel) -> f64 {
    let k = mat.shear_yield(sigma_bar);
    -mat.friction_m * k * arctan_profile(v_s, mat.reg_velocity)
}

#[inline]
fn arctan_profile(v_s: f64, v0: f64) -> f64 {
    core::f64::consts::FRAC_2_PI * math::atan(v_s / v0)
}

/// Friction potential with `d/dv_s = (2/π)·arctan(v_s/v₀)`.
#[inline]
fn friction_potential(v_s: f64, v0: f64) -> f64 {
    let r = v_s / v0;
    core::f64::consts::FRAC_2_PI * (v_s * math::atan(r) - 0.5 * v0 * math::ln(1.0 + r * r))
}

#[inline]
fn friction_curvature(v_s: f64, v0: f64) -> f64 {
    core::f64::consts::FRAC_2_PI * v0 / (v0 * v0 + v_s * v_s)
}

struct GaussKin {
    dndx: [f64; 4],
    dndy: [f64; 4],
    det: f64,
    rate: f64,
    /// D-weighted strain rate (2/3·ε̇xx, 2/3·ε̇yy, 1/3·γ̇).
    d: [f64; 3],
}

fn gauss_kinematics(
    element: usize,
    c: &[[f64; 2]; 4],
    v8: &[f64; 8],
    xi: f64,
    eta: f64,
) -> Result<GaussKin, FemError> {
    let (dndx, dndy, det) =
        shape_gradients(c, xi, eta).map_err(|det| FemError::DegenerateElement { element, det })?;
    let mut exx = 0.0;
    let mut eyy = 0.0;
    let mut gxy = 0.0;
    for i in 0..4 {
        exx += dndx[i] * v8[2 * i];
        eyy += dndy[i] * v8[2 * i + 1];
        gxy += dndy[i] * v8[2 * i] + dndx[i] * v8[2 * i + 1];
    }
    let d = [exx * 2.0 / 3.0, eyy * 2.0 / 3.0, gxy / 3.0];
    let rate2 = exx * d[0] + eyy * d[1] + gxy * d[2];
    Ok(GaussKin {
        dndx,
        dndy,
        det,
        rate: math::sqrt(rate2.max(0.0)),
        d,
    })
}

fn local_dofs(elem: &[usize; 4]) -> [usize; 8] {
    let mut dofs = [0usize; 8];
    for a in 0..4 {
        dofs[2 * a] = 2 * elem[a];
        dofs[2 * a + 1] = 2 * elem[a] + 1;
    }
    dofs
}

fn gather_velocity(v: &DVector<f64>, elem: &[usize; 4]) -> [f64; 8] {
    let mut v8 = [0.0; 8];
    for a in 0..4 {
        v8[2 * a] = v[2 * elem[a]];
        v8[2 * a + 1] = v[2 * elem[a] + 1];
    }
    v8
}

/// σ̄/ε̇̄ without the 0/0 hazard: constant in the regularized branch.
fn stiffness_ratio(mat: &MaterialModel, rate: f64, sigma: f64, dsigma: f64) -> f64 {
    if rate >= mat.limit_rate {
        sigma / rate
    } else {
        dsigma
    }
}

/// Residual `∂Π/∂v` and Jacobian `∂²Π/∂v²` on the current geometry.
pub fn assemble_mech(
    state: &MechState,
    mat: &MaterialModel,
    mesh: &Mesh,
) -> Result<MechSystem, FemError> {
    let ndof = 2 * mesh.n_nodes();
    let mut energy = 0.0;
    let mut residual = DVector::zeros(ndof);
    let mut jacobian = DMatrix::zeros(ndof, ndof);

    for (e, elem) in mesh.elems.iter().enumerate() {
        let c = gather_coords(&state.coords, elem);
        let v8 = gather_velocity(&state.velocity, elem);
        let dofs = local_dofs(elem);
        let mut r_loc = [0.0; 8];
        let mut k_loc = [[0.0; 8]; 8];

        for &[xi, eta] in GAUSS_2X2.iter() {
            let kin = gauss_kinematics(e, &c, &v8, xi, eta)?;
            let (sigma, dsigma) = mat.flow_stress(kin.rate);
            let ratio = stiffness_ratio(mat, kin.rate, sigma, dsigma);
            energy += kin.det * mat.work_density(kin.rate);

            let mut g = [0.0; 8];
            for i in 0..4 {
                g[2 * i] = kin.dndx[i] * kin.d[0] + kin.dndy[i] * kin.d[2];
                g[2 * i + 1] = kin.dndy[i] * kin.d[1] + kin.dndx[i] * kin.d[2];
            }
            for a in 0..8 {
                r_loc[a] += kin.det * ratio * g[a];
            }

            let rate2 = kin.rate * kin.rate;
            let coef2 = if kin.rate >= mat.limit_rate && rate2 > 0.0 {
                (dsigma - ratio) / rate2
            } else {
                0.0 // regularized branch is exactly quadratic
            };
            for i in 0..4 {
                for j in 0..4 {
                    let m_xx = kin.dndx[i] * kin.dndx[j] * 2.0 / 3.0
                        + kin.dndy[i] * kin.dndy[j] / 3.0;
                    let m_xy = kin.dndy[i] * kin.dndx[j] / 3.0;
                    let m_yx = kin.dndx[i] * kin.dndy[j] / 3.0;
                    let m_yy = kin.dndy[i] * kin.dndy[j] * 2.0 / 3.0
                        + kin.dndx[i] * kin.dndx[j] / 3.0;
                    k_loc[2 * i][2 * j] += kin.det * (ratio * m_xx + coef2 * g[2 * i] * g[2 * j]);
                    k_loc[2 * i][2 * j + 1] +=
                        kin.det * (ratio * m_xy + coef2 * g[2 * i] * g[2 * j + 1]);
                    k_loc[2 * i + 1][2 * j] +=
                        kin.det * (ratio * m_yx + coef2 * g[2 * i + 1] * g[2 * j]);
                    k_loc[2 * i + 1][2 * j + 1] +=
                        kin.det * (ratio * m_yy + coef2 * g[2 * i + 1] * g[2 * j + 1]);
                }
            }
        }

        // dilatation term, one-point reduced integration at the center
        let (dndx, dndy, det0) =
            shape_gradients(&c, 0.0, 0.0).map_err(|det| FemError::DegenerateElement { element: e, det })?;
        let mut cvol = [0.0; 8];
        for i in 0..4 {
            cvol[2 * i] = dndx[i];
            cvol[2 * i + 1] = dndy[i];
        }
        let eps_v: f64 = (0..8).map(|a| cvol[a] * v8[a]).sum();
        let w = 4.0 * det0 * mat.penalty;
        energy += 0.5 * w * eps_v * eps_v;
        for a in 0..8 {
            r_loc[a] += w * eps_v * cvol[a];
            for b in 0..8 {
                k_loc[a][b] += w * cvol[a] * cvol[b];
            }
        }

        for a in 0..8 {
            residual[dofs[a]] += r_loc[a];
            for b in 0..8 {
                jacobian[(dofs[a], dofs[b])] += k_loc[a][b];
            }
        }
    }

    // sliding friction on the die face
    for (idx, edge) in mesh.contact_edges.iter().enumerate() {
        let coeff = mat.friction_m * state.contact_shear[idx];
        if coeff == 0.0 {
            continue;
        }
        let [a, b] = edge.nodes;
        let (pa, pb) = (state.coords[a], state.coords[b]);
        let (dx, dy) = (pb[0] - pa[0], pb[1] - pa[1]);
        let len = math::sqrt(dx * dx + dy * dy);
        let half = 0.5 * len * coeff;
        for &gp in &[-super::mesh::GP, super::mesh::GP] {
            let shape = [0.5 * (1.0 - gp), 0.5 * (1.0 + gp)];
            let v_s = shape[0] * state.velocity[2 * a] + shape[1] * state.velocity[2 * b];
            energy += half * friction_potential(v_s, mat.reg_velocity);
            let slope = arctan_profile(v_s, mat.reg_velocity);
            let curv = friction_curvature(v_s, mat.reg_velocity);
            residual[2 * a] += half * slope * shape[0];
            residual[2 * b] += half * slope * shape[1];
            jacobian[(2 * a, 2 * a)] += half * curv * shape[0] * shape[0];
            jacobian[(2 * a, 2 * b)] += half * curv * shape[0] * shape[1];
            jacobian[(2 * b, 2 * a)] += half * curv * shape[1] * shape[0];
            jacobian[(2 * b, 2 * b)] += half * curv * shape[1] * shape[1];
        }
    }

    Ok(MechSystem {
        energy,
        residual,
        jacobian,
    })
}

/// Π(v) alone, for line-search trials.
fn total_energy(
    mesh: &Mesh,
    coords: &[[f64; 2]],
    velocity: &DVector<f64>,
    mat: &MaterialModel,
    contact_shear: &[f64],
) -> Result<f64, FemError> {
    let mut energy = 0.0;
    for (e, elem) in mesh.elems.iter().enumerate() {
        let c = gather_coords(coords, elem);
        let v8 = gather_velocity(velocity, elem);
        for &[xi, eta] in GAUSS_2X2.iter() {
            let kin = gauss_kinematics(e, &c, &v8, xi, eta)?;
            energy += kin.det * mat.work_density(kin.rate);
        }
        let (dndx, dndy, det0) = shape_gradients(&c, 0.0, 0.0)
            .map_err(|det| FemError::DegenerateElement { element: e, det })?;
        let mut eps_v = 0.0;
        for i in 0..4 {
            eps_v += dndx[i] * v8[2 * i] + dndy[i] * v8[2 * i + 1];
        }
        energy += 2.0 * det0 * mat.penalty * eps_v * eps_v;
    }
    for (idx, edge) in mesh.contact_edges.iter().enumerate() {
        let coeff = mat.friction_m * contact_shear[idx];
        if coeff == 0.0 {
            continue;
        }
        let [a, b] = edge.nodes;
        let (pa, pb) = (coords[a], coords[b]);
        let (dx, dy) = (pb[0] - pa[0], pb[1] - pa[1]);
        let len = math::sqrt(dx * dx + dy * dy);
        let half = 0.5 * len * coeff;
        for &gp in &[-super::mesh::GP, super::mesh::GP] {
            let shape = [0.5 * (1.0 - gp), 0.5 * (1.0 + gp)];
            let v_s = shape[0] * velocity[2 * a] + shape[1] * velocity[2 * b];
            energy += half * friction_potential(v_s, mat.reg_velocity);
        }
    }
    Ok(energy)
}

pub(crate) struct Constraints {
    pub fixed: Vec<Option<f64>>,
    pub free: Vec<usize>,
}

impl Constraints {
    pub fn apply(&self, v: &mut DVector<f64>) {
        for (i, f) in self.fixed.iter().enumerate() {
            if let Some(val) = f {
                v[i] = *val;
            }
        }
    }
}

pub(crate) fn constraints_for(
    mesh: &Mesh,
    die_speed: f64,
    captured_bc: &[(usize, f64)],
) -> Constraints {
    let mut fixed = alloc::vec![None; 2 * mesh.n_nodes()];
    for &n in &mesh.sym_x_nodes {
        fixed[2 * n] = Some(0.0);
    }
    for &n in &mesh.sym_y_nodes {
        fixed[2 * n + 1] = Some(0.0);
    }
    for &n in &mesh.contact_nodes {
        fixed[2 * n + 1] = Some(-die_speed);
    }
    for &(n, vy) in captured_bc {
        fixed[2 * n + 1] = Some(vy);
    }
    let free = (0..fixed.len()).filter(|&i| fixed[i].is_none()).collect();
    Constraints { fixed, free }
}

fn solve_reduced(
    jacobian: &DMatrix<f64>,
    minus_residual: &DVector<f64>,
    free: &[usize],
) -> Option<DVector<f64>> {
    let nf = free.len();
    let a = DMatrix::from_fn(nf, nf, |i, j| jacobian[(free[i], free[j])]);
    let b = DVector::from_fn(nf, |i, _| minus_residual[free[i]]);
    let x = match a.clone().cholesky() {
        Some(ch) => ch.solve(&b),
        None => a.lu().solve(&b)?,
    };
    let mut full = DVector::zeros(jacobian.nrows());
    for (k, &i) in free.iter().enumerate() {
        full[i] = x[k];
    }
    Some(full)
}

/// Secant (direct-iteration) operator: `A(v_old)·v_new = 0` with the
/// effective viscosity, the penalty and the friction slope all frozen at
/// the current iterate.
fn assemble_secant(
    state: &MechState,
    mat: &MaterialModel,
    mesh: &Mesh,
) -> Result<DMatrix<f64>, FemError> {
    let ndof = 2 * mesh.n_nodes();
    let mut a_mat = DMatrix::zeros(ndof, ndof);
    for (e, elem) in mesh.elems.iter().enumerate() {
        let c = gather_coords(&state.coords, elem);
        let v8 = gather_velocity(&state.velocity, elem);
        let dofs = local_dofs(elem);
        for &[xi, eta] in GAUSS_2X2.iter() {
            let kin = gauss_kinematics(e, &c, &v8, xi, eta)?;
            let (sigma, dsigma) = mat.flow_stress(kin.rate);
            let ratio = stiffness_ratio(mat, kin.rate, sigma, dsigma);
            for i in 0..4 {
                for j in 0..4 {
                    let m_xx = kin.dndx[i] * kin.dndx[j] * 2.0 / 3.0
                        + kin.dndy[i] * kin.dndy[j] / 3.0;
                    let m_xy = kin.dndy[i] * kin.dndx[j] / 3.0;
                    let m_yx = kin.dndx[i] * kin.dndy[j] / 3.0;
                    let m_yy = kin.dndy[i] * kin.dndy[j] * 2.0 / 3.0
                        + kin.dndx[i] * kin.dndx[j] / 3.0;
                    a_mat[(dofs[2 * i], dofs[2 * j])] += kin.det * ratio * m_xx;
                    a_mat[(dofs[2 * i], dofs[2 * j + 1])] += kin.det * ratio * m_xy;
                    a_mat[(dofs[2 * i + 1], dofs[2 * j])] += kin.det * ratio * m_yx;
                    a_mat[(dofs[2 * i + 1], dofs[2 * j + 1])] += kin.det * ratio * m_yy;
                }
            }
        }
        let (dndx, dndy, det0) = shape_gradients(&c, 0.0, 0.0)
            .map_err(|det| FemError::DegenerateElement { element: e, det })?;
        let mut cvol = [0.0; 8];
        for i in 0..4 {
            cvol[2 * i] = dndx[i];
            cvol[2 * i + 1] = dndy[i];
        }
        let w = 4.0 * det0 * mat.penalty;
        for a in 0..8 {
            for b in 0..8 {
                a_mat[(dofs[a], dofs[b])] += w * cvol[a] * cvol[b];
            }
        }
    }
    for (idx, edge) in mesh.contact_edges.iter().enumerate() {
        let coeff = mat.friction_m * state.contact_shear[idx];
        if coeff == 0.0 {
            continue;
        }
        let [a, b] = edge.nodes;
        let (pa, pb) = (state.coords[a], state.coords[b]);
        let (dx, dy) = (pb[0] - pa[0], pb[1] - pa[1]);
        let len = math::sqrt(dx * dx + dy * dy);
        let half = 0.5 * len * coeff;
        for &gp in &[-super::mesh::GP, super::mesh::GP] {
            let shape = [0.5 * (1.0 - gp), 0.5 * (1.0 + gp)];
            let v_s = shape[0] * state.velocity[2 * a] + shape[1] * state.velocity[2 * b];
            let secant = if v_s.abs() > 1e-12 * mat.reg_velocity {
                arctan_profile(v_s, mat.reg_velocity) / v_s
            } else {
                friction_curvature(0.0, mat.reg_velocity)
            };
            a_mat[(2 * a, 2 * a)] += half * secant * shape[0] * shape[0];
            a_mat[(2 * a, 2 * b)] += half * secant * shape[0] * shape[1];
            a_mat[(2 * b, 2 * a)] += half * secant * shape[1] * shape[0];
            a_mat[(2 * b, 2 * b)] += half * secant * shape[1] * shape[1];
        }
    }
    Ok(a_mat)
}

fn direct_iteration(
    state: &mut MechState,
    mat: &MaterialModel,
    mesh: &Mesh,
    cons: &Constraints,
) -> Result<(), FemError> {
    let a = assemble_secant(state, mat, mesh)?;
    let mut v_fixed = DVector::zeros(a.nrows());
    for (i, f) in cons.fixed.iter().enumerate() {
        if let Some(val) = f {
            v_fixed[i] = *val;
        }
    }
    let rhs = -(&a * &v_fixed);
    let sol = solve_reduced(&a, &rhs, &cons.free).ok_or(FemError::SingularMechSystem)?;
    for &i in &cons.free {
        state.velocity[i] = sol[i];
    }
    Ok(())
}

/// Refresh the per-Gauss-point scalars from the current velocity field.
fn update_gauss_state(
    state: &mut MechState,
    mat: &MaterialModel,
    mesh: &Mesh,
) -> Result<(), FemError> {
    for (e, elem) in mesh.elems.iter().enumerate() {
        let c = gather_coords(&state.coords, elem);
        let v8 = gather_velocity(&state.velocity, elem);
        for (g, &[xi, eta]) in GAUSS_2X2.iter().enumerate() {
            let kin = gauss_kinematics(e, &c, &v8, xi, eta)?;
            state.eff_strain_rate[e][g] = kin.rate;
            state.flow_stress[e][g] = mat.flow_stress(kin.rate).0;
        }
        let (dndx, dndy, _) = shape_gradients(&c, 0.0, 0.0)
            .map_err(|det| FemError::DegenerateElement { element: e, det })?;
        let mut eps_v = 0.0;
        for i in 0..4 {
            eps_v += dndx[i] * v8[2 * i] + dndy[i] * v8[2 * i + 1];
        }
        state.vol_rate[e] = eps_v;
        state.mean_stress[e] = mat.penalty * eps_v;
    }
    Ok(())
}

/// One mechanical solve on the current geometry.
///
/// Iterates `v ← v + α·Δv` with `J·Δv = −∂Π/∂v` on the free dofs and a
/// backtracking Armijo line search on Π, until both the relative velocity
/// correction and the free residual norm are below their tolerances.
pub fn solve_mech_step(
    state: &mut MechState,
    mat: &MaterialModel,
    mesh: &Mesh,
    opts: &SolverOptions,
) -> Result<SolveReport, FemError> {
    mat.validate()?;
    let cons = constraints_for(mesh, opts.die_speed, &state.captured_bc);
    cons.apply(&mut state.velocity);

    let mut direct_done = 0;
    for _ in 0..opts.direct_warmstart {
        direct_iteration(state, mat, mesh, &cons)?;
        direct_done += 1;
    }

    let mut energy_trace = Vec::new();
    let mut last_dv = f64::INFINITY;
    let mut res_norm = f64::INFINITY;
    for it in 1..=opts.max_iterations {
        let sys = assemble_mech(state, mat, mesh)?;
        if energy_trace.is_empty() {
            energy_trace.push(sys.energy);
        }
        res_norm =
            math::sqrt(cons.free.iter().map(|&i| sys.residual[i] * sys.residual[i]).sum::<f64>());
        if res_norm <= opts.tol_residual && last_dv <= opts.tol_velocity {
            update_gauss_state(state, mat, mesh)?;
            return Ok(SolveReport {
                iterations: it - 1,
                velocity_error: last_dv,
                residual_norm: res_norm,
                energy_trace,
                direct_iterations: direct_done,
            });
        }

        let minus_r = -&sys.residual;
        let delta =
            solve_reduced(&sys.jacobian, &minus_r, &cons.free).ok_or(FemError::SingularMechSystem)?;
        let slope = sys.residual.dot(&delta); // negative for a descent direction
        let v_norm = state.velocity.norm().max(f64::MIN_POSITIVE);

        // Within the Newton basin the predicted decrease −slope/2 drops
        // below the floating-point resolution of Π long before the residual
        // meets its tolerance; the Armijo test cannot certify descent there,
        // so take the plain Newton step.
        let resolution_limited =
            -slope <= 1e3 * f64::EPSILON * sys.energy.abs() && delta.norm() <= 1e-2 * v_norm;
        let (v_new, e_new, alpha) = if resolution_limited {
            let v_trial = &state.velocity + &delta;
            let e_trial = total_energy(mesh, &state.coords, &v_trial, mat, &state.contact_shear)?;
            (v_trial, e_trial, 1.0)
        } else {
            let mut alpha = 1.0;
            let mut accepted = None;
            for _ in 0..60 {
                let v_trial = &state.velocity + &delta * alpha;
                let e_trial =
                    total_energy(mesh, &state.coords, &v_trial, mat, &state.contact_shear)?;
                if e_trial <= sys.energy + 1e-4 * alpha * slope {
                    accepted = Some((v_trial, e_trial, alpha));
                    break;
                }
                alpha *= 0.5;
            }
            accepted.ok_or(FemError::LineSearchStalled { iteration: it })?
        };
        state.velocity = v_new;
        energy_trace.push(e_new);
        last_dv = alpha * delta.norm() / v_norm;
    }

    Err(FemError::NoConvergence {
        iterations: opts.max_iterations,
        velocity_error: last_dv,
        residual_norm: res_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform_state(mesh: &Mesh, mat: &MaterialModel, rate: f64) -> MechState {
        // v_x = +rate·x, v_y = −rate·y: homogeneous incompressible compression
        let mut state = MechState::new(mesh, mat, 1.0);
        for (i, p) in mesh.nodes.iter().enumerate() {
            state.velocity[2 * i] = rate * p[0];
            state.velocity[2 * i + 1] = -rate * p[1];
        }
        state
    }

    #[test]
    fn uniform_compression_on_a_single_element() {
        let mesh = Mesh::rect_grid(1.0, 1.0, 1, 1).unwrap();
        let mut mat = MaterialModel::benchmark(0.0);
        mat.penalty = 1e5;
        let rate = 0.1;
        let mut state = uniform_state(&mesh, &mat, rate);
        update_gauss_state(&mut state, &mat, &mesh).unwrap();
        let want = 2.0 * rate / 3.0f64.sqrt();
        for g in 0..4 {
            assert!((state.eff_strain_rate[0][g] - want).abs() < 1e-12);
        }
        // exactly isochoric: the penalty term contributes nothing
        assert!(state.vol_rate[0].abs() < 1e-14);
        let sys = assemble_mech(&state, &mat, &mesh).unwrap();
        let penalty_energy = 2.0 * mat.penalty * state.vol_rate[0] * state.vol_rate[0];
        assert!(penalty_energy < 1e-20);
        assert!(sys.energy > 0.0);
    }

    #[test]
    fn residual_and_jacobian_match_finite_differences() {
        let mesh = Mesh::rect_grid(2.0, 2.0, 2, 2).unwrap();
        let mut mat = MaterialModel::benchmark(0.5);
        mat.penalty = 1e4;
        let mut state = uniform_state(&mesh, &mat, 0.1);
        // perturb into a generic admissible configuration
        for i in 0..state.velocity.len() {
            state.velocity[i] += 1e-2 * ((i * 2654435761) % 97) as f64 / 97.0;
        }
        let sys = assemble_mech(&state, &mat, &mesh).unwrap();
        let h = 1e-6;
        for dof in [0usize, 3, 7, 10, 15] {
            let mut plus = state.clone();
            plus.velocity[dof] += h;
            let mut minus = state.clone();
            minus.velocity[dof] -= h;
            let ep = total_energy(&mesh, &state.coords, &plus.velocity, &mat, &state.contact_shear)
                .unwrap();
            let em =
                total_energy(&mesh, &state.coords, &minus.velocity, &mat, &state.contact_shear)
                    .unwrap();
            let fd = (ep - em) / (2.0 * h);
            let scale = sys.residual[dof].abs().max(1.0);
            assert!(
                (fd - sys.residual[dof]).abs() <= 2e-4 * scale,
                "dof {dof}: fd {fd} vs {}",
                sys.residual[dof]
            );

            let rp = assemble_mech(&plus, &mat, &mesh).unwrap().residual;
            let rm = assemble_mech(&minus, &mat, &mesh).unwrap().residual;
            let col_fd = (rp - rm) / (2.0 * h);
            for row in 0..sys.jacobian.nrows() {
                let scale = sys.jacobian[(row, dof)].abs().max(mat.penalty * 1e-4);
                assert!(
                    (col_fd[row] - sys.jacobian[(row, dof)]).abs() <= 1e-3 * scale,
                    "J[{row},{dof}]"
                );
            }
        }
    }

    #[test]
    fn jacobian_is_symmetric() {
        let mesh = Mesh::rect_grid(3.0, 2.0, 3, 2).unwrap();
        let mat = MaterialModel::benchmark(0.7);
        let mut state = uniform_state(&mesh, &mat, 0.1);
        for i in 0..state.velocity.len() {
            state.velocity[i] += 1e-2 * ((i * 40503) % 101) as f64 / 101.0;
        }
        let sys = assemble_mech(&state, &mat, &mesh).unwrap();
        let asym = (&sys.jacobian - sys.jacobian.transpose()).amax();
        assert!(asym <= 1e-8 * sys.jacobian.amax());
    }

    #[test]
    fn zero_velocity_stays_finite_through_the_regularized_floor() {
        let mesh = Mesh::rect_grid(2.0, 2.0, 2, 2).unwrap();
        let mat = MaterialModel::benchmark(0.3);
        let mut state = MechState::new(&mesh, &mat, 1.0);
        state.velocity.fill(0.0);
        let sys = assemble_mech(&state, &mat, &mesh).unwrap();
        assert!(sys.residual.iter().all(|x| x.is_finite()));
        assert!(sys.jacobian.iter().all(|x| x.is_finite()));
        // the deviatoric block carries the regularized stiffness σ̄₀/ε̇₀
        let a = mat.flow_coeff * libm::pow(mat.limit_rate, mat.flow_exp - 1.0);
        assert!(sys.jacobian.amax() >= 0.1 * a);
    }

    #[test]
    fn frictionless_solution_is_the_uniform_flow() {
        // A stiff penalty keeps the compressibility defect below the 1e-4
        // comparison band; at K = 1e5 the lateral flow is ~0.5% slower than
        // the ideal incompressible field.
        let mesh = Mesh::rect_grid(10.0, 10.0, 5, 5).unwrap();
        let mut mat = MaterialModel::benchmark(0.0);
        mat.penalty = 1e8;
        let mut state = MechState::new(&mesh, &mat, 1.0);
        // start away from the solution to actually exercise the solver
        for i in 0..state.velocity.len() {
            state.velocity[i] *= 0.7;
        }
        let opts = SolverOptions::default();
        let report = solve_mech_step(&mut state, &mat, &mesh, &opts).unwrap();
        assert!(report.residual_norm <= opts.tol_residual);

        let h = 10.0;
        for (i, p) in mesh.nodes.iter().enumerate() {
            let want_x = p[0] / h;
            let want_y = -p[1] / h;
            assert!((state.velocity[2 * i] - want_x).abs() <= 1e-4);
            assert!((state.velocity[2 * i + 1] - want_y).abs() <= 1e-4);
        }

        // independent scalar oracle for the penalized lateral rate:
        // minimize E(ε̇̄(a)) + K/2·(a+b)² over the uniform ansatz v_x = a·x
        let b = -1.0 / h;
        let mut lo = 0.5 * (-b);
        let mut hi = 1.5 * (-b);
        let dpi = |a: f64| {
            let rate = (2.0 / 3.0 * (a * a + b * b)).sqrt();
            let (sigma, _) = mat.flow_stress(rate);
            sigma / rate * (2.0 / 3.0) * a + mat.penalty * (a + b)
        };
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if dpi(mid) > 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        let a_star = 0.5 * (lo + hi);
        let probe = mesh.n_nodes() - 1; // top-right corner, x = 10
        assert!((state.velocity[2 * probe] - a_star * 10.0).abs() <= 1e-5 * a_star * 10.0);
    }

    #[test]
    fn friction_traction_limits() {
        let mat = MaterialModel::benchmark(0.4);
        let sigma = 800.0;
        assert_eq!(friction_traction(0.0, sigma, &mat), 0.0);
        let saturated = friction_traction(1e4 * mat.reg_velocity, sigma, &mat);
        let cap = mat.friction_m * sigma / 3.0f64.sqrt();
        assert!((saturated.abs() - cap).abs() <= 1e-3 * cap);
        assert!(saturated < 0.0); // opposes positive sliding
        let at_v0 = friction_traction(mat.reg_velocity, sigma, &mat);
        assert!((at_v0.abs() - mat.friction_m * sigma / (2.0 * 3.0f64.sqrt())).abs() < 1e-12);
        // odd in v_s
        let fwd = friction_traction(2.0, sigma, &mat);
        let bwd = friction_traction(-2.0, sigma, &mat);
        assert!((fwd + bwd).abs() < 1e-12);
    }

    #[test]
    fn benchmark_step_converges_and_respects_the_constraints() {
        let mesh = Mesh::rect_grid(10.0, 10.0, 10, 10).unwrap();
        for m in [0.1, 0.9] {
            let mat = MaterialModel::benchmark(m);
            let mut state = MechState::new(&mesh, &mat, 1.0);
            let opts = SolverOptions::default();
            let report = solve_mech_step(&mut state, &mat, &mesh, &opts).unwrap();
            assert!(report.iterations <= 200);

            for &n in &mesh.sym_x_nodes {
                assert_eq!(state.velocity[2 * n], 0.0);
            }
            for &n in &mesh.sym_y_nodes {
                assert_eq!(state.velocity[2 * n + 1], 0.0);
            }
            for &n in &mesh.contact_nodes {
                assert_eq!(state.velocity[2 * n + 1], -1.0);
            }

            // functional descent along accepted iterates
            for w in report.energy_trace.windows(2) {
                assert!(w[1] <= w[0] + 1e-12 * w[0].abs());
            }

            // penalized incompressibility: σ_m = K·ε̇_v by construction, and
            // the defect stays at the mean-stress-over-K scale
            let sigma_max = state
                .flow_stress
                .iter()
                .flat_map(|g| g.iter())
                .fold(0.0f64, |a, &b| a.max(b));
            for e in 0..mesh.n_elems() {
                assert!(
                    (state.mean_stress[e] - mat.penalty * state.vol_rate[e]).abs()
                        <= 1e-6 * state.mean_stress[e].abs().max(1e-12)
                );
                assert!(state.vol_rate[e].abs() <= 3.0 * sigma_max / mat.penalty);
            }
        }
    }

    #[test]
    fn direct_warmstart_reduces_the_first_residual() {
        let mesh = Mesh::rect_grid(10.0, 10.0, 6, 6).unwrap();
        let mat = MaterialModel::benchmark(0.6);
        let opts_plain = SolverOptions::default();
        let opts_warm = SolverOptions {
            direct_warmstart: 2,
            ..SolverOptions::default()
        };
        let mut s1 = MechState::new(&mesh, &mat, 1.0);
        let r1 = solve_mech_step(&mut s1, &mat, &mesh, &opts_plain).unwrap();
        let mut s2 = MechState::new(&mesh, &mat, 1.0);
        let r2 = solve_mech_step(&mut s2, &mat, &mesh, &opts_warm).unwrap();
        assert_eq!(r2.direct_iterations, 2);
        assert!(r2.iterations <= r1.iterations + 1);
        // both end at the same velocity field
        assert!((s1.velocity - s2.velocity).amax() < 1e-6);
    }

    #[test]
    fn unconverged_solves_report_both_norms() {
        let mesh = Mesh::rect_grid(10.0, 10.0, 4, 4).unwrap();
        let mat = MaterialModel::benchmark(0.9);
        let mut state = MechState::new(&mesh, &mat, 1.0);
        let opts = SolverOptions {
            max_iterations: 1,
            ..SolverOptions::default()
        };
        match solve_mech_step(&mut state, &mat, &mesh, &opts) {
            Err(FemError::NoConvergence {
                iterations: 1,
                velocity_error,
                residual_norm,
            }) => {
                assert!(velocity_error.is_finite());
                assert!(residual_norm.is_finite());
            }
            other => panic!("expected NoConvergence, got {other:?}"),
        }
    }
}
