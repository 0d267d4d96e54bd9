//! Heat transfer: `C·Ṫ + K·T = Q` with a θ-scheme in time.
//!
//! The plastic dissipation `ξ·σ̄·ε̇̄` of the converged mechanical state is
//! the only heat source; all boundaries are adiabatic (symmetry planes by
//! symmetry, free surface and die face by modeling choice), so with a
//! positive source the temperature can only rise.

use nalgebra::{DMatrix, DVector};

use super::material::MaterialModel;
use super::mech::MechState;
use super::mesh::{gather_coords, shape_gradients, shape_values, Mesh, GAUSS_2X2};
use super::FemError;

/// Nodal temperatures plus the heat matrices assembled by the last step.
#[derive(Debug, Clone)]
pub struct ThermalState {
    /// Nodal temperatures, °C.
    pub temperature: DVector<f64>,
    /// Heat capacity matrix C (lumped to its diagonal when requested).
    pub capacity: DMatrix<f64>,
    /// Conduction matrix K_c.
    pub conduction: DMatrix<f64>,
    /// Heat flux vector Q from plastic dissipation.
    pub flux: DVector<f64>,
}

impl ThermalState {
    pub fn uniform(n_nodes: usize, t0: f64) -> Self {
        ThermalState {
            temperature: DVector::from_element(n_nodes, t0),
            capacity: DMatrix::zeros(0, 0),
            conduction: DMatrix::zeros(0, 0),
            flux: DVector::zeros(0),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ThermalOptions {
    /// Time integration parameter: 0 forward Euler, 1/2 Crank–Nicolson,
    /// 1 backward Euler. Unconditionally stable for θ ≥ 1/2.
    pub theta: f64,
    /// Row-sum lumping of the capacity matrix; keeps the update monotone.
    pub lumped_capacity: bool,
    /// Interface film coefficient to the isothermal die on the contact
    /// face, N/(mm·s·°C). Zero keeps every boundary adiabatic.
    pub die_film: f64,
    /// Die temperature, °C.
    pub die_temperature: f64,
    /// Convection/radiation film to ambient air on the lateral free
    /// surface, N/(mm·s·°C). Zero keeps that face adiabatic.
    pub ambient_film: f64,
    /// Ambient temperature, °C.
    pub ambient_temperature: f64,
}

impl Default for ThermalOptions {
    fn default() -> Self {
        ThermalOptions {
            theta: 1.0,
            lumped_capacity: true,
            die_film: 0.0,
            die_temperature: 25.0,
            ambient_film: 0.0,
            ambient_temperature: 25.0,
        }
    }
}

/// Advance the temperature field by one increment:
/// `[C + θ·Δt·K]·T_{t+Δt} = [C − (1−θ)·Δt·K]·T_t + Δt·Q`.
pub fn thermal_step(
    th: &mut ThermalState,
    mech: &MechState,
    mat: &MaterialModel,
    mesh: &Mesh,
    dt: f64,
    opts: &ThermalOptions,
) -> Result<(), FemError> {
    let n = mesh.n_nodes();
    let mut capacity = DMatrix::zeros(n, n);
    let mut conduction = DMatrix::zeros(n, n);
    let mut flux = DVector::zeros(n);

    for (e, elem) in mesh.elems.iter().enumerate() {
        let c = gather_coords(&mech.coords, elem);
        for (g, &[xi, eta]) in GAUSS_2X2.iter().enumerate() {
            let (dndx, dndy, det) = shape_gradients(&c, xi, eta)
                .map_err(|det| FemError::DegenerateElement { element: e, det })?;
            let shape = shape_values(xi, eta);
            let source =
                mat.taylor_quinney * mech.flow_stress[e][g] * mech.eff_strain_rate[e][g];
            for i in 0..4 {
                flux[elem[i]] += det * source * shape[i];
                for j in 0..4 {
                    capacity[(elem[i], elem[j])] += det * mat.heat_capacity * shape[i] * shape[j];
                    conduction[(elem[i], elem[j])] +=
                        det * mat.conductivity * (dndx[i] * dndx[j] + dndy[i] * dndy[j]);
                }
            }
        }
    }

    // film boundary terms: isothermal die on the contact face, ambient air
    // on the lateral free surface (symmetry planes stay adiabatic)
    let mut film_edges: alloc::vec::Vec<([usize; 2], f64, f64)> = alloc::vec::Vec::new();
    if opts.die_film > 0.0 {
        for edge in &mesh.contact_edges {
            film_edges.push((edge.nodes, opts.die_film, opts.die_temperature));
        }
    }
    if opts.ambient_film > 0.0 {
        for edge in &mesh.free_edges {
            film_edges.push((*edge, opts.ambient_film, opts.ambient_temperature));
        }
    }
    for ([a, b], film, sink) in film_edges {
        let (pa, pb) = (mech.coords[a], mech.coords[b]);
        let (dx, dy) = (pb[0] - pa[0], pb[1] - pa[1]);
        let half = 0.5 * crate::math::sqrt(dx * dx + dy * dy) * film;
        for &gp in &[-super::mesh::GP, super::mesh::GP] {
            let shape = [0.5 * (1.0 - gp), 0.5 * (1.0 + gp)];
            for i in 0..2 {
                let ni = if i == 0 { a } else { b };
                flux[ni] += half * sink * shape[i];
                for j in 0..2 {
                    let nj = if j == 0 { a } else { b };
                    conduction[(ni, nj)] += half * shape[i] * shape[j];
                }
            }
        }
    }

    if opts.lumped_capacity {
        let mut lumped = DMatrix::zeros(n, n);
        for i in 0..n {
            lumped[(i, i)] = capacity.row(i).sum();
        }
        capacity = lumped;
    }

    let lhs = &capacity + &conduction * (opts.theta * dt);
    let rhs = (&capacity - &conduction * ((1.0 - opts.theta) * dt)) * &th.temperature
        + &flux * dt;
    let solved = lhs
        .cholesky()
        .ok_or(FemError::SingularThermalSystem)?
        .solve(&rhs);

    th.temperature = solved;
    th.capacity = capacity;
    th.conduction = conduction;
    th.flux = flux;
    Ok(())
}
