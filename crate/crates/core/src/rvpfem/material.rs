//! Rigid-viscoplastic material data: power-law flow stress, penalty
//! constant, friction and thermal properties.

use crate::math;

use super::FemError;

/// Units: mm, s, MPa (= N/mm²), °C.
///
/// The flow stress is the rate-dependent power law `σ̄ = c·ε̇̄^p`,
/// regularized to linear-viscous below the limiting strain rate `ε̇₀` so the
/// stiffness stays finite for (nearly) rigid regions.
#[derive(Debug, Clone, PartialEq)]
pub struct MaterialModel {
    /// Flow-stress coefficient c in MPa.
    pub flow_coeff: f64,
    /// Flow-stress exponent p in (0, 1).
    pub flow_exp: f64,
    /// Limiting strain rate ε̇₀ in 1/s.
    pub limit_rate: f64,
    /// Penalty constant K (bulk-modulus-like) in MPa·s; must dwarf c.
    pub penalty: f64,
    /// Shear friction factor m in [0, 1).
    pub friction_m: f64,
    /// Friction regularization velocity v₀ in mm/s, several orders below
    /// the sliding speed.
    pub reg_velocity: f64,
    /// Taylor–Quinney coefficient ξ in (0, 1]: fraction of plastic work
    /// converted to heat.
    pub taylor_quinney: f64,
    /// Volume-specific heat ρc in N/(mm²·°C).
    pub heat_capacity: f64,
    /// Thermal conductivity k in N/(s·°C).
    pub conductivity: f64,
}

impl MaterialModel {
    /// Steel-like defaults with the benchmark viscoplastic constants:
    /// `σ̄ = 1000·ε̇̄^0.1` MPa, ε̇₀ = 0.01, K = 10⁵.
    pub fn benchmark(friction_m: f64) -> Self {
        MaterialModel {
            flow_coeff: 1000.0,
            flow_exp: 0.1,
            limit_rate: 0.01,
            penalty: 1e5,
            friction_m,
            reg_velocity: 1e-3,
            taylor_quinney: 0.9,
            heat_capacity: 3.6,
            conductivity: 30.0,
        }
    }

    // negated comparisons so NaN constants fail validation too
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), FemError> {
        let bad = |what: &str| Err(FemError::InvalidMaterial(alloc::string::String::from(what)));
        if !(self.flow_coeff > 0.0) {
            return bad("flow coefficient must be positive");
        }
        if !(self.flow_exp > 0.0 && self.flow_exp < 1.0) {
            return bad("flow exponent must lie in (0, 1)");
        }
        if !(self.limit_rate > 0.0) {
            return bad("limiting strain rate must be positive");
        }
        if !(self.penalty >= 10.0 * self.flow_coeff) {
            return bad("penalty constant must dwarf the flow coefficient");
        }
        if !(self.friction_m >= 0.0 && self.friction_m < 1.0) {
            return bad("friction factor must lie in [0, 1)");
        }
        if !(self.reg_velocity > 0.0) {
            return bad("friction regularization velocity must be positive");
        }
        if !(self.taylor_quinney > 0.0 && self.taylor_quinney <= 1.0) {
            return bad("Taylor-Quinney coefficient must lie in (0, 1]");
        }
        if !(self.heat_capacity > 0.0) || !(self.conductivity >= 0.0) {
            return bad("thermal constants must be positive");
        }
        Ok(())
    }

    /// Flow stress σ̄ and its derivative dσ̄/dε̇̄.
    pub fn flow_stress(&self, rate: f64) -> (f64, f64) {
        if rate >= self.limit_rate {
            let s = self.flow_coeff * math::powf(rate, self.flow_exp);
            (s, self.flow_exp * s / rate)
        } else {
            // linear-viscous continuation, continuous in value and slope
            let a = self.flow_coeff * math::powf(self.limit_rate, self.flow_exp - 1.0);
            (a * rate, a)
        }
    }

    /// Work-rate density potential `E(ε̇̄) = ∫₀^ε̇̄ σ̄(e) de`; its first
    /// variation supplies the `σ̄·δε̇̄` term of the functional.
    pub fn work_density(&self, rate: f64) -> f64 {
        let q = 1.0 + self.flow_exp;
        if rate >= self.limit_rate {
            self.flow_coeff / q * math::powf(rate, q)
        } else {
            let a = self.flow_coeff * math::powf(self.limit_rate, self.flow_exp - 1.0);
            let offset = self.flow_coeff * math::powf(self.limit_rate, q) * (1.0 / q - 0.5);
            0.5 * a * rate * rate + offset
        }
    }

    /// Shear yield stress `k = σ̄/√3`.
    pub fn shear_yield(&self, sigma_bar: f64) -> f64 {
        sigma_bar / math::sqrt(3.0)
    }
}
