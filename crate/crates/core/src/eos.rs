//! Gamma-law equation of state for a liquid-like fluid: pressure vanishes at
//! the reference (boundary) density `rho0` and increases with compression.
//!
//! All derived thermodynamic quantities are closed forms:
//! `p(rho) = k (rho^gamma - rho0^gamma)`, the enthalpy
//! `h(rho) = integral of p'(s)/s` from `rho0`, the potential
//! `q_pot(rho) = integral of 2 (p(s) - p(rho0)) / s^2` from `rho0`,
//! and `e(h) = log rho(h)` with `e'(h) = 1 / p'(rho)`.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EquationOfState {
    /// Stiffness prefactor, must be positive.
    pub k: f64,
    /// Adiabatic exponent, must exceed 1.
    pub gamma: f64,
    /// Reference density at which the pressure vanishes.
    pub rho0: f64,
}

/// Thermodynamic state at one density.
#[derive(Clone, Copy, Debug, Default)]
pub struct EosPoint {
    pub p: f64,
    pub p_prime: f64,
    pub h: f64,
    /// dh/drho = p'(rho)/rho; also h'(rho) in the operator coefficients.
    pub h_prime: f64,
    /// e'(h) = 1/p'(rho) where e(h) = log rho.
    pub e_prime: f64,
    /// Potential-energy density entering the conserved nonlinear energy.
    pub q_pot: f64,
}

impl EquationOfState {
    pub fn new(k: f64, gamma: f64, rho0: f64) -> Result<Self> {
        if !(k > 0.0) || !(gamma > 1.0) || !(rho0 > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "equation of state requires k > 0, gamma > 1, rho0 > 0 (got {k}, {gamma}, {rho0})"
            )));
        }
        Ok(EquationOfState { k, gamma, rho0 })
    }

    /// Evaluates the state, rejecting densities below the reference density
    /// (up to a relative slack of 1e-9 for rounding in `kappa`).
    pub fn eval(&self, rho: f64) -> Result<EosPoint> {
        if rho < self.rho0 * (1.0 - 1e-9) {
            return Err(Error::VacuumDensity {
                rho,
                rho0: self.rho0,
            });
        }
        Ok(self.eval_extended(rho))
    }

    /// Same formulas without the admissibility guard. Used internally when a
    /// deliberately inadmissible background (failing the sign condition on
    /// the boundary pressure gradient) must still be assembled so the
    /// validation suite can exhibit the failure.
    pub fn eval_extended(&self, rho: f64) -> EosPoint {
        let (k, g, r0) = (self.k, self.gamma, self.rho0);
        let p = k * (rho.powf(g) - r0.powf(g));
        let p_prime = k * g * rho.powf(g - 1.0);
        let h = k * g / (g - 1.0) * (rho.powf(g - 1.0) - r0.powf(g - 1.0));
        let h_prime = p_prime / rho;
        let e_prime = 1.0 / p_prime;
        // integral of 2 k (s^g - r0^g) / s^2 from r0 to rho.
        let q_pot = 2.0 * k
            * ((rho.powf(g - 1.0) - r0.powf(g - 1.0)) / (g - 1.0)
                + r0.powf(g) * (1.0 / rho - 1.0 / r0));
        EosPoint {
            p,
            p_prime,
            h,
            h_prime,
            e_prime,
            q_pot,
        }
    }
}
