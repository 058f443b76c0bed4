//! Numerical tolerances shared by every check in the crate.
//!
//! Checks compare an achieved residual against one of these fields and report
//! both, so a failing run shows how far off it was.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Tolerances {
    /// Row-sum tolerance for generators and kernels.
    pub row_sum: f64,
    /// Poisson tail mass at which the uniformization series is truncated.
    pub expm_tail: f64,
    /// Invariance residual `‖μᵀL‖∞` accepted for a computed invariant measure.
    pub invariant: f64,
    /// Invariance / balance residual accepted for user supplied measures.
    pub balance: f64,
    /// Reversibility residual `max |μ(x)c(x,y) − μ(y)c(y,x)|`.
    pub reversible: f64,
    /// Absolute tolerance when comparing an energy difference to zero.
    pub metropolis_tie: f64,
    /// Equilibrium FDT residual.
    pub fdt: f64,
    /// Static identity residual `⟨(A_f + fL)ĝ⟩_μ⁰`.
    pub static_identity: f64,
    /// Agreement between the analytic s-derivative formulas.
    pub derivative_modes: f64,
    /// Agreement with Richardson-extrapolated numerical differentiation.
    pub numerical_derivative: f64,
    /// Relative agreement between the block exponential and Simpson quadrature.
    pub quadrature: f64,
    /// Relative Green–Kubo residual.
    pub green_kubo: f64,
    /// Symmetry residual of `diag(μ⁰)(A_f + fL)`.
    pub b_symmetry: f64,
    /// Round-off floor below which decay fits ignore points.
    pub decay_floor: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            row_sum: 1e-12,
            expm_tail: 1e-14,
            invariant: 1e-12,
            balance: 1e-10,
            reversible: 1e-10,
            metropolis_tie: 1e-12,
            fdt: 1e-9,
            static_identity: 1e-10,
            derivative_modes: 1e-10,
            numerical_derivative: 1e-7,
            quadrature: 1e-8,
            green_kubo: 1e-6,
            b_symmetry: 1e-10,
            decay_floor: 1e-11,
        }
    }
}

impl Tolerances {
    /// Overrides one field by name; returns `false` for an unknown key.
    pub fn set(&mut self, key: &str, value: f64) -> bool {
        let slot = match key {
            "row_sum" => &mut self.row_sum,
            "expm_tail" => &mut self.expm_tail,
            "invariant" => &mut self.invariant,
            "balance" => &mut self.balance,
            "reversible" => &mut self.reversible,
            "metropolis_tie" => &mut self.metropolis_tie,
            "fdt" => &mut self.fdt,
            "static_identity" => &mut self.static_identity,
            "derivative_modes" => &mut self.derivative_modes,
            "numerical_derivative" => &mut self.numerical_derivative,
            "quadrature" => &mut self.quadrature,
            "green_kubo" => &mut self.green_kubo,
            "b_symmetry" => &mut self.b_symmetry,
            "decay_floor" => &mut self.decay_floor,
            _ => return false,
        };
        *slot = value;
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn set_by_name() {
        let mut tol = Tolerances::default();
        assert!(tol.set("fdt", 1e-6));
        assert_eq!(tol.fdt, 1e-6);
        assert!(!tol.set("nope", 1.0));
    }

    #[test]
    fn partial_json_keeps_defaults() {
        let tol: Tolerances = serde_json::from_str(r#"{"fdt": 1e-8}"#).unwrap();
        assert_eq!(tol.fdt, 1e-8);
        assert_eq!(tol.row_sum, 1e-12);
    }
}
