use serde::Serialize;

use crate::error::Result;
use crate::markov::reversibility_residual;
use crate::perturbation::PerturbationFamily;

/// Residuals of one `L^{δf}`.
#[derive(Debug, Clone, Serialize)]
pub struct FamilyCheck {
    pub delta: f64,
    pub row_sum_residual: f64,
    pub min_offdiag: f64,
    /// `‖(e^{δf}∘μ⁰)ᵀ L^{δf}‖∞`.
    pub invariance_residual: f64,
    /// Detailed-balance residual against `e^{δf−H}`; Hamiltonian families only.
    pub reversibility_residual: Option<f64>,
}

impl FamilyCheck {
    pub fn passes(&self, invariance_tol: f64, row_tol: f64) -> bool {
        self.row_sum_residual <= row_tol
            && self.min_offdiag >= 0.0
            && self.invariance_residual <= invariance_tol
            && self.reversibility_residual.is_none_or(|r| r <= invariance_tol)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FamilyVerification {
    pub family: String,
    pub kernel_row_sum_residual: f64,
    pub checks: Vec<FamilyCheck>,
}

impl FamilyVerification {
    pub fn max_invariance_residual(&self) -> f64 {
        self.checks.iter().map(|c| c.invariance_residual).fold(0.0, f64::max)
    }

    pub fn passes(&self, invariance_tol: f64, row_tol: f64) -> bool {
        self.kernel_row_sum_residual <= row_tol && self.checks.iter().all(|c| c.passes(invariance_tol, row_tol))
    }
}

/// Evaluates the family invariants at each `δ` of the grid.
pub fn verify_family(fam: &PerturbationFamily, deltas: &[f64]) -> Result<FamilyVerification> {
    let mut checks = Vec::with_capacity(deltas.len());
    for &delta in deltas {
        let l = fam.generator_at(delta)?;
        let tilted = fam.tilted_measure(delta);
        checks.push(FamilyCheck {
            delta,
            row_sum_residual: l.row_sum_residual(),
            min_offdiag: l.min_offdiag(),
            invariance_residual: crate::markov::invariance_residual(&l, &tilted),
            reversibility_residual: fam.kind().is_hamiltonian().then(|| reversibility_residual(&l, &tilted)),
        });
    }
    Ok(FamilyVerification {
        family: fam.kind().to_string(),
        kernel_row_sum_residual: fam.kernel().row_sum_residual(),
        checks,
    })
}
