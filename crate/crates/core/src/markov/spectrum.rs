use nalgebra::linalg::Schur;
use nalgebra::Complex;

use crate::error::{Error, Result};
use crate::markov::Generator;

/// Relaxation data read off the full spectrum of `L`.
#[derive(Debug, Clone)]
pub struct SpectralGap {
    /// `min Re(−λ)` over nonzero eigenvalues `λ`.
    pub gap: f64,
    /// Whether the eigenvalue attaining the gap is real.
    pub gap_is_real: bool,
    /// Number of eigenvalues (with multiplicity) whose real part attains the gap.
    pub multiplicity: usize,
    /// Next distinct decay rate above the gap (infinite for two-state chains).
    pub next_rate: f64,
    pub eigenvalues: Vec<Complex<f64>>,
}

impl SpectralGap {
    /// A real, simple gap separated from the rest of the spectrum by `ratio`.
    pub fn is_simple(&self, ratio: f64) -> bool {
        self.gap_is_real && self.multiplicity == 1 && self.next_rate >= ratio * self.gap
    }
}

pub fn spectral_gap(l: &Generator) -> Result<SpectralGap> {
    let scale = l.sup_norm().max(1.0);
    let schur = Schur::try_new(l.matrix().clone(), 1e-15 * scale, 100_000)
        .ok_or(Error::Singular("Schur decomposition did not converge"))?;
    let eigenvalues: Vec<Complex<f64>> = schur.complex_eigenvalues().iter().copied().collect();
    let zero_tol = 1e-9 * scale;
    let mut rates: Vec<(f64, f64)> = eigenvalues
        .iter()
        .filter(|z| z.norm() > zero_tol)
        .map(|z| (-z.re, z.im))
        .collect();
    if rates.is_empty() {
        return Err(Error::InvalidArgument("generator has no nonzero eigenvalue".into()));
    }
    rates.sort_by(|a, b| a.0.total_cmp(&b.0));
    let gap = rates[0].0;
    let same = 1e-7 * scale;
    let attaining: Vec<_> = rates.iter().filter(|r| (r.0 - gap).abs() <= same).collect();
    let gap_is_real = attaining.iter().all(|r| r.1.abs() <= same);
    let next_rate = rates
        .iter()
        .map(|r| r.0)
        .find(|&r| r - gap > same)
        .unwrap_or(f64::INFINITY);
    Ok(SpectralGap { gap, gap_is_real, multiplicity: attaining.len(), next_rate, eigenvalues })
}
