//! Response functions `R(s,t) = P_s A_f P_{t−s} g` and the linear-response limit.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::fit::loglog_slope;
use crate::markov::{Measure, Observable, Uniformized};
use crate::perturbation::{FamilyKind, PerturbationFamily};

/// Norm a residual is measured in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum NormKind {
    Sup,
    L2,
}

impl NormKind {
    /// Sup-norm for time changes and bounded kernels, `L₂(μ⁰)` for the Langevin family.
    pub fn for_family(kind: FamilyKind) -> Self {
        match kind {
            FamilyKind::Langevin => NormKind::L2,
            _ => NormKind::Sup,
        }
    }
}

/// `(s, t)` with `0 ≤ s ≤ t`.
pub(crate) fn check_times(s: f64, t: f64) -> Result<()> {
    if !(s >= 0.0 && s <= t && t.is_finite()) {
        return Err(Error::BadTimes { s, t });
    }
    Ok(())
}

fn tail(fam: &PerturbationFamily) -> f64 {
    fam.tolerances().expm_tail
}

/// `R(s,t) = P_s A_f P_{t−s} g` for the base dynamics of `fam`.
pub fn response_function(fam: &PerturbationFamily, g: &Observable, s: f64, t: f64) -> Result<Observable> {
    check_times(s, t)?;
    g.check_len(fam.n())?;
    let p = fam.base().semigroup();
    let inner = p.apply(t - s, g, tail(fam))?;
    p.apply(s, &fam.kernel().apply(&inner), tail(fam))
}

/// `∫₀ᵗ P_s A_f P_{t−s} ĝ ds` from the corner block of `exp(t [[L, A_f], [0, L]])`.
pub fn response_integral(fam: &PerturbationFamily, g: &Observable, t: f64) -> Result<Observable> {
    check_times(0.0, t)?;
    g.check_len(fam.n())?;
    let v = convolution(fam.base().matrix(), fam.kernel().matrix(), g.values(), t, tail(fam))?;
    Observable::new(v)
}

/// `∫₀ᵗ e^{sL} A e^{(t−s)L} v ds` for arbitrary square `A`.
pub(crate) fn convolution(l: &DMatrix<f64>, a: &DMatrix<f64>, v: &DVector<f64>, t: f64, tail: f64) -> Result<DVector<f64>> {
    let n = l.nrows();
    let mut block = DMatrix::zeros(2 * n, 2 * n);
    block.view_mut((0, 0), (n, n)).copy_from(l);
    block.view_mut((0, n), (n, n)).copy_from(a);
    block.view_mut((n, n), (n, n)).copy_from(l);
    let mut x = DVector::zeros(2 * n);
    x.rows_mut(n, n).copy_from(v);
    let y = Uniformized::new(&block).apply_vec(t, &x, tail)?;
    Ok(y.rows(0, n).into_owned())
}

/// Composite Simpson rule for the same integral with `panels` (even) subintervals.
pub fn simpson_response_integral(fam: &PerturbationFamily, g: &Observable, t: f64, panels: usize) -> Result<Observable> {
    check_times(0.0, t)?;
    g.check_len(fam.n())?;
    if panels == 0 || panels % 2 != 0 {
        return Err(Error::InvalidArgument(format!("Simpson needs an even panel count, got {panels}")));
    }
    let p = fam.base().semigroup();
    let h = t / panels as f64;
    let tl = tail(fam);
    // Right factors P_{t−s_i} g by stepping back from s = t.
    let mut right = vec![g.clone(); panels + 1];
    for i in (0..panels).rev() {
        right[i] = p.apply(h, &right[i + 1], tl)?;
    }
    let mut acc = DVector::zeros(fam.n());
    for (i, r) in right.iter().enumerate() {
        let w = if i == 0 || i == panels {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let term = p.apply(i as f64 * h, &fam.kernel().apply(r), tl)?;
        acc += term.values() * w;
    }
    Observable::new(acc * (h / 3.0))
}

/// `‖v‖` in the requested norm, with `μ` weighting the `L₂` case.
pub fn norm(v: &Observable, kind: NormKind, mu: &Measure) -> f64 {
    match kind {
        NormKind::Sup => v.sup_norm(),
        NormKind::L2 => mu.l2_norm(v),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct FiniteDifference {
    pub delta: f64,
    pub t: f64,
    #[serde(skip)]
    pub difference: Observable,
    #[serde(skip)]
    pub integral: Observable,
    pub eta_sup: f64,
    pub eta_l2: f64,
    /// The norm matching the family.
    pub norm: NormKind,
}

impl FiniteDifference {
    pub fn eta(&self) -> f64 {
        match self.norm {
            NormKind::Sup => self.eta_sup,
            NormKind::L2 => self.eta_l2,
        }
    }
}

fn finite_difference_parts(
    fam: &PerturbationFamily,
    p0: &Uniformized,
    integral: &Observable,
    g: &Observable,
    t: f64,
    delta: f64,
) -> Result<FiniteDifference> {
    let pd = fam.generator_at(delta)?.semigroup();
    let tl = tail(fam);
    let diff = pd.apply(t, g, tl)?.sub(&p0.apply(t, g, tl)?).scale(1.0 / delta);
    let err = diff.sub(integral);
    Ok(FiniteDifference {
        delta,
        t,
        eta_sup: err.sup_norm() / t,
        eta_l2: fam.mu0().l2_norm(&err) / t,
        difference: diff,
        integral: integral.clone(),
        norm: NormKind::for_family(fam.kind()),
    })
}

/// `δ⁻¹(P_t^{δf} − P_t)ĝ` and `η = ‖· − ∫₀ᵗ R(s,t) ds‖ / t`.
pub fn finite_difference_response(fam: &PerturbationFamily, g: &Observable, t: f64, delta: f64) -> Result<FiniteDifference> {
    if !(t > 0.0) {
        return Err(Error::BadTimes { s: 0.0, t });
    }
    let integral = response_integral(fam, g, t)?;
    finite_difference_parts(fam, &fam.base().semigroup(), &integral, g, t, delta)
}

#[derive(Debug, Clone, Serialize)]
pub struct Sweep {
    pub deltas: Vec<f64>,
    pub eta_sup: Vec<f64>,
    pub eta_l2: Vec<f64>,
    pub norm: NormKind,
    /// Fitted slope of `log η` against `log δ` in the family's norm.
    pub slope: Option<f64>,
}

impl Sweep {
    pub fn eta(&self) -> &[f64] {
        match self.norm {
            NormKind::Sup => &self.eta_sup,
            NormKind::L2 => &self.eta_l2,
        }
    }

    /// `η` nonincreasing as `δ` shrinks, allowing `jitter` relative rise.
    pub fn is_monotone(&self, jitter: f64) -> bool {
        let mut order: Vec<usize> = (0..self.deltas.len()).collect();
        order.sort_by(|&a, &b| self.deltas[b].total_cmp(&self.deltas[a]));
        let eta = self.eta();
        order.windows(2).all(|w| eta[w[1]] <= eta[w[0]] * (1.0 + jitter))
    }
}

/// Finite-difference residuals over a `δ` grid, sharing one response integral.
pub fn response_sweep(fam: &PerturbationFamily, g: &Observable, t: f64, deltas: &[f64]) -> Result<Sweep> {
    if !(t > 0.0) {
        return Err(Error::BadTimes { s: 0.0, t });
    }
    let integral = response_integral(fam, g, t)?;
    let p0 = fam.base().semigroup();
    let rows: Vec<FiniteDifference> = deltas
        .par_iter()
        .map(|&d| finite_difference_parts(fam, &p0, &integral, g, t, d))
        .collect::<Result<_>>()?;
    let eta_sup: Vec<f64> = rows.iter().map(|r| r.eta_sup).collect();
    let eta_l2: Vec<f64> = rows.iter().map(|r| r.eta_l2).collect();
    let norm = NormKind::for_family(fam.kind());
    let slope = loglog_slope(deltas, if norm == NormKind::Sup { &eta_sup } else { &eta_l2 });
    Ok(Sweep { deltas: deltas.to_vec(), eta_sup, eta_l2, norm, slope })
}

#[derive(Debug, Clone, Serialize)]
pub struct WindowedResponse {
    pub residual_sup: f64,
    pub residual_l2: f64,
    pub norm: NormKind,
}

impl WindowedResponse {
    pub fn residual(&self) -> f64 {
        match self.norm {
            NormKind::Sup => self.residual_sup,
            NormKind::L2 => self.residual_l2,
        }
    }
}

/// Perturbation switched on during `[a, a+t]` and observed at `a+t+b`.
///
/// Compares `δ⁻¹ P_a (P_t^{δf} − P_t) P_b g` with `∫_a^{a+t} R(u, a+t+b) du`,
/// per unit `t`.
pub fn windowed_response_check(
    fam: &PerturbationFamily,
    g: &Observable,
    a: f64,
    b: f64,
    t: f64,
    delta: f64,
) -> Result<WindowedResponse> {
    for v in [a, b, t] {
        if !(v >= 0.0 && v.is_finite()) {
            return Err(Error::NegativeTime(v));
        }
    }
    g.check_len(fam.n())?;
    let norm = NormKind::for_family(fam.kind());
    if t == 0.0 {
        return Ok(WindowedResponse { residual_sup: 0.0, residual_l2: 0.0, norm });
    }
    let tl = tail(fam);
    let p0 = fam.base().semigroup();
    let pd = fam.generator_at(delta)?.semigroup();
    let gb = p0.apply(b, g, tl)?;
    let lhs = p0.apply(a, &pd.apply(t, &gb, tl)?.sub(&p0.apply(t, &gb, tl)?), tl)?.scale(1.0 / delta);
    let rhs = p0.apply(a, &response_integral(fam, &gb, t)?, tl)?;
    let err = lhs.sub(&rhs);
    Ok(WindowedResponse { residual_sup: err.sup_norm() / t, residual_l2: fam.mu0().l2_norm(&err) / t, norm })
}

#[derive(Debug, Clone, Serialize)]
pub struct KernelConvergence {
    pub deltas: Vec<f64>,
    /// `‖δ⁻¹(L^{δf} − L) − A_f‖` in the induced sup-norm.
    pub residuals: Vec<f64>,
    pub slope: Option<f64>,
}

pub fn kernel_norm_convergence(fam: &PerturbationFamily, deltas: &[f64]) -> Result<KernelConvergence> {
    let residuals: Vec<f64> = deltas.iter().map(|&d| fam.kernel_defect(d)).collect::<Result<_>>()?;
    Ok(KernelConvergence { slope: loglog_slope(deltas, &residuals), deltas: deltas.to_vec(), residuals })
}

/// Dyadic grid `2^{-lo}, …, 2^{-hi}`.
pub fn dyadic_deltas(lo: i32, hi: i32) -> Vec<f64> {
    (lo..=hi).map(|k| 2f64.powi(-k)).collect()
}
