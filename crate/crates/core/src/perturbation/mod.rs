//! Markovian perturbations `δ ↦ L^{δf}` of a base chain and their response kernels.
//!
//! Every family keeps `e^{δf}∘μ⁰` invariant for `L^{δf}` and carries the
//! kernel `A_f` with `δ⁻¹(L^{δf} − L) → A_f`.

mod cycles;
mod hamiltonian;
mod verify;

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::config::Tolerances;
use crate::error::{Error, Result};
use crate::markov::{adjoint, invariance_residual, reversibility_residual, Generator, Measure, Observable, StateSpace};

pub use cycles::{decompose_cycles, WeightedCycle};
pub use hamiltonian::{AcceptanceRule, HamiltonianGraph};
pub use verify::{verify_family, FamilyCheck, FamilyVerification};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyKind {
    TimeChange,
    Langevin,
    GeneralB,
    Cycle,
    Metropolis,
    Glauber,
}

impl FamilyKind {
    pub const ALL: [FamilyKind; 6] = [
        FamilyKind::TimeChange,
        FamilyKind::Langevin,
        FamilyKind::GeneralB,
        FamilyKind::Cycle,
        FamilyKind::Metropolis,
        FamilyKind::Glauber,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FamilyKind::TimeChange => "time_change",
            FamilyKind::Langevin => "langevin",
            FamilyKind::GeneralB => "general_b",
            FamilyKind::Cycle => "cycle",
            FamilyKind::Metropolis => "metropolis",
            FamilyKind::Glauber => "glauber",
        }
    }

    pub fn is_hamiltonian(self) -> bool {
        matches!(self, FamilyKind::Metropolis | FamilyKind::Glauber)
    }
}

impl fmt::Display for FamilyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FamilyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.replace('-', "_").to_ascii_lowercase();
        FamilyKind::ALL
            .into_iter()
            .find(|k| k.as_str() == norm)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown family {s:?}")))
    }
}

/// The operator `A_f g(x) = Σ_y a(x,y)(g(y) − g(x))`.
///
/// Off-diagonal entries may have any sign; the diagonal is minus the row sum.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseKernel {
    matrix: DMatrix<f64>,
}

impl ResponseKernel {
    /// Fills the diagonal from the off-diagonal entries of `m`.
    pub fn from_offdiag(mut m: DMatrix<f64>) -> Result<Self> {
        let n = m.nrows();
        if m.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, got: m.ncols() });
        }
        if m.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("response kernel"));
        }
        for x in 0..n {
            m[(x, x)] = 0.0;
            let s: f64 = m.row(x).sum();
            m[(x, x)] = -s;
        }
        Ok(Self { matrix: m })
    }

    /// Takes `m` as the full operator matrix, diagonal included.
    ///
    /// Rows need not sum to zero; used to inject faulty kernels into checks.
    pub fn from_matrix_unchecked(m: DMatrix<f64>) -> Self {
        Self { matrix: m }
    }

    pub fn zeros(n: usize) -> Self {
        Self { matrix: DMatrix::zeros(n, n) }
    }

    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn entry(&self, x: usize, y: usize) -> f64 {
        self.matrix[(x, y)]
    }

    pub fn apply(&self, g: &Observable) -> Observable {
        Observable::new(&self.matrix * g.values()).expect("finite kernel")
    }

    pub fn apply_vec(&self, g: &DVector<f64>) -> DVector<f64> {
        &self.matrix * g
    }

    /// `‖A_f 𝟙‖∞`.
    pub fn row_sum_residual(&self) -> f64 {
        (0..self.n()).map(|x| self.matrix.row(x).sum().abs()).fold(0.0, f64::max)
    }

    /// Induced sup-norm `max_x Σ_y |A(x,y)|`.
    pub fn sup_norm(&self) -> f64 {
        crate::markov::operator_sup_norm(&self.matrix)
    }

    pub fn scale(&self, r: f64) -> Self {
        Self { matrix: &self.matrix * r }
    }

    /// Copy with `A(x,y)` moved by `eps`, diagonal untouched.
    pub fn perturbed_entry(&self, x: usize, y: usize, eps: f64) -> Self {
        let mut m = self.matrix.clone();
        m[(x, y)] += eps;
        Self { matrix: m }
    }
}

#[derive(Debug, Clone)]
enum Construction {
    TimeChange,
    Langevin { adjoint: DMatrix<f64> },
    GeneralB { b: DMatrix<f64> },
    Cycle { cycles: Vec<WeightedCycle> },
    Hamiltonian { graph: HamiltonianGraph, rule: AcceptanceRule },
}

/// A δ-indexed family of generators `L^{δf}` with its response kernel.
///
/// Immutable; [`PerturbationFamily::generator_at`] is a pure function of `δ`.
#[derive(Debug, Clone)]
pub struct PerturbationFamily {
    kind: FamilyKind,
    base: Generator,
    mu0: Measure,
    direction: Observable,
    kernel: ResponseKernel,
    delta_cap: f64,
    cap_inclusive: bool,
    construction: Construction,
    tol: Tolerances,
}

fn offdiag_map(l: &Generator, f: impl Fn(usize, usize, f64) -> f64) -> DMatrix<f64> {
    let n = l.n();
    DMatrix::from_fn(n, n, |x, y| if x == y { 0.0 } else { f(x, y, l.rate(x, y)) })
}

fn require_invariant(l: &Generator, mu0: &Measure, tol: &Tolerances) -> Result<Measure> {
    mu0.check_len(l.n())?;
    mu0.require_positive()?;
    let mu = mu0.normalize();
    let residual = invariance_residual(l, &mu);
    if residual > tol.balance {
        return Err(Error::NotInvariant { residual });
    }
    Ok(mu)
}

/// Time change `c^{δf}(x,y) = e^{−δf(x)} c(x,y)`, kernel `a(x,y) = −f(x)c(x,y)`.
pub fn time_change_family(l: &Generator, mu0: &Measure, f: &Observable, tol: &Tolerances) -> Result<PerturbationFamily> {
    f.check_len(l.n())?;
    mu0.check_len(l.n())?;
    mu0.require_positive()?;
    let fv = f.as_slice();
    let kernel = ResponseKernel::from_offdiag(offdiag_map(l, |x, _, c| -fv[x] * c))?;
    Ok(PerturbationFamily {
        kind: FamilyKind::TimeChange,
        base: l.clone(),
        mu0: mu0.normalize(),
        direction: f.clone(),
        kernel,
        delta_cap: f64::INFINITY,
        cap_inclusive: true,
        construction: Construction::TimeChange,
        tol: tol.clone(),
    })
}

/// Langevin-type family
/// `c^{δf} = ½(e^{δ(f(y)−f(x))} + e^{−δf(x)}) c + ½(1 − e^{−δf(x)}) c*`.
///
/// A non-reversible base needs `f ≥ 0`; see [`Observable::shift_to_nonnegative`].
pub fn langevin_family(l: &Generator, mu0: &Measure, f: &Observable, tol: &Tolerances) -> Result<PerturbationFamily> {
    f.check_len(l.n())?;
    let mu = require_invariant(l, mu0, tol)?;
    let star = adjoint(l, &mu, tol)?;
    let reversible = reversibility_residual(l, &mu) <= tol.reversible;
    if !reversible && f.min() < 0.0 {
        return Err(Error::NegativeDirection { min: f.min() });
    }
    let fv = f.as_slice();
    let kernel = ResponseKernel::from_offdiag(offdiag_map(l, |x, y, c| {
        -fv[x] * c + 0.5 * fv[y] * c + 0.5 * fv[x] * star.rate(x, y)
    }))?;
    Ok(PerturbationFamily {
        kind: FamilyKind::Langevin,
        base: l.clone(),
        mu0: mu,
        direction: f.clone(),
        kernel,
        delta_cap: f64::INFINITY,
        cap_inclusive: true,
        construction: Construction::Langevin { adjoint: star.matrix().clone() },
        tol: tol.clone(),
    })
}

/// `max_x |μ⁰(x) Σ_y b(x,y) − Σ_y μ⁰(y) b(y,x)|` over off-diagonal `b`.
pub fn balance_residual(mu0: &Measure, b: &DMatrix<f64>) -> f64 {
    let n = b.nrows();
    let w = mu0.weights();
    (0..n)
        .map(|x| {
            let out: f64 = (0..n).filter(|&y| y != x).map(|y| b[(x, y)]).sum();
            let inflow: f64 = (0..n).filter(|&y| y != x).map(|y| w[y] * b[(y, x)]).sum();
            (w[x] * out - inflow).abs()
        })
        .fold(0.0, f64::max)
}

/// `c^{δf} = e^{−δf(x)}(c + δb)` for an off-diagonal `b` balanced against `μ⁰`.
///
/// Valid for `δ < 1/ρ` with `ρ = max(0, max_{c>0} −b/c)`.
pub fn general_b_family(
    l: &Generator,
    mu0: &Measure,
    f: &Observable,
    b: &DMatrix<f64>,
    tol: &Tolerances,
) -> Result<PerturbationFamily> {
    let n = l.n();
    f.check_len(n)?;
    if b.nrows() != n || b.ncols() != n {
        return Err(Error::DimensionMismatch { expected: n, got: b.nrows() });
    }
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("b"));
    }
    let mu = require_invariant(l, mu0, tol)?;
    let mut b = b.clone();
    b.fill_diagonal(0.0);
    let residual = balance_residual(&mu, &b);
    if residual > tol.balance {
        return Err(Error::BalanceViolation { residual });
    }
    let mut rho: f64 = 0.0;
    for x in 0..n {
        for y in 0..n {
            if x == y || b[(x, y)] >= 0.0 {
                continue;
            }
            let c = l.rate(x, y);
            if c == 0.0 {
                return Err(Error::UnboundedBelow { from: x, to: y });
            }
            rho = rho.max(-b[(x, y)] / c);
        }
    }
    let fv = f.as_slice();
    let kernel = ResponseKernel::from_offdiag(offdiag_map(l, |x, y, c| b[(x, y)] - fv[x] * c))?;
    Ok(PerturbationFamily {
        kind: FamilyKind::GeneralB,
        base: l.clone(),
        mu0: mu,
        direction: f.clone(),
        kernel,
        delta_cap: if rho > 0.0 { 1.0 / rho } else { f64::INFINITY },
        cap_inclusive: false,
        construction: Construction::GeneralB { b },
        tol: tol.clone(),
    })
}

/// Cycle family `c^{δf}(x,y) = e^{−δf(x)}/μ⁰(x) Σ_γ (α(γ) + δβ(γ)) 1_{(x,y)∈γ}`.
pub fn cycle_family(
    space: impl Into<std::sync::Arc<StateSpace>>,
    mu0: &Measure,
    cycles: &[WeightedCycle],
    f: &Observable,
    tol: &Tolerances,
) -> Result<PerturbationFamily> {
    let space = space.into();
    let n = space.len();
    mu0.check_len(n)?;
    mu0.require_positive()?;
    f.check_len(n)?;
    let mu = mu0.normalize();
    let mut cap = f64::INFINITY;
    for c in cycles {
        if let Some(&bad) = c.states().iter().find(|&&x| x >= n) {
            return Err(Error::StateOutOfRange { index: bad, n });
        }
        if c.beta < 0.0 {
            cap = cap.min(c.alpha / -c.beta);
        }
    }
    let base = Generator::from_offdiag(space, cycles::cycle_rates(n, &mu, cycles, |c| c.alpha))?;
    let beta = cycles::cycle_rates(n, &mu, cycles, |c| c.beta);
    let fv = f.as_slice();
    let kernel = ResponseKernel::from_offdiag(offdiag_map(&base, |x, y, c| -fv[x] * c + beta[(x, y)]))?;
    Ok(PerturbationFamily {
        kind: FamilyKind::Cycle,
        base,
        mu0: mu,
        direction: f.clone(),
        kernel,
        delta_cap: cap,
        cap_inclusive: true,
        construction: Construction::Cycle { cycles: cycles.to_vec() },
        tol: tol.clone(),
    })
}

fn hamiltonian_family(hg: &HamiltonianGraph, f: &Observable, rule: AcceptanceRule, tol: &Tolerances) -> Result<PerturbationFamily> {
    let n = hg.n();
    f.check_len(n)?;
    if !hg.is_connected() {
        return Err(Error::Disconnected);
    }
    let base = Generator::from_offdiag(hg.space().clone(), hg.rates_for(hg.energy(), rule))?;
    let mu0 = Measure::gibbs(hg.energy());
    let residual = reversibility_residual(&base, &mu0);
    if residual > tol.reversible {
        return Err(Error::NotReversible { residual });
    }
    let kernel = ResponseKernel::from_offdiag(hg.kernel_for(f, rule, tol.metropolis_tie))?;
    Ok(PerturbationFamily {
        kind: match rule {
            AcceptanceRule::Metropolis => FamilyKind::Metropolis,
            AcceptanceRule::Glauber => FamilyKind::Glauber,
        },
        base,
        mu0,
        direction: f.clone(),
        kernel,
        delta_cap: f64::INFINITY,
        cap_inclusive: true,
        construction: Construction::Hamiltonian { graph: hg.clone(), rule },
        tol: tol.clone(),
    })
}

/// Metropolis dynamics of `e^{−H}` perturbed by `H ↦ H − δf`.
pub fn metropolis_family(hg: &HamiltonianGraph, f: &Observable, tol: &Tolerances) -> Result<PerturbationFamily> {
    hamiltonian_family(hg, f, AcceptanceRule::Metropolis, tol)
}

/// Glauber (heat-bath) dynamics of `e^{−H}` perturbed by `H ↦ H − δf`.
pub fn glauber_family(hg: &HamiltonianGraph, f: &Observable, tol: &Tolerances) -> Result<PerturbationFamily> {
    hamiltonian_family(hg, f, AcceptanceRule::Glauber, tol)
}

impl PerturbationFamily {
    pub fn kind(&self) -> FamilyKind {
        self.kind
    }

    pub fn base(&self) -> &Generator {
        &self.base
    }

    pub fn mu0(&self) -> &Measure {
        &self.mu0
    }

    pub fn direction(&self) -> &Observable {
        &self.direction
    }

    pub fn kernel(&self) -> &ResponseKernel {
        &self.kernel
    }

    pub fn n(&self) -> usize {
        self.base.n()
    }

    pub fn tolerances(&self) -> &Tolerances {
        &self.tol
    }

    /// Largest admissible `δ` (infinite when uncapped).
    pub fn delta_cap(&self) -> f64 {
        self.delta_cap
    }

    pub fn admits(&self, delta: f64) -> bool {
        delta >= 0.0 && if self.cap_inclusive { delta <= self.delta_cap } else { delta < self.delta_cap }
    }

    /// `B_f = A_f + diag(f) L`; off-diagonals `a(x,y) + f(x)c(x,y)`.
    pub fn b_operator(&self) -> DMatrix<f64> {
        let fv = self.direction.as_slice();
        let mut m = self.kernel.matrix().clone();
        for x in 0..self.n() {
            for y in 0..self.n() {
                m[(x, y)] += fv[x] * self.base.matrix()[(x, y)];
            }
        }
        m
    }

    /// Same family with its kernel replaced; used to feed deliberately wrong kernels to checks.
    pub fn with_kernel(&self, kernel: ResponseKernel) -> Result<Self> {
        if kernel.n() != self.n() {
            return Err(Error::DimensionMismatch { expected: self.n(), got: kernel.n() });
        }
        Ok(Self { kernel, ..self.clone() })
    }

    /// Unnormalized `e^{δf}∘μ⁰`.
    pub fn tilted_measure(&self, delta: f64) -> Measure {
        self.mu0.tilt(&self.direction.scale(delta))
    }

    /// `L^{δf}`.
    pub fn generator_at(&self, delta: f64) -> Result<Generator> {
        if !delta.is_finite() {
            return Err(Error::NonFinite("delta"));
        }
        if delta < 0.0 {
            return Err(Error::NegativeDelta(delta));
        }
        if !self.admits(delta) {
            return Err(Error::DeltaTooLarge { delta, cap: self.delta_cap });
        }
        if delta == 0.0 {
            return Ok(self.base.clone());
        }
        let fv = self.direction.as_slice();
        let l = &self.base;
        let m = match &self.construction {
            Construction::TimeChange => offdiag_map(l, |x, _, c| (-delta * fv[x]).exp() * c),
            Construction::Langevin { adjoint } => offdiag_map(l, |x, y, c| {
                let ex = (-delta * fv[x]).exp();
                0.5 * ((delta * (fv[y] - fv[x])).exp() + ex) * c + 0.5 * (1.0 - ex) * adjoint[(x, y)]
            }),
            Construction::GeneralB { b } => offdiag_map(l, |x, y, c| (-delta * fv[x]).exp() * (c + delta * b[(x, y)])),
            Construction::Cycle { cycles } => {
                let mut m = cycles::cycle_rates(self.n(), &self.mu0, cycles, |c| c.alpha + delta * c.beta);
                for x in 0..self.n() {
                    let e = (-delta * fv[x]).exp();
                    for y in 0..self.n() {
                        m[(x, y)] *= e;
                    }
                }
                m
            }
            Construction::Hamiltonian { graph, rule } => {
                let h = graph.energy().sub(&self.direction.scale(delta));
                graph.rates_for(&h, *rule)
            }
        };
        // Clamp round-off below zero (e.g. α + δβ at the inclusive cap).
        let m = m.map(|v| if v < 0.0 && v > -1e-14 { 0.0 } else { v });
        Generator::from_offdiag(l.space().clone(), m)
    }

    /// Same construction in direction `r·f` (with `b`, `β` scaled by `r` too).
    pub fn scaled(&self, r: f64) -> Result<Self> {
        let f = self.direction.scale(r);
        match &self.construction {
            Construction::TimeChange => time_change_family(&self.base, &self.mu0, &f, &self.tol),
            Construction::Langevin { .. } => langevin_family(&self.base, &self.mu0, &f, &self.tol),
            Construction::GeneralB { b } => general_b_family(&self.base, &self.mu0, &f, &(b * r), &self.tol),
            Construction::Cycle { cycles } => {
                let scaled: Vec<_> = cycles.iter().map(|c| c.scaled_beta(r)).collect();
                cycle_family(self.base.space().clone(), &self.mu0, &scaled, &f, &self.tol)
            }
            Construction::Hamiltonian { graph, rule } => hamiltonian_family(graph, &f, *rule, &self.tol),
        }
    }

    /// `‖(e^{δf}∘μ⁰)ᵀ L^{δf}‖∞`.
    pub fn invariance_residual_at(&self, delta: f64) -> Result<f64> {
        let l = self.generator_at(delta)?;
        Ok(invariance_residual(&l, &self.tilted_measure(delta)))
    }

    /// `max |δ⁻¹(L^{δf} − L) − A_f|` in the induced sup-norm.
    pub fn kernel_defect(&self, delta: f64) -> Result<f64> {
        let l = self.generator_at(delta)?;
        let d = (l.matrix() - self.base.matrix()) / delta - self.kernel.matrix();
        Ok(crate::markov::operator_sup_norm(&d))
    }
}
