//! Finite-state continuous-time Markov chains.
//!
//! A [`Generator`] stores the full rate matrix `L` with `L(x,y) = c(x,y)` for
//! `x ≠ y` and `L(x,x) = −Σ_{y≠x} c(x,y)`, so that
//! `L g(x) = Σ_{y≠x} c(x,y)(g(y) − g(x))`. Observables are column vectors
//! acted on from the left by `L`; measures are row vectors acted on from the
//! right.

mod expm;
mod invariant;
mod ops;
mod spectrum;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::config::Tolerances;
use crate::error::{Error, Result};

pub use expm::Uniformized;
pub use invariant::{invariance_residual, invariant_measure, is_irreducible, strongly_connected_components};
pub use ops::{adjoint, carre_du_champ, carre_du_champ_jump, reversibility_residual, symmetrize};
pub use spectrum::{spectral_gap, SpectralGap};

/// Labelled finite state space.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StateSpace {
    labels: Vec<String>,
}

impl StateSpace {
    pub fn new<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Result<Self> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.len() < 2 {
            return Err(Error::TooFewStates(labels.len()));
        }
        let mut seen = std::collections::HashSet::new();
        for l in &labels {
            if !seen.insert(l.as_str()) {
                return Err(Error::DuplicateLabel(l.clone()));
            }
        }
        Ok(Self { labels })
    }

    /// States labelled `"0"`, `"1"`, ….
    pub fn with_size(n: usize) -> Result<Self> {
        Self::new((0..n).map(|i| i.to_string()))
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }
}

/// A real function on the state space.
#[derive(Debug, Clone, PartialEq)]
pub struct Observable(DVector<f64>);

impl Observable {
    pub fn new(values: DVector<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("observable"));
        }
        Ok(Self(values))
    }

    pub fn from_vec(values: Vec<f64>) -> Result<Self> {
        Self::new(DVector::from_vec(values))
    }

    pub fn constant(n: usize, c: f64) -> Self {
        Self(DVector::from_element(n, c))
    }

    pub fn ones(n: usize) -> Self {
        Self::constant(n, 1.0)
    }

    pub fn zeros(n: usize) -> Self {
        Self::constant(n, 0.0)
    }

    /// Indicator of a single state.
    pub fn indicator(n: usize, x: usize) -> Self {
        let mut v = DVector::zeros(n);
        v[x] = 1.0;
        Self(v)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn into_inner(self) -> DVector<f64> {
        self.0
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn sup_norm(&self) -> f64 {
        self.0.amax()
    }

    pub fn min(&self) -> f64 {
        self.0.min()
    }

    pub fn max(&self) -> f64 {
        self.0.max()
    }

    pub fn scale(&self, r: f64) -> Self {
        Self(&self.0 * r)
    }

    pub fn add(&self, other: &Self) -> Self {
        Self(&self.0 + &other.0)
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self(&self.0 - &other.0)
    }

    /// Pointwise product.
    pub fn mul(&self, other: &Self) -> Self {
        Self(self.0.component_mul(&other.0))
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self(self.0.map(f))
    }

    /// `f − min f`, the smallest constant shift making the direction nonnegative.
    pub fn shift_to_nonnegative(&self) -> Self {
        let m = self.min().min(0.0);
        self.map(|v| v - m)
    }

    pub(crate) fn check_len(&self, n: usize) -> Result<()> {
        if self.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: self.len() });
        }
        Ok(())
    }
}

/// Nonnegative weights over the states.
///
/// Invariant measures and reference measures are strictly positive; initial
/// laws built with [`Measure::initial_law`] or [`Measure::point_mass`] may vanish on states.
#[derive(Debug, Clone, PartialEq)]
pub struct Measure {
    weights: DVector<f64>,
    normalized: bool,
}

impl Measure {
    /// Wraps positive weights as given (unnormalized).
    pub fn new(weights: DVector<f64>) -> Result<Self> {
        for (i, w) in weights.iter().enumerate() {
            if !w.is_finite() {
                return Err(Error::NonFinite("measure"));
            }
            if *w <= 0.0 {
                return Err(Error::NonPositiveWeight(i));
            }
        }
        let normalized = (weights.sum() - 1.0).abs() <= 1e-12;
        Ok(Self { weights, normalized })
    }

    /// Wraps positive weights and rescales them to total mass one.
    pub fn probability(weights: DVector<f64>) -> Result<Self> {
        let m = Self::new(weights)?;
        Ok(m.normalize())
    }

    /// A probability measure that may vanish on some states.
    pub fn initial_law(weights: DVector<f64>) -> Result<Self> {
        for (i, w) in weights.iter().enumerate() {
            if !w.is_finite() {
                return Err(Error::NonFinite("measure"));
            }
            if *w < 0.0 {
                return Err(Error::NonPositiveWeight(i));
            }
        }
        if !(weights.sum() > 0.0) {
            return Err(Error::UnnormalizedInitial);
        }
        Ok(Self { weights, normalized: false }.normalize())
    }

    /// `δ_x` on `n` states.
    pub fn point_mass(n: usize, x: usize) -> Self {
        let mut w = DVector::zeros(n);
        w[x] = 1.0;
        Self { weights: w, normalized: true }
    }

    pub fn is_positive(&self) -> bool {
        self.weights.iter().all(|&w| w > 0.0)
    }

    pub(crate) fn require_positive(&self) -> Result<()> {
        match self.weights.iter().position(|&w| !(w > 0.0)) {
            Some(i) => Err(Error::NonPositiveWeight(i)),
            None => Ok(()),
        }
    }

    pub fn uniform(n: usize) -> Self {
        Self { weights: DVector::from_element(n, 1.0 / n as f64), normalized: true }
    }

    /// Gibbs weights `e^{−H}/Z`.
    pub fn gibbs(energy: &Observable) -> Self {
        let h0 = energy.min();
        let w = energy.values().map(|h| (-(h - h0)).exp());
        Self::probability(w).expect("exponential weights are positive")
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.weights
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.sum()
    }

    pub fn normalize(&self) -> Self {
        let z = self.weights.sum();
        Self { weights: &self.weights / z, normalized: true }
    }

    /// `e^{f} ∘ μ`, left unnormalized.
    pub fn tilt(&self, f: &Observable) -> Self {
        let w = self.weights.component_mul(&f.values().map(f64::exp));
        let normalized = (w.sum() - 1.0).abs() <= 1e-12;
        Self { weights: w, normalized }
    }

    /// `⟨g⟩_μ = Σ μ(x) g(x)`.
    pub fn expect(&self, g: &Observable) -> f64 {
        self.weights.dot(g.values())
    }

    /// `⟨f g⟩_μ`.
    pub fn inner(&self, f: &Observable, g: &Observable) -> f64 {
        self.weights.iter().zip(f.as_slice()).zip(g.as_slice()).map(|((w, a), b)| w * a * b).sum()
    }

    /// `L₂(μ)` norm.
    pub fn l2_norm(&self, g: &Observable) -> f64 {
        self.inner(g, g).max(0.0).sqrt()
    }

    /// Total-variation distance between two probability vectors.
    pub fn total_variation(&self, other: &Measure) -> f64 {
        0.5 * (&self.weights - &other.weights).abs().sum()
    }

    pub(crate) fn check_len(&self, n: usize) -> Result<()> {
        if self.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: self.len() });
        }
        Ok(())
    }
}

/// Rate matrix of a conservative continuous-time Markov chain.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    space: Arc<StateSpace>,
    rates: DMatrix<f64>,
}

impl Generator {
    /// Builds a generator from a sparse list of off-diagonal rates `(x, y, c(x,y))`.
    pub fn build(space: impl Into<Arc<StateSpace>>, offdiag: &[(usize, usize, f64)]) -> Result<Self> {
        let space = space.into();
        let n = space.len();
        let mut m = DMatrix::zeros(n, n);
        let mut seen = std::collections::HashSet::new();
        for &(x, y, rate) in offdiag {
            for i in [x, y] {
                if i >= n {
                    return Err(Error::StateOutOfRange { index: i, n });
                }
            }
            if x == y {
                return Err(Error::SelfLoop(x));
            }
            if !rate.is_finite() {
                return Err(Error::NonFinite("rate"));
            }
            if rate < 0.0 {
                return Err(Error::NegativeRate { from: x, to: y });
            }
            if !seen.insert((x, y)) {
                return Err(Error::DuplicateEntry { from: x, to: y });
            }
            m[(x, y)] = rate;
        }
        Self::from_offdiag(space, m)
    }

    /// Uses the off-diagonal part of `m` as rates; the diagonal is recomputed.
    pub fn from_offdiag(space: impl Into<Arc<StateSpace>>, mut m: DMatrix<f64>) -> Result<Self> {
        let space = space.into();
        let n = space.len();
        if m.nrows() != n || m.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, got: m.nrows() });
        }
        for x in 0..n {
            let mut out = 0.0;
            for y in 0..n {
                if x == y {
                    continue;
                }
                let c = m[(x, y)];
                if !c.is_finite() {
                    return Err(Error::NonFinite("rate"));
                }
                if c < 0.0 {
                    return Err(Error::NegativeRate { from: x, to: y });
                }
                out += c;
            }
            m[(x, x)] = -out;
        }
        Ok(Self { space, rates: m })
    }

    /// Validates a full matrix whose diagonal is already filled in.
    pub fn from_matrix(space: impl Into<Arc<StateSpace>>, m: DMatrix<f64>, tol: &Tolerances) -> Result<Self> {
        let space = space.into();
        let n = space.len();
        if m.nrows() != n || m.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, got: m.nrows() });
        }
        let g = Self { space, rates: m };
        for x in 0..n {
            for y in 0..n {
                let c = g.rates[(x, y)];
                if !c.is_finite() {
                    return Err(Error::NonFinite("rate"));
                }
                if x != y && c < 0.0 {
                    return Err(Error::NegativeRate { from: x, to: y });
                }
            }
            let sum = g.rates.row(x).sum();
            if sum.abs() > tol.row_sum * (1.0 + g.exit_rate(x)) {
                return Err(Error::RowSum { row: x, sum });
            }
        }
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.rates.nrows()
    }

    pub fn space(&self) -> &Arc<StateSpace> {
        &self.space
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.rates
    }

    pub fn rate(&self, x: usize, y: usize) -> f64 {
        self.rates[(x, y)]
    }

    pub fn exit_rate(&self, x: usize) -> f64 {
        -self.rates[(x, x)]
    }

    pub fn max_exit_rate(&self) -> f64 {
        (0..self.n()).map(|x| self.exit_rate(x)).fold(0.0, f64::max)
    }

    /// Operator norm on `(C_b, ‖·‖∞)`: the largest absolute row sum.
    pub fn sup_norm(&self) -> f64 {
        operator_sup_norm(&self.rates)
    }

    /// Largest absolute row sum, i.e. the worst conservation defect.
    pub fn row_sum_residual(&self) -> f64 {
        (0..self.n()).map(|x| self.rates.row(x).sum().abs()).fold(0.0, f64::max)
    }

    pub fn min_offdiag(&self) -> f64 {
        let n = self.n();
        let mut m = f64::INFINITY;
        for x in 0..n {
            for y in 0..n {
                if x != y {
                    m = m.min(self.rates[(x, y)]);
                }
            }
        }
        m
    }

    /// `L g`.
    pub fn apply(&self, g: &Observable) -> Observable {
        Observable(&self.rates * g.values())
    }

    /// `μᵀ L` as a vector.
    pub fn apply_left(&self, mu: &DVector<f64>) -> DVector<f64> {
        self.rates.tr_mul(mu)
    }

    /// Uniformized semigroup for repeated applications of `P_t = e^{tL}`.
    pub fn semigroup(&self) -> Uniformized {
        Uniformized::new(&self.rates)
    }

    /// Uniformized semigroup acting on measures, `ν ↦ ν P_t`.
    pub fn dual_semigroup(&self) -> Uniformized {
        Uniformized::new(&self.rates.transpose())
    }

    /// Jump graph edges `x → y` with `c(x,y) > 0`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let n = self.n();
        let mut e = Vec::new();
        for x in 0..n {
            for y in 0..n {
                if x != y && self.rates[(x, y)] > 0.0 {
                    e.push((x, y));
                }
            }
        }
        e
    }
}

/// Largest absolute row sum of a matrix.
pub fn operator_sup_norm(m: &DMatrix<f64>) -> f64 {
    (0..m.nrows()).map(|i| m.row(i).iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// Builds a generator from a sparse off-diagonal rate list.
pub fn build_generator(space: StateSpace, offdiag_rates: &[(usize, usize, f64)]) -> Result<Generator> {
    Generator::build(space, offdiag_rates)
}

/// `P_t g = e^{tL} g` by uniformization.
pub fn semigroup_apply(l: &Generator, t: f64, g: &Observable, tol: &Tolerances) -> Result<Observable> {
    g.check_len(l.n())?;
    l.semigroup().apply(t, g, tol.expm_tail)
}
