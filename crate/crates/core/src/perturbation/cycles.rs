//! Oriented cycles and the cycle construction of μ⁰-invariant rates.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::markov::{Generator, Measure};

/// An oriented cycle `(x₀, x₁, …, x_{k−1}, x₀)` with weight `α` and weight slope `β`.
///
/// Perturbing in direction `f` by `δ` moves the weight to `α + δβ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedCycle {
    states: Vec<usize>,
    pub alpha: f64,
    pub beta: f64,
}

impl WeightedCycle {
    /// Accepts the states either open (`[x, y, z]`) or closed (`[x, y, z, x]`).
    pub fn new(mut states: Vec<usize>, alpha: f64, beta: f64) -> Result<Self> {
        if states.len() >= 2 && states.first() == states.last() {
            states.pop();
        }
        if states.len() < 2 {
            return Err(Error::MalformedCycle(format!("{states:?} has fewer than 2 distinct states")));
        }
        let mut sorted = states.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::MalformedCycle(format!("{states:?} repeats a state")));
        }
        if !alpha.is_finite() || !beta.is_finite() {
            return Err(Error::NonFinite("cycle weight"));
        }
        if alpha < 0.0 {
            return Err(Error::NegativeAlpha(alpha));
        }
        Ok(Self { states, alpha, beta })
    }

    pub fn states(&self) -> &[usize] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Consecutive oriented pairs `(x_i, x_{i+1})`, including the closing one.
    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let k = self.states.len();
        (0..k).map(move |i| (self.states[i], self.states[(i + 1) % k]))
    }

    pub fn scaled_beta(&self, r: f64) -> Self {
        Self { beta: r * self.beta, ..self.clone() }
    }
}

/// `Σ_γ w(γ) 1_{(x,y)∈γ} / μ⁰(x)` as an off-diagonal matrix.
pub(crate) fn cycle_rates(n: usize, mu0: &Measure, cycles: &[WeightedCycle], weight: impl Fn(&WeightedCycle) -> f64) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(n, n);
    for c in cycles {
        let w = weight(c);
        for (x, y) in c.pairs() {
            m[(x, y)] += w;
        }
    }
    for x in 0..n {
        let mx = mu0.weights()[x];
        for y in 0..n {
            m[(x, y)] /= mx;
        }
    }
    m
}

/// Decomposes the stationary flux `μ⁰(x)c(x,y)` of a chain into oriented cycles.
///
/// Returns cycles with `β = 0` whose cycle rates reproduce `L` up to round-off.
/// Fails with `NotInvariant` if the flux is not balanced.
pub fn decompose_cycles(l: &Generator, mu0: &Measure, balance_tol: f64) -> Result<Vec<WeightedCycle>> {
    let n = l.n();
    mu0.check_len(n)?;
    let mu = mu0.normalize();
    let residual = crate::markov::invariance_residual(l, &mu);
    if residual > balance_tol {
        return Err(Error::NotInvariant { residual });
    }
    let w = mu.weights();
    let mut flux = DMatrix::from_fn(n, n, |x, y| if x == y { 0.0 } else { w[x] * l.rate(x, y) });
    let max_flux = flux.amax();
    let eps = 1e-13 * max_flux;
    let mut cycles = Vec::new();
    loop {
        let start = (0..n).flat_map(|x| (0..n).map(move |y| (x, y))).find(|&(x, y)| flux[(x, y)] > eps);
        let Some((x0, _)) = start else { break };
        let mut path = vec![x0];
        let mut pos = vec![usize::MAX; n];
        pos[x0] = 0;
        let mut cur = x0;
        let cycle = loop {
            let (next, best) = (0..n)
                .map(|y| (y, flux[(cur, y)]))
                .fold((usize::MAX, 0.0), |acc, (y, v)| if v > acc.1 { (y, v) } else { acc });
            if best <= eps {
                // Round-off imbalance: drop the dangling flux entering `cur`.
                for x in 0..n {
                    flux[(x, cur)] = 0.0;
                }
                break None;
            }
            if pos[next] != usize::MAX {
                break Some(path[pos[next]..].to_vec());
            }
            pos[next] = path.len();
            path.push(next);
            cur = next;
        };
        let Some(states) = cycle else { continue };
        let k = states.len();
        let weight = (0..k).map(|i| flux[(states[i], states[(i + 1) % k])]).fold(f64::INFINITY, f64::min);
        for i in 0..k {
            let e = (states[i], states[(i + 1) % k]);
            flux[e] -= weight;
            if flux[e] <= eps {
                flux[e] = 0.0;
            }
        }
        cycles.push(WeightedCycle::new(states, weight, 0.0)?);
    }
    Ok(cycles)
}
