//! Metropolis and Glauber dynamics of a Gibbs measure on a finite graph.

use std::collections::BTreeSet;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::markov::{Observable, StateSpace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AcceptanceRule {
    /// `α(x,y) = min(e^{−H(x)}, e^{−H(y)})`.
    Metropolis,
    /// `α(x,y) = 1 / (e^{H(x)} + e^{H(y)})`.
    Glauber,
}

/// Undirected graph with an energy per vertex.
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianGraph {
    space: Arc<StateSpace>,
    edges: Vec<(usize, usize)>,
    energy: Observable,
}

impl HamiltonianGraph {
    /// `edges` are unordered pairs; each is used in both directions.
    pub fn new(space: impl Into<Arc<StateSpace>>, edges: &[(usize, usize)], energy: Observable) -> Result<Self> {
        let space = space.into();
        let n = space.len();
        energy.check_len(n)?;
        let mut set = BTreeSet::new();
        for &(x, y) in edges {
            if x >= n || y >= n {
                return Err(Error::StateOutOfRange { index: x.max(y), n });
            }
            if x == y {
                return Err(Error::MalformedGraph(format!("self loop at {x}")));
            }
            set.insert((x.min(y), x.max(y)));
        }
        Ok(Self { space, edges: set.into_iter().collect(), energy })
    }

    /// Nearest-neighbour ring on `n` vertices.
    pub fn ring(n: usize, energy: Observable) -> Result<Self> {
        let edges: Vec<_> = (0..n).map(|x| (x, (x + 1) % n)).collect();
        Self::new(StateSpace::with_size(n)?, &edges, energy)
    }

    pub fn space(&self) -> &Arc<StateSpace> {
        &self.space
    }

    pub fn n(&self) -> usize {
        self.space.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn energy(&self) -> &Observable {
        &self.energy
    }

    pub fn with_energy(&self, energy: Observable) -> Self {
        Self { energy, ..self.clone() }
    }

    pub fn is_connected(&self) -> bool {
        let n = self.n();
        let mut adj = vec![Vec::new(); n];
        for &(x, y) in &self.edges {
            adj[x].push(y);
            adj[y].push(x);
        }
        let mut seen = vec![false; n];
        let mut stack = vec![0];
        seen[0] = true;
        while let Some(x) = stack.pop() {
            for &y in &adj[x] {
                if !seen[y] {
                    seen[y] = true;
                    stack.push(y);
                }
            }
        }
        seen.into_iter().all(|s| s)
    }

    /// Off-diagonal rates `c(x,y) = e^{H(x)} α(x,y)` on the edges, for energy `h`.
    pub(crate) fn rates_for(&self, h: &Observable, rule: AcceptanceRule) -> DMatrix<f64> {
        let n = self.n();
        let hv = h.as_slice();
        let mut m = DMatrix::zeros(n, n);
        for &(x, y) in &self.edges {
            for (a, b) in [(x, y), (y, x)] {
                let dh = hv[b] - hv[a];
                m[(a, b)] = match rule {
                    AcceptanceRule::Metropolis => (-dh).exp().min(1.0),
                    AcceptanceRule::Glauber => 1.0 / (1.0 + dh.exp()),
                };
            }
        }
        m
    }

    /// Response kernel off-diagonals `a_M^f` or `a_G^f` with `ΔH = H(y) − H(x)`.
    pub(crate) fn kernel_for(&self, f: &Observable, rule: AcceptanceRule, tie_tol: f64) -> DMatrix<f64> {
        let n = self.n();
        let hv = self.energy.as_slice();
        let fv = f.as_slice();
        let mut m = DMatrix::zeros(n, n);
        for &(x, y) in &self.edges {
            for (a, b) in [(x, y), (y, x)] {
                let dh = hv[b] - hv[a];
                let df = fv[b] - fv[a];
                m[(a, b)] = match rule {
                    AcceptanceRule::Metropolis => {
                        if dh.abs() <= tie_tol {
                            if fv[a] > fv[b] {
                                df
                            } else {
                                0.0
                            }
                        } else if dh > 0.0 {
                            df * (-dh).exp()
                        } else {
                            0.0
                        }
                    }
                    AcceptanceRule::Glauber => {
                        let e = (-dh.abs()).exp();
                        // e^{−ΔH}/(1+e^{−ΔH})² is even in ΔH; use the non-overflowing side.
                        df * e / ((1.0 + e) * (1.0 + e))
                    }
                };
            }
        }
        m
    }
}
