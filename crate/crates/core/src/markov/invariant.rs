use nalgebra::{DMatrix, DVector};
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;

use crate::error::{Error, Result};
use crate::markov::{Generator, Measure};

/// Strongly connected components of the jump graph `{x → y : c(x,y) > 0}`.
pub fn strongly_connected_components(l: &Generator) -> Vec<Vec<usize>> {
    let n = l.n();
    let mut graph = DiGraph::<(), ()>::with_capacity(n, n * 2);
    let nodes: Vec<_> = (0..n).map(|_| graph.add_node(())).collect();
    for (x, y) in l.edges() {
        graph.add_edge(nodes[x], nodes[y], ());
    }
    tarjan_scc(&graph)
        .into_iter()
        .map(|c| c.into_iter().map(|ix| ix.index()).collect())
        .collect()
}

pub fn is_irreducible(l: &Generator) -> bool {
    strongly_connected_components(l).len() == 1
}

/// `‖μᵀL‖∞` for the weights as given.
pub fn invariance_residual(l: &Generator, mu: &Measure) -> f64 {
    l.apply_left(mu.weights()).amax()
}

/// Unique invariant probability measure of an irreducible chain.
///
/// Solves `μᵀL = 0, Σμ = 1` by LU on `Lᵀ` with its last row replaced by the
/// normalization constraint, followed by two rounds of iterative refinement.
pub fn invariant_measure(l: &Generator) -> Result<Measure> {
    let components = strongly_connected_components(l).len();
    if components != 1 {
        return Err(Error::Reducible { components });
    }
    let n = l.n();
    let mut a: DMatrix<f64> = l.matrix().transpose();
    for j in 0..n {
        a[(n - 1, j)] = 1.0;
    }
    let mut rhs = DVector::zeros(n);
    rhs[n - 1] = 1.0;
    let lu = a.clone().lu();
    let mut mu = lu.solve(&rhs).ok_or(Error::Singular("invariant measure system"))?;
    for _ in 0..2 {
        let r = &rhs - &a * &mu;
        if let Some(dx) = lu.solve(&r) {
            mu += dx;
        }
    }
    if let Some(i) = mu.iter().position(|&w| !(w > 0.0)) {
        return Err(Error::NonPositiveWeight(i));
    }
    Measure::probability(mu)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::StateSpace;

    #[test]
    fn two_state_balance() {
        let l = Generator::build(StateSpace::with_size(2).unwrap(), &[(0, 1, 1.0), (1, 0, 2.0)]).unwrap();
        let mu = invariant_measure(&l).unwrap();
        assert!((mu.weights()[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((mu.weights()[1] - 1.0 / 3.0).abs() < 1e-15);
        assert!(invariance_residual(&l, &mu) <= 1e-12);
    }

    #[test]
    fn symmetric_ring_is_uniform() {
        let n = 7;
        let mut rates = Vec::new();
        for x in 0..n {
            rates.push((x, (x + 1) % n, 0.8));
            rates.push(((x + 1) % n, x, 0.8));
        }
        let l = Generator::build(StateSpace::with_size(n).unwrap(), &rates).unwrap();
        let mu = invariant_measure(&l).unwrap();
        for w in mu.weights().iter() {
            assert!((w - 1.0 / n as f64).abs() < 1e-15);
        }
    }

    #[test]
    fn reducible_chain_is_rejected() {
        // 0 → 1 only: {0} and {1} are separate components.
        let l = Generator::build(StateSpace::with_size(3).unwrap(), &[(0, 1, 1.0), (1, 2, 1.0), (2, 1, 1.0)]).unwrap();
        assert_eq!(invariant_measure(&l), Err(Error::Reducible { components: 2 }));
    }
}
