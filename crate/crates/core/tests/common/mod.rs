#![allow(dead_code)]

use fdt_lab::markov::{adjoint, invariant_measure, Generator, Measure, Observable, StateSpace};
use fdt_lab::perturbation::{
    cycle_family, decompose_cycles, general_b_family, glauber_family, langevin_family, metropolis_family,
    time_change_family, FamilyKind, HamiltonianGraph, PerturbationFamily, WeightedCycle,
};
use fdt_lab::Tolerances;
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn obs(v: &[f64]) -> Observable {
    Observable::from_vec(v.to_vec()).unwrap()
}

pub fn uniform_obs(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> Observable {
    Observable::from_vec((0..n).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

/// Random law on `n` states, zero on some of them.
pub fn random_initial(rng: &mut ChaCha8Rng, n: usize) -> Measure {
    let mut w: Vec<f64> = (0..n).map(|_| if rng.random_bool(0.3) { 0.0 } else { rng.random_range(0.0..1.0) }).collect();
    if w.iter().all(|&v| v == 0.0) {
        w[0] = 1.0;
    }
    Measure::initial_law(DVector::from_vec(w)).unwrap()
}

/// Irreducible chain: directed ring backbone plus random extra edges, rates in `[0.2, 1.5]`.
pub struct RandomChain {
    pub l: Generator,
    pub mu0: Measure,
}

pub fn random_chain(rng: &mut ChaCha8Rng, n: usize) -> RandomChain {
    let mut m = DMatrix::zeros(n, n);
    for x in 0..n {
        m[(x, (x + 1) % n)] = rng.random_range(0.2..1.5);
    }
    for x in 0..n {
        for y in 0..n {
            if x != y && m[(x, y)] == 0.0 && rng.random_bool(0.35) {
                m[(x, y)] = rng.random_range(0.2..1.5);
            }
        }
    }
    let l = Generator::from_offdiag(StateSpace::with_size(n).unwrap(), m).unwrap();
    let mu0 = invariant_measure(&l).unwrap();
    RandomChain { l, mu0 }
}

/// Reversible chain `c(x,y) = w(x,y)/μ(x)` with symmetric conductances on a connected graph.
pub fn random_reversible_chain(rng: &mut ChaCha8Rng, n: usize) -> RandomChain {
    let mu: Vec<f64> = (0..n).map(|_| rng.random_range(0.3..1.0)).collect();
    let mut m = DMatrix::zeros(n, n);
    for x in 0..n {
        for y in (x + 1)..n {
            let backbone = y == x + 1;
            if backbone || rng.random_bool(0.3) {
                let w = rng.random_range(0.2..1.5) * mu[x].min(mu[y]);
                m[(x, y)] = w / mu[x];
                m[(y, x)] = w / mu[y];
            }
        }
    }
    let l = Generator::from_offdiag(StateSpace::with_size(n).unwrap(), m).unwrap();
    let mu0 = invariant_measure(&l).unwrap();
    RandomChain { l, mu0 }
}

/// Two clusters with fast internal and slow cross rates: a real, isolated spectral gap.
pub fn metastable_chain(rng: &mut ChaCha8Rng, n1: usize, n2: usize) -> RandomChain {
    let n = n1 + n2;
    let block = |x: usize| usize::from(x >= n1);
    let mut m = DMatrix::zeros(n, n);
    for x in 0..n {
        for y in 0..n {
            if x == y {
                continue;
            }
            m[(x, y)] = if block(x) == block(y) { rng.random_range(1.0..2.0) } else { rng.random_range(0.005..0.03) };
        }
    }
    let l = Generator::from_offdiag(StateSpace::with_size(n).unwrap(), m).unwrap();
    let mu0 = invariant_measure(&l).unwrap();
    RandomChain { l, mu0 }
}

/// Undirected edges of the jump graph of `l`.
pub fn undirected_edges(l: &Generator) -> Vec<(usize, usize)> {
    l.edges().into_iter().map(|(x, y)| (x.min(y), x.max(y))).collect()
}

/// Balanced `b = θ(c* − c)` plus one positively weighted random cycle.
pub fn random_b(rng: &mut ChaCha8Rng, chain: &RandomChain) -> DMatrix<f64> {
    let n = chain.l.n();
    let star = adjoint(&chain.l, &chain.mu0, &Tolerances::default()).unwrap();
    let theta = rng.random_range(0.2..0.8);
    let mut b = (star.matrix() - chain.l.matrix()) * theta;
    if n >= 3 {
        let mut states: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            states.swap(i, rng.random_range(0..=i));
        }
        let k = 3.min(n);
        let w = rng.random_range(0.05..0.3) * chain.mu0.weights().min();
        for i in 0..k {
            let (x, y) = (states[i], states[(i + 1) % k]);
            b[(x, y)] += w / chain.mu0.weights()[x];
        }
    }
    b.fill_diagonal(0.0);
    b
}

/// Cycles of the stationary flux with `β = α·u`, `u ∈ [−0.5, 0.5]`.
pub fn random_cycles(rng: &mut ChaCha8Rng, chain: &RandomChain) -> Vec<WeightedCycle> {
    decompose_cycles(&chain.l, &chain.mu0, 1e-10)
        .unwrap()
        .into_iter()
        .map(|c| {
            let u = rng.random_range(-0.5..0.5);
            WeightedCycle::new(c.states().to_vec(), c.alpha, c.alpha * u).unwrap()
        })
        .collect()
}

/// Energy for the Hamiltonian families on the chain's graph.
pub fn random_graph(rng: &mut ChaCha8Rng, chain: &RandomChain) -> HamiltonianGraph {
    let n = chain.l.n();
    let h = uniform_obs(rng, n, -1.0, 1.0);
    HamiltonianGraph::new(chain.l.space().clone(), &undirected_edges(&chain.l), h).unwrap()
}

/// Per-chain ingredients for each family kind, fixed before directions are drawn.
pub struct Instance {
    pub chain: RandomChain,
    pub b: DMatrix<f64>,
    pub cycles: Vec<WeightedCycle>,
    pub graph: HamiltonianGraph,
}

pub fn random_instance(rng: &mut ChaCha8Rng, n: usize) -> Instance {
    let chain = random_chain(rng, n);
    let b = random_b(rng, &chain);
    let cycles = random_cycles(rng, &chain);
    let graph = random_graph(rng, &chain);
    Instance { chain, b, cycles, graph }
}

impl Instance {
    pub fn family(&self, kind: FamilyKind, f: &Observable) -> PerturbationFamily {
        let tol = Tolerances::default();
        let c = &self.chain;
        match kind {
            FamilyKind::TimeChange => time_change_family(&c.l, &c.mu0, f, &tol),
            FamilyKind::Langevin => langevin_family(&c.l, &c.mu0, f, &tol),
            FamilyKind::GeneralB => general_b_family(&c.l, &c.mu0, f, &self.b, &tol),
            FamilyKind::Cycle => cycle_family(c.l.space().clone(), &c.mu0, &self.cycles, f, &tol),
            FamilyKind::Metropolis => metropolis_family(&self.graph, f, &tol),
            FamilyKind::Glauber => glauber_family(&self.graph, f, &tol),
        }
        .unwrap_or_else(|e| panic!("{kind} family: {e}"))
    }
}

/// Chain sizes cycling through `2..=16`.
pub fn battery_size(i: usize) -> usize {
    2 + i % 15
}
