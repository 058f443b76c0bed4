use nalgebra::DMatrix;

use crate::config::Tolerances;
use crate::error::{Error, Result};
use crate::markov::{invariance_residual, Generator, Measure, Observable};

fn check_invariant(l: &Generator, mu0: &Measure, tol: &Tolerances) -> Result<()> {
    mu0.check_len(l.n())?;
    mu0.require_positive()?;
    let residual = invariance_residual(l, &mu0.normalize());
    if residual > tol.balance {
        return Err(Error::NotInvariant { residual });
    }
    Ok(())
}

/// Time-reversed chain: `c*(x,y) = μ⁰(y) c(y,x) / μ⁰(x)`.
pub fn adjoint(l: &Generator, mu0: &Measure, tol: &Tolerances) -> Result<Generator> {
    check_invariant(l, mu0, tol)?;
    let n = l.n();
    let w = mu0.weights();
    let m = DMatrix::from_fn(n, n, |x, y| if x == y { 0.0 } else { w[y] * l.rate(y, x) / w[x] });
    Generator::from_offdiag(l.space().clone(), m)
}

/// `c̃ = ½(c + c*)`, the μ⁰-symmetric part of the dynamics.
pub fn symmetrize(l: &Generator, mu0: &Measure, tol: &Tolerances) -> Result<Generator> {
    let star = adjoint(l, mu0, tol)?;
    let m = (l.matrix() + star.matrix()) * 0.5;
    Generator::from_offdiag(l.space().clone(), m)
}

/// `max_{x≠y} |μ(x)c(x,y) − μ(y)c(y,x)|`, zero exactly for reversible chains.
pub fn reversibility_residual(l: &Generator, mu: &Measure) -> f64 {
    let n = l.n();
    let w = mu.weights();
    let mut r: f64 = 0.0;
    for x in 0..n {
        for y in (x + 1)..n {
            r = r.max((w[x] * l.rate(x, y) - w[y] * l.rate(y, x)).abs());
        }
    }
    r
}

/// `Γ(f,g) = L(fg) − f Lg − g Lf`.
pub fn carre_du_champ(l: &Generator, f: &Observable, g: &Observable) -> Observable {
    let fg = f.mul(g);
    l.apply(&fg).sub(&f.mul(&l.apply(g))).sub(&g.mul(&l.apply(f)))
}

/// Jump-kernel form `Γ(f,g)(x) = Σ_y c(x,y)(f(y) − f(x))(g(y) − g(x))`.
pub fn carre_du_champ_jump(l: &Generator, f: &Observable, g: &Observable) -> Observable {
    let n = l.n();
    let (fv, gv) = (f.as_slice(), g.as_slice());
    let v = (0..n)
        .map(|x| {
            (0..n)
                .filter(|&y| y != x)
                .map(|y| l.rate(x, y) * (fv[y] - fv[x]) * (gv[y] - gv[x]))
                .sum()
        })
        .collect();
    Observable::from_vec(v).expect("finite inputs")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::{invariant_measure, StateSpace};

    fn cycle3() -> Generator {
        Generator::build(StateSpace::with_size(3).unwrap(), &[(0, 1, 1.0), (1, 2, 1.0), (2, 0, 1.0)]).unwrap()
    }

    #[test]
    fn adjoint_reverses_directed_cycle() {
        let l = cycle3();
        let mu = Measure::uniform(3);
        let star = adjoint(&l, &mu, &Tolerances::default()).unwrap();
        for x in 0..3 {
            for y in 0..3 {
                if x != y {
                    assert_eq!(star.rate(x, y), l.rate(y, x));
                }
            }
        }
    }

    #[test]
    fn symmetrized_cycle_has_half_rates() {
        let l = cycle3();
        let s = symmetrize(&l, &Measure::uniform(3), &Tolerances::default()).unwrap();
        for x in 0..3 {
            assert_eq!(s.rate(x, (x + 1) % 3), 0.5);
            assert_eq!(s.rate((x + 1) % 3, x), 0.5);
        }
        assert_eq!(reversibility_residual(&s, &Measure::uniform(3)), 0.0);
    }

    #[test]
    fn adjoint_needs_invariant_measure() {
        let l = cycle3();
        let mu = Measure::probability(nalgebra::DVector::from_vec(vec![0.5, 0.25, 0.25])).unwrap();
        assert!(matches!(adjoint(&l, &mu, &Tolerances::default()), Err(Error::NotInvariant { .. })));
    }

    #[test]
    fn two_state_carre_du_champ() {
        let (a, b) = (0.3, 1.7);
        let l = Generator::build(StateSpace::with_size(2).unwrap(), &[(0, 1, a), (1, 0, b)]).unwrap();
        let f = Observable::from_vec(vec![0.0, 1.0]).unwrap();
        let gam = carre_du_champ(&l, &f, &f);
        assert!((gam.as_slice()[0] - a).abs() < 1e-15);
        assert!((gam.as_slice()[1] - b).abs() < 1e-15);
        let _ = invariant_measure(&l).unwrap();
    }

    #[test]
    fn carre_du_champ_of_constant_vanishes() {
        let l = cycle3();
        let g = Observable::from_vec(vec![0.3, -2.0, 5.0]).unwrap();
        let gam = carre_du_champ(&l, &Observable::ones(3), &g);
        assert!(gam.sup_norm() < 1e-14);
    }
}
