use serde::{Deserialize, Serialize};

use crate::diffusion::fourier::{grid_point, FourierSeries};
use crate::error::{Error, Result};
use crate::markov::{Generator, Measure, Observable, StateSpace};

/// Points used to bound `sup |b_δ|`.
const SUP_SAMPLES: usize = 4096;

/// Diffusion `dX = b_δ(X) dt + √2 dW` on `[0, 2π)` with
/// `b_δ = −H′ + δf′ + ψ e^{H − δf}`.
///
/// `e^{−(H−δf)}` is invariant for every `δ`; `ψ = 0` is the reversible case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TorusModel {
    #[serde(rename = "H")]
    pub h: FourierSeries,
    #[serde(default)]
    pub psi: f64,
    #[serde(default)]
    pub f: FourierSeries,
}

impl TorusModel {
    pub fn new(h: FourierSeries, psi: f64, f: FourierSeries) -> Result<Self> {
        h.validate()?;
        f.validate()?;
        if !psi.is_finite() {
            return Err(Error::NonFinite("psi"));
        }
        Ok(Self { h, psi, f })
    }

    pub fn drift(&self, x: f64, delta: f64) -> f64 {
        let (hv, hd) = self.h.eval_with_derivative(x);
        let (fv, fd) = if delta != 0.0 || self.psi != 0.0 { self.f.eval_with_derivative(x) } else { (0.0, 0.0) };
        let mut b = -hd + delta * fd;
        if self.psi != 0.0 {
            b += self.psi * (hv - delta * fv).exp();
        }
        b
    }

    pub fn sup_drift(&self, delta: f64) -> f64 {
        (0..SUP_SAMPLES).map(|i| self.drift(grid_point(i, SUP_SAMPLES), delta).abs()).fold(0.0, f64::max)
    }

    /// `U_δ = H − δf`, the potential of the invariant density.
    pub fn potential(&self, delta: f64) -> FourierSeries {
        self.h.add(&self.f.scale(-delta))
    }

    /// `A_f g = f′g′ − f ψ e^H g′` evaluated at `x` for derivative `g′(x)`.
    pub fn response_coefficient(&self, x: f64) -> f64 {
        let (fv, fd) = self.f.eval_with_derivative(x);
        fd - fv * self.psi * self.h.eval(x).exp()
    }

    /// Same model with direction `f` replaced.
    pub fn with_direction(&self, f: FourierSeries) -> Self {
        Self { f, ..self.clone() }
    }
}

/// State space of `n` grid nodes labelled by position index.
pub fn grid_space(n: usize) -> Result<StateSpace> {
    StateSpace::with_size(n)
}

fn check_grid(n_grid: usize) -> Result<()> {
    if n_grid < 64 {
        return Err(Error::InvalidGrid(format!("n_grid = {n_grid} < 64")));
    }
    Ok(())
}

/// Birth–death chain on the ring with `c(i, i±1) = 1/h² ± b_δ(x_i)/(2h)`.
pub fn grid_discretize(model: &TorusModel, n_grid: usize, delta: f64) -> Result<Generator> {
    check_grid(n_grid)?;
    let h = std::f64::consts::TAU / n_grid as f64;
    let mut rates = Vec::with_capacity(2 * n_grid);
    for i in 0..n_grid {
        let b = model.drift(grid_point(i, n_grid), delta);
        let up = 1.0 / (h * h) + b / (2.0 * h);
        let down = 1.0 / (h * h) - b / (2.0 * h);
        for rate in [up, down] {
            if rate < 0.0 {
                return Err(Error::RateNegative { node: i, rate });
            }
        }
        rates.push((i, (i + 1) % n_grid, up));
        rates.push((i, (i + n_grid - 1) % n_grid, down));
    }
    Generator::build(grid_space(n_grid)?, &rates)
}

/// Grid-sampled `e^{−(H−δf)}`, normalized over the nodes.
pub fn grid_gibbs(model: &TorusModel, n_grid: usize, delta: f64) -> Result<Measure> {
    check_grid(n_grid)?;
    let u = Observable::from_vec(model.potential(delta).sample(n_grid))?;
    Ok(Measure::gibbs(&u))
}

/// Grid samples of a Fourier series as an observable.
pub fn grid_observable(s: &FourierSeries, n_grid: usize) -> Result<Observable> {
    Observable::from_vec(s.sample(n_grid))
}

/// Central-difference response kernel `a(i, i±1) = ±(f′ − fψe^H)(x_i)/(2h)`.
pub fn central_difference_kernel(model: &TorusModel, n_grid: usize) -> Result<nalgebra::DMatrix<f64>> {
    check_grid(n_grid)?;
    let h = std::f64::consts::TAU / n_grid as f64;
    let mut m = nalgebra::DMatrix::zeros(n_grid, n_grid);
    for i in 0..n_grid {
        let a = model.response_coefficient(grid_point(i, n_grid)) / (2.0 * h);
        m[(i, (i + 1) % n_grid)] += a;
        m[(i, (i + n_grid - 1) % n_grid)] -= a;
    }
    Ok(m)
}

/// `∫ |ψ e^H g′|² dμ⁰ / ∫ |g′|² dμ⁰` by the rectangle rule on `n_grid` points.
pub fn njd_ratio(model: &TorusModel, g: &FourierSeries, n_grid: usize) -> Result<f64> {
    check_grid(n_grid)?;
    let (mut num, mut den) = (0.0, 0.0);
    for i in 0..n_grid {
        let x = grid_point(i, n_grid);
        let hv = model.h.eval(x);
        let w = (-hv).exp();
        let gd = g.derivative_at(x);
        num += w * (model.psi * hv.exp() * gd).powi(2);
        den += w * gd * gd;
    }
    if den == 0.0 {
        return Err(Error::InvalidArgument("g is constant".into()));
    }
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::{invariance_residual, invariant_measure};

    #[test]
    fn flat_torus_is_symmetric_walk() {
        let m = TorusModel::new(FourierSeries::zero(), 0.0, FourierSeries::zero()).unwrap();
        let l = grid_discretize(&m, 64, 0.0).unwrap();
        let mu = invariant_measure(&l).unwrap();
        assert!(mu.total_variation(&Measure::uniform(64)) < 1e-13);
        assert!(matches!(grid_discretize(&m, 32, 0.0), Err(Error::InvalidGrid(_))));
    }

    #[test]
    fn coarse_grid_with_strong_drift_fails() {
        let m = TorusModel::new(FourierSeries::cos_mode(1, 40.0), 0.0, FourierSeries::zero()).unwrap();
        assert!(matches!(grid_discretize(&m, 64, 0.0), Err(Error::RateNegative { .. })));
    }

    #[test]
    fn nonreversible_drift_keeps_grid_gibbs_nearly_invariant() {
        let m = TorusModel::new(FourierSeries::cos_mode(1, 1.0), 0.5, FourierSeries::sin_mode(1, 1.0)).unwrap();
        let l = grid_discretize(&m, 256, 0.3).unwrap();
        let gibbs = grid_gibbs(&m, 256, 0.3).unwrap();
        let exact = invariant_measure(&l).unwrap();
        assert!(exact.total_variation(&gibbs) < 1e-3);
        assert!(invariance_residual(&l, &exact) < 1e-9);
    }
}
