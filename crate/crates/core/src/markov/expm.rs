//! Matrix exponential action by uniformization.
//!
//! For a square matrix `M` and `λ > 0`,
//! `e^{tM} v = Σ_k Pois(k; λt) (I + M/λ)^k v`. With `λ = max |M(x,x)|` and
//! `M` a generator, `I + M/λ` is stochastic, so the series is a convex
//! combination of probability-preserving steps. The same series is used for
//! the block matrices of the convolution integrals, where `I + M/λ` is no
//! longer stochastic but its powers grow only polynomially.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::markov::Observable;

/// Largest `λτ` handled by one Poisson series before `e^{−λτ}` gets close to underflow.
const MAX_POISSON_MEAN: f64 = 32.0;
const MAX_TERMS: usize = 100_000;

/// `I + M/λ` in compressed sparse row form, together with `λ`.
#[derive(Debug, Clone)]
pub struct Uniformized {
    lambda: f64,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    n: usize,
}

impl Uniformized {
    pub fn new(m: &DMatrix<f64>) -> Self {
        let n = m.nrows();
        assert_eq!(n, m.ncols(), "uniformization needs a square matrix");
        let mut lambda = (0..n).map(|i| m[(i, i)].abs()).fold(0.0, f64::max);
        if lambda == 0.0 {
            // Nilpotent or zero matrices: any positive rate gives the same series.
            lambda = (0..n).map(|i| m.row(i).iter().map(|v| v.abs()).sum::<f64>()).fold(0.0, f64::max);
        }
        if lambda == 0.0 {
            lambda = 1.0;
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for i in 0..n {
            for j in 0..n {
                let mut v = m[(i, j)] / lambda;
                if i == j {
                    v += 1.0;
                }
                if v != 0.0 {
                    cols.push(j);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        Self { lambda, row_ptr, cols, vals, n }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn rate(&self) -> f64 {
        self.lambda
    }

    fn step(&self, v: &[f64], out: &mut [f64]) {
        for i in 0..self.n {
            let mut acc = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                acc += self.vals[k] * v[self.cols[k]];
            }
            out[i] = acc;
        }
    }

    /// One Poisson series with mean `a = λτ ≤ MAX_POISSON_MEAN`.
    fn poisson_series(&self, a: f64, v: &[f64], tail: f64) -> Vec<f64> {
        let mut weight = (-a).exp();
        let mut term = v.to_vec();
        let mut next = vec![0.0; self.n];
        let mut acc: Vec<f64> = term.iter().map(|x| weight * x).collect();
        let mut k = 0usize;
        loop {
            k += 1;
            self.step(&term, &mut next);
            std::mem::swap(&mut term, &mut next);
            weight *= a / k as f64;
            for (s, x) in acc.iter_mut().zip(&term) {
                *s += weight * x;
            }
            let ratio = a / (k + 1) as f64;
            if ratio < 1.0 {
                // Remaining mass Σ_{j>k} w_j ≤ w_k · r / (1 − r).
                let remaining = weight * ratio / (1.0 - ratio);
                if remaining < tail {
                    break;
                }
            }
            if k >= MAX_TERMS {
                break;
            }
        }
        acc
    }

    /// `e^{tM} v` as a plain vector; `tail` bounds the total discarded Poisson mass.
    pub fn apply_vec(&self, t: f64, v: &DVector<f64>, tail: f64) -> Result<DVector<f64>> {
        if t < 0.0 || !t.is_finite() {
            return Err(Error::NegativeTime(t));
        }
        if v.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: v.len() });
        }
        if t == 0.0 {
            return Ok(v.clone());
        }
        let total = self.lambda * t;
        let steps = (total / MAX_POISSON_MEAN).ceil().max(1.0) as usize;
        let a = total / steps as f64;
        let per_step = tail / steps as f64;
        let mut cur = v.as_slice().to_vec();
        for _ in 0..steps {
            cur = self.poisson_series(a, &cur, per_step);
        }
        Ok(DVector::from_vec(cur))
    }

    /// `P_t g` for an observable.
    pub fn apply(&self, t: f64, g: &Observable, tail: f64) -> Result<Observable> {
        Ok(Observable(self.apply_vec(t, g.values(), tail)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_state_closed_form() {
        let (a, b) = (0.7, 1.9);
        let m = DMatrix::from_row_slice(2, 2, &[-a, a, b, -b]);
        let u = Uniformized::new(&m);
        for &t in &[0.0, 0.01, 0.5, 3.0, 40.0] {
            let p = u.apply_vec(t, &DVector::from_vec(vec![1.0, 0.0]), 1e-14).unwrap();
            let s = a + b;
            let expect0 = b / s + a / s * (-s * t).exp();
            let expect1 = b / s - b / s * (-s * t).exp();
            assert!((p[0] - expect0).abs() < 1e-13, "t={t}");
            assert!((p[1] - expect1).abs() < 1e-13, "t={t}");
        }
    }

    #[test]
    fn nilpotent_block() {
        // e^{tN} for N = [[0,1],[0,0]] is [[1,t],[0,1]].
        let m = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let u = Uniformized::new(&m);
        let r = u.apply_vec(2.5, &DVector::from_vec(vec![0.0, 1.0]), 1e-15).unwrap();
        assert!((r[0] - 2.5).abs() < 1e-12);
        assert!((r[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn negative_time_rejected() {
        let u = Uniformized::new(&DMatrix::zeros(2, 2));
        assert_eq!(u.apply_vec(-1.0, &DVector::zeros(2), 1e-14), Err(Error::NegativeTime(-1.0)));
    }

    #[test]
    fn long_horizon_large_rate() {
        // λt ≈ 2·10⁴ exercises the step splitting.
        let m = DMatrix::from_row_slice(2, 2, &[-100.0, 100.0, 50.0, -50.0]);
        let u = Uniformized::new(&m);
        let r = u.apply_vec(200.0, &DVector::from_vec(vec![1.0, 0.0]), 1e-14).unwrap();
        assert!((r[0] - 1.0 / 3.0).abs() < 1e-12);
    }
}
