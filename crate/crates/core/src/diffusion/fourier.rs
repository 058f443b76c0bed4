use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Real trigonometric polynomial `c + Σ_k (a_k cos kx + b_k sin kx)` on the torus.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FourierSeries {
    #[serde(default, rename = "const")]
    pub constant: f64,
    /// `a_1, a_2, …`.
    #[serde(default)]
    pub cos: Vec<f64>,
    /// `b_1, b_2, …`.
    #[serde(default)]
    pub sin: Vec<f64>,
}

impl FourierSeries {
    pub fn new(constant: f64, cos: Vec<f64>, sin: Vec<f64>) -> Result<Self> {
        let s = Self { constant, cos, sin };
        s.validate()?;
        Ok(s)
    }

    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self { constant: c, ..Self::default() }
    }

    /// `amp · cos(kx)`.
    pub fn cos_mode(k: usize, amp: f64) -> Self {
        let mut cos = vec![0.0; k];
        cos[k - 1] = amp;
        Self { constant: 0.0, cos, sin: Vec::new() }
    }

    /// `amp · sin(kx)`.
    pub fn sin_mode(k: usize, amp: f64) -> Self {
        let mut sin = vec![0.0; k];
        sin[k - 1] = amp;
        Self { constant: 0.0, cos: Vec::new(), sin }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.constant.is_finite() || self.cos.iter().chain(&self.sin).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Fourier coefficients"));
        }
        Ok(())
    }

    pub fn degree(&self) -> usize {
        self.cos.len().max(self.sin.len())
    }

    pub fn is_constant(&self) -> bool {
        self.cos.iter().chain(&self.sin).all(|&v| v == 0.0)
    }

    /// Value and first derivative at `x`.
    pub fn eval_with_derivative(&self, x: f64) -> (f64, f64) {
        let (s1, c1) = x.sin_cos();
        let (mut sk, mut ck) = (s1, c1);
        let (mut v, mut d) = (self.constant, 0.0);
        for k in 1..=self.degree() {
            let a = self.cos.get(k - 1).copied().unwrap_or(0.0);
            let b = self.sin.get(k - 1).copied().unwrap_or(0.0);
            v += a * ck + b * sk;
            d += k as f64 * (b * ck - a * sk);
            let next_c = ck * c1 - sk * s1;
            sk = sk * c1 + ck * s1;
            ck = next_c;
        }
        (v, d)
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.eval_with_derivative(x).0
    }

    pub fn derivative_at(&self, x: f64) -> f64 {
        self.eval_with_derivative(x).1
    }

    pub fn derivative(&self) -> Self {
        let n = self.degree();
        let mut cos = vec![0.0; n];
        let mut sin = vec![0.0; n];
        for k in 1..=n {
            let a = self.cos.get(k - 1).copied().unwrap_or(0.0);
            let b = self.sin.get(k - 1).copied().unwrap_or(0.0);
            cos[k - 1] = k as f64 * b;
            sin[k - 1] = -(k as f64) * a;
        }
        Self { constant: 0.0, cos, sin }
    }

    pub fn scale(&self, r: f64) -> Self {
        Self {
            constant: r * self.constant,
            cos: self.cos.iter().map(|v| r * v).collect(),
            sin: self.sin.iter().map(|v| r * v).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        let n = self.degree().max(other.degree());
        let get = |v: &[f64], i: usize| v.get(i).copied().unwrap_or(0.0);
        Self {
            constant: self.constant + other.constant,
            cos: (0..n).map(|i| get(&self.cos, i) + get(&other.cos, i)).collect(),
            sin: (0..n).map(|i| get(&self.sin, i) + get(&other.sin, i)).collect(),
        }
    }

    /// Values on the uniform grid `x_i = 2πi/n`.
    pub fn sample(&self, n: usize) -> Vec<f64> {
        (0..n).map(|i| self.eval(grid_point(i, n))).collect()
    }
}

pub(crate) fn grid_point(i: usize, n: usize) -> f64 {
    std::f64::consts::TAU * i as f64 / n as f64
}
