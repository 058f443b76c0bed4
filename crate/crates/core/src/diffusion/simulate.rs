use std::f64::consts::TAU;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffusion::fourier::FourierSeries;
use crate::diffusion::model::TorusModel;
use crate::error::{Error, Result};

/// Largest admissible `dt · sup|b_δ|`.
pub const STABILITY_LIMIT: f64 = 0.1;
/// Nodes of the inverse-CDF table for stationary starts.
const CDF_NODES: usize = 8192;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StartMode {
    /// Sample `X₀` from `e^{−H}/Z`.
    Stationary,
    /// `X₀ = x`.
    Point(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleParams {
    pub n_paths: usize,
    pub dt: f64,
    pub n_steps: usize,
    pub seed: u64,
    /// Positions are stored every `record_every` steps, starting at `t = 0`.
    pub record_every: usize,
    pub start: StartMode,
}

impl EnsembleParams {
    pub fn new(n_paths: usize, dt: f64, t_end: f64, seed: u64) -> Self {
        Self { n_paths, dt, n_steps: (t_end / dt).round() as usize, seed, record_every: 1, start: StartMode::Stationary }
    }

    pub fn recording_every(mut self, steps: usize) -> Self {
        self.record_every = steps.max(1);
        self
    }

    pub fn starting_at(mut self, start: StartMode) -> Self {
        self.start = start;
        self
    }

    pub fn t_end(&self) -> f64 {
        self.n_steps as f64 * self.dt
    }

    pub fn n_records(&self) -> usize {
        self.n_steps / self.record_every + 1
    }

    pub fn record_dt(&self) -> f64 {
        self.dt * self.record_every as f64
    }

    fn validate(&self) -> Result<()> {
        if self.n_paths == 0 || self.n_steps == 0 {
            return Err(Error::InvalidArgument("ensemble needs at least one path and one step".into()));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("dt = {}", self.dt)));
        }
        Ok(())
    }
}

/// Stored paths: one row per path, one column per recorded time.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEnsemble {
    pub params: EnsembleParams,
    pub delta: f64,
    /// Positions wrapped to `[0, 2π)`.
    positions: Vec<f64>,
    /// Net displacement `X_t − X_0` without wrapping.
    displacement: Vec<f64>,
}

impl PathEnsemble {
    pub fn n_paths(&self) -> usize {
        self.params.n_paths
    }

    pub fn n_records(&self) -> usize {
        self.params.n_records()
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n_records()).map(|j| j as f64 * self.params.record_dt()).collect()
    }

    /// Column of the record at time `t`, which must lie on the recording grid.
    pub fn record_index(&self, t: f64) -> Result<usize> {
        let k = t / self.params.record_dt();
        let j = k.round();
        if (k - j).abs() > 1e-9 || j < 0.0 || j as usize >= self.n_records() {
            return Err(Error::InvalidArgument(format!("time {t} is not a recorded time")));
        }
        Ok(j as usize)
    }

    pub fn position(&self, path: usize, record: usize) -> f64 {
        self.positions[path * self.n_records() + record]
    }

    pub fn displacement(&self, path: usize, record: usize) -> f64 {
        self.displacement[path * self.n_records() + record]
    }

    /// Positions at record `j` across paths.
    pub fn column(&self, record: usize) -> Vec<f64> {
        (0..self.n_paths()).map(|i| self.position(i, record)).collect()
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }
}

/// `e^{−H}/Z` inverse-CDF sampler on a fine uniform grid with linear interpolation.
#[derive(Debug, Clone)]
pub struct StationarySampler {
    cdf: Vec<f64>,
}

impl StationarySampler {
    pub fn new(h: &FourierSeries) -> Self {
        let dx = TAU / CDF_NODES as f64;
        let dens: Vec<f64> = (0..=CDF_NODES).map(|i| (-h.eval(i as f64 * dx)).exp()).collect();
        let mut cdf = vec![0.0; CDF_NODES + 1];
        for i in 0..CDF_NODES {
            cdf[i + 1] = cdf[i] + 0.5 * (dens[i] + dens[i + 1]) * dx;
        }
        let total = cdf[CDF_NODES];
        cdf.iter_mut().for_each(|c| *c /= total);
        Self { cdf }
    }

    pub fn quantile(&self, u: f64) -> f64 {
        let i = self.cdf.partition_point(|&c| c <= u).clamp(1, CDF_NODES) - 1;
        let (c0, c1) = (self.cdf[i], self.cdf[i + 1]);
        let frac = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.0 };
        (i as f64 + frac) * TAU / CDF_NODES as f64
    }
}

fn wrap(x: f64) -> f64 {
    let y = x.rem_euclid(TAU);
    if y >= TAU {
        0.0
    } else {
        y
    }
}

/// Per-path generator: stream `path` of the ChaCha8 generator seeded with `seed`.
pub fn path_rng(seed: u64, path: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path as u64);
    rng
}

/// Checks `dt · sup|b_δ| < 0.1`.
pub fn check_stability(model: &TorusModel, delta: f64, dt: f64) -> Result<()> {
    let v = dt * model.sup_drift(delta);
    if v >= STABILITY_LIMIT {
        return Err(Error::UnstableStep(v));
    }
    Ok(())
}

/// Euler–Maruyama paths of the `δ`-perturbed diffusion.
///
/// Path `i` draws from its own stream, so results do not depend on the thread
/// count, and the same seed gives common random numbers across `δ`.
pub fn simulate(model: &TorusModel, delta: f64, params: &EnsembleParams) -> Result<PathEnsemble> {
    params.validate()?;
    if !(delta >= 0.0) {
        return Err(Error::NegativeDelta(delta));
    }
    check_stability(model, delta, params.dt)?;
    let sampler = matches!(params.start, StartMode::Stationary).then(|| StationarySampler::new(&model.h));
    let n_rec = params.n_records();
    let mut positions = vec![0.0; params.n_paths * n_rec];
    let mut displacement = vec![0.0; params.n_paths * n_rec];
    let noise = (2.0 * params.dt).sqrt();
    positions
        .par_chunks_mut(n_rec)
        .zip(displacement.par_chunks_mut(n_rec))
        .enumerate()
        .for_each(|(i, (pos, disp))| {
            let mut rng = path_rng(params.seed, i);
            let x0 = match (&sampler, params.start) {
                (Some(s), _) => s.quantile(rng.random::<f64>()),
                (None, StartMode::Point(x)) => wrap(x),
                (None, StartMode::Stationary) => unreachable!(),
            };
            let (mut x, mut net) = (x0, 0.0);
            pos[0] = x;
            disp[0] = 0.0;
            for step in 1..=params.n_steps {
                let z: f64 = rng.sample(StandardNormal);
                let dx = model.drift(x, delta) * params.dt + noise * z;
                net += dx;
                x = wrap(x + dx);
                if step % params.record_every == 0 {
                    let j = step / params.record_every;
                    pos[j] = x;
                    disp[j] = net;
                }
            }
        });
    Ok(PathEnsemble { params: params.clone(), delta, positions, displacement })
}

/// Mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimatorResult {
    pub estimate: f64,
    pub std_error: f64,
    pub n_effective: usize,
}

/// Running count, sum and sum of squares; merging is associative.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Moments {
    pub n: usize,
    pub sum: f64,
    pub sum_sq: f64,
}

impl Moments {
    pub fn push(&mut self, v: f64) {
        self.n += 1;
        self.sum += v;
        self.sum_sq += v * v;
    }

    pub fn merge(self, other: Moments) -> Moments {
        Moments { n: self.n + other.n, sum: self.sum + other.sum, sum_sq: self.sum_sq + other.sum_sq }
    }

    pub fn result(&self) -> EstimatorResult {
        let n = self.n as f64;
        let mean = self.sum / n;
        let var = if self.n > 1 { ((self.sum_sq - n * mean * mean) / (n - 1.0)).max(0.0) } else { 0.0 };
        EstimatorResult { estimate: mean, std_error: (var / n).sqrt(), n_effective: self.n }
    }
}

/// Two-pass mean and standard error of i.i.d. samples.
pub fn mean_with_se(samples: &[f64]) -> EstimatorResult {
    let n = samples.len();
    let mean = samples.iter().sum::<f64>() / n as f64;
    let var = if n > 1 { samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64 } else { 0.0 };
    EstimatorResult { estimate: mean, std_error: (var / n as f64).sqrt(), n_effective: n }
}

/// Writes `{n_paths: u64, n_steps: u64, dt: f64}` little-endian, then the
/// positions row-major (one row per path). `n_steps` counts the stored columns
/// and `dt` is the time between them.
pub fn write_paths<W: Write>(ens: &PathEnsemble, mut w: W) -> std::io::Result<()> {
    w.write_all(&(ens.n_paths() as u64).to_le_bytes())?;
    w.write_all(&(ens.n_records() as u64).to_le_bytes())?;
    w.write_all(&ens.params.record_dt().to_le_bytes())?;
    for v in &ens.positions {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()
}

/// Raw contents of a path file.
#[derive(Debug, Clone, PartialEq)]
pub struct PathFile {
    pub n_paths: usize,
    pub n_steps: usize,
    pub dt: f64,
    pub data: Vec<f64>,
}

pub fn read_paths<R: Read>(mut r: R) -> std::io::Result<PathFile> {
    let mut b8 = [0u8; 8];
    r.read_exact(&mut b8)?;
    let n_paths = u64::from_le_bytes(b8) as usize;
    r.read_exact(&mut b8)?;
    let n_steps = u64::from_le_bytes(b8) as usize;
    r.read_exact(&mut b8)?;
    let dt = f64::from_le_bytes(b8);
    let mut data = Vec::with_capacity(n_paths * n_steps);
    for _ in 0..n_paths * n_steps {
        r.read_exact(&mut b8)?;
        data.push(f64::from_le_bytes(b8));
    }
    Ok(PathFile { n_paths, n_steps, dt, data })
}
