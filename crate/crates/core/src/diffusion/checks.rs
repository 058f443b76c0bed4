use std::f64::consts::TAU;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::Tolerances;
use crate::diffusion::fourier::FourierSeries;
use crate::diffusion::model::{central_difference_kernel, grid_discretize, grid_gibbs, grid_observable, TorusModel};
use crate::diffusion::simulate::{
    check_stability, mean_with_se, path_rng, simulate, EnsembleParams, EstimatorResult, Moments, PathEnsemble,
};
use crate::error::{Error, Result};
use crate::fdt::{fdt_check, FdtCheck};
use crate::fit::loglog_slope;
use crate::markov::invariant_measure;
use crate::perturbation::{langevin_family, time_change_family, PerturbationFamily, ResponseKernel};
use crate::response::response_integral;

#[derive(Debug, Clone, Serialize)]
pub struct BinCheck {
    pub lo: f64,
    pub hi: f64,
    pub observed: f64,
    pub expected: f64,
    pub std_error: f64,
    pub z: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct HistogramCheck {
    pub bins: Vec<BinCheck>,
    pub max_abs_z: f64,
    pub n_samples: usize,
}

impl HistogramCheck {
    /// Every bin within `k` standard errors.
    pub fn passes(&self, k: f64) -> bool {
        self.bins.iter().all(|b| b.z.abs() <= k)
    }
}

/// Mass of `e^{−H}/Z` in each of `n_bins` equal bins, by Simpson's rule per bin.
pub fn gibbs_bin_masses(h: &FourierSeries, n_bins: usize) -> Vec<f64> {
    const SUB: usize = 32;
    let w = TAU / n_bins as f64;
    let dx = w / SUB as f64;
    let mut masses: Vec<f64> = (0..n_bins)
        .map(|b| {
            let lo = b as f64 * w;
            (0..=SUB)
                .map(|k| {
                    let c = if k == 0 || k == SUB { 1.0 } else if k % 2 == 1 { 4.0 } else { 2.0 };
                    c * (-h.eval(lo + k as f64 * dx)).exp()
                })
                .sum::<f64>()
                * dx
                / 3.0
        })
        .collect();
    let total: f64 = masses.iter().sum();
    masses.iter_mut().for_each(|m| *m /= total);
    masses
}

/// Histogram of the positions at record `j` against `e^{−H}/Z`.
pub fn stationary_histogram_check(ens: &PathEnsemble, record: usize, h: &FourierSeries, n_bins: usize) -> HistogramCheck {
    let n = ens.n_paths();
    let w = TAU / n_bins as f64;
    let mut counts = vec![0usize; n_bins];
    for x in ens.column(record) {
        counts[((x / w) as usize).min(n_bins - 1)] += 1;
    }
    let expected = gibbs_bin_masses(h, n_bins);
    let bins: Vec<BinCheck> = (0..n_bins)
        .map(|b| {
            let p = expected[b];
            let observed = counts[b] as f64 / n as f64;
            let se = (p * (1.0 - p) / n as f64).sqrt();
            BinCheck { lo: b as f64 * w, hi: (b + 1) as f64 * w, observed, expected: p, std_error: se, z: (observed - p) / se }
        })
        .collect();
    HistogramCheck { max_abs_z: bins.iter().map(|b| b.z.abs()).fold(0.0, f64::max), bins, n_samples: n }
}

/// Grid chain with the central-difference kernel as a family over the exact grid invariant measure.
fn grid_family_cd(model: &TorusModel, n_grid: usize, tol: &Tolerances) -> Result<PerturbationFamily> {
    let l = grid_discretize(model, n_grid, 0.0)?;
    let mu = invariant_measure(&l)?;
    let f = grid_observable(&model.f, n_grid)?;
    let fam = time_change_family(&l, &mu, &f, tol)?;
    fam.with_kernel(ResponseKernel::from_matrix_unchecked(central_difference_kernel(model, n_grid)?))
}

/// `⟨A_f P_τ g⟩_{μ⁰}` on an `n_grid` chain with central-difference `A_f`.
pub fn grid_response_mean(model: &TorusModel, g: &FourierSeries, tau: f64, n_grid: usize, tol: &Tolerances) -> Result<f64> {
    let fam = grid_family_cd(model, n_grid, tol)?;
    let gh = grid_observable(g, n_grid)?;
    let pg = fam.base().semigroup().apply(tau, &gh, tol.expm_tail)?;
    Ok(fam.mu0().expect(&fam.kernel().apply(&pg)))
}

#[derive(Debug, Clone, Serialize)]
pub struct McFdt {
    pub s: f64,
    pub t: f64,
    /// Richardson-extrapolated central difference of the MC covariance in `s`.
    pub derivative: EstimatorResult,
    /// `⟨A_f P_{t−s} g⟩_{μ⁰}` from the grid chain.
    pub reference: f64,
    pub z: f64,
}

impl McFdt {
    pub fn passes(&self, k: f64) -> bool {
        self.z.abs() <= k
    }
}

/// Steps of the two central differences feeding the Richardson extrapolation.
pub const MC_DIFF_STEPS: (f64, f64) = (0.2, 0.1);

/// MC estimate of `∂_s K_{f,g}(s,t)` from stationary paths.
///
/// Uses `(4D(h/2) − D(h))/3` with `D(h) = (K(s+h,t) − K(s−h,t))/(2h)`; the
/// times `s ± h`, `s ± h/2` and `t` must be recorded.
pub fn mc_covariance_derivative(ens: &PathEnsemble, f: &FourierSeries, g: &FourierSeries, s: f64, t: f64) -> Result<EstimatorResult> {
    let (h1, h2) = MC_DIFF_STEPS;
    if s - h1 < 0.0 || s + h1 > t {
        return Err(Error::BadTimes { s, t });
    }
    let cols = [s - h1, s - h2, s + h2, s + h1, t].map(|u| ens.record_index(u));
    let [c0, c1, c2, c3, ct] = [cols[0].clone()?, cols[1].clone()?, cols[2].clone()?, cols[3].clone()?, cols[4].clone()?];
    let n = ens.n_paths();
    let fcol = |c: usize| -> Vec<f64> { (0..n).map(|i| f.eval(ens.position(i, c))).collect() };
    let center = |v: Vec<f64>| -> Vec<f64> {
        let m = v.iter().sum::<f64>() / n as f64;
        v.into_iter().map(|x| x - m).collect()
    };
    let (fa, fb, fc, fd) = (center(fcol(c0)), center(fcol(c1)), center(fcol(c2)), center(fcol(c3)));
    let gt = center((0..n).map(|i| g.eval(ens.position(i, ct))).collect());
    let z: Vec<f64> = (0..n)
        .map(|i| {
            let d1 = (fd[i] - fa[i]) * gt[i] / (2.0 * h1);
            let d2 = (fc[i] - fb[i]) * gt[i] / (2.0 * h2);
            (4.0 * d2 - d1) / 3.0
        })
        .collect();
    Ok(mean_with_se(&z))
}

/// MC FDT at `(s, t)` with the direction of `model`, against the grid chain.
pub fn mc_fdt_check(
    model: &TorusModel,
    g: &FourierSeries,
    s: f64,
    t: f64,
    params: &EnsembleParams,
    n_grid_ref: usize,
    tol: &Tolerances,
) -> Result<McFdt> {
    let ens = simulate(model, 0.0, params)?;
    mc_fdt_from_ensemble(&ens, model, g, s, t, n_grid_ref, tol)
}

/// As [`mc_fdt_check`] on an ensemble simulated at `δ = 0` from a stationary start.
pub fn mc_fdt_from_ensemble(
    ens: &PathEnsemble,
    model: &TorusModel,
    g: &FourierSeries,
    s: f64,
    t: f64,
    n_grid_ref: usize,
    tol: &Tolerances,
) -> Result<McFdt> {
    let derivative = mc_covariance_derivative(ens, &model.f, g, s, t)?;
    let reference = grid_response_mean(model, g, t - s, n_grid_ref, tol)?;
    Ok(McFdt { s, t, z: (derivative.estimate - reference) / derivative.std_error, derivative, reference })
}

#[derive(Debug, Clone, Serialize)]
pub struct McResponse {
    pub delta: f64,
    pub t: f64,
    /// `δ⁻¹(E^δ g(X_t) − E⁰ g(X_t))` with common random numbers.
    pub estimate: EstimatorResult,
    /// `⟨∫₀ᵗ R(s,t) ds⟩_{μ⁰}` from the grid chain.
    pub reference: f64,
}

/// MC finite-difference response from a stationary start.
pub fn mc_response(
    model: &TorusModel,
    g: &FourierSeries,
    delta: f64,
    params: &EnsembleParams,
    n_grid_ref: usize,
    tol: &Tolerances,
) -> Result<McResponse> {
    if !(delta > 0.0) {
        return Err(Error::NegativeDelta(delta));
    }
    let e0 = simulate(model, 0.0, params)?;
    let ed = simulate(model, delta, params)?;
    let j = e0.n_records() - 1;
    let z: Vec<f64> = (0..e0.n_paths())
        .map(|i| (g.eval(ed.position(i, j)) - g.eval(e0.position(i, j))) / delta)
        .collect();
    let t = params.n_steps as f64 * params.dt;
    let fam = grid_family_cd(model, n_grid_ref, tol)?;
    let integral = response_integral(&fam, &grid_observable(g, n_grid_ref)?, t)?;
    Ok(McResponse { delta, t, estimate: mean_with_se(&z), reference: fam.mu0().expect(&integral) })
}

#[derive(Debug, Clone, Serialize)]
pub struct GridFdt {
    pub n_grid: usize,
    /// Langevin family of the grid chain: exact identity.
    pub exact: FdtCheck,
    /// Central-difference kernel: consistent to `O(h²)`.
    pub central_difference: FdtCheck,
}

/// FDT on the discretized chain with `f`, `g` sampled on the grid.
///
/// For `ψ ≠ 0` the Langevin family needs `f ≥ 0`, so `f` is shifted by a
/// constant. Covariances are unchanged by the shift.
pub fn grid_fdt(model: &TorusModel, g: &FourierSeries, n_grid: usize, s: f64, t: f64, tol: &Tolerances) -> Result<GridFdt> {
    let l = grid_discretize(model, n_grid, 0.0)?;
    let mu = invariant_measure(&l)?;
    let mut f = grid_observable(&model.f, n_grid)?;
    if model.psi != 0.0 {
        f = f.shift_to_nonnegative();
    }
    let gh = grid_observable(g, n_grid)?;
    let fam = langevin_family(&l, &mu, &f, tol)?;
    let exact = fdt_check(&fam, &f, &gh, s, t)?;
    let cd = grid_family_cd(model, n_grid, tol)?;
    let central_difference = fdt_check(&cd, cd.direction(), &gh, s, t)?;
    Ok(GridFdt { n_grid, exact, central_difference })
}

#[derive(Debug, Clone, Serialize)]
pub struct Refinement {
    pub n_grid: Vec<usize>,
    pub errors: Vec<f64>,
    /// Slope of `log error` against `log h`.
    pub order: Option<f64>,
}

/// TV distance between the grid chain's invariant law and grid-sampled `e^{−(H−δf)}`.
pub fn invariant_tv_refinement(model: &TorusModel, delta: f64, grids: &[usize]) -> Result<Refinement> {
    if grids.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let errors: Vec<f64> = grids
        .iter()
        .map(|&n| Ok(invariant_measure(&grid_discretize(model, n, delta)?)?.total_variation(&grid_gibbs(model, n, delta)?)))
        .collect::<Result<_>>()?;
    let hs: Vec<f64> = grids.iter().map(|&n| TAU / n as f64).collect();
    Ok(Refinement { n_grid: grids.to_vec(), order: loglog_slope(&hs, &errors), errors })
}

/// Central-difference FDT residual on each grid, with its order in `h`.
pub fn grid_fdt_refinement(model: &TorusModel, g: &FourierSeries, grids: &[usize], s: f64, t: f64, tol: &Tolerances) -> Result<Refinement> {
    if grids.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let errors: Vec<f64> =
        grids.iter().map(|&n| Ok(grid_fdt(model, g, n, s, t, tol)?.central_difference.residual)).collect::<Result<_>>()?;
    let hs: Vec<f64> = grids.iter().map(|&n| TAU / n as f64).collect();
    Ok(Refinement { n_grid: grids.to_vec(), order: loglog_slope(&hs, &errors), errors })
}

#[derive(Debug, Clone, Serialize)]
pub struct WeakOrder {
    /// Step sizes from coarse to fine.
    pub dts: Vec<f64>,
    pub means: Vec<EstimatorResult>,
    /// `E_{2dt} − E_{dt}` indexed by the finer `dt`.
    pub differences: Vec<(f64, EstimatorResult)>,
    pub slope: Option<f64>,
}

/// Weak-order study of `E[g(X_T)]` for `δ = 0`.
///
/// All levels share the Brownian increments of the finest one: a coarse
/// increment is `Σ z_k √dt_fine` over its fine sub-steps. `levels` halvings
/// start from `dt_coarse`.
pub fn weak_order_sweep(
    model: &TorusModel,
    g: &FourierSeries,
    start: f64,
    t_end: f64,
    dt_coarse: f64,
    levels: usize,
    n_paths: usize,
    seed: u64,
) -> Result<WeakOrder> {
    if levels < 2 || n_paths < 2 {
        return Err(Error::InvalidArgument("weak-order sweep needs two levels and two paths".into()));
    }
    check_stability(model, 0.0, dt_coarse)?;
    let n_coarse = (t_end / dt_coarse).round() as usize;
    let fine_per_coarse = 1usize << (levels - 1);
    let n_fine = n_coarse * fine_per_coarse;
    let dt_fine = dt_coarse / fine_per_coarse as f64;
    let dts: Vec<f64> = (0..levels).map(|k| dt_coarse / (1usize << k) as f64).collect();
    let per_path = |i: usize| -> Vec<f64> {
        let mut rng = path_rng(seed, i);
        let mut xs = vec![start; levels];
        let mut acc = vec![0.0; levels];
        for step in 1..=n_fine {
            let z: f64 = rng.sample(StandardNormal);
            let dw = z * dt_fine.sqrt();
            for k in 0..levels {
                acc[k] += dw;
                let every = fine_per_coarse >> k;
                if step % every == 0 {
                    let x = xs[k];
                    xs[k] = x + model.drift(x, 0.0) * dts[k] + std::f64::consts::SQRT_2 * acc[k];
                    acc[k] = 0.0;
                }
            }
        }
        xs.iter().map(|&x| g.eval(x)).collect()
    };
    let (level_moments, diff_moments) = (0..n_paths)
        .into_par_iter()
        .map(|i| {
            let v = per_path(i);
            let mut lm = vec![Moments::default(); levels];
            let mut dm = vec![Moments::default(); levels - 1];
            for k in 0..levels {
                lm[k].push(v[k]);
            }
            for k in 1..levels {
                dm[k - 1].push(v[k - 1] - v[k]);
            }
            (lm, dm)
        })
        .reduce(
            || (vec![Moments::default(); levels], vec![Moments::default(); levels - 1]),
            |(a, b), (c, d)| {
                (a.into_iter().zip(c).map(|(x, y)| x.merge(y)).collect(), b.into_iter().zip(d).map(|(x, y)| x.merge(y)).collect())
            },
        );
    let means: Vec<EstimatorResult> = level_moments.iter().map(Moments::result).collect();
    let differences: Vec<(f64, EstimatorResult)> = (1..levels).map(|k| (dts[k], diff_moments[k - 1].result())).collect();
    let (xs, ys): (Vec<f64>, Vec<f64>) = differences.iter().map(|(dt, r)| (*dt, r.estimate.abs())).unzip();
    Ok(WeakOrder { slope: loglog_slope(&xs, &ys), dts, means, differences })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cos_model(psi: f64) -> TorusModel {
        TorusModel::new(FourierSeries::cos_mode(1, 1.0), psi, FourierSeries::sin_mode(1, 1.0)).unwrap()
    }

    #[test]
    fn bin_masses_sum_to_one() {
        let m = gibbs_bin_masses(&FourierSeries::cos_mode(1, 1.0), 64);
        assert!((m.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        let flat = gibbs_bin_masses(&FourierSeries::zero(), 8);
        assert!(flat.iter().all(|p| (p - 0.125).abs() < 1e-15));
    }

    #[test]
    fn grid_fdt_exact_and_cd_consistent() {
        let tol = Tolerances::default();
        for psi in [0.0, 0.4] {
            let r = grid_fdt(&cos_model(psi), &FourierSeries::sin_mode(1, 1.0), 64, 0.5, 1.0, &tol).unwrap();
            assert!(r.exact.residual < 1e-9, "{r:?}");
            assert!(r.central_difference.residual < 1e-2, "{r:?}");
        }
    }

    #[test]
    fn tv_order_two() {
        let r = invariant_tv_refinement(&cos_model(0.0), 0.0, &[64, 128, 256]).unwrap();
        let o = r.order.unwrap();
        assert!((1.7..=2.3).contains(&o), "{r:?}");
    }
}
