//! Covariance derivatives, the equilibrium FDT identity and its relatives.

mod report;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::config::Tolerances;
use crate::error::{Error, Result};
use crate::fit::linear_fit;
use crate::markov::{
    carre_du_champ, invariance_residual, invariant_measure, reversibility_residual, spectral_gap, Generator, Measure,
    Observable, SpectralGap,
};
use crate::perturbation::PerturbationFamily;
use crate::response::{check_times, response_function};

pub use report::{CheckRecord, FdtReport, Verdict};

fn require_probability(nu: &Measure) -> Result<()> {
    if (nu.total_mass() - 1.0).abs() > 1e-12 {
        return Err(Error::UnnormalizedInitial);
    }
    Ok(())
}

/// `ν P_s` as a row vector.
fn evolve_measure(l: &Generator, nu: &Measure, s: f64, tol: &Tolerances) -> Result<DVector<f64>> {
    l.dual_semigroup().apply_vec(s, nu.weights(), tol.expm_tail)
}

fn dot(w: &DVector<f64>, g: &Observable) -> f64 {
    w.dot(g.values())
}

/// `K_{f,g}(s,t) = ⟨P_s(f P_{t−s} g)⟩_ν − ⟨P_s f⟩_ν ⟨P_t g⟩_ν`.
pub fn covariance(
    nu: &Measure,
    l: &Generator,
    f: &Observable,
    g: &Observable,
    s: f64,
    t: f64,
    tol: &Tolerances,
) -> Result<f64> {
    check_times(s, t)?;
    require_probability(nu)?;
    nu.check_len(l.n())?;
    f.check_len(l.n())?;
    g.check_len(l.n())?;
    let p = l.semigroup();
    let nu_s = evolve_measure(l, nu, s, tol)?;
    let h = p.apply(t - s, g, tol.expm_tail)?;
    let nu_t = evolve_measure(l, nu, t, tol)?;
    Ok(dot(&nu_s, &f.mul(&h)) - dot(&nu_s, f) * dot(&nu_t, g))
}

/// Which closed form of `∂_s K_{f,g}(s,t)` to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeMode {
    /// Any initial law.
    General,
    /// Any initial law, written with `Γ`.
    Gamma,
    /// `ν` invariant.
    Invariant,
    /// `ν` invariant and `L` reversible with respect to it.
    Symmetric,
}

impl DerivativeMode {
    pub const ALL: [DerivativeMode; 4] =
        [DerivativeMode::General, DerivativeMode::Gamma, DerivativeMode::Invariant, DerivativeMode::Symmetric];

    pub fn as_str(self) -> &'static str {
        match self {
            DerivativeMode::General => "general",
            DerivativeMode::Gamma => "gamma",
            DerivativeMode::Invariant => "invariant",
            DerivativeMode::Symmetric => "symmetric",
        }
    }

    /// Whether the mode's preconditions hold for `(ν, L)`.
    pub fn applies(self, nu: &Measure, l: &Generator, tol: &Tolerances) -> bool {
        self.precondition(nu, l, tol).is_ok()
    }

    fn precondition(self, nu: &Measure, l: &Generator, tol: &Tolerances) -> Result<()> {
        if matches!(self, DerivativeMode::Invariant | DerivativeMode::Symmetric) {
            let residual = invariance_residual(l, nu);
            if residual > tol.derivative_modes {
                return Err(Error::ModePreconditionFailed { mode: self.as_str(), residual });
            }
        }
        if self == DerivativeMode::Symmetric {
            let residual = reversibility_residual(l, nu);
            if residual > tol.reversible {
                return Err(Error::ModePreconditionFailed { mode: self.as_str(), residual });
            }
        }
        Ok(())
    }
}

/// `∂_s K_{f,g}(s,t)` from one of the closed forms.
#[allow(clippy::too_many_arguments)]
pub fn covariance_s_derivative(
    nu: &Measure,
    l: &Generator,
    f: &Observable,
    g: &Observable,
    s: f64,
    t: f64,
    mode: DerivativeMode,
    tol: &Tolerances,
) -> Result<f64> {
    check_times(s, t)?;
    require_probability(nu)?;
    nu.check_len(l.n())?;
    f.check_len(l.n())?;
    g.check_len(l.n())?;
    mode.precondition(nu, l, tol)?;
    let p = l.semigroup();
    let h = p.apply(t - s, g, tol.expm_tail)?;
    let w = nu.weights();
    Ok(match mode {
        DerivativeMode::General => {
            let nu_s = evolve_measure(l, nu, s, tol)?;
            let nu_t = evolve_measure(l, nu, t, tol)?;
            dot(&nu_s, &l.apply(&f.mul(&h))) - dot(&nu_s, &f.mul(&l.apply(&h))) - dot(&nu_s, &l.apply(f)) * dot(&nu_t, g)
        }
        DerivativeMode::Gamma => {
            let nu_s = evolve_measure(l, nu, s, tol)?;
            dot(&nu_s, &carre_du_champ(l, f, &h)) + covariance(nu, l, &l.apply(f), g, s, t, tol)?
        }
        DerivativeMode::Invariant => -dot(w, &f.mul(&l.apply(&h))),
        DerivativeMode::Symmetric => 0.5 * dot(w, &carre_du_champ(l, f, &h)),
    })
}

/// Richardson-extrapolated finite difference of `s ↦ K_{f,g}(s,t)` with base step `h`.
///
/// Central differences when `[s−h, s+h] ⊂ [0, t]`, second-order one-sided ones otherwise.
#[allow(clippy::too_many_arguments)]
pub fn covariance_s_derivative_numerical(
    nu: &Measure,
    l: &Generator,
    f: &Observable,
    g: &Observable,
    s: f64,
    t: f64,
    h: f64,
    tol: &Tolerances,
) -> Result<f64> {
    check_times(s, t)?;
    if !(h > 0.0) || 2.0 * h > t {
        return Err(Error::InvalidArgument(format!("step {h} does not fit in [0, {t}]")));
    }
    let k = |u: f64| covariance(nu, l, f, g, u, t, tol);
    let d = |step: f64| -> Result<f64> {
        if s - step >= 0.0 && s + step <= t {
            Ok((k(s + step)? - k(s - step)?) / (2.0 * step))
        } else if s + 2.0 * step <= t {
            Ok((-3.0 * k(s)? + 4.0 * k(s + step)? - k(s + 2.0 * step)?) / (2.0 * step))
        } else {
            Ok((3.0 * k(s)? - 4.0 * k(s - step)? + k(s - 2.0 * step)?) / (2.0 * step))
        }
    };
    Ok((4.0 * d(h / 2.0)? - d(h)?) / 3.0)
}

#[derive(Debug, Clone, Serialize)]
pub struct FdtCheck {
    pub s: f64,
    pub t: f64,
    /// `∂_s K_{f,g}(s,t)` under `μ⁰`.
    pub lhs: f64,
    /// `⟨R(s,t)⟩_{μ⁰}`.
    pub rhs: f64,
    pub residual: f64,
    /// `|⟨(A_f + fL) P_{t−s} g⟩_{μ⁰}|`.
    pub static_residual: f64,
}

fn require_direction(fam: &PerturbationFamily, f: &Observable) -> Result<()> {
    if f != fam.direction() {
        return Err(Error::DirectionMismatch);
    }
    Ok(())
}

/// Equilibrium FDT at `(s, t)`: `∂_s K_{f,g}(s,t) = ⟨R(s,t)⟩_{μ⁰}`.
pub fn fdt_check(fam: &PerturbationFamily, f: &Observable, g: &Observable, s: f64, t: f64) -> Result<FdtCheck> {
    require_direction(fam, f)?;
    let l = fam.base();
    let mu0 = fam.mu0();
    let tol = fam.tolerances();
    let lhs = covariance_s_derivative(mu0, l, f, g, s, t, DerivativeMode::Invariant, tol)?;
    let r = response_function(fam, g, s, t)?;
    let rhs = mu0.expect(&r);
    Ok(FdtCheck { s, t, lhs, rhs, residual: (lhs - rhs).abs(), static_residual: static_identity_residual(fam, g, t - s)? })
}

/// `|⟨(A_f + fL) P_v g⟩_{μ⁰}|`.
pub fn static_identity_residual(fam: &PerturbationFamily, g: &Observable, v: f64) -> Result<f64> {
    let l = fam.base();
    let h = l.semigroup().apply(v, g, fam.tolerances().expm_tail)?;
    let w = fam.kernel().apply(&h).add(&fam.direction().mul(&l.apply(&h)));
    Ok(fam.mu0().expect(&w).abs())
}

#[derive(Debug, Clone, Serialize)]
pub struct ScanPoint {
    pub s: f64,
    /// `|∂_s K(s, s+τ) − ⟨R(s, s+τ)⟩_{ν₀}|`.
    pub defect: f64,
    pub response_mean: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct NearEquilibriumScan {
    pub tau: f64,
    pub points: Vec<ScanPoint>,
    pub gap: f64,
    pub gap_is_simple: bool,
    /// `−slope` of `log d(s)` over the points above the round-off floor.
    pub fitted_rate: Option<f64>,
    /// `−⟨f L P_τ g⟩_{μ⁰}`.
    pub limit: f64,
    /// `|⟨R(s_max, s_max+τ)⟩_{ν₀} − limit|`.
    pub terminal_difference: f64,
}

impl NearEquilibriumScan {
    pub fn terminal_defect(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.defect)
    }

    pub fn rate_error(&self) -> Option<f64> {
        self.fitted_rate.map(|r| (r - self.gap).abs() / self.gap)
    }
}

/// Defect of the FDT from a non-stationary start `ν₀` along `s`, with fitted decay rate.
pub fn near_equilibrium_scan(
    nu0: &Measure,
    fam: &PerturbationFamily,
    g: &Observable,
    tau: f64,
    s_grid: &[f64],
) -> Result<NearEquilibriumScan> {
    if s_grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    require_probability(nu0)?;
    let l = fam.base();
    let tol = fam.tolerances();
    let mu0 = invariant_measure(l)?;
    let f = fam.direction();
    let mut points = Vec::with_capacity(s_grid.len());
    for &s in s_grid {
        let lhs = covariance_s_derivative(nu0, l, f, g, s, s + tau, DerivativeMode::General, tol)?;
        let r = response_function(fam, g, s, s + tau)?;
        let mean = nu0.expect(&r);
        points.push(ScanPoint { s, defect: (lhs - mean).abs(), response_mean: mean });
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) =
        points.iter().filter(|p| p.defect > tol.decay_floor).map(|p| (p.s, p.defect.ln())).unzip();
    let fitted_rate = linear_fit(&xs, &ys).map(|(slope, _)| -slope);
    let spec: SpectralGap = spectral_gap(l)?;
    let ptg = l.semigroup().apply(tau, g, tol.expm_tail)?;
    let limit = -mu0.expect(&f.mul(&l.apply(&ptg)));
    let last = points.last().expect("nonempty grid");
    Ok(NearEquilibriumScan {
        tau,
        gap: spec.gap,
        gap_is_simple: spec.is_simple(2.0),
        fitted_rate,
        limit,
        terminal_difference: (last.response_mean - limit).abs(),
        points,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct GreenKubo {
    /// `−⟨f L g⟩_{μ⁰}`.
    pub lhs: f64,
    /// `½⟨Γ(f,g)⟩_{μ⁰}`.
    pub middle: f64,
    /// `∫₀^{T} ⟨(P_s L f)(L g)⟩_{μ⁰} ds`.
    pub rhs: f64,
    pub t_max: f64,
    /// `e^{−gap·T}‖Lf‖∞‖Lg‖∞`.
    pub tail_bound: f64,
    pub algebraic_residual: f64,
    /// `|rhs − lhs| / |lhs|` (absolute when `lhs = 0`).
    pub residual: f64,
    /// `tol + tail_bound / |lhs|`.
    pub tolerance: f64,
}

impl GreenKubo {
    pub fn passes(&self, algebraic_tol: f64) -> bool {
        self.algebraic_residual <= algebraic_tol && self.residual <= self.tolerance
    }
}

/// `∫₀ᵀ P_s v ds` from `exp(T [[L, I], [0, 0]])`.
pub fn integrated_semigroup(l: &Generator, v: &Observable, t: f64, tol: &Tolerances) -> Result<Observable> {
    check_times(0.0, t)?;
    let n = l.n();
    let mut block = DMatrix::zeros(2 * n, 2 * n);
    block.view_mut((0, 0), (n, n)).copy_from(l.matrix());
    block.view_mut((0, n), (n, n)).fill_with_identity();
    let mut x = DVector::zeros(2 * n);
    x.rows_mut(n, n).copy_from(v.values());
    let y = crate::markov::Uniformized::new(&block).apply_vec(t, &x, tol.expm_tail)?;
    Observable::new(y.rows(0, n).into_owned())
}

/// Green–Kubo for a reversible chain; `t_max` defaults to `50/gap`.
pub fn green_kubo(
    l: &Generator,
    mu0: &Measure,
    f: &Observable,
    g: &Observable,
    t_max: Option<f64>,
    tol: &Tolerances,
) -> Result<GreenKubo> {
    let mu = mu0.normalize();
    let inv = invariance_residual(l, &mu);
    if inv > tol.balance {
        return Err(Error::NotInvariant { residual: inv });
    }
    let rev = reversibility_residual(l, &mu);
    if rev > tol.reversible {
        return Err(Error::NotReversible { residual: rev });
    }
    let gap = spectral_gap(l)?.gap;
    let t_max = t_max.unwrap_or(50.0 / gap);
    let lf = l.apply(f);
    let lg = l.apply(g);
    let lhs = -mu.expect(&f.mul(&lg));
    let middle = 0.5 * mu.expect(&carre_du_champ(l, f, g));
    let rhs = mu.expect(&integrated_semigroup(l, &lf, t_max, tol)?.mul(&lg));
    let tail_bound = (-gap * t_max).exp() * lf.sup_norm() * lg.sup_norm();
    let (residual, tolerance) = if lhs != 0.0 {
        ((rhs - lhs).abs() / lhs.abs(), tol.green_kubo + tail_bound / lhs.abs())
    } else {
        ((rhs - lhs).abs(), tol.green_kubo + tail_bound)
    };
    Ok(GreenKubo { lhs, middle, rhs, t_max, tail_bound, algebraic_residual: (lhs - middle).abs(), residual, tolerance })
}

/// `max_{x,y} |μ⁰(x)B(x,y) − μ⁰(y)B(y,x)|` for `B = A_f + diag(f)L`.
pub fn b_symmetry_residual(fam: &PerturbationFamily) -> f64 {
    let b = fam.b_operator();
    let w = fam.mu0().weights();
    let n = fam.n();
    let mut r: f64 = 0.0;
    for x in 0..n {
        for y in (x + 1)..n {
            r = r.max((w[x] * b[(x, y)] - w[y] * b[(y, x)]).abs());
        }
    }
    r
}

/// `μ⁰`-symmetry of `B_f`, after checking that `L^{δf}` is `μ^{δf}`-symmetric at each `δ`.
pub fn b_symmetry_check(fam: &PerturbationFamily, f: &Observable, deltas: &[f64]) -> Result<f64> {
    require_direction(fam, f)?;
    for &delta in deltas {
        let l = fam.generator_at(delta)?;
        let residual = reversibility_residual(&l, &fam.tilted_measure(delta));
        if residual > fam.tolerances().reversible {
            return Err(Error::NotSymmetricFamily { delta, residual });
        }
    }
    Ok(b_symmetry_residual(fam))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::markov::StateSpace;
    use crate::perturbation::{glauber_family, langevin_family, time_change_family, HamiltonianGraph};

    fn obs(v: &[f64]) -> Observable {
        Observable::from_vec(v.to_vec()).unwrap()
    }

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    fn chain3() -> Generator {
        Generator::build(
            StateSpace::with_size(3).unwrap(),
            &[(0, 1, 1.0), (1, 2, 0.7), (2, 0, 1.2), (1, 0, 0.3), (0, 2, 0.1)],
        )
        .unwrap()
    }

    #[test]
    fn two_state_covariance_decay() {
        let (a, b) = (0.4, 1.1);
        let l = Generator::build(StateSpace::with_size(2).unwrap(), &[(0, 1, a), (1, 0, b)]).unwrap();
        let mu = invariant_measure(&l).unwrap();
        let f = obs(&[1.0, 0.0]);
        let var = mu.weights()[0] * mu.weights()[1];
        for (s, t) in [(0.0, 0.0), (0.2, 1.0), (1.0, 3.5)] {
            let k = covariance(&mu, &l, &f, &f, s, t, &tol()).unwrap();
            assert!((k - var * (-(a + b) * (t - s)).exp()).abs() < 1e-14);
        }
    }

    #[test]
    fn modes_agree_and_match_numerics() {
        let l = chain3();
        let f = obs(&[0.3, -1.0, 0.8]);
        let g = obs(&[1.0, 0.2, -0.4]);
        let nu = Measure::probability(DVector::from_vec(vec![0.7, 0.2, 0.1])).unwrap();
        let gen = covariance_s_derivative(&nu, &l, &f, &g, 0.4, 1.3, DerivativeMode::General, &tol()).unwrap();
        let gam = covariance_s_derivative(&nu, &l, &f, &g, 0.4, 1.3, DerivativeMode::Gamma, &tol()).unwrap();
        let num = covariance_s_derivative_numerical(&nu, &l, &f, &g, 0.4, 1.3, 1e-5, &tol()).unwrap();
        assert!((gen - gam).abs() < 1e-12);
        assert!((gen - num).abs() < 1e-7, "{gen} {num}");
        assert!(matches!(
            covariance_s_derivative(&nu, &l, &f, &g, 0.4, 1.3, DerivativeMode::Invariant, &tol()),
            Err(Error::ModePreconditionFailed { .. })
        ));
        let mu = invariant_measure(&l).unwrap();
        let inv = covariance_s_derivative(&mu, &l, &f, &g, 0.4, 1.3, DerivativeMode::Invariant, &tol()).unwrap();
        let gen = covariance_s_derivative(&mu, &l, &f, &g, 0.4, 1.3, DerivativeMode::General, &tol()).unwrap();
        assert!((inv - gen).abs() < 1e-12);
        let num = covariance_s_derivative_numerical(&mu, &l, &f, &g, 0.0, 1.3, 1e-5, &tol()).unwrap();
        let at0 = covariance_s_derivative(&mu, &l, &f, &g, 0.0, 1.3, DerivativeMode::General, &tol()).unwrap();
        assert!((at0 - num).abs() < 1e-7);
    }

    #[test]
    fn fdt_holds_on_nonreversible_chain() {
        let l = chain3();
        let mu = invariant_measure(&l).unwrap();
        let f = obs(&[0.2, 0.9, 0.0]);
        let g = obs(&[1.0, -2.0, 0.5]);
        for fam in [
            time_change_family(&l, &mu, &f, &tol()).unwrap(),
            langevin_family(&l, &mu, &f, &tol()).unwrap(),
        ] {
            let c = fdt_check(&fam, &f, &g, 0.5, 2.0).unwrap();
            assert!(c.residual < 1e-12 && c.static_residual < 1e-12, "{c:?}");
            let bad = fam.with_kernel(fam.kernel().perturbed_entry(0, 1, 1e-3)).unwrap();
            assert!(fdt_check(&bad, &f, &g, 0.5, 2.0).unwrap().residual > 1e-5);
        }
        let fam = time_change_family(&l, &mu, &f, &tol()).unwrap();
        assert_eq!(fdt_check(&fam, &g, &g, 0.5, 2.0).unwrap_err(), Error::DirectionMismatch);
    }

    #[test]
    fn two_state_scan_decays_at_total_rate() {
        let (a, b) = (0.4, 1.1);
        let l = Generator::build(StateSpace::with_size(2).unwrap(), &[(0, 1, a), (1, 0, b)]).unwrap();
        let mu = invariant_measure(&l).unwrap();
        let f = obs(&[1.0, 0.0]);
        let fam = time_change_family(&l, &mu, &f, &tol()).unwrap();
        let nu0 = Measure::point_mass(2, 1);
        // d(s) mixes e^{−λs} with e^{−2λs}; start the fit where the latter is negligible.
        let grid: Vec<f64> = (0..12).map(|k| 5.0 + k as f64).collect();
        let scan = near_equilibrium_scan(&nu0, &fam, &obs(&[0.0, 1.0]), 0.5, &grid).unwrap();
        assert!((scan.fitted_rate.unwrap() - (a + b)).abs() < 1e-2 * (a + b), "{:?}", scan.fitted_rate);
        let at_eq = near_equilibrium_scan(&mu, &fam, &obs(&[0.0, 1.0]), 0.5, &grid).unwrap();
        assert!(at_eq.points.iter().all(|p| p.defect < 1e-12));
    }

    #[test]
    fn green_kubo_reversible_ring() {
        let n = 5;
        let mut rates = Vec::new();
        for x in 0..n {
            rates.push((x, (x + 1) % n, 0.5 + 0.1 * x as f64));
            rates.push(((x + 1) % n, x, 0.5 + 0.1 * x as f64));
        }
        let l = Generator::build(StateSpace::with_size(n).unwrap(), &rates).unwrap();
        let mu = invariant_measure(&l).unwrap();
        let f = obs(&[1.0, 0.0, -0.5, 0.3, 2.0]);
        let gk = green_kubo(&l, &mu, &f, &f, None, &tol()).unwrap();
        assert!(gk.passes(1e-12), "{gk:?}");
        let oracle = l.semigroup().apply(3.0, &f, 1e-14).unwrap().sub(&f);
        let integ = integrated_semigroup(&l, &l.apply(&f), 3.0, &tol()).unwrap();
        assert!(integ.sub(&oracle).sup_norm() < 1e-12);
        let nr = chain3();
        let f3 = obs(&[1.0, 0.0, -0.5]);
        assert!(matches!(
            green_kubo(&nr, &invariant_measure(&nr).unwrap(), &f3, &f3, None, &tol()),
            Err(Error::NotReversible { .. })
        ));
    }

    #[test]
    fn glauber_b_operator_symmetric() {
        let hg = HamiltonianGraph::ring(6, obs(&[0.0, 0.4, -0.3, 1.0, 0.2, -0.8])).unwrap();
        let f = obs(&[0.5, 0.0, 1.0, -0.2, 0.3, 0.0]);
        let fam = glauber_family(&hg, &f, &tol()).unwrap();
        assert!(b_symmetry_check(&fam, &f, &[0.1, 0.5]).unwrap() < 1e-12);
        let l = chain3();
        let tc = time_change_family(&l, &invariant_measure(&l).unwrap(), &obs(&[0.1, 0.2, 0.3]), &tol()).unwrap();
        assert!(matches!(
            b_symmetry_check(&tc, &obs(&[0.1, 0.2, 0.3]), &[0.1]),
            Err(Error::NotSymmetricFamily { .. })
        ));
    }
}
