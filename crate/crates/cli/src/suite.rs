//! Orchestration of the checks behind each subcommand.

use std::io::Write;
use std::path::Path;

use fdt_lab::diffusion::{
    grid_fdt, grid_fdt_refinement, invariant_tv_refinement, mc_fdt_from_ensemble, njd_ratio, simulate,
    stationary_histogram_check, write_paths, EnsembleParams, TorusModel,
};
use fdt_lab::fdt::{
    b_symmetry_check, covariance_s_derivative, covariance_s_derivative_numerical, fdt_check, green_kubo,
    near_equilibrium_scan, static_identity_residual, CheckRecord, DerivativeMode, FdtReport, NearEquilibriumScan,
};
use fdt_lab::markov::{reversibility_residual, Measure, Observable, StateSpace};
use fdt_lab::perturbation::{
    cycle_family, decompose_cycles, general_b_family, glauber_family, langevin_family, metropolis_family, time_change_family, FamilyKind,
    PerturbationFamily,
};
use fdt_lab::response::{kernel_norm_convergence, norm, response_integral, response_sweep, simpson_response_integral, Sweep};
use fdt_lab::{Error, Tolerances};
use nalgebra::DMatrix;

use crate::config::{FamilySpec, InitialLaw, RunConfig};
use crate::error::{CliError, CliResult, Context};
use crate::model::{ModelBundle, ModelKind, StateRef};

/// `|−⟨fLg⟩ − ½⟨Γ(f,g)⟩|` is an algebraic identity.
const ALGEBRAIC_TOL: f64 = 1e-12;
/// `η(δ_min) / ‖g‖` accepted at the smallest `δ` of a sweep.
const RESPONSE_LIMIT_TOL: f64 = 1e-3;
/// Accepted deviation of a fitted order from its nominal value.
const ORDER_TOL: f64 = 0.1;
const GRID_ORDER_TOL: f64 = 0.3;
/// Accepted relative error of a fitted relaxation rate.
const RATE_TOL: f64 = 0.1;
/// MC agreement in combined standard errors.
const MC_SIGMAS: f64 = 3.0;
/// Simpson panels per unit of `t · max exit rate`, at least 256 in total.
const SIMPSON_PANELS_PER_RATE: f64 = 64.0;

fn space_of(bundle: &ModelBundle) -> CliResult<std::sync::Arc<StateSpace>> {
    match &bundle.kind {
        ModelKind::Rates { generator, .. } => Ok(generator.space().clone()),
        ModelKind::Hamiltonian { graph } => Ok(graph.space().clone()),
        ModelKind::Cycles { space, .. } => Ok(space.clone()),
        ModelKind::Torus { .. } => Err(CliError::validation("this subcommand needs a finite model")),
    }
}

fn resolve(space: &StateSpace, r: &StateRef, field: &str) -> CliResult<usize> {
    match r {
        StateRef::Index(i) if *i < space.len() => Ok(*i),
        StateRef::Index(i) => Err(CliError::validation(format!("{field}: state index {i} out of range"))),
        StateRef::Label(s) => space.index_of(s).ok_or_else(|| CliError::validation(format!("{field}: unknown state {s:?}"))),
    }
}

fn b_matrix(rows: &[Vec<f64>], n: usize) -> CliResult<DMatrix<f64>> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(CliError::validation(format!("family.b: expected a {n}x{n} matrix")));
    }
    Ok(DMatrix::from_fn(n, n, |x, y| if x == y { 0.0 } else { rows[x][y] }))
}

/// Builds the configured family and applies any kernel perturbations.
pub fn build_family(bundle: &ModelBundle, spec: &FamilySpec, tol: &Tolerances) -> CliResult<PerturbationFamily> {
    let f = bundle.observable(&spec.direction)?;
    let kind = spec.kind;
    let ctx = format!("family {kind}");
    let fam = match (&bundle.kind, kind) {
        (ModelKind::Hamiltonian { graph }, FamilyKind::Metropolis) => metropolis_family(graph, f, tol).context(ctx)?,
        (ModelKind::Hamiltonian { graph }, FamilyKind::Glauber) => glauber_family(graph, f, tol).context(ctx)?,
        (ModelKind::Hamiltonian { .. }, _) => {
            return Err(CliError::validation(format!("family.kind: {kind} needs a rates or cycles model")))
        }
        (_, k) if k.is_hamiltonian() => {
            return Err(CliError::validation(format!("family.kind: {kind} needs a hamiltonian model")))
        }
        (ModelKind::Cycles { space, mu0, cycles }, FamilyKind::Cycle) => {
            cycle_family(space.clone(), mu0, cycles, f, tol).context(ctx)?
        }
        (ModelKind::Cycles { space, mu0, cycles }, _) => {
            let base = cycle_family(space.clone(), mu0, cycles, f, tol).context("cycles")?;
            chain_family(base.base(), base.mu0(), f, spec, tol)?
        }
        (ModelKind::Rates { generator, mu0 }, FamilyKind::Cycle) => {
            let cycles = decompose_cycles(generator, mu0, tol.balance).context("cycle decomposition")?;
            cycle_family(generator.space().clone(), mu0, &cycles, f, tol).context(ctx)?
        }
        (ModelKind::Rates { generator, mu0 }, _) => chain_family(generator, mu0, f, spec, tol)?,
        (ModelKind::Torus { .. }, _) => return Err(CliError::validation("family: torus models use mc or discretize")),
    };
    let space = fam.base().space().clone();
    let mut kernel = fam.kernel().clone();
    for (i, p) in spec.kernel_perturbations.iter().enumerate() {
        let x = resolve(&space, &p.from, &format!("family.kernel_perturbations[{i}].from"))?;
        let y = resolve(&space, &p.to, &format!("family.kernel_perturbations[{i}].to"))?;
        kernel = kernel.perturbed_entry(x, y, p.eps);
    }
    if spec.kernel_perturbations.is_empty() {
        Ok(fam)
    } else {
        fam.with_kernel(kernel).context("kernel override")
    }
}

fn chain_family(
    l: &fdt_lab::markov::Generator,
    mu0: &Measure,
    f: &Observable,
    spec: &FamilySpec,
    tol: &Tolerances,
) -> CliResult<PerturbationFamily> {
    let ctx = format!("family {}", spec.kind);
    match spec.kind {
        FamilyKind::TimeChange => time_change_family(l, mu0, f, tol).context(ctx),
        FamilyKind::Langevin => langevin_family(l, mu0, f, tol).context(ctx),
        FamilyKind::GeneralB => {
            let rows = spec.b.as_ref().ok_or_else(|| CliError::validation("family.b: required for general_b"))?;
            general_b_family(l, mu0, f, &b_matrix(rows, l.n())?, tol).context(ctx)
        }
        other => Err(CliError::validation(format!("family.kind: {other} is not available for this model"))),
    }
}

fn observables<'a>(bundle: &'a ModelBundle, cfg: &RunConfig) -> CliResult<Vec<(&'a str, &'a Observable)>> {
    cfg.observables
        .iter()
        .map(|name| {
            bundle
                .observables
                .get_key_value(name.as_str())
                .map(|(k, v)| (k.as_str(), v))
                .ok_or_else(|| CliError::validation(format!("observables: unknown observable {name:?}")))
        })
        .collect()
}

/// Rejects bad grids before any computation starts.
fn validate_grids(fam: &PerturbationFamily, cfg: &RunConfig) -> CliResult<()> {
    for &delta in &cfg.deltas {
        if !delta.is_finite() || !(delta > 0.0) {
            return Err(CliError::Lab { context: "deltas".into(), source: Error::NegativeDelta(delta) });
        }
        if !fam.admits(delta) {
            return Err(CliError::Lab { context: "deltas".into(), source: Error::DeltaTooLarge { delta, cap: fam.delta_cap() } });
        }
    }
    for &(s, t) in &cfg.times {
        if !(0.0 <= s && s <= t && t.is_finite()) {
            return Err(CliError::Lab { context: "times".into(), source: Error::BadTimes { s, t } });
        }
    }
    if let Some(&v) = cfg.static_v.iter().find(|v| !(**v >= 0.0)) {
        return Err(CliError::Lab { context: "static_v".into(), source: Error::NegativeTime(v) });
    }
    if let Some(t) = cfg.response_t {
        if !(t > 0.0) {
            return Err(CliError::Lab { context: "response_t".into(), source: Error::BadTimes { s: 0.0, t } });
        }
    }
    Ok(())
}

fn record(check: &str, fam: &PerturbationFamily, residual: f64, tol: f64) -> CheckRecord {
    CheckRecord::new(check, fam.kind().as_str(), residual, tol)
}

/// Every equilibrium check the config asks for.
pub fn run_suite(bundle: &ModelBundle, cfg: &RunConfig) -> CliResult<FdtReport> {
    let tol = &cfg.tolerances;
    let spec = cfg.family()?;
    let fam = build_family(bundle, spec, tol)?;
    validate_grids(&fam, cfg)?;
    let gs = observables(bundle, cfg)?;
    let f = fam.direction().clone();
    let l = fam.base();
    let mu0 = fam.mu0();
    let mut report = FdtReport::new();

    report.push(record("kernel_row_sum", &fam, fam.kernel().row_sum_residual(), tol.row_sum));
    for &delta in &cfg.deltas {
        let r = fam.invariance_residual_at(delta).context("family_invariance")?;
        report.push(record("family_invariance", &fam, r, tol.balance).param("delta", delta));
    }

    for &(gname, g) in &gs {
        for &(s, t) in &cfg.times {
            let c = fdt_check(&fam, &f, g, s, t).context("fdt_check")?;
            report.push(
                record("fdt_check", &fam, c.residual, tol.fdt)
                    .param("g", gname)
                    .param("s", s)
                    .param("t", t)
                    .param("lhs", c.lhs)
                    .param("rhs", c.rhs),
            );
            let inv = covariance_s_derivative(mu0, l, &f, g, s, t, DerivativeMode::Invariant, tol).context("derivative_modes")?;
            let mut spread: f64 = 0.0;
            let mut used = Vec::new();
            for mode in DerivativeMode::ALL {
                if mode.applies(mu0, l, tol) {
                    let v = covariance_s_derivative(mu0, l, &f, g, s, t, mode, tol).context("derivative_modes")?;
                    spread = spread.max((v - inv).abs());
                    used.push(mode.as_str());
                }
            }
            report.push(
                record("derivative_modes", &fam, spread, tol.derivative_modes)
                    .param("g", gname)
                    .param("s", s)
                    .param("t", t)
                    .param("modes", used.join("+")),
            );
            if t > 0.0 {
                let h = (t / 4.0).min(5e-3);
                let num =
                    covariance_s_derivative_numerical(mu0, l, &f, g, s, t, h, tol).context("numerical_derivative")?;
                report.push(
                    record("numerical_derivative", &fam, (num - inv).abs(), tol.numerical_derivative)
                        .param("g", gname)
                        .param("s", s)
                        .param("t", t)
                        .param("h", h),
                );
            }
        }
        for &v in &cfg.static_v {
            let r = static_identity_residual(&fam, g, v).context("static_identity")?;
            report.push(record("static_identity", &fam, r, tol.static_identity).param("g", gname).param("v", v));
        }
        if let Some(t) = cfg.response_t {
            let block = response_integral(&fam, g, t).context("quadrature")?;
            let panels = 2 * (0.5 * SIMPSON_PANELS_PER_RATE * t * l.max_exit_rate()).ceil().max(128.0) as usize;
            let simpson = simpson_response_integral(&fam, g, t, panels).context("quadrature")?;
            let scale = block.sup_norm();
            let diff = block.sub(&simpson).sup_norm();
            let r = if scale > 0.0 { diff / scale } else { diff };
            report.push(record("quadrature", &fam, r, tol.quadrature).param("g", gname).param("t", t).param("panels", panels));
            if !cfg.deltas.is_empty() {
                let sweep = response_sweep(&fam, g, t, &cfg.deltas).context("response_limit")?;
                report.push(response_limit_record(&fam, &sweep, g, gname, t));
            }
        }
    }

    if cfg.deltas.len() >= 2 && fam.kind() != FamilyKind::Metropolis {
        let conv = kernel_norm_convergence(&fam, &cfg.deltas).context("kernel_convergence")?;
        let slope = conv.slope.unwrap_or(f64::NAN);
        report.push(record("kernel_convergence", &fam, (slope - 1.0).abs(), ORDER_TOL).param("slope", slope));
    }

    if reversibility_residual(l, mu0) <= tol.reversible {
        let deltas: Vec<f64> = cfg.deltas.clone();
        match b_symmetry_check(&fam, &f, &deltas) {
            Ok(r) => report.push(record("b_symmetry", &fam, r, tol.b_symmetry)),
            Err(Error::NotSymmetricFamily { .. }) => {}
            Err(e) => return Err(CliError::Lab { context: "b_symmetry".into(), source: e }),
        }
    }

    if cfg.green_kubo.is_some() {
        report.extend(green_kubo_records(bundle, cfg)?.records().iter().cloned());
    }
    if let Some(relax) = &cfg.relax {
        let scan = relax_scan(bundle, cfg, &fam, relax)?;
        report.extend(scan_records(&fam, &scan));
    }
    Ok(report)
}

fn response_limit_record(fam: &PerturbationFamily, sweep: &Sweep, g: &Observable, gname: &str, t: f64) -> CheckRecord {
    let (i_min, _) = sweep.deltas.iter().enumerate().min_by(|a, b| a.1.total_cmp(b.1)).expect("nonempty sweep");
    let gnorm = norm(g, sweep.norm, fam.mu0());
    let eta = sweep.eta()[i_min];
    let r = if gnorm > 0.0 { eta / gnorm } else { eta };
    record("response_limit", fam, r, RESPONSE_LIMIT_TOL)
        .param("g", gname)
        .param("t", t)
        .param("delta", sweep.deltas[i_min])
        .param("norm", format!("{:?}", sweep.norm).to_lowercase())
        .param("slope", sweep.slope.unwrap_or(f64::NAN))
}

/// Green–Kubo rows for the base chain of the configured family, or of the model.
pub fn green_kubo_records(bundle: &ModelBundle, cfg: &RunConfig) -> CliResult<FdtReport> {
    let tol = &cfg.tolerances;
    let spec = cfg.green_kubo.as_ref().ok_or_else(|| CliError::validation("config: missing \"green_kubo\""))?;
    let (l, mu0, label) = match (&bundle.kind, &cfg.family) {
        (ModelKind::Rates { generator, mu0 }, _) => (generator.clone(), mu0.clone(), "rates".to_string()),
        (_, Some(fs)) => {
            let fam = build_family(bundle, fs, tol)?;
            (fam.base().clone(), fam.mu0().clone(), fam.kind().to_string())
        }
        _ => return Err(CliError::validation("green_kubo: a rates model or a family is required")),
    };
    let mut report = FdtReport::new();
    for (fname, gname) in &spec.pairs {
        let f = bundle.observable(fname)?;
        let g = bundle.observable(gname)?;
        let gk = green_kubo(&l, &mu0, f, g, spec.t_max, tol).context("green_kubo")?;
        let base = |check: &str, r: f64, t: f64| {
            CheckRecord::new(check, label.as_str(), r, t).param("f", fname.as_str()).param("g", gname.as_str())
        };
        report.push(base("green_kubo_algebraic", gk.algebraic_residual, ALGEBRAIC_TOL).param("lhs", gk.lhs).param("middle", gk.middle));
        report.push(
            base("green_kubo", gk.residual, gk.tolerance)
                .param("rhs", gk.rhs)
                .param("t_max", gk.t_max)
                .param("tail_bound", gk.tail_bound),
        );
    }
    Ok(report)
}

fn initial_law(law: &InitialLaw, space: &StateSpace) -> CliResult<Measure> {
    match law {
        InitialLaw::Weights(w) => {
            if w.len() != space.len() {
                return Err(CliError::validation(format!("relax.nu0: {} weights for {} states", w.len(), space.len())));
            }
            Measure::initial_law(nalgebra::DVector::from_column_slice(w)).context("relax.nu0")
        }
        InitialLaw::Point(r) => Ok(Measure::point_mass(space.len(), resolve(space, r, "relax.nu0")?)),
    }
}

pub fn relax_scan(
    bundle: &ModelBundle,
    _cfg: &RunConfig,
    fam: &PerturbationFamily,
    relax: &crate::config::RelaxSpec,
) -> CliResult<NearEquilibriumScan> {
    let space = space_of(bundle)?;
    let nu0 = initial_law(&relax.nu0, &space)?;
    let g = bundle.observable(&relax.observable)?;
    near_equilibrium_scan(&nu0, fam, g, relax.tau, &relax.s_grid).context("relax_scan")
}

fn scan_records(fam: &PerturbationFamily, scan: &NearEquilibriumScan) -> Vec<CheckRecord> {
    let mut out = Vec::new();
    if scan.gap_is_simple {
        let rate = scan.fitted_rate.unwrap_or(f64::NAN);
        out.push(
            record("relax_rate", fam, scan.rate_error().unwrap_or(f64::NAN), RATE_TOL)
                .param("fitted_rate", rate)
                .param("gap", scan.gap)
                .param("tau", scan.tau),
        );
    }
    out.push(
        record("relax_terminal", fam, scan.terminal_difference, scan.terminal_defect() + 1e-10)
            .param("limit", scan.limit)
            .param("tau", scan.tau),
    );
    out
}

/// CSV of `(δ, η_sup, η_l2)` with a `slope` footer row.
pub fn write_response_sweep<W: Write>(fam: &PerturbationFamily, g: &Observable, t: f64, deltas: &[f64], mut w: W) -> CliResult<Sweep> {
    if deltas.is_empty() {
        return Err(CliError::Lab { context: "response-sweep".into(), source: Error::EmptyGrid });
    }
    let sweep = response_sweep(fam, g, t, deltas).context("response-sweep")?;
    let io = |e| CliError::io("sweep.csv", e);
    writeln!(w, "delta,eta_sup,eta_l2").map_err(io)?;
    for i in 0..sweep.deltas.len() {
        writeln!(w, "{:e},{:e},{:e}", sweep.deltas[i], sweep.eta_sup[i], sweep.eta_l2[i]).map_err(io)?;
    }
    let sup = fdt_lab::fit::loglog_slope(&sweep.deltas, &sweep.eta_sup).unwrap_or(f64::NAN);
    let l2 = fdt_lab::fit::loglog_slope(&sweep.deltas, &sweep.eta_l2).unwrap_or(f64::NAN);
    writeln!(w, "slope,{sup:e},{l2:e}").map_err(io)?;
    Ok(sweep)
}

/// CSV of `(s, d(s), ⟨R⟩_{ν₀})` with a `slope` footer row for `log d(s)`.
pub fn write_scan<W: Write>(scan: &NearEquilibriumScan, mut w: W) -> CliResult<()> {
    let io = |e| CliError::io("scan.csv", e);
    writeln!(w, "s,defect,response_mean").map_err(io)?;
    for p in &scan.points {
        writeln!(w, "{:e},{:e},{:e}", p.s, p.defect, p.response_mean).map_err(io)?;
    }
    let slope = scan.fitted_rate.map_or(f64::NAN, |r| -r);
    writeln!(w, "slope,{slope:e},").map_err(io)?;
    Ok(())
}

fn torus(bundle: &ModelBundle) -> CliResult<&TorusModel> {
    match &bundle.kind {
        ModelKind::Torus { model } => Ok(model),
        _ => Err(CliError::validation("this subcommand needs a torus model")),
    }
}

/// Stationary histogram and MC FDT against the grid chain.
pub fn run_mc(bundle: &ModelBundle, cfg: &RunConfig, seed: Option<u64>, out_dir: &Path) -> CliResult<FdtReport> {
    let model = torus(bundle)?;
    let spec = cfg.mc.as_ref().ok_or_else(|| CliError::validation("config: missing \"mc\""))?;
    let g = bundle.series(&spec.observable)?;
    let seed = seed.unwrap_or(spec.seed);
    let params = EnsembleParams::new(spec.n_paths, spec.dt, spec.t_end, seed).recording_every(spec.record_every);
    let ens = simulate(model, 0.0, &params).context("mc simulate")?;
    if spec.write_paths {
        let path = out_dir.join("paths.bin");
        let file = std::fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
        write_paths(&ens, std::io::BufWriter::new(file)).map_err(|e| CliError::io(&path, e))?;
    }
    let hist = stationary_histogram_check(&ens, ens.n_records() - 1, &model.h, spec.n_bins);
    let mc = mc_fdt_from_ensemble(&ens, model, g, spec.s, spec.t, spec.n_grid_ref, &cfg.tolerances).context("mc_fdt")?;
    let mut report = FdtReport::new();
    report.push(
        CheckRecord::new("mc_histogram", "torus", hist.max_abs_z, MC_SIGMAS)
            .param("n_bins", spec.n_bins)
            .param("n_paths", spec.n_paths)
            .param("seed", seed),
    );
    report.push(
        CheckRecord::new("mc_fdt", "torus", mc.z.abs(), MC_SIGMAS)
            .param("s", spec.s)
            .param("t", spec.t)
            .param("estimate", mc.derivative.estimate)
            .param("std_error", mc.derivative.std_error)
            .param("reference", mc.reference)
            .param("seed", seed),
    );
    Ok(report)
}

/// Grid-chain FDT at each grid and convergence orders under refinement.
pub fn run_discretize(bundle: &ModelBundle, cfg: &RunConfig) -> CliResult<FdtReport> {
    let model = torus(bundle)?;
    let tol = &cfg.tolerances;
    let spec = cfg.discretize.as_ref().ok_or_else(|| CliError::validation("config: missing \"discretize\""))?;
    if spec.grids.is_empty() {
        return Err(CliError::Lab { context: "discretize.grids".into(), source: Error::EmptyGrid });
    }
    let g = bundle.series(&spec.observable)?;
    let mut report = FdtReport::new();
    for &n in &spec.grids {
        let r = grid_fdt(model, g, n, spec.s, spec.t, tol).context("grid_fdt")?;
        let ratio = njd_ratio(model, g, n).context("njd_ratio")?;
        report.push(
            CheckRecord::new("grid_fdt", "langevin", r.exact.residual, tol.fdt)
                .param("n_grid", n)
                .param("central_difference_residual", r.central_difference.residual)
                .param("njd_ratio", ratio),
        );
    }
    if spec.grids.len() >= 2 {
        let cd = grid_fdt_refinement(model, g, &spec.grids, spec.s, spec.t, tol).context("grid_fdt_refinement")?;
        let order = cd.order.unwrap_or(f64::NAN);
        report.push(CheckRecord::new("grid_fdt_cd_order", "torus", (order - 2.0).abs(), GRID_ORDER_TOL).param("order", order));
        if model.psi == 0.0 {
            let tv = invariant_tv_refinement(model, 0.0, &spec.grids).context("invariant_tv_refinement")?;
            let order = tv.order.unwrap_or(f64::NAN);
            report.push(CheckRecord::new("invariant_tv_order", "torus", (order - 2.0).abs(), GRID_ORDER_TOL).param("order", order));
        }
    }
    Ok(report)
}

/// Writes `report.csv` and `report.json` into `out_dir`.
pub fn write_report(report: &FdtReport, out_dir: &Path, reproducible: bool) -> CliResult<()> {
    std::fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
    let csv_path = out_dir.join("report.csv");
    let file = std::fs::File::create(&csv_path).map_err(|e| CliError::io(&csv_path, e))?;
    report.write_csv(std::io::BufWriter::new(file)).context("report.csv")?;
    let stamp = (!reproducible).then(|| {
        let secs = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map_or(0, |d| d.as_secs());
        secs.to_string()
    });
    let json_path = out_dir.join("report.json");
    let text = serde_json::to_string_pretty(&report.to_json(stamp.as_deref())).expect("report serializes");
    std::fs::write(&json_path, text + "\n").map_err(|e| CliError::io(&json_path, e))?;
    Ok(())
}
