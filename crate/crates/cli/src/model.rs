//! JSON model files.
//!
//! One document discriminated by `kind`:
//!
//! ```json
//! { "kind": "rates",
//!   "states": ["a", "b"],
//!   "rates": [{"from": "a", "to": "b", "rate": 1.0}, {"from": "b", "to": "a", "rate": 2.0}],
//!   "observables": {"f": [0.0, 1.0], "g": [1.0, -1.0]} }
//! ```
//!
//! `hamiltonian` models carry `edges` and an energy `H` (one value per state),
//! `cycles` models carry `mu0` and `cycles`, and `torus` models carry Fourier
//! coefficients for `H` and `f` plus `psi`. States may be referenced by label
//! or by index.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use fdt_lab::diffusion::{FourierSeries, TorusModel};
use fdt_lab::markov::{invariant_measure, Generator, Measure, Observable, StateSpace};
use fdt_lab::perturbation::{HamiltonianGraph, WeightedCycle};
use nalgebra::DVector;
use serde::Deserialize;

use crate::error::{CliError, CliResult, Context};

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum StateRef {
    Index(usize),
    Label(String),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateEntry {
    pub from: StateRef,
    pub to: StateRef,
    pub rate: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CycleEntry {
    pub states: Vec<StateRef>,
    pub alpha: f64,
    #[serde(default)]
    pub beta: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ObservableSpec {
    Values(Vec<f64>),
    Fourier(FourierSeries),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum EnergySpec {
    Values(Vec<f64>),
    Fourier(FourierSeries),
}

/// The file as written, before validation.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub kind: String,
    #[serde(default)]
    pub states: Option<Vec<String>>,
    #[serde(default)]
    pub rates: Vec<RateEntry>,
    #[serde(default)]
    pub edges: Vec<(StateRef, StateRef)>,
    #[serde(default, rename = "H")]
    pub h: Option<EnergySpec>,
    #[serde(default)]
    pub mu0: Option<Vec<f64>>,
    #[serde(default)]
    pub cycles: Vec<CycleEntry>,
    #[serde(default)]
    pub psi: f64,
    #[serde(default)]
    pub f: Option<FourierSeries>,
    #[serde(default)]
    pub observables: BTreeMap<String, ObservableSpec>,
}

#[derive(Debug, Clone)]
pub enum ModelKind {
    Rates { generator: Generator, mu0: Measure },
    Hamiltonian { graph: HamiltonianGraph },
    Cycles { space: Arc<StateSpace>, mu0: Measure, cycles: Vec<WeightedCycle> },
    Torus { model: TorusModel },
}

/// A validated model and its named observables.
#[derive(Debug, Clone)]
pub struct ModelBundle {
    pub kind: ModelKind,
    pub observables: BTreeMap<String, Observable>,
    pub series: BTreeMap<String, FourierSeries>,
}

impl ModelBundle {
    pub fn kind_name(&self) -> &'static str {
        match self.kind {
            ModelKind::Rates { .. } => "rates",
            ModelKind::Hamiltonian { .. } => "hamiltonian",
            ModelKind::Cycles { .. } => "cycles",
            ModelKind::Torus { .. } => "torus",
        }
    }

    /// Number of states of a finite model.
    pub fn n_states(&self) -> Option<usize> {
        match &self.kind {
            ModelKind::Rates { generator, .. } => Some(generator.n()),
            ModelKind::Hamiltonian { graph } => Some(graph.n()),
            ModelKind::Cycles { space, .. } => Some(space.len()),
            ModelKind::Torus { .. } => None,
        }
    }

    pub fn observable(&self, name: &str) -> CliResult<&Observable> {
        self.observables.get(name).ok_or_else(|| CliError::validation(format!("unknown observable {name:?}")))
    }

    pub fn series(&self, name: &str) -> CliResult<&FourierSeries> {
        self.series.get(name).ok_or_else(|| CliError::validation(format!("unknown observable {name:?}")))
    }
}

pub fn load_model(path: &Path) -> CliResult<ModelBundle> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_model(&text).map_err(|e| match e {
        CliError::Parse { line, column, message, .. } => CliError::Parse { path: path.to_path_buf(), line, column, message },
        other => other,
    })
}

pub fn parse_model(text: &str) -> CliResult<ModelBundle> {
    let file: ModelFile = serde_json::from_str(text).map_err(|e| CliError::parse("<model>", &e))?;
    validate(file)
}

fn resolve(space: &StateSpace, r: &StateRef, field: &str) -> CliResult<usize> {
    match r {
        StateRef::Index(i) if *i < space.len() => Ok(*i),
        StateRef::Index(i) => Err(CliError::validation(format!("{field}: state index {i} out of range"))),
        StateRef::Label(s) => space.index_of(s).ok_or_else(|| CliError::validation(format!("{field}: unknown state {s:?}"))),
    }
}

fn state_space(file: &ModelFile) -> CliResult<Arc<StateSpace>> {
    let states = file.states.as_ref().ok_or_else(|| CliError::validation("states: missing"))?;
    Ok(Arc::new(StateSpace::new(states.iter().cloned()).context("states")?))
}

fn finite_observables(file: &ModelFile, n: usize) -> CliResult<BTreeMap<String, Observable>> {
    file.observables
        .iter()
        .map(|(name, spec)| match spec {
            ObservableSpec::Values(v) if v.len() == n => {
                Ok((name.clone(), Observable::from_vec(v.clone()).context(format!("observables.{name}"))?))
            }
            ObservableSpec::Values(v) => {
                Err(CliError::validation(format!("observables.{name}: {} values for {n} states", v.len())))
            }
            ObservableSpec::Fourier(_) => {
                Err(CliError::validation(format!("observables.{name}: Fourier coefficients need a torus model")))
            }
        })
        .collect()
}

fn measure(weights: &[f64], n: usize, field: &str) -> CliResult<Measure> {
    if weights.len() != n {
        return Err(CliError::validation(format!("{field}: {} weights for {n} states", weights.len())));
    }
    if let Some(i) = weights.iter().position(|&w| !(w > 0.0) || !w.is_finite()) {
        return Err(CliError::validation(format!("{field}[{i}] <= 0")));
    }
    Measure::probability(DVector::from_column_slice(weights)).context(field.to_string())
}

fn validate(file: ModelFile) -> CliResult<ModelBundle> {
    match file.kind.as_str() {
        "rates" => {
            let space = state_space(&file)?;
            let mut rates = Vec::with_capacity(file.rates.len());
            for (i, r) in file.rates.iter().enumerate() {
                if !r.rate.is_finite() {
                    return Err(CliError::validation(format!("rates[{i}].rate is not finite")));
                }
                if r.rate < 0.0 {
                    return Err(CliError::validation(format!("rates[{i}].rate < 0")));
                }
                let from = resolve(&space, &r.from, &format!("rates[{i}].from"))?;
                let to = resolve(&space, &r.to, &format!("rates[{i}].to"))?;
                if from == to {
                    return Err(CliError::validation(format!("rates[{i}]: self loop at {from}")));
                }
                rates.push((from, to, r.rate));
            }
            let generator = Generator::build(space.clone(), &rates).context("rates")?;
            let mu0 = match &file.mu0 {
                Some(w) => measure(w, space.len(), "mu0")?,
                None => invariant_measure(&generator).context("mu0")?,
            };
            let observables = finite_observables(&file, space.len())?;
            Ok(ModelBundle { kind: ModelKind::Rates { generator, mu0 }, observables, series: BTreeMap::new() })
        }
        "hamiltonian" => {
            let space = state_space(&file)?;
            let energy = match &file.h {
                Some(EnergySpec::Values(v)) if v.len() == space.len() => Observable::from_vec(v.clone()).context("H")?,
                Some(EnergySpec::Values(v)) => {
                    return Err(CliError::validation(format!("H: {} values for {} states", v.len(), space.len())))
                }
                Some(EnergySpec::Fourier(_)) => return Err(CliError::validation("H: expected one value per state")),
                None => return Err(CliError::validation("H: missing")),
            };
            let edges = file
                .edges
                .iter()
                .enumerate()
                .map(|(i, (a, b))| {
                    Ok((resolve(&space, a, &format!("edges[{i}][0]"))?, resolve(&space, b, &format!("edges[{i}][1]"))?))
                })
                .collect::<CliResult<Vec<_>>>()?;
            let graph = HamiltonianGraph::new(space.clone(), &edges, energy).context("edges")?;
            if !graph.is_connected() {
                return Err(CliError::validation("edges: graph is disconnected"));
            }
            let observables = finite_observables(&file, space.len())?;
            Ok(ModelBundle { kind: ModelKind::Hamiltonian { graph }, observables, series: BTreeMap::new() })
        }
        "cycles" => {
            let space = state_space(&file)?;
            let mu0 = measure(file.mu0.as_deref().ok_or_else(|| CliError::validation("mu0: missing"))?, space.len(), "mu0")?;
            let mut cycles = Vec::with_capacity(file.cycles.len());
            for (i, c) in file.cycles.iter().enumerate() {
                if !(c.alpha >= 0.0) {
                    return Err(CliError::validation(format!("cycles[{i}].alpha < 0")));
                }
                let states = c
                    .states
                    .iter()
                    .enumerate()
                    .map(|(j, r)| resolve(&space, r, &format!("cycles[{i}].states[{j}]")))
                    .collect::<CliResult<Vec<_>>>()?;
                cycles.push(WeightedCycle::new(states, c.alpha, c.beta).context(format!("cycles[{i}]"))?);
            }
            if cycles.is_empty() {
                return Err(CliError::validation("cycles: empty"));
            }
            let observables = finite_observables(&file, space.len())?;
            Ok(ModelBundle { kind: ModelKind::Cycles { space, mu0, cycles }, observables, series: BTreeMap::new() })
        }
        "torus" => {
            let h = match file.h {
                Some(EnergySpec::Fourier(s)) => s,
                Some(EnergySpec::Values(_)) => return Err(CliError::validation("H: expected Fourier coefficients")),
                None => return Err(CliError::validation("H: missing")),
            };
            let model = TorusModel::new(h, file.psi, file.f.unwrap_or_default()).context("torus model")?;
            let mut series = BTreeMap::new();
            for (name, spec) in file.observables {
                match spec {
                    ObservableSpec::Fourier(s) => {
                        s.validate().context(format!("observables.{name}"))?;
                        series.insert(name, s);
                    }
                    ObservableSpec::Values(_) => {
                        return Err(CliError::validation(format!("observables.{name}: torus observables are Fourier series")))
                    }
                }
            }
            series.entry("f".to_string()).or_insert_with(|| model.f.clone());
            Ok(ModelBundle { kind: ModelKind::Torus { model }, observables: BTreeMap::new(), series })
        }
        other => Err(CliError::validation(format!("kind: unknown model kind {other:?}"))),
    }
}
