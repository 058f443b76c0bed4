//! Run configuration.
//!
//! Every section is optional; each subcommand reads the ones it needs. Paths
//! are relative to the config file.

use std::path::{Path, PathBuf};

use fdt_lab::perturbation::FamilyKind;
use fdt_lab::Tolerances;
use serde::Deserialize;

use crate::error::{CliError, CliResult};
use crate::model::StateRef;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelPerturbation {
    pub from: StateRef,
    pub to: StateRef,
    pub eps: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FamilySpec {
    pub kind: FamilyKind,
    /// Observable name of the direction `f`.
    pub direction: String,
    /// Off-diagonal `b` for `general_b`, row-major.
    #[serde(default)]
    pub b: Option<Vec<Vec<f64>>>,
    /// Entries added to the computed kernel before any check.
    #[serde(default)]
    pub kernel_perturbations: Vec<KernelPerturbation>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RelaxSpec {
    /// Initial law: weights (normalized on load) or a state reference for a point mass.
    pub nu0: InitialLaw,
    pub tau: f64,
    pub s_grid: Vec<f64>,
    pub observable: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum InitialLaw {
    Weights(Vec<f64>),
    Point(StateRef),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GreenKuboSpec {
    pub pairs: Vec<(String, String)>,
    #[serde(default)]
    pub t_max: Option<f64>,
}

fn default_bins() -> usize {
    64
}

fn default_n_grid_ref() -> usize {
    256
}

fn default_record_every() -> usize {
    100
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McSpec {
    pub n_paths: usize,
    pub dt: f64,
    pub t_end: f64,
    #[serde(default)]
    pub seed: u64,
    pub s: f64,
    pub t: f64,
    pub observable: String,
    #[serde(default = "default_bins")]
    pub n_bins: usize,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    #[serde(default = "default_n_grid_ref")]
    pub n_grid_ref: usize,
    #[serde(default)]
    pub write_paths: bool,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscretizeSpec {
    pub grids: Vec<usize>,
    pub s: f64,
    pub t: f64,
    pub observable: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub model: Option<PathBuf>,
    #[serde(default)]
    pub family: Option<FamilySpec>,
    /// Observable names used as `g`.
    #[serde(default)]
    pub observables: Vec<String>,
    #[serde(default)]
    pub times: Vec<(f64, f64)>,
    #[serde(default)]
    pub static_v: Vec<f64>,
    #[serde(default)]
    pub deltas: Vec<f64>,
    #[serde(default)]
    pub response_t: Option<f64>,
    #[serde(default)]
    pub relax: Option<RelaxSpec>,
    #[serde(default)]
    pub green_kubo: Option<GreenKuboSpec>,
    #[serde(default)]
    pub mc: Option<McSpec>,
    #[serde(default)]
    pub discretize: Option<DiscretizeSpec>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let mut cfg: RunConfig = serde_json::from_str(&text).map_err(|e| CliError::parse(path, &e))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(cfg)
    }

    /// Model path from `--model`, else from the config.
    pub fn model_path(&self, cli: Option<&Path>) -> CliResult<PathBuf> {
        match (cli, &self.model) {
            (Some(p), _) => Ok(p.to_path_buf()),
            (None, Some(p)) => Ok(self.base_dir.join(p)),
            (None, None) => Err(CliError::Usage("no model: pass --model or set \"model\" in the config".into())),
        }
    }

    pub fn family(&self) -> CliResult<&FamilySpec> {
        self.family.as_ref().ok_or_else(|| CliError::validation("config: missing \"family\""))
    }
}

/// Applies `key=value[,key=value…]` overrides.
pub fn apply_overrides(tol: &mut Tolerances, overrides: &str) -> CliResult<()> {
    for item in overrides.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let (key, value) =
            item.split_once('=').ok_or_else(|| CliError::Usage(format!("--tol-overrides: expected key=value, got {item:?}")))?;
        let v: f64 = value.trim().parse().map_err(|_| CliError::Usage(format!("--tol-overrides: bad number {value:?}")))?;
        if !tol.set(key.trim(), v) {
            return Err(CliError::Usage(format!("--tol-overrides: unknown tolerance {key:?}")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides() {
        let mut tol = Tolerances::default();
        apply_overrides(&mut tol, "fdt=1e-6, green_kubo=2e-6").unwrap();
        assert_eq!(tol.fdt, 1e-6);
        assert_eq!(tol.green_kubo, 2e-6);
        assert!(apply_overrides(&mut tol, "nope=1").is_err());
        assert!(apply_overrides(&mut tol, "fdt").is_err());
    }
}
