use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fdt_lab::fdt::FdtReport;
use fdt_lab_cli::config::{apply_overrides, RunConfig};
use fdt_lab_cli::error::{CliError, CliResult};
use fdt_lab_cli::model::{load_model, ModelBundle, ModelKind};
use fdt_lab_cli::suite;

#[derive(Parser)]
#[command(name = "fdt-lab", version, about = "Verify fluctuation-dissipation identities on finite chains and torus diffusions")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Model file (overrides the config's "model").
    #[arg(long, global = true)]
    model: Option<PathBuf>,
    /// Run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for reports and CSV series.
    #[arg(long, global = true, default_value = ".")]
    out_dir: PathBuf,
    /// Seed for Monte Carlo runs (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Omit the timestamp so reports are byte-identical across runs.
    #[arg(long, global = true)]
    reproducible: bool,
    /// Tolerance overrides, e.g. `fdt=1e-8,green_kubo=1e-5`.
    #[arg(long, global = true)]
    tol_overrides: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Load and validate a model.
    Validate,
    /// Run the equilibrium check suite and write report.csv / report.json.
    Fdt,
    /// Write sweep.csv with the finite-difference residuals over the δ grid.
    ResponseSweep,
    /// Write scan.csv with the FDT defect from a non-stationary start.
    RelaxScan,
    /// Green–Kubo checks on a reversible chain.
    GreenKubo,
    /// Monte Carlo checks on a torus diffusion.
    Mc,
    /// Grid-chain checks on a torus diffusion.
    Discretize,
}

enum Outcome {
    Done,
    Report(FdtReport),
}

fn configure_threads() -> CliResult<()> {
    if let Ok(v) = std::env::var("FDT_LAB_THREADS") {
        let n: usize = v.trim().parse().map_err(|_| CliError::Usage(format!("FDT_LAB_THREADS: bad value {v:?}")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Usage(format!("FDT_LAB_THREADS: {e}")))?;
    }
    Ok(())
}

fn load_config(cli: &Cli) -> CliResult<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => serde_json::from_str("{}").expect("empty config"),
    };
    if let Some(o) = &cli.tol_overrides {
        apply_overrides(&mut cfg.tolerances, o)?;
    }
    Ok(cfg)
}

fn load_bundle(cli: &Cli, cfg: &RunConfig) -> CliResult<ModelBundle> {
    load_model(&cfg.model_path(cli.model.as_deref())?)
}

fn create_out_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn first_observable(cfg: &RunConfig) -> CliResult<&str> {
    cfg.observables.first().map(String::as_str).ok_or_else(|| CliError::validation("observables: empty"))
}

fn describe(bundle: &ModelBundle) -> String {
    match &bundle.kind {
        ModelKind::Torus { model } => format!("torus model, psi = {}, {} observables", model.psi, bundle.series.len()),
        _ => format!(
            "{} model, {} states, {} observables",
            bundle.kind_name(),
            bundle.n_states().unwrap_or(0),
            bundle.observables.len()
        ),
    }
}

fn run(cli: &Cli) -> CliResult<Outcome> {
    configure_threads()?;
    let cfg = load_config(cli)?;
    let bundle = load_bundle(cli, &cfg)?;
    match cli.command {
        Command::Validate => {
            println!("ok: {}", describe(&bundle));
            Ok(Outcome::Done)
        }
        Command::Fdt => Ok(Outcome::Report(suite::run_suite(&bundle, &cfg)?)),
        Command::GreenKubo => Ok(Outcome::Report(suite::green_kubo_records(&bundle, &cfg)?)),
        Command::Mc => {
            create_out_dir(&cli.out_dir)?;
            Ok(Outcome::Report(suite::run_mc(&bundle, &cfg, cli.seed, &cli.out_dir)?))
        }
        Command::Discretize => Ok(Outcome::Report(suite::run_discretize(&bundle, &cfg)?)),
        Command::ResponseSweep => {
            let fam = suite::build_family(&bundle, cfg.family()?, &cfg.tolerances)?;
            let g = bundle.observable(first_observable(&cfg)?)?;
            create_out_dir(&cli.out_dir)?;
            let path = cli.out_dir.join("sweep.csv");
            let file = std::fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
            let sweep = suite::write_response_sweep(&fam, g, cfg.response_t.unwrap_or(1.0), &cfg.deltas, file)?;
            println!("wrote {} ({} rows, slope {:.4})", path.display(), sweep.deltas.len(), sweep.slope.unwrap_or(f64::NAN));
            Ok(Outcome::Done)
        }
        Command::RelaxScan => {
            let fam = suite::build_family(&bundle, cfg.family()?, &cfg.tolerances)?;
            let relax = cfg.relax.as_ref().ok_or_else(|| CliError::validation("config: missing \"relax\""))?;
            let scan = suite::relax_scan(&bundle, &cfg, &fam, relax)?;
            create_out_dir(&cli.out_dir)?;
            let path = cli.out_dir.join("scan.csv");
            let file = std::fs::File::create(&path).map_err(|e| CliError::io(&path, e))?;
            suite::write_scan(&scan, file)?;
            println!(
                "wrote {} ({} rows, fitted rate {:.4}, gap {:.4})",
                path.display(),
                scan.points.len(),
                scan.fitted_rate.unwrap_or(f64::NAN),
                scan.gap
            );
            Ok(Outcome::Done)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Report(report)) => {
            if let Err(e) = suite::write_report(&report, &cli.out_dir, cli.reproducible) {
                eprintln!("error: {e}");
                return ExitCode::from(2);
            }
            let failed: Vec<_> = report.failures().collect();
            println!("{} checks, {} failed", report.len(), failed.len());
            for r in &failed {
                println!("FAIL {} [{}] {} residual {:e} > {:e}", r.check, r.family, r.param_json(), r.residual, r.tolerance);
            }
            if failed.is_empty() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
