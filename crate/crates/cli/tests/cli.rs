use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fdt_lab::markov::{build_generator, Observable, StateSpace};
use fdt_lab::perturbation::{glauber_family, HamiltonianGraph};
use fdt_lab::Tolerances;
use fdt_lab_cli::config::RunConfig;
use fdt_lab_cli::model::{load_model, parse_model, ModelKind};
use fdt_lab_cli::suite::build_family;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn fdt_lab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fdt-lab")).args(args).output().expect("binary runs")
}

fn run_in(dir: &Path, sub: &str, config: &Path, extra: &[&str]) -> Output {
    let mut args = vec![sub, "--config", config.to_str().unwrap(), "--out-dir", dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    fdt_lab(&args)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn golden_two_state_run_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), "fdt", &fixture("two_state.json"), &["--reproducible"]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let csv = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("check,family,param_json,residual,tolerance,verdict"));
    let rows: Vec<&str> = lines.collect();
    assert!(rows.len() > 30);
    assert!(rows.iter().all(|r| r.ends_with(",pass")));
    for check in ["fdt_check", "static_identity", "green_kubo", "relax_rate", "response_limit", "kernel_convergence"] {
        assert!(rows.iter().any(|r| r.starts_with(check)), "missing {check}");
    }
    let json: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("report.json")).unwrap()).unwrap();
    assert!(json.get("timestamp").is_none_or(|t| t.is_null()));
}

#[test]
fn other_shipped_configs_pass() {
    for name in ["ring_glauber.json", "three_cycle.json"] {
        let dir = tempfile::tempdir().unwrap();
        let out = run_in(dir.path(), "fdt", &fixture(name), &["--reproducible"]);
        assert_eq!(out.status.code(), Some(0), "{name}: {}", String::from_utf8_lossy(&out.stdout));
    }
}

#[test]
fn corrupted_kernel_fails_fdt_check() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), "fdt", &fixture("corrupted_kernel.json"), &["--reproducible"]);
    assert_eq!(out.status.code(), Some(1));
    let csv = std::fs::read_to_string(dir.path().join("report.csv")).unwrap();
    assert!(csv.lines().any(|r| r.starts_with("fdt_check,") && r.ends_with(",fail")), "{csv}");
}

#[test]
fn delta_beyond_cap_is_rejected_before_computing() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), "fdt", &fixture("delta_cap.json"), &[]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("outside the family's validity range"), "{}", stderr(&out));
    assert!(!dir.path().join("report.csv").exists());
}

#[test]
fn reproducible_reports_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let out = run_in(d.path(), "fdt", &fixture("two_state.json"), &["--reproducible"]);
        assert_eq!(out.status.code(), Some(0));
    }
    for file in ["report.csv", "report.json"] {
        assert_eq!(std::fs::read(a.path().join(file)).unwrap(), std::fs::read(b.path().join(file)).unwrap(), "{file}");
    }
}

#[test]
fn timestamp_present_without_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), "green-kubo", &fixture("two_state.json"), &[]);
    assert_eq!(out.status.code(), Some(0));
    let json: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("report.json")).unwrap()).unwrap();
    assert!(json["timestamp"].is_string());
}

fn parse_series(csv: &str) -> (Vec<Vec<f64>>, Vec<String>) {
    let mut rows = Vec::new();
    let mut footer = Vec::new();
    for line in csv.lines().skip(1) {
        let cells: Vec<&str> = line.split(',').collect();
        if cells[0] == "slope" {
            footer = cells.iter().map(|s| s.to_string()).collect();
        } else {
            rows.push(cells.iter().map(|c| c.parse().unwrap()).collect());
        }
    }
    (rows, footer)
}

#[test]
fn response_sweep_is_monotone_with_unit_slope() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), "response-sweep", &fixture("two_state.json"), &[]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let (rows, footer) = parse_series(&std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap());
    assert_eq!(rows.len(), 8);
    assert!(rows.windows(2).all(|w| w[1][1] < w[0][1]));
    let slope: f64 = footer[1].parse().unwrap();
    assert!((slope - 1.0).abs() < 0.05, "slope {slope}");
}

#[test]
fn relax_scan_from_point_mass_is_geometric() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), "relax-scan", &fixture("two_state.json"), &[]);
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let (rows, footer) = parse_series(&std::fs::read_to_string(dir.path().join("scan.csv")).unwrap());
    let ratios: Vec<f64> = rows.windows(2).map(|w| w[1][1] / w[0][1]).collect();
    let first = ratios[0];
    assert!(ratios.iter().all(|r| (r / first - 1.0).abs() < 0.05), "{ratios:?}");
    let slope: f64 = footer[1].parse().unwrap();
    assert!((slope + 3.0).abs() < 0.03, "slope {slope}");
}

fn write_config(dir: &Path, name: &str, mut value: serde_json::Value) -> PathBuf {
    value["model"] = serde_json::Value::String(fixture("two_state_model.json").to_string_lossy().into_owned());
    let path = dir.join(name);
    std::fs::write(&path, serde_json::to_string(&value).unwrap()).unwrap();
    path
}

#[test]
fn empty_grids_are_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(
        dir.path(),
        "empty.json",
        serde_json::json!({
            "family": {"kind": "time_change", "direction": "f"},
            "observables": ["g"],
            "relax": {"nu0": [1.0, 0.0], "tau": 0.5, "s_grid": [], "observable": "g"}
        }),
    );
    for sub in ["relax-scan", "response-sweep"] {
        let out = run_in(dir.path(), sub, &cfg, &[]);
        assert_eq!(out.status.code(), Some(2), "{sub}");
        assert!(stderr(&out).contains("empty grid"), "{sub}: {}", stderr(&out));
    }
}

#[test]
fn negative_rate_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("bad.json");
    std::fs::write(
        &model,
        r#"{"kind":"rates","states":["a","b","c"],"rates":[
        {"from":"a","to":"b","rate":1},{"from":"b","to":"c","rate":1},
        {"from":"c","to":"a","rate":1},{"from":"a","to":"c","rate":-2}]}"#,
    )
    .unwrap();
    let out = fdt_lab(&["validate", "--model", model.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("rates[3].rate < 0"), "{}", stderr(&out));
}

#[test]
fn malformed_json_reports_line_and_column() {
    let dir = tempfile::tempdir().unwrap();
    let model = dir.path().join("broken.json");
    std::fs::write(&model, "{\n  \"kind\": \"rates\",\n  \"states\": [\"a\" \"b\"]\n}\n").unwrap();
    let out = fdt_lab(&["validate", "--model", model.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("broken.json:3:"), "{}", stderr(&out));
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), "fdt", &fixture("two_state.json"), &["--tol-overrides", "bogus=1"]);
    assert_eq!(out.status.code(), Some(2));
    let out = fdt_lab(&["fdt"]);
    assert_eq!(out.status.code(), Some(2));
    let out = fdt_lab(&["no-such-subcommand"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn thread_cap_from_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = fixture("two_state.json");
    let run = |threads: &str| {
        Command::new(env!("CARGO_BIN_EXE_fdt-lab"))
            .args(["response-sweep", "--config", cfg.to_str().unwrap(), "--out-dir", dir.path().to_str().unwrap()])
            .env("FDT_LAB_THREADS", threads)
            .output()
            .unwrap()
    };
    assert_eq!(run("1").status.code(), Some(0));
    assert_eq!(run("many").status.code(), Some(2));
}

#[test]
fn minimal_model_matches_build_generator() {
    let bundle = load_model(&fixture("two_state_model.json")).unwrap();
    let expected = build_generator(StateSpace::new(["a", "b"]).unwrap(), &[(0, 1, 1.0), (1, 0, 2.0)]).unwrap();
    match bundle.kind {
        ModelKind::Rates { generator, .. } => assert_eq!(generator.matrix(), expected.matrix()),
        other => panic!("{other:?}"),
    }
}

#[test]
fn glauber_model_matches_library_construction() {
    let bundle = load_model(&fixture("ring_glauber_model.json")).unwrap();
    let cfg: RunConfig = RunConfig::load(&fixture("ring_glauber.json")).unwrap();
    let fam = build_family(&bundle, cfg.family.as_ref().unwrap(), &Tolerances::default()).unwrap();
    let h = Observable::from_vec(vec![0.0, 0.7, -0.4, 1.1]).unwrap();
    let graph = HamiltonianGraph::ring(4, h.clone()).unwrap();
    let f = Observable::from_vec(vec![0.3, -0.2, 0.9, 0.0]).unwrap();
    let direct = glauber_family(&graph, &f, &Tolerances::default()).unwrap();
    let diff = (fam.base().matrix() - direct.base().matrix()).abs().max();
    assert!(diff <= 1e-14, "{diff}");
    // Heat-bath rates on each edge: 1 / (1 + e^{H(y) − H(x)}).
    for (x, y) in [(0usize, 1usize), (1, 2), (2, 3), (3, 0)] {
        for (a, b) in [(x, y), (y, x)] {
            let want = 1.0 / (1.0 + (h.as_slice()[b] - h.as_slice()[a]).exp());
            assert!((fam.base().rate(a, b) - want).abs() <= 1e-14);
        }
    }
}

#[test]
fn torus_discretize_and_mc() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), "discretize", &fixture("torus.json"), &["--reproducible"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for d in [&a, &b] {
        let out = run_in(d.path(), "mc", &fixture("torus.json"), &["--reproducible", "--seed", "11"]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stdout));
    }
    let csv = std::fs::read(a.path().join("report.csv")).unwrap();
    assert_eq!(csv, std::fs::read(b.path().join("report.csv")).unwrap());
    assert!(String::from_utf8_lossy(&csv).contains("\"\"seed\"\":11"));
}

#[test]
fn finite_observables_must_match_states() {
    let err = parse_model(r#"{"kind":"rates","states":["a","b"],"rates":[{"from":0,"to":1,"rate":1},{"from":1,"to":0,"rate":1}],
        "observables":{"f":[1,2,3]}}"#)
    .unwrap_err();
    assert!(err.to_string().contains("observables.f: 3 values for 2 states"));
}
