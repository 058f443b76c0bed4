use fdt_lab::diffusion::{
    grid_fdt, read_paths, simulate, weak_order_sweep, write_paths, EnsembleParams, FourierSeries, StartMode, TorusModel,
};
use fdt_lab::Tolerances;

fn cos_model(psi: f64) -> TorusModel {
    TorusModel::new(FourierSeries::cos_mode(1, 1.0), psi, FourierSeries::sin_mode(1, 1.0)).unwrap()
}

#[test]
fn identical_seed_gives_identical_ensembles() {
    let model = cos_model(0.3);
    let params = EnsembleParams::new(500, 1e-3, 0.5, 99).recording_every(50);
    let a = simulate(&model, 0.2, &params).unwrap();
    let b = simulate(&model, 0.2, &params).unwrap();
    assert_eq!(a.positions(), b.positions());
    let c = simulate(&model, 0.2, &EnsembleParams { seed: 100, ..params.clone() }).unwrap();
    assert_ne!(a.positions(), c.positions());
}

#[test]
fn paths_round_trip_through_binary_file() {
    let params = EnsembleParams::new(7, 1e-2, 0.3, 1).recording_every(5).starting_at(StartMode::Point(1.0));
    let ens = simulate(&cos_model(0.0), 0.0, &params).unwrap();
    let mut buf = Vec::new();
    write_paths(&ens, &mut buf).unwrap();
    let file = read_paths(buf.as_slice()).unwrap();
    assert_eq!(file.n_paths, 7);
    assert_eq!(file.data, ens.positions());
}

#[test]
fn euler_scheme_is_weak_order_one() {
    let model = cos_model(0.0);
    let g = FourierSeries::cos_mode(1, 1.0);
    let w = weak_order_sweep(&model, &g, 0.3, 1.0, 0.04, 5, 20_000, 5).unwrap();
    let slope = w.slope.unwrap();
    assert!((0.7..=1.3).contains(&slope), "slope {slope}, differences {:?}", w.differences);
}

#[test]
fn grid_fdt_is_exact_for_nonreversible_drift() {
    let tol = Tolerances::default();
    for n in [64, 128, 256] {
        let r = grid_fdt(&cos_model(0.4), &FourierSeries::sin_mode(1, 1.0), n, 0.5, 1.5, &tol).unwrap();
        assert!(r.exact.residual <= 1e-9, "n = {n}: {}", r.exact.residual);
    }
}
