//! Overdamped Langevin dynamics on the circle, simulated and discretized.
//!
//! The Monte Carlo side runs Euler–Maruyama paths; the exact side turns the
//! generator into a birth–death chain on a ring and hands it to the
//! finite-state machinery.

mod checks;
mod fourier;
mod model;
mod simulate;

pub use checks::{
    gibbs_bin_masses, grid_fdt, grid_fdt_refinement, grid_response_mean, invariant_tv_refinement, mc_covariance_derivative,
    mc_fdt_check, mc_fdt_from_ensemble, mc_response, stationary_histogram_check, weak_order_sweep, BinCheck, GridFdt,
    HistogramCheck, McFdt, McResponse, Refinement, WeakOrder, MC_DIFF_STEPS,
};
pub use fourier::FourierSeries;
pub use model::{central_difference_kernel, grid_discretize, grid_gibbs, grid_observable, njd_ratio, TorusModel};
pub use simulate::{
    check_stability, mean_with_se, path_rng, read_paths, simulate, write_paths, EnsembleParams, EstimatorResult, Moments,
    PathEnsemble, PathFile, StartMode, StationarySampler, STABILITY_LIMIT,
};
