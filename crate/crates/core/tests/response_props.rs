mod common;

use common::*;
use fdt_lab::markov::Observable;
use fdt_lab::perturbation::FamilyKind;
use fdt_lab::response::{dyadic_deltas, response_function, response_integral, response_sweep, simpson_response_integral};
use proptest::prelude::*;

fn instance() -> impl Strategy<Value = (u64, usize, usize)> {
    (any::<u64>(), 2usize..=16, 0usize..6)
}

fn times() -> impl Strategy<Value = (f64, f64)> {
    (0.0f64..2.0, 0.0f64..2.0).prop_map(|(a, b)| (a.min(b), a.max(b)))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn constants_do_not_respond((seed, n, k) in instance(), (s, t) in times()) {
        let mut r = rng(seed);
        let inst = random_instance(&mut r, n);
        let fam = inst.family(FamilyKind::ALL[k], &uniform_obs(&mut r, n, 0.0, 1.0));
        let resp = response_function(&fam, &Observable::ones(n), s, t).unwrap();
        prop_assert!(resp.sup_norm() <= 1e-12);
    }

    #[test]
    fn response_is_linear_in_g((seed, n, k) in instance(), (s, t) in times()) {
        let mut r = rng(seed);
        let inst = random_instance(&mut r, n);
        let fam = inst.family(FamilyKind::ALL[k], &uniform_obs(&mut r, n, 0.0, 1.0));
        let g1 = uniform_obs(&mut r, n, -1.0, 1.0);
        let g2 = uniform_obs(&mut r, n, -1.0, 1.0);
        let sum = response_function(&fam, &g1.add(&g2), s, t).unwrap();
        let parts = response_function(&fam, &g1, s, t).unwrap().add(&response_function(&fam, &g2, s, t).unwrap());
        prop_assert!(sum.sub(&parts).sup_norm() <= 1e-12);
    }

    #[test]
    fn response_is_homogeneous_in_f((seed, n, k) in instance(), (s, t) in times()) {
        let mut rg = rng(seed);
        let inst = random_instance(&mut rg, n);
        let fam = inst.family(FamilyKind::ALL[k], &uniform_obs(&mut rg, n, 0.0, 1.0));
        let g = uniform_obs(&mut rg, n, -1.0, 1.0);
        let base = response_function(&fam, &g, s, t).unwrap();
        for r in [0.5, 2.0, 7.0] {
            let scaled = response_function(&fam.scaled(r).unwrap(), &g, s, t).unwrap();
            prop_assert!(scaled.sub(&base.scale(r)).sup_norm() <= 1e-10);
        }
    }

    #[test]
    fn block_exponential_matches_simpson((seed, n, k) in instance(), t in 0.1f64..2.0) {
        let mut r = rng(seed);
        let inst = random_instance(&mut r, n);
        let fam = inst.family(FamilyKind::ALL[k], &uniform_obs(&mut r, n, 0.0, 1.0));
        let g = uniform_obs(&mut r, n, -1.0, 1.0);
        let block = response_integral(&fam, &g, t).unwrap();
        // Fourth-order rule: resolve the fastest rate.
        let panels = 2 * (32.0 * t * fam.base().max_exit_rate()).ceil().max(128.0) as usize;
        let simpson = simpson_response_integral(&fam, &g, t, panels).unwrap();
        let scale = block.sup_norm().max(1e-300);
        prop_assert!(block.sub(&simpson).sup_norm() / scale <= 1e-8);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn finite_difference_residual_shrinks_along_dyadic_sweep((seed, n, k) in instance()) {
        let mut r = rng(seed);
        let inst = random_instance(&mut r, n);
        let fam = inst.family(FamilyKind::ALL[k], &uniform_obs(&mut r, n, 0.0, 1.0));
        let g = uniform_obs(&mut r, n, -1.0, 1.0);
        let sweep = response_sweep(&fam, &g, 1.0, &dyadic_deltas(3, 10)).unwrap();
        prop_assert!(sweep.is_monotone(0.05), "{:?}", sweep.eta());
    }
}
