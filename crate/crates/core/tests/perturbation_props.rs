mod common;

use common::*;
use fdt_lab::perturbation::{general_b_family, time_change_family, verify_family, FamilyKind};
use fdt_lab::Tolerances;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn instance() -> impl Strategy<Value = (u64, usize)> {
    (any::<u64>(), 2usize..=16)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn tilted_measure_is_invariant_for_every_family((seed, n) in instance(), u in 0.0f64..1.0) {
        let mut r = rng(seed);
        let inst = random_instance(&mut r, n);
        let f = uniform_obs(&mut r, n, 0.0, 1.0);
        for kind in FamilyKind::ALL {
            let fam = inst.family(kind, &f);
            let cap = fam.delta_cap().min(3.0);
            let deltas = [0.0, u * cap * 0.999, cap * 0.5];
            let v = verify_family(&fam, &deltas).unwrap();
            prop_assert!(v.passes(1e-10, 1e-12), "{kind}: {:?}", v.checks);
        }
    }

    #[test]
    fn kernel_is_positively_homogeneous((seed, n) in instance(), r in 0.1f64..8.0) {
        let mut rg = rng(seed);
        let inst = random_instance(&mut rg, n);
        let f = uniform_obs(&mut rg, n, 0.0, 1.0);
        for kind in FamilyKind::ALL {
            let fam = inst.family(kind, &f);
            let scaled = fam.scaled(r).unwrap();
            let gap = (fam.kernel().matrix() * r - scaled.kernel().matrix()).abs().max();
            prop_assert!(gap <= 1e-12 * (1.0 + r * fam.kernel().sup_norm()), "{kind}: {gap:e}");
        }
    }

    #[test]
    fn zero_b_is_time_change((seed, n) in instance(), delta in 0.0f64..5.0) {
        let mut r = rng(seed);
        let c = random_chain(&mut r, n);
        let f = uniform_obs(&mut r, n, -1.0, 1.0);
        let tol = Tolerances::default();
        let tc = time_change_family(&c.l, &c.mu0, &f, &tol).unwrap();
        let gb = general_b_family(&c.l, &c.mu0, &f, &DMatrix::zeros(n, n), &tol).unwrap();
        let gap = (tc.generator_at(delta).unwrap().matrix() - gb.generator_at(delta).unwrap().matrix()).abs().max();
        prop_assert!(gap <= 1e-14);
        prop_assert!((tc.kernel().matrix() - gb.kernel().matrix()).abs().max() <= 1e-14);
    }

    #[test]
    fn kernel_limit_is_first_order((seed, n) in instance()) {
        let mut r = rng(seed);
        let inst = random_instance(&mut r, n);
        let f = uniform_obs(&mut r, n, 0.0, 1.0);
        let deltas = fdt_lab::response::dyadic_deltas(7, 14);
        for kind in [FamilyKind::TimeChange, FamilyKind::Langevin, FamilyKind::GeneralB, FamilyKind::Cycle, FamilyKind::Glauber] {
            let conv = fdt_lab::response::kernel_norm_convergence(&inst.family(kind, &f), &deltas).unwrap();
            let s = conv.slope.unwrap();
            prop_assert!((s - 1.0).abs() <= 0.1, "{kind}: slope {s}");
        }
    }
}

#[test]
fn metropolis_tie_breaks_odd_symmetry() {
    use fdt_lab::markov::Observable;
    use fdt_lab::perturbation::{metropolis_family, HamiltonianGraph};
    let hg = HamiltonianGraph::ring(4, Observable::from_vec(vec![0.0, 0.0, 0.5, -0.3]).unwrap()).unwrap();
    let f = Observable::from_vec(vec![0.4, -0.6, 0.1, 0.0]).unwrap();
    let tol = Tolerances::default();
    let plus = metropolis_family(&hg, &f, &tol).unwrap();
    let minus = metropolis_family(&hg, &f.scale(-1.0), &tol).unwrap();
    assert!((plus.kernel().matrix() + minus.kernel().matrix()).abs().max() > 1e-6);
    for r in [0.5, 2.0, 7.0] {
        let scaled = metropolis_family(&hg, &f.scale(r), &tol).unwrap();
        assert!((plus.kernel().matrix() * r - scaled.kernel().matrix()).abs().max() <= 1e-12);
    }
}
