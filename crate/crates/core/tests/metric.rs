mod common;

use std::f64::consts::SQRT_2;

use htcontrol::model::{control_hamiltonian, dist_star, feedback, feedback_raw, projector_distance};
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn dist_star_ignores_global_phase(n in 1usize..6, a in any::<u64>(), b in any::<u64>(), t in 0.0f64..6.3, s in 0.0f64..6.3) {
        let x = common::random(n, 2, a);
        let y = common::random(n, 2, b);
        let base = dist_star(&x, &y).unwrap();
        let rotated = dist_star(&x.scaled(common::phase(t)), &y.scaled(common::phase(s))).unwrap();
        prop_assert!((base - rotated).abs() < 1e-12);
        prop_assert!(dist_star(&x, &x.scaled(common::phase(t))).unwrap() < 1e-12);
    }

    #[test]
    fn dist_star_is_a_bounded_metric(n in 1usize..6, a in any::<u64>(), b in any::<u64>(), c in any::<u64>()) {
        let x = common::random(n, 2, a);
        let y = common::random(n, 2, b);
        let z = common::random(n, 2, c);
        let xy = dist_star(&x, &y).unwrap();
        prop_assert!((0.0..=SQRT_2 + 1e-15).contains(&xy));
        prop_assert!((xy - dist_star(&y, &x).unwrap()).abs() < 1e-14);
        prop_assert!(xy <= dist_star(&x, &z).unwrap() + dist_star(&z, &y).unwrap() + 1e-10);
        // The phase-optimal Euclidean distance dominates the projector distance / √2.
        prop_assert!(projector_distance(&x, &y).unwrap() <= SQRT_2 * xy + 1e-12);
    }

    #[test]
    fn feedback_is_phase_invariant_and_saturated(a in any::<u64>(), b in any::<u64>(), t in 0.0f64..6.3, gamma in 0.0f64..50.0) {
        let h1 = control_hamiltonian(2, 2, &[(0, 0), (0, 1)]).unwrap();
        let psi = common::random(4, 2, a);
        let target = common::random(4, 2, b);
        let raw = feedback_raw(&psi, &target, &h1, gamma).unwrap();
        let rotated = feedback_raw(&psi.scaled(common::phase(t)), &target.scaled(common::phase(-t)), &h1, gamma).unwrap();
        prop_assert!((raw - rotated).abs() < 1e-12 * (1.0 + raw.abs()));
        let u = feedback(&psi, &target, &h1, gamma, 0.5).unwrap();
        prop_assert!(u.abs() <= 0.5);
    }
}
