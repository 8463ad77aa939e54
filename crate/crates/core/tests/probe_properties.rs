mod common;

use gatebound::channels::{cnz_unitary, process_fidelity};
use gatebound::probes::{
    average_state_fidelity, probe_basis_all_hadamard, r_k_operator, r_operator, standard_bases,
    BoundReport, ZeroProbabilityMode,
};
use gatebound::random::random_unitary;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn sandwich_holds_for_random_channels() {
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    let mut violations = 0;
    for i in 0..500 {
        let n = 2 + i % 3;
        let u = common::random_target(n, &mut rng);
        let chi = common::random_test_channel(&u, &mut rng);
        let rep = BoundReport::from_channel(&chi, &u, false).unwrap();
        let f = rep.exact.unwrap();
        let min_fk = rep.fidelities.iter().copied().fold(1.0, f64::min);
        if rep.lower_bound > f + 1e-9 || f > min_fk + 1e-9 {
            violations += 1;
        }
    }
    assert_eq!(violations, 0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn success_probabilities_sum_to_trace(seed in any::<u64>(), n in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = common::random_target(n, &mut rng);
        let chi = common::random_test_channel(&u, &mut rng);
        let mut bases = standard_bases(n).unwrap();
        bases.push(probe_basis_all_hadamard(n).unwrap());
        for b in &bases {
            let f = average_state_fidelity(&chi, &u, b, ZeroProbabilityMode::Drop).unwrap();
            let s: f64 = f.success_probabilities.iter().sum();
            prop_assert!((s - chi.trace()).abs() <= 1e-10);
        }
    }

    #[test]
    fn weighted_mean_equals_r_k_trace(seed in any::<u64>(), n in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = common::random_target(n, &mut rng);
        let chi = common::random_test_channel(&u, &mut rng);
        for b in standard_bases(n).unwrap() {
            let f = average_state_fidelity(&chi, &u, &b, ZeroProbabilityMode::Drop).unwrap();
            let r_k = r_k_operator(&u, &b).unwrap();
            let via_r = r_k.trace_product(chi.matrix()).unwrap().re / chi.trace();
            prop_assert!((f.fidelity - via_r).abs() <= 1e-10);
        }
    }

    #[test]
    fn bounds_ignore_normalization(seed in any::<u64>(), n in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = common::random_target(n, &mut rng);
        let chi = common::random_test_channel(&u, &mut rng);
        let alpha: f64 = rng.random_range(0.05..5.0);
        let a = BoundReport::from_channel(&chi, &u, true).unwrap();
        let b = BoundReport::from_channel(&chi.scaled(alpha).unwrap(), &u, true).unwrap();
        for (x, y) in a.fidelities.iter().zip(&b.fidelities) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
        prop_assert!((a.lower_bound - b.lower_bound).abs() <= 1e-12);
        prop_assert!((a.upper_bound - b.upper_bound).abs() <= 1e-12);
        prop_assert!((a.exact.unwrap() - b.exact.unwrap()).abs() <= 1e-12);
        prop_assert!((a.hofmann.unwrap().value - b.hofmann.unwrap().value).abs() <= 1e-12);
    }
}

#[test]
fn r_spectrum_does_not_depend_on_target() {
    let reference = r_operator(&cnz_unitary(3).unwrap()).unwrap().eigvalsh().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for _ in 0..20 {
        let u = random_unitary(8, &mut rng);
        let ev = r_operator(&u).unwrap().eigvalsh().unwrap();
        let worst = ev.iter().zip(&reference).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        assert!(worst <= 1e-8, "spectra differ by {worst}");
    }
}

#[test]
fn exact_fidelity_of_fixture_is_below_weighted_bound_path() {
    let (chi, u) = gatebound::probes::anti_overestimate_fixture().unwrap();
    let rep = BoundReport::from_channel(&chi, &u, false).unwrap();
    assert!(rep.lower_bound <= process_fidelity(&chi, &u).unwrap() + 1e-12);
}
