mod common;

use gatebound::channels::{choi_of_unitary, cnz_unitary, process_fidelity};
use gatebound::sampling::{full_resummation, mc_estimate, mc_estimate_with, pauli_expansion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn full_resummation_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for i in 0..100 {
        let n = 1 + i % 3;
        let u = common::random_target(n, &mut rng);
        let chi = common::random_test_channel(&u, &mut rng);
        let exp = pauli_expansion(&u).unwrap();
        let f = process_fidelity(&chi, &u).unwrap();
        assert!((full_resummation(&chi, &exp).unwrap() - f).abs() <= 1e-9, "case {i}");
    }
}

#[test]
fn single_sample_estimator_is_unbiased() {
    let u = cnz_unitary(3).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let noise = gatebound::random::random_channel(3, 2, &mut rng);
    let ideal = choi_of_unitary(&u).unwrap();
    let chi = gatebound::channels::mix(&[(0.8, &ideal), (0.2, &noise)]).unwrap();
    let exp = pauli_expansion(&u).unwrap();
    let f = process_fidelity(&chi, &u).unwrap();
    let runs = 10_000;
    let xs: Vec<f64> = (0..runs)
        .map(|s| mc_estimate_with(&chi, &exp, 1, s as u64, None).unwrap())
        .collect();
    let mean = xs.iter().sum::<f64>() / runs as f64;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (runs - 1) as f64;
    let se = (var / runs as f64).sqrt();
    assert!((mean - f).abs() <= 3.0 * se, "mean {mean}, F {f}, se {se}");
}

#[test]
fn chebyshev_coverage() {
    let u = cnz_unitary(3).unwrap();
    let (chi, _) = gatebound::probes::anti_overestimate_fixture().unwrap();
    let f = process_fidelity(&chi, &u).unwrap();
    let (eps, p) = (0.1, 0.9);
    let trials = 200;
    let inside = (0..trials)
        .filter(|&s| (mc_estimate(&chi, &u, eps, p, s, None).unwrap().estimate - f).abs() < eps)
        .count();
    // Chebyshev guarantees at least p; allow 3 binomial standard deviations
    let slack = 3.0 * (p * (1.0 - p) / trials as f64).sqrt();
    assert!(inside as f64 / trials as f64 >= p - slack, "{inside}/{trials}");
}

#[test]
fn estimate_is_independent_of_thread_count() {
    let u = cnz_unitary(3).unwrap();
    let (chi, _) = gatebound::probes::anti_overestimate_fixture().unwrap();
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| mc_estimate(&chi, &u, 0.05, 0.9, 11, Some(100)).unwrap())
    };
    let one = run(1);
    assert_eq!(one.estimate.to_bits(), run(4).estimate.to_bits());
    assert_eq!(one.estimate.to_bits(), run(7).estimate.to_bits());
}
