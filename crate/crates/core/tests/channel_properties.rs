use gatebound::channels::{
    apply_channel, choi_of_unitary, cnz_unitary, mix, process_fidelity, ChoiMatrix,
};
use gatebound::qmath::ComplexMatrix;
use gatebound::random::{random_channel, random_density, random_unitary};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn unitary_channels_match_direct_conjugation() {
    let mut rng = ChaCha8Rng::seed_from_u64(200);
    for i in 0..200 {
        let n = 1 + i % 3;
        let d = 1 << n;
        let u = random_unitary(d, &mut rng);
        let rho = random_density(d, &mut rng);
        let out = apply_channel(&choi_of_unitary(&u).unwrap(), &rho).unwrap();
        let direct = &(&u * rho.matrix()) * &u.dagger();
        assert!(out.matrix().max_abs_diff(&direct) <= 1e-10, "case {i}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn fidelity_is_linear_in_choi(seed in any::<u64>(), n in 1usize..=3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = 1 << n;
        let u = random_unitary(d, &mut rng);
        let a = random_channel(n, 2, &mut rng);
        let b = choi_of_unitary(&random_unitary(d, &mut rng)).unwrap();
        let w: f64 = rng.random_range(0.0..=1.0);
        let mixed = mix(&[(w, &a), (1.0 - w, &b)]).unwrap();
        let alpha: f64 = rng.random_range(0.1..3.0);
        let scaled = mixed.scaled(alpha).unwrap();
        let fa = process_fidelity(&a, &u).unwrap();
        let fb = process_fidelity(&b, &u).unwrap();
        let want = (w * fa * a.trace() + (1.0 - w) * fb * b.trace()) / (w * a.trace() + (1.0 - w) * b.trace());
        prop_assert!((process_fidelity(&scaled, &u).unwrap() - want).abs() <= 1e-10);
    }

    #[test]
    fn unitary_fidelity_is_trace_overlap(seed in any::<u64>(), n in 1usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = 1 << n;
        let u = random_unitary(d, &mut rng);
        let v = random_unitary(d, &mut rng);
        let overlap = (&u.dagger() * &v).trace().norm_sqr() / (d * d) as f64;
        let chi: ChoiMatrix = choi_of_unitary(&v).unwrap();
        prop_assert!((process_fidelity(&chi, &u).unwrap() - overlap).abs() <= 1e-10);
    }
}

#[test]
fn cnz_is_diagonal_involution_with_one_sign() {
    for n in 1..=6 {
        let u = cnz_unitary(n).unwrap();
        let d = 1 << n;
        assert!(u.is_diagonal(0.0));
        assert!((&u * &u).max_abs_diff(&ComplexMatrix::identity(d)) == 0.0);
        let minus = u.diagonal().iter().filter(|z| z.re == -1.0).count();
        assert_eq!(minus, 1);
        assert_eq!(u[(d - 1, d - 1)].re, -1.0);
    }
}
