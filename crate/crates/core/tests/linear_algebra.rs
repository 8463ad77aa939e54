use gatebound::qmath::{ComplexMatrix, C64};
use gatebound::random::{random_density, random_unitary};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_matrix(d: usize, rng: &mut ChaCha8Rng) -> ComplexMatrix {
    ComplexMatrix::from_fn(d, d, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
}

fn random_hermitian(d: usize, rng: &mut ChaCha8Rng) -> ComplexMatrix {
    let a = random_matrix(d, rng);
    (&a + &a.dagger()).scale_real(0.5)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn eigh_reconstructs(seed in any::<u64>(), n in 1usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_hermitian(1 << n, &mut rng);
        let e = a.eigh().unwrap();
        prop_assert!(e.reconstruct().max_abs_diff(&a) <= 1e-10 * a.max_abs().max(1.0));
        prop_assert!(e.orthonormality_deviation() <= 1e-10);
        prop_assert!(e.eigenvalues.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn partial_traces_compose(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rho = random_density(8, &mut rng);
        let m = rho.matrix();
        let dims = [2, 2, 2];
        let once = m.partial_trace(&dims, &[2]).unwrap();
        let step = m.partial_trace(&dims, &[1, 2]).unwrap().partial_trace(&[2, 2], &[1]).unwrap();
        prop_assert!(once.max_abs_diff(&step) <= 1e-12);
    }

    #[test]
    fn kron_is_associative(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a = random_matrix(2, &mut rng);
        let b = random_matrix(3, &mut rng);
        let c = random_matrix(2, &mut rng);
        let left = a.kron(&b).kron(&c);
        let right = a.kron(&b.kron(&c));
        prop_assert!(left.max_abs_diff(&right) <= 1e-14);
    }

    #[test]
    fn random_unitaries_are_unitary(seed in any::<u64>(), n in 1usize..=4) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = random_unitary(1 << n, &mut rng);
        prop_assert!(u.unitarity_deviation() <= 1e-12);
    }
}
