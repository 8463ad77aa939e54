#![allow(dead_code)]

use gatebound::channels::{
    choi_of_unitary, cnz_unitary, mix, phase_flip_mixture, state_dependent_loss, ChoiMatrix,
};
use gatebound::qmath::ComplexMatrix;
use gatebound::random::{random_channel, random_diagonal_unitary, random_lossy_channel, random_unitary};
use rand::Rng;

/// Target unitary: CNZ, a random diagonal gate or a random unitary.
pub fn random_target<R: Rng>(n: usize, rng: &mut R) -> ComplexMatrix {
    match rng.random_range(0..3) {
        0 => cnz_unitary(n).unwrap(),
        1 => random_diagonal_unitary(1 << n, rng),
        _ => random_unitary(1 << n, rng),
    }
}

fn random_weights<R: Rng>(k: usize, rng: &mut R) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.01..1.0)).collect();
    let s: f64 = raw.iter().sum();
    let mut w: Vec<f64> = raw.iter().map(|x| x / s).collect();
    let rest: f64 = w[1..].iter().sum();
    w[0] = 1.0 - rest;
    w
}

fn random_loss<R: Rng>(chi: ChoiMatrix, rng: &mut R) -> ChoiMatrix {
    if rng.random_bool(0.5) {
        return chi;
    }
    let t: Vec<f64> = (0..chi.dim()).map(|_| rng.random_range(0.05..=1.0)).collect();
    state_dependent_loss(&chi, &t).unwrap()
}

/// Mixtures of unitaries and trace-decreasing Kraus maps, some close to
/// `u` and some generic.
pub fn random_test_channel<R: Rng>(u: &ComplexMatrix, rng: &mut R) -> ChoiMatrix {
    let n = u.qubit_count().unwrap();
    let d = 1usize << n;
    match rng.random_range(0..4) {
        0 => {
            let ideal = choi_of_unitary(u).unwrap();
            let noise = random_channel(n, rng.random_range(1..=4), rng);
            let w = rng.random_range(0.5..1.0);
            random_loss(mix(&[(w, &ideal), (1.0 - w, &noise)]).unwrap(), rng)
        }
        1 => random_lossy_channel(n, rng.random_range(1..=4), 0.05, rng),
        2 => random_loss(phase_flip_mixture(u, &random_weights(n + 1, rng)).unwrap(), rng),
        _ => {
            let k = rng.random_range(1..=3);
            let chis: Vec<ChoiMatrix> = (0..k)
                .map(|_| {
                    let v = u * &random_diagonal_unitary(d, rng);
                    choi_of_unitary(&v).unwrap()
                })
                .collect();
            let w = random_weights(k, rng);
            let parts: Vec<(f64, &ChoiMatrix)> = w.iter().copied().zip(chis.iter()).collect();
            random_loss(mix(&parts).unwrap(), rng)
        }
    }
}
