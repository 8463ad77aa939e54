//! Random unitaries, states and channels for tests and noise studies.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::channels::{choi_of_kraus, ChoiMatrix, DensityMatrix, KrausSet};
use crate::qmath::{c, inner, ComplexMatrix, C64};

fn ginibre<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> ComplexMatrix {
    ComplexMatrix::from_fn(rows, cols, |_, _| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        c(re, im)
    })
}

/// Haar-random `d x d` unitary (Gram-Schmidt on a Ginibre matrix).
pub fn random_unitary<R: Rng + ?Sized>(d: usize, rng: &mut R) -> ComplexMatrix {
    let g = ginibre(d, d, rng);
    let mut cols: Vec<Vec<C64>> = Vec::with_capacity(d);
    for j in 0..d {
        let mut v: Vec<C64> = (0..d).map(|i| g[(i, j)]).collect();
        // two passes keep the columns orthogonal to machine precision
        for _ in 0..2 {
            for q in &cols {
                let proj = inner(q, &v);
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= proj * qi;
                }
            }
        }
        let nrm = crate::qmath::norm(&v);
        for vi in &mut v {
            *vi /= nrm;
        }
        cols.push(v);
    }
    ComplexMatrix::from_fn(d, d, |i, j| cols[j][i])
}

/// Random diagonal unitary with uniform phases.
pub fn random_diagonal_unitary<R: Rng + ?Sized>(d: usize, rng: &mut R) -> ComplexMatrix {
    let diag: Vec<C64> = (0..d)
        .map(|_| C64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU)))
        .collect();
    ComplexMatrix::from_diag(&diag)
}

/// Random full-rank density matrix, `G G^dagger / Tr`.
pub fn random_density<R: Rng + ?Sized>(d: usize, rng: &mut R) -> DensityMatrix {
    let g = ginibre(d, d, rng);
    let m = &g * &g.dagger();
    let tr = m.trace().re;
    DensityMatrix::new(m.scale_real(1.0 / tr)).expect("Ginibre states are valid")
}

fn inverse_sqrt(m: &ComplexMatrix) -> ComplexMatrix {
    let e = m.eigh().expect("Hermitian by construction");
    let d = m.rows();
    let mut out = ComplexMatrix::zeros(d, d);
    for k in 0..d {
        let v = e.eigenvector(k);
        out.add_outer(c(1.0 / e.eigenvalues[k].sqrt(), 0.0), &v, &v);
    }
    out
}

/// Random trace-preserving map on `n` qubits with `rank` Kraus operators.
pub fn random_kraus<R: Rng + ?Sized>(n: usize, rank: usize, rng: &mut R) -> KrausSet {
    let d = 1usize << n;
    let gs: Vec<ComplexMatrix> = (0..rank.max(1)).map(|_| ginibre(d, d, rng)).collect();
    let mut s = ComplexMatrix::zeros(d, d);
    for g in &gs {
        s += &(&g.dagger() * g);
    }
    let s_inv = inverse_sqrt(&s);
    KrausSet::new(gs.iter().map(|g| g * &s_inv).collect()).expect("complete by construction")
}

/// Choi matrix of [`random_kraus`].
pub fn random_channel<R: Rng + ?Sized>(n: usize, rank: usize, rng: &mut R) -> ChoiMatrix {
    choi_of_kraus(&random_kraus(n, rank, rng))
}

/// Random trace-decreasing map: a random channel preceded by an input
/// filter with intensity transmissions drawn from `[t_min, 1]`.
pub fn random_lossy_channel<R: Rng + ?Sized>(
    n: usize,
    rank: usize,
    t_min: f64,
    rng: &mut R,
) -> ChoiMatrix {
    let chi = random_channel(n, rank, rng);
    let t: Vec<f64> = (0..1usize << n).map(|_| rng.random_range(t_min..=1.0)).collect();
    crate::channels::state_dependent_loss(&chi, &t).expect("transmissions are in range")
}
