//! Dense complex linear algebra.
//!
//! Everything above this module talks about states, channels and probe
//! bases; this is the only place that touches raw matrix arithmetic.
//! Storage is row-major. Multi-qubit indices put qubit 1 in the most
//! significant bit, so `|abc>` lives at index `4a + 2b + c`.

use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Sub};

use faer::{Mat, Side};
pub use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

/// Relative tolerance used for Hermiticity checks before decomposition.
pub const HERMITIAN_TOL: f64 = 1e-10;

pub const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
pub const ONE: C64 = C64 { re: 1.0, im: 0.0 };

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[inline]
pub fn r(re: f64) -> C64 {
    C64::new(re, 0.0)
}

/// A dense complex matrix in row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    data: Vec<C64>,
}

impl ComplexMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![ZERO; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = ONE;
        }
        m
    }

    /// Builds a matrix from row-major entries, rejecting wrong lengths and
    /// non-finite values.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch(format!(
                "{} entries for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if let Some(pos) = data.iter().position(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::NonFinite(pos / cols.max(1), pos % cols.max(1)));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_diag(diag: &[C64]) -> Self {
        let n = diag.len();
        let mut m = Self::zeros(n, n);
        for (i, &d) in diag.iter().enumerate() {
            m.data[i * n + i] = d;
        }
        m
    }

    pub fn from_real_diag(diag: &[f64]) -> Self {
        Self::from_diag(&diag.iter().map(|&x| r(x)).collect::<Vec<_>>())
    }

    /// The outer product `|a><b|`.
    pub fn outer(a: &[C64], b: &[C64]) -> Self {
        let mut m = Self::zeros(a.len(), b.len());
        m.add_outer(ONE, a, b);
        m
    }

    /// Permutation matrix `P` with `P|i> = |map[i]>`.
    pub fn permutation(map: &[usize]) -> Result<Self> {
        check_permutation(map)?;
        let n = map.len();
        let mut m = Self::zeros(n, n);
        for (i, &j) in map.iter().enumerate() {
            m.data[j * n + i] = ONE;
        }
        Ok(m)
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<C64> {
        self.data
    }

    pub fn row(&self, i: usize) -> &[C64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn diagonal(&self) -> Vec<C64> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    /// Number of qubits for a square matrix of dimension `2^n`.
    pub fn qubit_count(&self) -> Result<usize> {
        if !self.is_square() || !self.rows.is_power_of_two() {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} is not a square power-of-two dimension",
                self.rows, self.cols
            )));
        }
        Ok(self.rows.trailing_zeros() as usize)
    }

    pub fn kron(&self, other: &Self) -> Self {
        let rows = self.rows * other.rows;
        let cols = self.cols * other.cols;
        let mut data = vec![ZERO; rows * cols];
        for i1 in 0..self.rows {
            for j1 in 0..self.cols {
                let a = self.data[i1 * self.cols + j1];
                if a == ZERO {
                    continue;
                }
                for i2 in 0..other.rows {
                    let row = (i1 * other.rows + i2) * cols + j1 * other.cols;
                    let src = &other.data[i2 * other.cols..(i2 + 1) * other.cols];
                    for (dst, &b) in data[row..row + other.cols].iter_mut().zip(src) {
                        *dst = a * b;
                    }
                }
            }
        }
        Self { rows, cols, data }
    }

    pub fn kron_all<'a>(factors: impl IntoIterator<Item = &'a ComplexMatrix>) -> Self {
        factors
            .into_iter()
            .fold(Self::identity(1), |acc, f| acc.kron(f))
    }

    pub fn matmul(&self, other: &Self) -> Result<Self> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == ZERO {
                    continue;
                }
                let b_row = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, &b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        Ok(out)
    }

    /// Matrix-vector product.
    ///
    /// Panics if `v.len() != self.cols()`.
    pub fn apply(&self, v: &[C64]) -> Vec<C64> {
        assert_eq!(v.len(), self.cols, "vector length does not match matrix");
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `<a| M |b>`
    pub fn sandwich(&self, a: &[C64], b: &[C64]) -> C64 {
        let mb = self.apply(b);
        a.iter().zip(&mb).map(|(x, y)| x.conj() * y).sum()
    }

    pub fn dagger(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)].conj())
    }

    /// Transpose in the computational basis.
    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    pub fn conj(&self) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z.conj()).collect(),
        }
    }

    pub fn trace(&self) -> C64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// `Tr[self * other]` without forming the product.
    pub fn trace_product(&self, other: &Self) -> Result<C64> {
        if self.cols != other.rows || self.rows != other.cols {
            return Err(Error::DimensionMismatch(format!(
                "trace of {}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut acc = ZERO;
        for i in 0..self.rows {
            for j in 0..self.cols {
                acc += self.data[i * self.cols + j] * other.data[j * other.cols + i];
            }
        }
        Ok(acc)
    }

    pub fn scale(&self, alpha: C64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|z| z * alpha).collect(),
        }
    }

    pub fn scale_real(&self, alpha: f64) -> Self {
        self.scale(r(alpha))
    }

    /// `self += alpha * other`
    pub fn add_scaled(&mut self, alpha: C64, other: &Self) {
        assert_eq!(
            (self.rows, self.cols),
            (other.rows, other.cols),
            "shape mismatch in add_scaled"
        );
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += alpha * b;
        }
    }

    /// `self += alpha |a><b|`, skipping zero entries of `a` and `b`.
    pub fn add_outer(&mut self, alpha: C64, a: &[C64], b: &[C64]) {
        assert_eq!((a.len(), b.len()), (self.rows, self.cols), "outer product shape");
        let nz_b: Vec<(usize, C64)> = b
            .iter()
            .enumerate()
            .filter(|(_, z)| **z != ZERO)
            .map(|(j, z)| (j, z.conj()))
            .collect();
        for (i, &ai) in a.iter().enumerate() {
            if ai == ZERO {
                continue;
            }
            let ai = alpha * ai;
            let row = i * self.cols;
            for &(j, bj) in &nz_b {
                self.data[row + j] += ai * bj;
            }
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// Largest entrywise deviation `|A_ij - conj(A_ji)|`.
    pub fn hermitian_deviation(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let n = self.rows;
        let mut dev: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                dev = dev.max((self.data[i * n + j] - self.data[j * n + i].conj()).norm());
            }
        }
        dev
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermitian_deviation() <= tol * self.max_abs().max(1.0)
    }

    /// Largest entrywise deviation of `U^dagger U` from the identity.
    pub fn unitarity_deviation(&self) -> f64 {
        if !self.is_square() {
            return f64::INFINITY;
        }
        let n = self.rows;
        let mut dev: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let mut acc = ZERO;
                for k in 0..n {
                    acc += self.data[k * n + i].conj() * self.data[k * n + j];
                }
                if i == j {
                    acc -= ONE;
                }
                dev = dev.max(acc.norm());
            }
        }
        dev
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.unitarity_deviation() <= tol
    }

    pub fn is_diagonal(&self, tol: f64) -> bool {
        self.is_square()
            && (0..self.rows)
                .all(|i| (0..self.cols).all(|j| i == j || self[(i, j)].norm() <= tol))
    }

    /// True when every entry has an exactly zero imaginary part.
    pub fn is_real(&self) -> bool {
        self.data.iter().all(|z| z.im == 0.0)
    }

    /// Traces out every subsystem not listed in `keep`.
    ///
    /// `dims` lists subsystem dimensions, first subsystem most significant.
    /// The kept subsystems appear in the output in their original order.
    pub fn partial_trace(&self, dims: &[usize], keep: &[usize]) -> Result<Self> {
        if !self.is_square() {
            return Err(Error::DimensionMismatch("partial trace of a non-square matrix".into()));
        }
        let total: usize = dims.iter().product();
        if total != self.rows {
            return Err(Error::DimensionMismatch(format!(
                "subsystem dimensions {dims:?} do not multiply to {}",
                self.rows
            )));
        }
        let mut kept: Vec<usize> = keep.to_vec();
        kept.sort_unstable();
        kept.dedup();
        if kept.iter().any(|&k| k >= dims.len()) {
            return Err(Error::DimensionMismatch(format!(
                "keep set {keep:?} out of range for {} subsystems",
                dims.len()
            )));
        }
        let traced: Vec<usize> = (0..dims.len()).filter(|i| !kept.contains(i)).collect();

        let mut strides = vec![1usize; dims.len()];
        for i in (0..dims.len().saturating_sub(1)).rev() {
            strides[i] = strides[i + 1] * dims[i + 1];
        }
        let offsets = |subs: &[usize]| -> Vec<usize> {
            let count: usize = subs.iter().map(|&s| dims[s]).product();
            (0..count)
                .map(|mut idx| {
                    let mut off = 0;
                    for &s in subs.iter().rev() {
                        off += (idx % dims[s]) * strides[s];
                        idx /= dims[s];
                    }
                    off
                })
                .collect()
        };
        let kept_off = offsets(&kept);
        let traced_off = offsets(&traced);

        let dk = kept_off.len();
        let n = self.rows;
        let mut out = Self::zeros(dk, dk);
        for (r, &ro) in kept_off.iter().enumerate() {
            for (c, &co) in kept_off.iter().enumerate() {
                out.data[r * dk + c] = traced_off
                    .iter()
                    .map(|&t| self.data[(ro + t) * n + co + t])
                    .sum();
            }
        }
        Ok(out)
    }

    /// `P A P^dagger` for the permutation `P|i> = |map[i]>`, computed by
    /// relabeling indices.
    pub fn conjugate_by_permutation(&self, map: &[usize]) -> Result<Self> {
        check_permutation(map)?;
        if !self.is_square() || map.len() != self.rows {
            return Err(Error::DimensionMismatch(format!(
                "permutation of length {} for a {}x{} matrix",
                map.len(),
                self.rows,
                self.cols
            )));
        }
        let n = self.rows;
        let mut out = Self::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                out.data[map[i] * n + map[j]] = self.data[i * n + j];
            }
        }
        Ok(out)
    }

    fn checked_hermitian(&self) -> Result<()> {
        if !self.is_square() {
            return Err(Error::DimensionMismatch(format!(
                "eigendecomposition of a {}x{} matrix",
                self.rows, self.cols
            )));
        }
        let dev = self.hermitian_deviation();
        if dev > HERMITIAN_TOL * self.max_abs().max(1.0) {
            return Err(Error::NotHermitian(dev));
        }
        Ok(())
    }

    /// Symmetrized entry `(A + A^dagger)/2` at `(i, j)`.
    #[inline]
    fn sym(&self, i: usize, j: usize) -> C64 {
        let n = self.rows;
        (self.data[i * n + j] + self.data[j * n + i].conj()) * 0.5
    }

    /// Hermitian eigendecomposition with eigenvalues in ascending order.
    ///
    /// The input is symmetrized as `(A + A^dagger)/2` first.
    pub fn eigh(&self) -> Result<EigenDecomposition> {
        self.checked_hermitian()?;
        let n = self.rows;
        if self.is_real() {
            let a = Mat::<f64>::from_fn(n, n, |i, j| self.sym(i, j).re);
            let evd = a.self_adjoint_eigen(Side::Lower).map_err(|_| Error::EigenFailure)?;
            let s = evd.S().column_vector();
            let u = evd.U();
            Ok(EigenDecomposition {
                eigenvalues: (0..n).map(|i| s[i]).collect(),
                eigenvectors: Self::from_fn(n, n, |i, j| r(u[(i, j)])),
            })
        } else {
            let a = Mat::<C64>::from_fn(n, n, |i, j| self.sym(i, j));
            let evd = a.self_adjoint_eigen(Side::Lower).map_err(|_| Error::EigenFailure)?;
            let s = evd.S().column_vector();
            let u = evd.U();
            Ok(EigenDecomposition {
                eigenvalues: (0..n).map(|i| s[i].re).collect(),
                eigenvectors: Self::from_fn(n, n, |i, j| u[(i, j)]),
            })
        }
    }

    /// Eigenvalues only, ascending. Much cheaper than [`Self::eigh`] for
    /// large matrices.
    pub fn eigvalsh(&self) -> Result<Vec<f64>> {
        self.checked_hermitian()?;
        let n = self.rows;
        if self.is_real() {
            let a = Mat::<f64>::from_fn(n, n, |i, j| self.sym(i, j).re);
            a.self_adjoint_eigenvalues(Side::Lower)
                .map_err(|_| Error::EigenFailure)
        } else {
            let a = Mat::<C64>::from_fn(n, n, |i, j| self.sym(i, j));
            a.self_adjoint_eigenvalues(Side::Lower)
                .map_err(|_| Error::EigenFailure)
        }
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(self.eigvalsh()?.first().copied().unwrap_or(0.0))
    }
}

fn check_permutation(map: &[usize]) -> Result<()> {
    let mut seen = vec![false; map.len()];
    for &j in map {
        if j >= map.len() || std::mem::replace(&mut seen[j], true) {
            return Err(Error::InvalidArgument("index map is not a permutation".into()));
        }
    }
    Ok(())
}

impl Index<(usize, usize)> for ComplexMatrix {
    type Output = C64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for ComplexMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.cols + j]
    }
}

impl Add for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn add(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        let mut out = self.clone();
        out.add_scaled(ONE, rhs);
        out
    }
}

impl Sub for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn sub(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        let mut out = self.clone();
        out.add_scaled(-ONE, rhs);
        out
    }
}

impl AddAssign<&ComplexMatrix> for ComplexMatrix {
    fn add_assign(&mut self, rhs: &ComplexMatrix) {
        self.add_scaled(ONE, rhs);
    }
}

/// Panics on a shape mismatch; use [`ComplexMatrix::matmul`] for a checked product.
impl Mul for &ComplexMatrix {
    type Output = ComplexMatrix;

    fn mul(self, rhs: &ComplexMatrix) -> ComplexMatrix {
        self.matmul(rhs).expect("matrix product shape mismatch")
    }
}

/// Eigenvalues (ascending) and orthonormal eigenvectors stored as columns.
#[derive(Clone, Debug)]
pub struct EigenDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: ComplexMatrix,
}

impl EigenDecomposition {
    /// `V diag(lambda) V^dagger`
    pub fn reconstruct(&self) -> ComplexMatrix {
        let v = &self.eigenvectors;
        let n = v.rows();
        ComplexMatrix::from_fn(n, n, |i, j| {
            (0..n)
                .map(|k| v[(i, k)] * self.eigenvalues[k] * v[(j, k)].conj())
                .sum()
        })
    }

    /// Largest entrywise deviation of the eigenvector Gram matrix from identity.
    pub fn orthonormality_deviation(&self) -> f64 {
        self.eigenvectors.unitarity_deviation()
    }

    pub fn eigenvector(&self, k: usize) -> Vec<C64> {
        let v = &self.eigenvectors;
        (0..v.rows()).map(|i| v[(i, k)]).collect()
    }
}

/// Kronecker product of two vectors.
pub fn kron_vec(a: &[C64], b: &[C64]) -> Vec<C64> {
    let mut out = Vec::with_capacity(a.len() * b.len());
    for &x in a {
        for &y in b {
            out.push(x * y);
        }
    }
    out
}

pub fn inner(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm(a: &[C64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}
