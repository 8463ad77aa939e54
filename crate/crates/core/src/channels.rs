//! Quantum states, gates, Choi matrices and channel application.
//!
//! Choi matrices use the unnormalized maximally entangled vector
//! `|Phi_N+> = sum_j |j>_in |j>_out`, so `Tr[chi_U] = 2^N` for a unitary `U`.
//! The input register is the more significant tensor factor: the Choi
//! entry for `(|i><j|)_in (x) (|x><y|)_out` sits at row `i*d + x`,
//! column `j*d + y`.
//!
//! Trace-nonincreasing maps are first class. The success probability of a
//! post-selected operation is carried by the trace of its (subnormalized)
//! output; there is no separate field for it.

use std::f64::consts::FRAC_1_SQRT_2;

use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::qmath::{self, c, r, ComplexMatrix, ONE, ZERO};

/// Tolerance for PSD / Hermiticity / trace checks on states and channels.
pub const VALIDATION_TOL: f64 = 1e-10;

/// JSON convention tag for Choi matrices.
pub const CHOI_CONVENTION: &str = "unnormalized-phi-plus";
/// JSON convention tag for density matrices.
pub const DENSITY_CONVENTION: &str = "density-matrix";

/// Single-qubit states used to build product probes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SingleQubitState {
    Zero,
    One,
    Plus,
    Minus,
    PlusI,
    MinusI,
}

impl SingleQubitState {
    pub const ALL: [SingleQubitState; 6] = [
        Self::Zero,
        Self::One,
        Self::Plus,
        Self::Minus,
        Self::PlusI,
        Self::MinusI,
    ];

    pub fn amplitudes(self) -> [C64; 2] {
        let h = FRAC_1_SQRT_2;
        match self {
            Self::Zero => [ONE, ZERO],
            Self::One => [ZERO, ONE],
            Self::Plus => [r(h), r(h)],
            Self::Minus => [r(h), r(-h)],
            Self::PlusI => [r(h), c(0.0, h)],
            Self::MinusI => [r(h), c(0.0, -h)],
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Self::Zero => "0",
            Self::One => "1",
            Self::Plus => "+",
            Self::Minus => "-",
            Self::PlusI => "+i",
            Self::MinusI => "-i",
        }
    }
}

/// Renders a product label such as `+00` or `++1`.
pub fn product_label(states: &[SingleQubitState]) -> String {
    states.iter().map(|s| s.symbol()).collect()
}

/// A normalized pure state on `n` qubits.
#[derive(Clone, Debug, PartialEq)]
pub struct PureState {
    n_qubits: usize,
    amplitudes: Vec<C64>,
}

impl PureState {
    /// Wraps amplitudes that are already unit-norm (within 1e-10); they are
    /// renormalized exactly.
    pub fn new(amplitudes: Vec<C64>) -> Result<Self> {
        let norm = qmath::norm(&amplitudes);
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidState(format!("state norm is {norm}, expected 1")));
        }
        Self::normalized(amplitudes)
    }

    /// Normalizes arbitrary nonzero amplitudes.
    pub fn normalized(mut amplitudes: Vec<C64>) -> Result<Self> {
        let len = amplitudes.len();
        if len == 0 || !len.is_power_of_two() {
            return Err(Error::InvalidState(format!(
                "{len} amplitudes is not a power of two"
            )));
        }
        if amplitudes.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::InvalidState("non-finite amplitude".into()));
        }
        let norm = qmath::norm(&amplitudes);
        if norm == 0.0 {
            return Err(Error::InvalidState("zero vector".into()));
        }
        for z in &mut amplitudes {
            *z /= norm;
        }
        Ok(Self {
            n_qubits: len.trailing_zeros() as usize,
            amplitudes,
        })
    }

    pub fn basis(n_qubits: usize, index: usize) -> Result<Self> {
        let d = 1usize << n_qubits;
        if index >= d {
            return Err(Error::InvalidArgument(format!(
                "basis index {index} out of range for {n_qubits} qubits"
            )));
        }
        let mut amps = vec![ZERO; d];
        amps[index] = ONE;
        Ok(Self {
            n_qubits,
            amplitudes: amps,
        })
    }

    /// Tensor product of single-qubit states, qubit 1 first.
    pub fn product(states: &[SingleQubitState]) -> Self {
        let amps = states
            .iter()
            .fold(vec![ONE], |acc, s| qmath::kron_vec(&acc, &s.amplitudes()));
        Self {
            n_qubits: states.len(),
            amplitudes: amps,
        }
    }

    /// Tensor product of arbitrary single-qubit amplitude pairs `(c0, c1)`.
    pub fn product_of(qubits: &[[C64; 2]]) -> Result<Self> {
        let amps = qubits
            .iter()
            .fold(vec![ONE], |acc, q| qmath::kron_vec(&acc, q));
        Self::new(amps)
    }

    /// `(|0...0> + |1...1>)/sqrt(2)`
    pub fn ghz(n_qubits: usize) -> Self {
        let d = 1usize << n_qubits;
        let mut amps = vec![ZERO; d];
        amps[0] = r(FRAC_1_SQRT_2);
        amps[d - 1] = r(FRAC_1_SQRT_2);
        Self {
            n_qubits,
            amplitudes: amps,
        }
    }

    /// Normalized `|Phi_N+>` on `2n` qubits. The unnormalized vector used by
    /// the Choi convention is this state times `2^(n/2)`.
    pub fn phi_plus(n: usize) -> Self {
        let d = 1usize << n;
        let mut amps = vec![ZERO; d * d];
        let a = r(1.0 / (d as f64).sqrt());
        for i in 0..d {
            amps[i * d + i] = a;
        }
        Self {
            n_qubits: 2 * n,
            amplitudes: amps,
        }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn dim(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn kron(&self, other: &Self) -> Self {
        Self {
            n_qubits: self.n_qubits + other.n_qubits,
            amplitudes: qmath::kron_vec(&self.amplitudes, &other.amplitudes),
        }
    }

    /// Applies a unitary. Fails if the dimensions disagree or the result is
    /// not normalized.
    pub fn evolve(&self, u: &ComplexMatrix) -> Result<Self> {
        if u.cols() != self.dim() || u.rows() != self.dim() {
            return Err(Error::DimensionMismatch(format!(
                "{}x{} operator on a {}-dimensional state",
                u.rows(),
                u.cols(),
                self.dim()
            )));
        }
        Self::new(u.apply(&self.amplitudes))
    }

    pub fn projector(&self) -> ComplexMatrix {
        ComplexMatrix::outer(&self.amplitudes, &self.amplitudes)
    }

    pub fn inner(&self, other: &Self) -> C64 {
        qmath::inner(&self.amplitudes, &other.amplitudes)
    }

    /// `|<self|other>|^2`
    pub fn fidelity(&self, other: &Self) -> f64 {
        self.inner(other).norm_sqr()
    }

    /// Max-entry distance between the two projectors; insensitive to global
    /// phase.
    pub fn projector_distance(&self, other: &Self) -> f64 {
        self.projector().max_abs_diff(&other.projector())
    }

    /// Largest Schmidt coefficient squared across the cut separating qubit
    /// `m` (1-based) from the rest.
    pub fn largest_schmidt_weight(&self, m: usize) -> f64 {
        let rho = reduced_single_qubit(&self.amplitudes, self.n_qubits, m);
        let tr = rho[0].re + rho[3].re;
        let det = (rho[0] * rho[3] - rho[1] * rho[2]).re;
        let disc = (tr * tr - 4.0 * det).max(0.0).sqrt();
        (tr + disc) / 2.0
    }
}

/// Reduced density matrix of qubit `m` (1-based), row-major 2x2.
fn reduced_single_qubit(amps: &[C64], n: usize, m: usize) -> [C64; 4] {
    let shift = n - m;
    let mut out = [ZERO; 4];
    for (i, &a) in amps.iter().enumerate() {
        if (i >> shift) & 1 != 0 {
            continue;
        }
        let j = i | (1 << shift);
        let b = amps[j];
        out[0] += a * a.conj();
        out[1] += a * b.conj();
        out[2] += b * a.conj();
        out[3] += b * b.conj();
    }
    out
}

#[derive(Serialize, Deserialize)]
struct MatrixContainer {
    n_qubits: usize,
    convention: String,
    entries: Vec<[f64; 2]>,
}

fn container_json(n: usize, convention: &str, m: &ComplexMatrix) -> Result<String> {
    let container = MatrixContainer {
        n_qubits: n,
        convention: convention.to_string(),
        entries: m.as_slice().iter().map(|z| [z.re, z.im]).collect(),
    };
    Ok(serde_json::to_string(&container)?)
}

fn container_from_json(json: &str, convention: &str, dim_of: fn(usize) -> usize) -> Result<(usize, ComplexMatrix)> {
    let container: MatrixContainer = serde_json::from_str(json)?;
    if container.convention != convention {
        return Err(Error::InvalidArgument(format!(
            "convention {:?}, expected {convention:?}",
            container.convention
        )));
    }
    let d = dim_of(container.n_qubits);
    let data = container.entries.iter().map(|&[a, b]| c(a, b)).collect();
    Ok((container.n_qubits, ComplexMatrix::from_vec(d, d, data)?))
}

/// A (possibly subnormalized) density matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    n_qubits: usize,
    matrix: ComplexMatrix,
}

impl DensityMatrix {
    /// Validates Hermiticity, positivity and `0 < Tr <= 1`, all within 1e-10.
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        let n = matrix.qubit_count()?;
        if !matrix.is_hermitian(VALIDATION_TOL) {
            return Err(Error::NotHermitian(matrix.hermitian_deviation()));
        }
        let min = matrix.min_eigenvalue()?;
        if min < -VALIDATION_TOL {
            return Err(Error::InvalidState(format!("negative eigenvalue {min:e}")));
        }
        let tr = matrix.trace().re;
        if tr <= 0.0 || tr > 1.0 + VALIDATION_TOL {
            return Err(Error::InvalidState(format!("trace {tr} outside (0, 1]")));
        }
        Ok(Self {
            n_qubits: n,
            matrix,
        })
    }

    /// Output of a CP map; positive by construction, trace may be zero.
    pub(crate) fn from_map_output(n_qubits: usize, matrix: ComplexMatrix) -> Self {
        Self { n_qubits, matrix }
    }

    pub fn from_pure(state: &PureState) -> Self {
        Self {
            n_qubits: state.n_qubits(),
            matrix: state.projector(),
        }
    }

    pub fn maximally_mixed(n_qubits: usize) -> Self {
        let d = 1usize << n_qubits;
        Self {
            n_qubits,
            matrix: ComplexMatrix::identity(d).scale_real(1.0 / d as f64),
        }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    /// Rescaled to unit trace. Fails for a zero-trace output.
    pub fn normalized(&self) -> Result<Self> {
        let tr = self.trace();
        if tr <= 0.0 {
            return Err(Error::InvalidState("cannot normalize a zero-trace state".into()));
        }
        Ok(Self {
            n_qubits: self.n_qubits,
            matrix: self.matrix.scale_real(1.0 / tr),
        })
    }

    /// `<psi| rho |psi> / Tr rho`
    pub fn fidelity_with(&self, target: &PureState) -> f64 {
        let tr = self.trace();
        let amps = target.amplitudes();
        self.matrix.sandwich(amps, amps).re / tr
    }

    /// `Tr[rho^2]` of the normalized state.
    pub fn purity(&self) -> f64 {
        let tr = self.trace();
        self.matrix.trace_product(&self.matrix).map(|p| p.re).unwrap_or(0.0) / (tr * tr)
    }

    /// `U rho U^dagger`
    pub fn conjugate(&self, u: &ComplexMatrix) -> Result<Self> {
        let out = &u.matmul(&self.matrix)? * &u.dagger();
        Ok(Self {
            n_qubits: self.n_qubits,
            matrix: out,
        })
    }

    pub fn to_json(&self) -> Result<String> {
        container_json(self.n_qubits, DENSITY_CONVENTION, &self.matrix)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let (_, m) = container_from_json(json, DENSITY_CONVENTION, |n| 1 << n)?;
        Self::new(m)
    }
}

/// Choi matrix of a (possibly trace-decreasing) operation on `n` qubits.
#[derive(Clone, Debug, PartialEq)]
pub struct ChoiMatrix {
    n_qubits: usize,
    matrix: ComplexMatrix,
}

impl ChoiMatrix {
    /// Validates a raw Choi matrix: Hermitian PSD and
    /// `Tr <= 2^n (1 + 1e-10)`.
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        let q = matrix.qubit_count()?;
        if q % 2 != 0 {
            return Err(Error::DimensionMismatch(format!(
                "Choi dimension {} is not 4^n",
                matrix.rows()
            )));
        }
        let n = q / 2;
        let scale = matrix.max_abs().max(1.0);
        if !matrix.is_hermitian(VALIDATION_TOL) {
            return Err(Error::NotHermitian(matrix.hermitian_deviation()));
        }
        let min = matrix.min_eigenvalue()?;
        if min < -VALIDATION_TOL * scale {
            return Err(Error::InvalidChannel(format!("negative eigenvalue {min:e}")));
        }
        let tr = matrix.trace().re;
        let d = (1usize << n) as f64;
        if tr <= 0.0 || tr > d * (1.0 + VALIDATION_TOL) {
            return Err(Error::InvalidChannel(format!("trace {tr} outside (0, {d}]")));
        }
        Ok(Self {
            n_qubits: n,
            matrix,
        })
    }

    /// For constructions that are positive by design.
    pub(crate) fn from_psd(n_qubits: usize, matrix: ComplexMatrix) -> Self {
        debug_assert_eq!(matrix.rows(), 1 << (2 * n_qubits));
        Self { n_qubits, matrix }
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    /// Dimension of the single-system Hilbert space, `2^n`.
    pub fn dim(&self) -> usize {
        1 << self.n_qubits
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    /// `alpha * chi` for `alpha > 0`. Used to model overall loss.
    pub fn scaled(&self, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return Err(Error::InvalidArgument(format!("scale {alpha} must be positive")));
        }
        Ok(Self {
            n_qubits: self.n_qubits,
            matrix: self.matrix.scale_real(alpha),
        })
    }

    /// `Tr_out chi`, the operator whose transpose-expectation gives the
    /// success probability of each input.
    pub fn input_marginal(&self) -> ComplexMatrix {
        let d = self.dim();
        self.matrix
            .partial_trace(&[d, d], &[0])
            .expect("Choi dimensions are consistent")
    }

    pub fn to_json(&self) -> Result<String> {
        container_json(self.n_qubits, CHOI_CONVENTION, &self.matrix)
    }

    pub fn from_json(json: &str) -> Result<Self> {
        let (n, m) = container_from_json(json, CHOI_CONVENTION, |n| 1 << (2 * n))?;
        let chi = Self::new(m)?;
        if chi.n_qubits != n {
            return Err(Error::DimensionMismatch("n_qubits disagrees with entries".into()));
        }
        Ok(chi)
    }
}

/// Kraus operators of a trace-nonincreasing map.
#[derive(Clone, Debug)]
pub struct KrausSet {
    n_qubits: usize,
    ops: Vec<ComplexMatrix>,
}

impl KrausSet {
    /// Requires `I - sum K^dagger K >= 0` within 1e-10 and a nonzero map.
    pub fn new(ops: Vec<ComplexMatrix>) -> Result<Self> {
        let first = ops
            .first()
            .ok_or_else(|| Error::InvalidChannel("empty Kraus set".into()))?;
        let n = first.qubit_count()?;
        let d = first.rows();
        if ops.iter().any(|k| k.rows() != d || k.cols() != d) {
            return Err(Error::DimensionMismatch("Kraus operators differ in shape".into()));
        }
        let deficit = Self::completeness_deficit_of(&ops, d);
        let sum_norm = (&ComplexMatrix::identity(d) - &deficit).max_abs();
        if sum_norm < 1e-14 {
            return Err(Error::InvalidChannel("Kraus operators are all zero".into()));
        }
        let min = deficit.min_eigenvalue()?;
        if min < -VALIDATION_TOL {
            return Err(Error::InvalidChannel(format!(
                "map is trace-increasing (deficit eigenvalue {min:e})"
            )));
        }
        Ok(Self { n_qubits: n, ops })
    }

    fn completeness_deficit_of(ops: &[ComplexMatrix], d: usize) -> ComplexMatrix {
        let mut acc = ComplexMatrix::identity(d);
        for k in ops {
            acc.add_scaled(-ONE, &(&k.dagger() * k));
        }
        acc
    }

    /// `I - sum_m K_m^dagger K_m`
    pub fn completeness_deficit(&self) -> ComplexMatrix {
        Self::completeness_deficit_of(&self.ops, 1 << self.n_qubits)
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn ops(&self) -> &[ComplexMatrix] {
        &self.ops
    }
}

pub fn pauli_x() -> ComplexMatrix {
    ComplexMatrix::from_vec(2, 2, vec![ZERO, ONE, ONE, ZERO]).unwrap()
}

pub fn pauli_y() -> ComplexMatrix {
    ComplexMatrix::from_vec(2, 2, vec![ZERO, c(0.0, -1.0), c(0.0, 1.0), ZERO]).unwrap()
}

pub fn pauli_z() -> ComplexMatrix {
    ComplexMatrix::from_real_diag(&[1.0, -1.0])
}

pub fn hadamard() -> ComplexMatrix {
    let h = r(FRAC_1_SQRT_2);
    ComplexMatrix::from_vec(2, 2, vec![h, h, h, -h]).unwrap()
}

/// `I^{m-1} (x) gate (x) I^{n-m}` for a single-qubit gate on qubit `m`.
pub fn on_qubit(n: usize, m: usize, gate: &ComplexMatrix) -> Result<ComplexMatrix> {
    if m == 0 || m > n {
        return Err(Error::InvalidArgument(format!("qubit {m} out of range 1..={n}")));
    }
    let left = ComplexMatrix::identity(1 << (m - 1));
    let right = ComplexMatrix::identity(1 << (n - m));
    Ok(left.kron(gate).kron(&right))
}

/// Diagonal unitary with a -1 on the all-ones basis state.
pub fn cnz_unitary(n: usize) -> Result<ComplexMatrix> {
    if n == 0 {
        return Err(Error::InvalidArgument("controlled-Z needs at least one qubit".into()));
    }
    let d = 1usize << n;
    let mut diag = vec![1.0; d];
    diag[d - 1] = -1.0;
    Ok(ComplexMatrix::from_real_diag(&diag))
}

/// The three-qubit Toffoli with the given target (1-based):
/// `H_t U_CCZ H_t`.
pub fn toffoli_unitary(target: usize) -> Result<ComplexMatrix> {
    if !(1..=3).contains(&target) {
        return Err(Error::InvalidArgument(format!("target {target} not in 1..=3")));
    }
    let h = on_qubit(3, target, &hadamard())?;
    Ok(&(&h * &cnz_unitary(3)?) * &h)
}

/// Phase flip `sigma_Z` on qubit `m` of `n`.
pub fn sigma_m(n: usize, m: usize) -> Result<ComplexMatrix> {
    on_qubit(n, m, &pauli_z())
}

/// `V_0 = U` and `V_m = U Sigma_m` for `m = 1..=n`.
pub fn vm_unitaries(u: &ComplexMatrix) -> Result<Vec<ComplexMatrix>> {
    let n = u.qubit_count()?;
    let mut out = vec![u.clone()];
    for m in 1..=n {
        out.push(u * &sigma_m(n, m)?);
    }
    Ok(out)
}

fn check_unitary(u: &ComplexMatrix) -> Result<usize> {
    let n = u.qubit_count()?;
    let dev = u.unitarity_deviation();
    if dev > VALIDATION_TOL {
        return Err(Error::NotUnitary(dev));
    }
    Ok(n)
}

/// `(I (x) K)|Phi_N+>` as a vector on input (x) output.
fn choi_vector(k: &ComplexMatrix) -> Vec<C64> {
    let d = k.rows();
    let mut v = vec![ZERO; d * d];
    for i in 0..d {
        for x in 0..d {
            v[i * d + x] = k[(x, i)];
        }
    }
    v
}

pub fn choi_of_unitary(u: &ComplexMatrix) -> Result<ChoiMatrix> {
    let n = check_unitary(u)?;
    let v = choi_vector(u);
    Ok(ChoiMatrix::from_psd(n, ComplexMatrix::outer(&v, &v)))
}

pub fn choi_of_kraus(ks: &KrausSet) -> ChoiMatrix {
    let d = 1usize << ks.n_qubits;
    let mut chi = ComplexMatrix::zeros(d * d, d * d);
    for k in &ks.ops {
        let v = choi_vector(k);
        chi.add_outer(ONE, &v, &v);
    }
    ChoiMatrix::from_psd(ks.n_qubits, chi)
}

/// Applies the map to an arbitrary operator: `Tr_in[(X^T (x) I) chi]`.
pub fn apply_to_operator(chi: &ChoiMatrix, x: &ComplexMatrix) -> Result<ComplexMatrix> {
    let d = chi.dim();
    if x.rows() != d || x.cols() != d {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} operator for a {}-qubit channel",
            x.rows(),
            x.cols(),
            chi.n_qubits
        )));
    }
    let m = chi.matrix();
    let big = d * d;
    let mut out = ComplexMatrix::zeros(d, d);
    for ci in 0..d {
        for a in 0..d {
            let w = x[(ci, a)];
            if w == ZERO {
                continue;
            }
            for xo in 0..d {
                let row = &m.as_slice()[(ci * d + xo) * big + a * d..(ci * d + xo) * big + a * d + d];
                for (yo, &val) in row.iter().enumerate() {
                    out[(xo, yo)] += w * val;
                }
            }
        }
    }
    Ok(out)
}

/// `rho_out = Tr_in[(rho_in^T (x) I) chi]`, subnormalized: its trace is the
/// success probability for `rho_in`.
pub fn apply_channel(chi: &ChoiMatrix, rho_in: &DensityMatrix) -> Result<DensityMatrix> {
    if rho_in.n_qubits() != chi.n_qubits() {
        return Err(Error::DimensionMismatch(format!(
            "{}-qubit state into a {}-qubit channel",
            rho_in.n_qubits(),
            chi.n_qubits()
        )));
    }
    let out = apply_to_operator(chi, rho_in.matrix())?;
    Ok(DensityMatrix::from_map_output(chi.n_qubits(), out))
}

/// `F = Tr[chi chi_U] / (2^n Tr chi)`.
pub fn process_fidelity(chi: &ChoiMatrix, u: &ComplexMatrix) -> Result<f64> {
    if u.rows() != chi.dim() || u.cols() != chi.dim() {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} target for a {}-qubit channel",
            u.rows(),
            u.cols(),
            chi.n_qubits()
        )));
    }
    let tr = chi.trace();
    if tr <= f64::MIN_POSITIVE {
        return Err(Error::InvalidChannel("Choi matrix has zero trace".into()));
    }
    let v = choi_vector(u);
    let overlap = chi.matrix().sandwich(&v, &v).re;
    Ok(overlap / (chi.dim() as f64 * tr))
}

/// Process fidelity between the identity and the `n`-qubit controlled-Z:
/// `1 - 2^(2-n) + 2^(2-2n)`.
pub fn identity_fidelity(n: usize) -> f64 {
    let n = n as i32;
    1.0 - 2f64.powi(2 - n) + 2f64.powi(2 - 2 * n)
}

fn check_distribution(weights: &[f64]) -> Result<()> {
    if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
        return Err(Error::InvalidArgument("weights must be nonnegative".into()));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidArgument(format!("weights sum to {total}, expected 1")));
    }
    Ok(())
}

/// Convex combination `sum_i w_i chi_i` of channels on the same register.
pub fn mix(components: &[(f64, &ChoiMatrix)]) -> Result<ChoiMatrix> {
    let weights: Vec<f64> = components.iter().map(|(w, _)| *w).collect();
    check_distribution(&weights)?;
    let first = components
        .first()
        .ok_or_else(|| Error::InvalidArgument("empty mixture".into()))?
        .1;
    let mut acc = ComplexMatrix::zeros(first.matrix.rows(), first.matrix.cols());
    for (w, chi) in components {
        if chi.n_qubits != first.n_qubits {
            return Err(Error::DimensionMismatch("mixture of different registers".into()));
        }
        acc.add_scaled(r(*w), &chi.matrix);
    }
    Ok(ChoiMatrix::from_psd(first.n_qubits, acc))
}

/// Replaces the output by the maximally mixed state with probability `q`,
/// keeping each input's success probability.
pub fn depolarizing(chi: &ChoiMatrix, q: f64) -> Result<ChoiMatrix> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidArgument(format!("depolarizing strength {q} not in [0, 1]")));
    }
    let d = chi.dim();
    let noise = chi
        .input_marginal()
        .kron(&ComplexMatrix::identity(d))
        .scale_real(q / d as f64);
    let mut out = chi.matrix.scale_real(1.0 - q);
    out += &noise;
    Ok(ChoiMatrix::from_psd(chi.n_qubits, out))
}

/// Mixture `sum_m w_m chi_{V_m}` over the phase-flipped family
/// `V_0 = U, V_m = U Sigma_m`.
pub fn phase_flip_mixture(u: &ComplexMatrix, weights: &[f64]) -> Result<ChoiMatrix> {
    let vs = vm_unitaries(u)?;
    if weights.len() != vs.len() {
        return Err(Error::InvalidArgument(format!(
            "{} weights for {} phase-flip unitaries",
            weights.len(),
            vs.len()
        )));
    }
    check_distribution(weights)?;
    let chis = vs.iter().map(choi_of_unitary).collect::<Result<Vec<_>>>()?;
    let parts: Vec<(f64, &ChoiMatrix)> = weights.iter().copied().zip(chis.iter()).collect();
    mix(&parts)
}

/// Single Kraus operator `K = sum_m a_m V_m`, rescaled so its largest
/// singular value is at most one when needed.
pub fn coherent_vm_superposition(u: &ComplexMatrix, amplitudes: &[C64]) -> Result<ChoiMatrix> {
    let n = check_unitary(u)?;
    if amplitudes.len() != n + 1 {
        return Err(Error::InvalidArgument(format!(
            "{} amplitudes for {} phase-flip unitaries",
            amplitudes.len(),
            n + 1
        )));
    }
    let norm = qmath::norm(amplitudes);
    if (norm - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidArgument(format!("amplitude norm {norm}, expected 1")));
    }
    // K = U D with D diagonal, so ||K|| = max |D_jj|.
    let d = 1usize << n;
    let diag: Vec<C64> = (0..d)
        .map(|j| {
            let mut acc = amplitudes[0];
            for (m, &a) in amplitudes.iter().enumerate().skip(1) {
                let bit = (j >> (n - m)) & 1;
                acc += if bit == 0 { a } else { -a };
            }
            acc
        })
        .collect();
    let op_norm = diag.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let scale = if op_norm > 1.0 { 1.0 / op_norm } else { 1.0 };
    let k = (u * &ComplexMatrix::from_diag(&diag)).scale_real(scale);
    Ok(choi_of_kraus(&KrausSet::new(vec![k])?))
}

/// Precomposes the channel with an input filter that transmits basis state
/// `|j>` with intensity `transmission[j]`.
pub fn state_dependent_loss(chi: &ChoiMatrix, transmission: &[f64]) -> Result<ChoiMatrix> {
    let d = chi.dim();
    if transmission.len() != d {
        return Err(Error::InvalidArgument(format!(
            "{} transmission factors for dimension {d}",
            transmission.len()
        )));
    }
    if transmission.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(Error::InvalidArgument("transmission factors must lie in [0, 1]".into()));
    }
    let amp: Vec<f64> = transmission.iter().map(|t| t.sqrt()).collect();
    let big = d * d;
    let mut out = chi.matrix.clone();
    for row in 0..big {
        for col in 0..big {
            out[(row, col)] *= amp[row / d] * amp[col / d];
        }
    }
    if out.trace().re <= 0.0 {
        return Err(Error::InvalidChannel("loss removes every input".into()));
    }
    Ok(ChoiMatrix::from_psd(chi.n_qubits, out))
}

/// Conjugates the output register by a fixed unitary `W`:
/// the Choi matrix of `rho -> W E(rho) W^dagger`.
pub fn conjugate_output(chi: &ChoiMatrix, w: &ComplexMatrix) -> Result<ChoiMatrix> {
    let d = chi.dim();
    if w.rows() != d || w.cols() != d {
        return Err(Error::DimensionMismatch("output unitary has the wrong size".into()));
    }
    let full = ComplexMatrix::identity(d).kron(w);
    let out = &(&full * &chi.matrix) * &full.dagger();
    Ok(ChoiMatrix::from_psd(chi.n_qubits, out))
}

/// Precomposes the channel with a fixed unitary `W` on the input:
/// the Choi matrix of `rho -> E(W rho W^dagger)`.
pub fn conjugate_input(chi: &ChoiMatrix, w: &ComplexMatrix) -> Result<ChoiMatrix> {
    let d = chi.dim();
    if w.rows() != d || w.cols() != d {
        return Err(Error::DimensionMismatch("input unitary has the wrong size".into()));
    }
    let full = w.transpose().kron(&ComplexMatrix::identity(d));
    let out = &(&full * &chi.matrix) * &full.dagger();
    Ok(ChoiMatrix::from_psd(chi.n_qubits, out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::random;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn cnz_examples() {
        assert_eq!(cnz_unitary(1).unwrap(), pauli_z());
        assert_eq!(
            cnz_unitary(2).unwrap(),
            ComplexMatrix::from_real_diag(&[1.0, 1.0, 1.0, -1.0])
        );
        let one11 = PureState::basis(3, 7).unwrap();
        let expected = &ComplexMatrix::identity(8) - &one11.projector().scale_real(2.0);
        assert_eq!(cnz_unitary(3).unwrap(), expected);
        assert!(cnz_unitary(0).is_err());
    }

    #[test]
    fn cnz_is_involutive_with_single_sign_flip() {
        for n in 1..=5 {
            let u = cnz_unitary(n).unwrap();
            assert!(u.is_diagonal(0.0));
            assert_eq!(&u * &u, ComplexMatrix::identity(1 << n));
            let negatives = u.diagonal().iter().filter(|z| z.re < 0.0).count();
            assert_eq!(negatives, 1);
        }
    }

    #[test]
    fn toffoli_truth_table() {
        let t3 = toffoli_unitary(3).unwrap();
        let out = PureState::basis(3, 0b110).unwrap().evolve(&t3).unwrap();
        assert!(out.fidelity(&PureState::basis(3, 0b111).unwrap()) > 1.0 - 1e-14);
        let out = PureState::basis(3, 0b100).unwrap().evolve(&t3).unwrap();
        assert!(out.fidelity(&PureState::basis(3, 0b100).unwrap()) > 1.0 - 1e-14);

        // target 1 flips qubit 1 when qubits 2 and 3 are set: 011 <-> 111
        let t1 = toffoli_unitary(1).unwrap();
        for j in 0..8 {
            let expected = if j & 0b011 == 0b011 { j ^ 0b100 } else { j };
            for i in 0..8 {
                let want = if i == expected { 1.0 } else { 0.0 };
                assert!(close(t1[(i, j)].re, want, 1e-14) && t1[(i, j)].im.abs() < 1e-14);
            }
        }
        assert!(toffoli_unitary(0).is_err());
        assert!(toffoli_unitary(4).is_err());
    }

    #[test]
    fn choi_of_identity_is_scaled_bell_projector() {
        let chi = choi_of_unitary(&ComplexMatrix::identity(2)).unwrap();
        let bell = PureState::phi_plus(1);
        let expected = bell.projector().scale_real(2.0);
        assert!(chi.matrix().max_abs_diff(&expected) < 1e-15);
    }

    #[test]
    fn choi_of_ccz_has_trace_eight_and_rank_one() {
        let chi = choi_of_unitary(&cnz_unitary(3).unwrap()).unwrap();
        assert!(close(chi.trace(), 8.0, 1e-12));
        let e = chi.matrix().eigh().unwrap();
        assert!(close(e.eigenvalues[63], 8.0, 1e-10));
        assert!(e.eigenvalues[..63].iter().all(|x| x.abs() < 1e-10));
    }

    #[test]
    fn choi_of_z_is_orthogonal_to_identity() {
        let cz = choi_of_unitary(&pauli_z()).unwrap();
        let ci = choi_of_unitary(&ComplexMatrix::identity(2)).unwrap();
        let overlap = cz.matrix().trace_product(ci.matrix()).unwrap();
        assert!(overlap.norm() < 1e-15);
    }

    #[test]
    fn choi_of_unitary_rejects_non_unitary() {
        let m = ComplexMatrix::from_real_diag(&[1.0, 0.5]);
        assert!(matches!(choi_of_unitary(&m), Err(Error::NotUnitary(_))));
    }

    #[test]
    fn kraus_examples() {
        let u = random::random_unitary(4, &mut ChaCha8Rng::seed_from_u64(3));
        let via_kraus = choi_of_kraus(&KrausSet::new(vec![u.clone()]).unwrap());
        let direct = choi_of_unitary(&u).unwrap();
        assert!(via_kraus.matrix().max_abs_diff(direct.matrix()) < 1e-14);

        let q: f64 = 0.3;
        let ks = KrausSet::new(vec![
            ComplexMatrix::identity(2).scale_real((1.0 - q).sqrt()),
            pauli_z().scale_real(q.sqrt()),
        ])
        .unwrap();
        let chi = choi_of_kraus(&ks);
        assert!(close(chi.trace(), 2.0, 1e-14));
        // populations untouched, coherence damped by 1 - 2q
        let m = chi.matrix();
        assert!(close(m[(0, 0)].re, 1.0, 1e-14));
        assert!(close(m[(0, 3)].re, 1.0 - 2.0 * q, 1e-14));
        assert!(close(m[(3, 3)].re, 1.0, 1e-14));
        assert!(m[(1, 1)].norm() < 1e-15 && m[(0, 1)].norm() < 1e-15);

        assert!(KrausSet::new(vec![ComplexMatrix::zeros(2, 2)]).is_err());
        assert!(KrausSet::new(vec![]).is_err());
        assert!(KrausSet::new(vec![ComplexMatrix::identity(2).scale_real(1.1)]).is_err());
    }

    #[test]
    fn apply_channel_examples() {
        let ccz = cnz_unitary(3).unwrap();
        let chi = choi_of_unitary(&ccz).unwrap();
        let rho = DensityMatrix::from_pure(&PureState::basis(3, 7).unwrap());
        let out = apply_channel(&chi, &rho).unwrap();
        assert!(out.matrix().max_abs_diff(rho.matrix()) < 1e-15);
        assert!(close(out.trace(), 1.0, 1e-15));

        // the same thing as an explicit partial trace
        let lhs = rho.matrix().transpose().kron(&ComplexMatrix::identity(8));
        let explicit = (&lhs * chi.matrix()).partial_trace(&[8, 8], &[1]).unwrap();
        assert!(explicit.max_abs_diff(rho.matrix()) < 1e-15);

        let lossy = choi_of_kraus(&KrausSet::new(vec![ccz.scale_real(1.0 / 3.0)]).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let rho = random::random_density(8, &mut rng);
        let out = apply_channel(&lossy, &rho).unwrap();
        let expected = rho.conjugate(&ccz).unwrap().matrix().scale_real(1.0 / 9.0);
        assert!(out.matrix().max_abs_diff(&expected) < 1e-14);
        assert!(close(out.trace(), 1.0 / 9.0, 1e-14));

        let ks = KrausSet::new(vec![
            ComplexMatrix::identity(2).scale_real(0.5f64.sqrt()),
            pauli_z().scale_real(0.5f64.sqrt()),
        ])
        .unwrap();
        let plus = DensityMatrix::from_pure(&PureState::product(&[SingleQubitState::Plus]));
        let out = apply_channel(&choi_of_kraus(&ks), &plus).unwrap();
        assert!(out.matrix().max_abs_diff(&ComplexMatrix::identity(2).scale_real(0.5)) < 1e-15);

        assert!(apply_channel(&chi, &plus).is_err());
    }

    #[test]
    fn process_fidelity_examples() {
        let ccz = cnz_unitary(3).unwrap();
        let chi = choi_of_unitary(&ccz).unwrap();
        assert!(close(process_fidelity(&chi, &ccz).unwrap(), 1.0, 1e-14));
        for v in vm_unitaries(&ccz).unwrap().iter().skip(1) {
            let f = process_fidelity(&choi_of_unitary(v).unwrap(), &ccz).unwrap();
            assert!(f.abs() < 1e-14);
        }
        let f_id = process_fidelity(&chi, &ComplexMatrix::identity(8)).unwrap();
        assert!(close(f_id, 0.5625, 1e-14));
    }

    #[test]
    fn identity_fidelity_examples() {
        assert_eq!(identity_fidelity(1), 0.0);
        assert_eq!(identity_fidelity(3), 0.5625);
        let values: Vec<f64> = (2..40).map(identity_fidelity).collect();
        assert!(values.windows(2).all(|w| w[1] > w[0]));
        assert!(close(identity_fidelity(40), 1.0, 1e-10));
    }

    #[test]
    fn sigma_m_examples() {
        assert_eq!(sigma_m(1, 1).unwrap(), pauli_z());
        assert!(sigma_m(3, 0).is_err() && sigma_m(3, 4).is_err());
        let s2 = sigma_m(3, 2).unwrap();
        assert!(s2.is_diagonal(0.0) && s2.is_unitary(0.0));
        use SingleQubitState::*;
        let plus = PureState::product(&[Zero, Plus, One]);
        let minus = PureState::product(&[Zero, Minus, One]);
        assert!(plus.evolve(&s2).unwrap().projector_distance(&minus) < 1e-15);
        // unchanged up to sign when qubit 2 is in the computational basis
        let probe = PureState::product(&[Plus, One, Zero]);
        let flipped = probe.evolve(&s2).unwrap();
        assert!(flipped.projector_distance(&probe) < 1e-15);
        assert!(close(flipped.inner(&probe).re, -1.0, 1e-15));
    }

    #[test]
    fn depolarizing_with_zero_strength_is_identity_map() {
        let chi = choi_of_unitary(&cnz_unitary(2).unwrap()).unwrap();
        let out = depolarizing(&chi, 0.0).unwrap();
        assert_eq!(out.matrix(), chi.matrix());
        let full = depolarizing(&chi, 1.0).unwrap();
        let expected = ComplexMatrix::identity(16).scale_real(0.25);
        assert!(full.matrix().max_abs_diff(&expected) < 1e-15);
        assert!(depolarizing(&chi, 1.5).is_err());
    }

    #[test]
    fn uniform_phase_flip_mixture_has_quarter_fidelity() {
        let ccz = cnz_unitary(3).unwrap();
        let chi = phase_flip_mixture(&ccz, &[0.25; 4]).unwrap();
        assert!(close(process_fidelity(&chi, &ccz).unwrap(), 0.25, 1e-14));
        assert!(phase_flip_mixture(&ccz, &[0.5; 4]).is_err());
        assert!(phase_flip_mixture(&ccz, &[1.0 / 3.0; 3]).is_err());
    }

    #[test]
    fn coherent_superposition_stays_trace_nonincreasing() {
        let ccz = cnz_unitary(3).unwrap();
        let h = FRAC_1_SQRT_2;
        let chi = coherent_vm_superposition(&ccz, &[r(h), r(h), ZERO, ZERO]).unwrap();
        let marginal = chi.input_marginal();
        assert!(marginal.eigvalsh().unwrap().iter().all(|&p| p <= 1.0 + 1e-12));
        assert!(coherent_vm_superposition(&ccz, &[ONE, ONE, ZERO, ZERO]).is_err());
    }

    #[test]
    fn state_dependent_loss_changes_success_probabilities() {
        let ccz = cnz_unitary(3).unwrap();
        let chi = choi_of_unitary(&ccz).unwrap();
        let mut t = vec![1.0; 8];
        t[7] = 0.5;
        let lossy = state_dependent_loss(&chi, &t).unwrap();
        let p: Vec<f64> = (0..8)
            .map(|j| {
                let rho = DensityMatrix::from_pure(&PureState::basis(3, j).unwrap());
                apply_channel(&lossy, &rho).unwrap().trace()
            })
            .collect();
        assert!(p[..7].iter().all(|&x| close(x, 1.0, 1e-14)));
        assert!(close(p[7], 0.5, 1e-14));
        assert!(state_dependent_loss(&chi, &[1.2; 8]).is_err());
        assert!(state_dependent_loss(&chi, &[0.0; 8]).is_err());
    }

    #[test]
    fn json_round_trip_is_bit_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let chi = random::random_channel(2, 3, &mut rng);
        let back = ChoiMatrix::from_json(&chi.to_json().unwrap()).unwrap();
        assert_eq!(back.matrix().as_slice(), chi.matrix().as_slice());

        let rho = random::random_density(4, &mut rng);
        let back = DensityMatrix::from_json(&rho.to_json().unwrap()).unwrap();
        assert_eq!(back.matrix().as_slice(), rho.matrix().as_slice());

        let json = chi.to_json().unwrap();
        assert!(json.contains("\"convention\":\"unnormalized-phi-plus\""));
        assert!(DensityMatrix::from_json(&json).is_err());
    }

    #[test]
    fn choi_validation_rejects_unphysical_input() {
        let bad = ComplexMatrix::from_real_diag(&[1.0, -0.5, 0.0, 0.0]);
        assert!(ChoiMatrix::new(bad).is_err());
        let too_big = ComplexMatrix::identity(4).scale_real(0.75);
        assert!(ChoiMatrix::new(too_big).is_err());
        assert!(ChoiMatrix::new(ComplexMatrix::identity(8)).is_err());
    }

    #[test]
    fn product_state_schmidt_weights() {
        use SingleQubitState::*;
        let prod = PureState::product(&[Plus, Zero, MinusI]);
        for m in 1..=3 {
            assert!(close(prod.largest_schmidt_weight(m), 1.0, 1e-14));
        }
        let ghz = PureState::ghz(3);
        for m in 1..=3 {
            assert!(close(ghz.largest_schmidt_weight(m), 0.5, 1e-14));
        }
    }

    #[test]
    fn input_conjugation_composes_unitaries() {
        let u = cnz_unitary(3).unwrap();
        let w = sigma_m(3, 2).unwrap();
        let chi = conjugate_input(&choi_of_unitary(&u).unwrap(), &w).unwrap();
        let direct = choi_of_unitary(&(&u * &w)).unwrap();
        assert!(chi.matrix().max_abs_diff(direct.matrix()) < 1e-14);
        let h = on_qubit(3, 1, &hadamard()).unwrap();
        let chi = conjugate_input(&choi_of_unitary(&u).unwrap(), &h).unwrap();
        let direct = choi_of_unitary(&(&u * &h)).unwrap();
        assert!(chi.matrix().max_abs_diff(direct.matrix()) < 1e-14);
    }
}
