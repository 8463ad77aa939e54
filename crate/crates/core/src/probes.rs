//! Product probe bases, the `R_k`, `R` and `R'` operators, fidelity bounds
//! and the numerical checks behind them.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::channels::{
    choi_of_unitary, pauli_x, pauli_z, process_fidelity, vm_unitaries, ChoiMatrix, PureState,
    SingleQubitState,
};
use crate::error::{Error, Result};
use crate::qmath::{self, r, ComplexMatrix, C64, ONE, ZERO};

/// Threshold for positive-semidefiniteness checks, relative to the matrix
/// max-norm.
pub const PSD_TOL: f64 = 1e-9;

/// Success probabilities at or below this are treated as zero.
pub const ZERO_PROBABILITY: f64 = 1e-14;

/// Which product basis a [`ProbeBasis`] holds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BasisKind {
    /// Hadamard basis on qubit `k`, computational elsewhere.
    Hadamard(usize),
    /// `H^{(x)n}` applied to `Hadamard(k)`: computational on qubit `k`,
    /// Hadamard elsewhere. `Conjugate(n)` is the primed basis.
    Conjugate(usize),
    /// `H^{(x)n}` applied to the computational basis.
    FullHadamard,
}

impl fmt::Display for BasisKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BasisKind::Hadamard(k) => write!(f, "{k}"),
            BasisKind::Conjugate(k) => write!(f, "{k}'"),
            BasisKind::FullHadamard => write!(f, "H"),
        }
    }
}

impl std::str::FromStr for BasisKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidArgument(format!("unknown basis label {s:?}"));
        if s == "H" {
            return Ok(BasisKind::FullHadamard);
        }
        let (digits, primed) = match s.strip_suffix('\'') {
            Some(d) => (d, true),
            None => (s, false),
        };
        let k: usize = digits.parse().map_err(|_| bad())?;
        Ok(if primed {
            BasisKind::Conjugate(k)
        } else {
            BasisKind::Hadamard(k)
        })
    }
}

/// An ordered orthonormal product basis of `2^n` probe states.
///
/// State `j` (0-based) takes the binary digits of `j` for qubits 1..n,
/// most significant first; on Hadamard qubits digit 0 means `|+>` and 1
/// means `|->`.
#[derive(Clone, Debug)]
pub struct ProbeBasis {
    n_qubits: usize,
    kind: BasisKind,
    labels: Vec<Vec<SingleQubitState>>,
    states: Vec<PureState>,
}

impl ProbeBasis {
    pub fn new(n: usize, kind: BasisKind) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("a probe basis needs n >= 1".into()));
        }
        let hadamard_on: Vec<bool> = match kind {
            BasisKind::Hadamard(k) | BasisKind::Conjugate(k) if k == 0 || k > n => {
                return Err(Error::InvalidArgument(format!("basis index {k} not in 1..={n}")))
            }
            BasisKind::Hadamard(k) => (1..=n).map(|q| q == k).collect(),
            BasisKind::Conjugate(k) => (1..=n).map(|q| q != k).collect(),
            BasisKind::FullHadamard => vec![true; n],
        };
        let d = 1usize << n;
        let labels: Vec<Vec<SingleQubitState>> = (0..d)
            .map(|j| {
                (0..n)
                    .map(|q| {
                        let bit = (j >> (n - 1 - q)) & 1;
                        match (hadamard_on[q], bit) {
                            (false, 0) => SingleQubitState::Zero,
                            (false, _) => SingleQubitState::One,
                            (true, 0) => SingleQubitState::Plus,
                            (true, _) => SingleQubitState::Minus,
                        }
                    })
                    .collect()
            })
            .collect();
        let states = labels.iter().map(|l| PureState::product(l)).collect();
        Ok(Self {
            n_qubits: n,
            kind,
            labels,
            states,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn kind(&self) -> BasisKind {
        self.kind
    }

    pub fn label(&self) -> String {
        self.kind.to_string()
    }

    pub fn states(&self) -> &[PureState] {
        &self.states
    }

    pub fn state(&self, j: usize) -> &PureState {
        &self.states[j]
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Per-qubit factors of state `j`.
    pub fn factors(&self, j: usize) -> &[SingleQubitState] {
        &self.labels[j]
    }

    /// Text label of state `j`, e.g. `+00`.
    pub fn state_label(&self, j: usize) -> String {
        crate::channels::product_label(&self.labels[j])
    }

    /// Largest deviation of the Gram matrix from the identity.
    pub fn gram_deviation(&self) -> f64 {
        let mut dev: f64 = 0.0;
        for (a, sa) in self.states.iter().enumerate() {
            for (b, sb) in self.states.iter().enumerate() {
                let target = if a == b { ONE } else { ZERO };
                dev = dev.max((sa.inner(sb) - target).norm());
            }
        }
        dev
    }
}

/// Basis `k` (1-based): Hadamard basis on qubit `k`.
pub fn probe_basis(n: usize, k: usize) -> Result<ProbeBasis> {
    ProbeBasis::new(n, BasisKind::Hadamard(k))
}

/// The primed basis: `H^{(x)n}` applied to basis `n`. For three qubits its
/// states are `|++0>, |++1>, |+-0>, ...`.
pub fn probe_basis_all_hadamard(n: usize) -> Result<ProbeBasis> {
    ProbeBasis::new(n, BasisKind::Conjugate(n))
}

/// `H^{(x)n}` applied to the computational basis.
pub fn probe_basis_full_hadamard(n: usize) -> Result<ProbeBasis> {
    ProbeBasis::new(n, BasisKind::FullHadamard)
}

/// The `n` partially conjugate bases `1..=n`.
pub fn standard_bases(n: usize) -> Result<Vec<ProbeBasis>> {
    (1..=n).map(|k| probe_basis(n, k)).collect()
}

fn check_unitary(u: &ComplexMatrix) -> Result<usize> {
    let n = u.qubit_count()?;
    let dev = u.unitarity_deviation();
    if dev > 1e-10 {
        return Err(Error::NotUnitary(dev));
    }
    Ok(n)
}

fn check_basis(u: &ComplexMatrix, basis: &ProbeBasis) -> Result<usize> {
    let n = check_unitary(u)?;
    if basis.n_qubits() != n {
        return Err(Error::DimensionMismatch(format!(
            "{}-qubit basis for a {n}-qubit gate",
            basis.n_qubits()
        )));
    }
    Ok(n)
}

/// `|psi*> (x) U|psi>`, the vector whose projector is `psi^T (x) U psi U^dagger`.
fn probe_vector(u: &ComplexMatrix, psi: &PureState) -> Vec<C64> {
    let conj: Vec<C64> = psi.amplitudes().iter().map(|z| z.conj()).collect();
    qmath::kron_vec(&conj, &u.apply(psi.amplitudes()))
}

/// `R_k = sum_j psi_j^T (x) U psi_j U^dagger`.
pub fn r_k_operator(u: &ComplexMatrix, basis: &ProbeBasis) -> Result<ComplexMatrix> {
    let n = check_basis(u, basis)?;
    let d = 1usize << n;
    let mut out = ComplexMatrix::zeros(d * d, d * d);
    for psi in basis.states() {
        let v = probe_vector(u, psi);
        out.add_outer(ONE, &v, &v);
    }
    Ok(out)
}

/// What to do with probes that are never transmitted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum ZeroProbabilityMode {
    /// Drop them from the weighted mean; they carry zero weight anyway.
    #[default]
    Drop,
    /// Fail with [`Error::ZeroSuccessProbability`].
    Strict,
}

/// Weighted average output fidelity over one probe basis.
#[derive(Clone, Debug, PartialEq)]
pub struct BasisFidelity {
    pub basis: BasisKind,
    /// `F_k = sum p f / sum p`
    pub fidelity: f64,
    /// Output fidelity per probe; `None` where the success probability is zero.
    pub state_fidelities: Vec<Option<f64>>,
    /// Success probability per probe.
    pub success_probabilities: Vec<f64>,
}

impl BasisFidelity {
    /// Unweighted mean of the defined state fidelities.
    pub fn unweighted_mean(&self) -> f64 {
        let defined: Vec<f64> = self.state_fidelities.iter().flatten().copied().collect();
        defined.iter().sum::<f64>() / defined.len() as f64
    }
}

/// Success probabilities `p_j` and output fidelities `f_j` of every probe,
/// and their weighted mean.
pub fn average_state_fidelity(
    chi: &ChoiMatrix,
    u: &ComplexMatrix,
    basis: &ProbeBasis,
    mode: ZeroProbabilityMode,
) -> Result<BasisFidelity> {
    let n = check_basis(u, basis)?;
    if chi.n_qubits() != n {
        return Err(Error::DimensionMismatch(format!(
            "{}-qubit channel for a {n}-qubit gate",
            chi.n_qubits()
        )));
    }
    if chi.trace() <= 0.0 {
        return Err(Error::InvalidChannel("Choi matrix has zero trace".into()));
    }
    let marginal = chi.input_marginal();
    let mut fs = Vec::with_capacity(basis.len());
    let mut ps = Vec::with_capacity(basis.len());
    let (mut num, mut den) = (0.0, 0.0);
    for (j, psi) in basis.states().iter().enumerate() {
        let conj: Vec<C64> = psi.amplitudes().iter().map(|z| z.conj()).collect();
        let p = marginal.sandwich(&conj, &conj).re.max(0.0);
        ps.push(p);
        if p <= ZERO_PROBABILITY {
            if mode == ZeroProbabilityMode::Strict {
                return Err(Error::ZeroSuccessProbability {
                    basis: basis.label(),
                    j: j + 1,
                });
            }
            fs.push(None);
            continue;
        }
        let v = probe_vector(u, psi);
        let overlap = chi.matrix().sandwich(&v, &v).re;
        fs.push(Some((overlap / p).clamp(0.0, 1.0)));
        num += overlap;
        den += p;
    }
    if den <= 0.0 {
        return Err(Error::ZeroSuccessProbability {
            basis: basis.label(),
            j: 0,
        });
    }
    Ok(BasisFidelity {
        basis: basis.kind(),
        fidelity: num / den,
        state_fidelities: fs,
        success_probabilities: ps,
    })
}

/// `sum_k F_k - n + 1` with `n = F.len()`. May be negative.
pub fn lower_bound_nqubit(fidelities: &[f64]) -> f64 {
    fidelities.iter().sum::<f64>() - fidelities.len() as f64 + 1.0
}

/// `F_a + F_b - 1` for two mutually conjugate bases.
pub fn hofmann_bound(f_a: f64, f_b: f64) -> f64 {
    f_a + f_b - 1.0
}

/// `min F`, an upper bound on the process fidelity.
pub fn upper_bound(fidelities: &[f64]) -> Result<f64> {
    fidelities
        .iter()
        .copied()
        .reduce(f64::min)
        .ok_or_else(|| Error::InvalidArgument("upper bound of an empty list".into()))
}

/// The Hofmann bound from a specific basis pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HofmannEntry {
    pub pair: [String; 2],
    pub value: f64,
}

/// Every bound derivable from the measured basis fidelities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub n: usize,
    /// `F_1..F_n`
    #[serde(rename = "F")]
    pub fidelities: Vec<f64>,
    pub lower_bound: f64,
    pub upper_bound: f64,
    pub hofmann: Option<HofmannEntry>,
    pub exact: Option<f64>,
}

impl BoundReport {
    /// Bounds from measured values. `conjugate` is `F_{n'}`; when present it
    /// enters the upper bound and pairs with `F_n` for the Hofmann bound.
    pub fn from_fidelities(
        fidelities: &[f64],
        conjugate: Option<f64>,
        exact: Option<f64>,
    ) -> Result<Self> {
        let n = fidelities.len();
        if n == 0 {
            return Err(Error::InvalidArgument("no basis fidelities".into()));
        }
        if let Some(bad) = fidelities
            .iter()
            .chain(conjugate.iter())
            .find(|f| !(0.0..=1.0).contains(*f))
        {
            return Err(Error::InvalidArgument(format!("fidelity {bad} outside [0, 1]")));
        }
        let mut all = fidelities.to_vec();
        all.extend(conjugate);
        let hofmann = conjugate.map(|fc| HofmannEntry {
            pair: [n.to_string(), format!("{n}'")],
            value: hofmann_bound(fidelities[n - 1], fc),
        });
        Ok(Self {
            n,
            fidelities: fidelities.to_vec(),
            lower_bound: lower_bound_nqubit(fidelities),
            upper_bound: upper_bound(&all)?,
            hofmann,
            exact,
        })
    }

    /// Computes every basis fidelity of a known channel, plus the exact
    /// process fidelity.
    pub fn from_channel(chi: &ChoiMatrix, u: &ComplexMatrix, with_conjugate: bool) -> Result<Self> {
        let n = chi.n_qubits();
        let fs = standard_bases(n)?
            .iter()
            .map(|b| average_state_fidelity(chi, u, b, ZeroProbabilityMode::Drop).map(|x| x.fidelity))
            .collect::<Result<Vec<_>>>()?;
        let conj = if with_conjugate {
            let b = probe_basis_all_hadamard(n)?;
            Some(average_state_fidelity(chi, u, &b, ZeroProbabilityMode::Drop)?.fidelity)
        } else {
            None
        };
        let exact = process_fidelity(chi, u)?;
        // rounding can push values a hair outside [0, 1]
        let clamp = |x: f64| x.clamp(0.0, 1.0);
        let fs: Vec<f64> = fs.into_iter().map(clamp).collect();
        Self::from_fidelities(&fs, conj.map(clamp), Some(exact))
    }

    /// [`from_channel`](Self::from_channel) for a unitary channel `V`,
    /// using state overlaps `|<U psi|V psi>|^2` and `|Tr U^dagger V|^2 / 4^n`
    /// instead of Choi-matrix contractions.
    pub fn from_unitary(v: &ComplexMatrix, u: &ComplexMatrix, with_conjugate: bool) -> Result<Self> {
        let n = check_unitary(u)?;
        if check_unitary(v)? != n {
            return Err(Error::DimensionMismatch("gate and target sizes differ".into()));
        }
        let d = 1usize << n;
        let basis_fidelity = |b: &ProbeBasis| -> f64 {
            let sum: f64 = b
                .states()
                .iter()
                .map(|psi| qmath::inner(&u.apply(psi.amplitudes()), &v.apply(psi.amplitudes())).norm_sqr())
                .sum();
            (sum / d as f64).clamp(0.0, 1.0)
        };
        let fs: Vec<f64> = standard_bases(n)?.iter().map(basis_fidelity).collect();
        let conj = if with_conjugate {
            Some(basis_fidelity(&probe_basis_all_hadamard(n)?))
        } else {
            None
        };
        let exact = (&u.dagger() * v).trace().norm_sqr() / (d * d) as f64;
        Self::from_fidelities(&fs, conj, Some(exact))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// `R = chi_U / 2^n - sum_k R_k + (n-1) I`.
pub fn r_operator(u: &ComplexMatrix) -> Result<ComplexMatrix> {
    let n = check_unitary(u)?;
    let d = 1usize << n;
    let chi_u = choi_of_unitary(u)?;
    let mut out = chi_u.matrix().scale_real(1.0 / d as f64);
    out.add_scaled(r((n - 1) as f64), &ComplexMatrix::identity(d * d));
    for b in standard_bases(n)? {
        out.add_scaled(-ONE, &r_k_operator(u, &b)?);
    }
    Ok(out)
}

/// `R' = chi_U / 2^n - R_n - R_{n'} + I`.
pub fn r_prime_operator(u: &ComplexMatrix) -> Result<ComplexMatrix> {
    let n = check_unitary(u)?;
    let d = 1usize << n;
    let chi_u = choi_of_unitary(u)?;
    let mut out = chi_u.matrix().scale_real(1.0 / d as f64);
    out.add_scaled(ONE, &ComplexMatrix::identity(d * d));
    out.add_scaled(-ONE, &r_k_operator(u, &probe_basis(n, n)?)?);
    out.add_scaled(-ONE, &r_k_operator(u, &probe_basis_all_hadamard(n)?)?);
    Ok(out)
}

/// Minimum eigenvalue of `R_k - chi_U / 2^n` without forming either
/// operator. `R_k` projects onto the orthonormal probe vectors `w_j` and
/// `chi_U / 2^n = |v><v|` with `|v| = 1`, so the difference acts
/// nontrivially only on the span of the `w_j` and the part of `v` outside
/// it. In that basis it is `diag(1, ..., 1, 0) - x x^dagger` with
/// `x = (<w_j|v>, |v - P v|)`.
pub fn r_k_excess_min_eigenvalue(u: &ComplexMatrix, basis: &ProbeBasis) -> Result<f64> {
    let n = check_basis(u, basis)?;
    let d = 1usize << n;
    let scale = 1.0 / (d as f64).sqrt();
    let v: Vec<C64> = (0..d * d).map(|idx| u[(idx % d, idx / d)] * scale).collect();
    let ws: Vec<Vec<C64>> = basis.states().iter().map(|psi| probe_vector(u, psi)).collect();
    let mut x: Vec<C64> = ws.iter().map(|w| qmath::inner(w, &v)).collect();
    let mut residual = v.clone();
    for (w, &cj) in ws.iter().zip(&x) {
        for (rv, wv) in residual.iter_mut().zip(w) {
            *rv -= cj * wv;
        }
    }
    x.push(r(qmath::norm(&residual)));
    let mut m = ComplexMatrix::identity(d + 1);
    m[(d, d)] = ZERO;
    m.add_outer(-ONE, &x, &x);
    m.min_eigenvalue()
}

/// Minimum eigenvalue divided by `max(1, max|A_ij|)`.
pub fn scaled_min_eigenvalue(a: &ComplexMatrix) -> Result<f64> {
    Ok(a.min_eigenvalue()? / a.max_abs().max(1.0))
}

/// True when the scaled minimum eigenvalue is at least `-tol`.
pub fn is_psd(a: &ComplexMatrix, tol: f64) -> Result<bool> {
    Ok(scaled_min_eigenvalue(a)? >= -tol)
}

/// The four two-qubit Bell states.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Bell {
    PhiPlus,
    PhiMinus,
    PsiPlus,
    PsiMinus,
}

impl Bell {
    pub const ALL: [Bell; 4] = [Bell::PhiPlus, Bell::PhiMinus, Bell::PsiPlus, Bell::PsiMinus];

    /// Amplitudes on `|00>, |01>, |10>, |11>`.
    pub fn amplitudes(self) -> [C64; 4] {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        match self {
            Bell::PhiPlus => [r(h), ZERO, ZERO, r(h)],
            Bell::PhiMinus => [r(h), ZERO, ZERO, r(-h)],
            Bell::PsiPlus => [ZERO, r(h), r(h), ZERO],
            Bell::PsiMinus => [ZERO, r(h), r(-h), ZERO],
        }
    }
}

/// Eigenvalue of `T~` on a tensor product of Bell states, read off term by
/// term: every string gets `n - 1`, the all-`Phi+` string gets one more, and
/// each `k` whose pair lies in `{Phi+, Psi+}` while all other pairs lie in
/// `{Phi+, Phi-}` subtracts one.
pub fn t_tilde_eigenvalue(labels: &[Bell]) -> i64 {
    let n = labels.len() as i64;
    let mut value = n - 1;
    if labels.iter().all(|&b| b == Bell::PhiPlus) {
        value += 1;
    }
    for k in 0..labels.len() {
        let hit = matches!(labels[k], Bell::PhiPlus | Bell::PsiPlus)
            && labels
                .iter()
                .enumerate()
                .all(|(l, &b)| l == k || matches!(b, Bell::PhiPlus | Bell::PhiMinus));
        if hit {
            value -= 1;
        }
    }
    value
}

fn bell_strings(n: usize) -> impl Iterator<Item = Vec<Bell>> {
    (0..1usize << (2 * n)).map(move |code| {
        (0..n)
            .map(|l| Bell::ALL[(code >> (2 * (n - 1 - l))) & 3])
            .collect()
    })
}

/// `B^dagger M B` for the Bell-string basis `B`, one two-qubit slot at a
/// time. Row and column `s` of the result belong to the `s`-th string of
/// `bell_strings`.
fn bell_frame(m: &ComplexMatrix, n: usize) -> ComplexMatrix {
    let dim = m.rows();
    let b4: Vec<[C64; 4]> = Bell::ALL.iter().map(|b| b.amplitudes()).collect();
    let mut out = m.clone();
    for l in 0..n {
        let shift = 2 * (n - 1 - l);
        let bases: Vec<usize> = (0..dim).filter(|i| (i >> shift) & 3 == 0).collect();
        for &base in &bases {
            let idx: [usize; 4] = std::array::from_fn(|p| base + (p << shift));
            for c in 0..dim {
                let v: [C64; 4] = std::array::from_fn(|p| out[(idx[p], c)]);
                for (s, bs) in b4.iter().enumerate() {
                    out[(idx[s], c)] = (0..4).map(|p| bs[p].conj() * v[p]).sum();
                }
            }
            for row in 0..dim {
                let v: [C64; 4] = std::array::from_fn(|p| out[(row, idx[p])]);
                for (s, bs) in b4.iter().enumerate() {
                    out[(row, idx[s])] = (0..4).map(|p| v[p] * bs[p]).sum();
                }
            }
        }
    }
    out
}

/// Eigenvalue -> multiplicity.
pub type Spectrum = BTreeMap<i64, usize>;

/// Analytic spectrum of `T~` by enumerating all `4^n` Bell strings.
pub fn t_tilde_spectrum_analytic(n: usize) -> Spectrum {
    let mut spec = Spectrum::new();
    for s in bell_strings(n) {
        *spec.entry(t_tilde_eigenvalue(&s)).or_insert(0) += 1;
    }
    spec
}

/// `T = (n-1) I + Phi_N+/2^n - sum_k sum_j psi_{j,k}^T (x) psi_{j,k}`.
pub fn t_operator(n: usize) -> Result<ComplexMatrix> {
    let d = 1usize << n;
    let mut t = ComplexMatrix::identity(d * d).scale_real((n - 1) as f64);
    let phi = PureState::phi_plus(n);
    t.add_outer(ONE, phi.amplitudes(), phi.amplitudes());
    for b in standard_bases(n)? {
        for psi in b.states() {
            let v = probe_vector(&ComplexMatrix::identity(d), psi);
            t.add_outer(-ONE, &v, &v);
        }
    }
    Ok(t)
}

/// Index map of `W`, which interleaves input and output qubits:
/// `|j_1..j_n>|k_1..k_n> -> |j_1 k_1>...|j_n k_n>`.
pub fn interleave_map(n: usize) -> Vec<usize> {
    let d = 1usize << n;
    (0..d * d)
        .map(|idx| {
            let (inp, out) = (idx / d, idx % d);
            let mut target = 0usize;
            for l in 0..n {
                let jb = (inp >> (n - 1 - l)) & 1;
                let kb = (out >> (n - 1 - l)) & 1;
                target = (target << 2) | (jb << 1) | kb;
            }
            target
        })
        .collect()
}

/// Both spectra of `T~ = W T W^dagger`, with a consistency report.
#[derive(Clone, Debug)]
pub struct TSpectrumReport {
    pub n: usize,
    pub analytic: Spectrum,
    pub numeric: Spectrum,
    /// Largest `|T~ B - lambda B|` over all Bell-string vectors `B`.
    pub bell_residual: f64,
    /// Largest distance of a numeric eigenvalue from its rounded integer.
    pub rounding_residual: f64,
}

impl TSpectrumReport {
    pub fn agree(&self) -> bool {
        self.analytic == self.numeric
    }

    pub fn min_eigenvalue(&self) -> i64 {
        *self.analytic.keys().next().expect("nonempty spectrum")
    }
}

/// Largest `n` for which the dense numeric path is attempted.
pub const T_TILDE_NUMERIC_MAX_N: usize = 6;

/// Computes the `T~` spectrum analytically and by dense diagonalization.
pub fn t_tilde_spectrum(n: usize) -> Result<TSpectrumReport> {
    if !(2..=T_TILDE_NUMERIC_MAX_N).contains(&n) {
        return Err(Error::InvalidArgument(format!(
            "numeric spectrum supports 2 <= n <= {T_TILDE_NUMERIC_MAX_N}, got {n}"
        )));
    }
    let analytic = t_tilde_spectrum_analytic(n);
    let t_tilde = t_operator(n)?.conjugate_by_permutation(&interleave_map(n))?;

    // B^dagger T~ B should be diagonal with the analytic eigenvalues
    let in_bell = bell_frame(&t_tilde, n);
    let mut bell_residual: f64 = 0.0;
    for (i, s) in bell_strings(n).enumerate() {
        let lambda = t_tilde_eigenvalue(&s) as f64;
        for j in 0..in_bell.cols() {
            let target = if i == j { r(lambda) } else { ZERO };
            bell_residual = bell_residual.max((in_bell[(i, j)] - target).norm());
        }
    }

    let mut numeric = Spectrum::new();
    let mut rounding_residual: f64 = 0.0;
    for x in t_tilde.eigvalsh()? {
        let k = x.round();
        rounding_residual = rounding_residual.max((x - k).abs());
        *numeric.entry(k as i64).or_insert(0) += 1;
    }
    if rounding_residual > 1e-8 {
        return Err(Error::Certification(format!(
            "numeric eigenvalue off an integer by {rounding_residual:e}"
        )));
    }
    Ok(TSpectrumReport {
        n,
        analytic,
        numeric,
        bell_residual,
        rounding_residual,
    })
}

/// A named member of the family on which the lower bound is tight.
#[derive(Clone, Debug)]
pub struct TightnessState {
    pub label: String,
    pub unitary: ComplexMatrix,
}

impl TightnessState {
    pub fn choi(&self) -> ChoiMatrix {
        choi_of_unitary(&self.unitary).expect("tightness states are unitary")
    }
}

/// `V_0 = U`, `V_m = U Sigma_m`, and for two qubits also `U P` with
/// `P` in `{X(x)I, I(x)X, X(x)Z, Z(x)X}`.
pub fn tightness_states(u: &ComplexMatrix) -> Result<Vec<TightnessState>> {
    let n = check_unitary(u)?;
    let mut out = Vec::new();
    for (m, v) in vm_unitaries(u)?.into_iter().enumerate() {
        out.push(TightnessState {
            label: format!("V{m}"),
            unitary: v,
        });
    }
    if n == 2 {
        let (x, z, i) = (pauli_x(), pauli_z(), ComplexMatrix::identity(2));
        let extras = [
            ("U(X.I)", x.kron(&i)),
            ("U(I.X)", i.kron(&x)),
            ("U(X.Z)", x.kron(&z)),
            ("U(Z.X)", z.kron(&x)),
        ];
        for (label, p) in extras {
            let v = u * &p;
            out.push(TightnessState {
                label: label.to_string(),
                unitary: v,
            });
        }
    }
    Ok(out)
}

/// `F_chi - (sum F_k - n + 1)` and its cap `(n-1)(1-F_chi)`. Fails if the
/// gap leaves `[-1e-9, cap + 1e-9]`.
pub fn infidelity_gap_check(chi: &ChoiMatrix, u: &ComplexMatrix) -> Result<(f64, f64)> {
    let report = BoundReport::from_channel(chi, u, false)?;
    let f = report.exact.expect("exact fidelity is set for channels");
    let gap = f - report.lower_bound;
    let cap = (report.n as f64 - 1.0) * (1.0 - f);
    if gap < -PSD_TOL || gap > cap + PSD_TOL {
        return Err(Error::Certification(format!(
            "fidelity gap {gap} outside [0, {cap}]"
        )));
    }
    Ok((gap, cap))
}

/// Unitary and diagonal within 1e-10.
pub fn is_diagonal_unitary(u: &ComplexMatrix) -> bool {
    u.is_square() && u.is_unitary(1e-10) && u.is_diagonal(1e-10)
}

/// Whether every `U|psi_j>` is a product state (largest Schmidt weight 1
/// across each single-qubit cut).
pub fn product_output_check(u: &ComplexMatrix, basis: &ProbeBasis) -> Result<bool> {
    let n = check_basis(u, basis)?;
    for psi in basis.states() {
        let out = psi.evolve(u)?;
        if (1..=n).any(|m| out.largest_schmidt_weight(m) < 1.0 - 1e-10) {
            return Ok(false);
        }
    }
    Ok(true)
}

/// A lossy three-qubit channel on which the unweighted mean of the state
/// fidelities overestimates: `0.9 chi_CCZ + 0.1 chi_{U Sigma_1}` behind an
/// input filter passing `|000>` fully and every other basis state with
/// intensity 0.1. Returns the channel and its target.
pub fn anti_overestimate_fixture() -> Result<(ChoiMatrix, ComplexMatrix)> {
    let u = crate::channels::cnz_unitary(3)?;
    let base = crate::channels::phase_flip_mixture(&u, &[0.9, 0.1, 0.0, 0.0])?;
    let mut t = vec![0.1; 8];
    t[0] = 1.0;
    Ok((crate::channels::state_dependent_loss(&base, &t)?, u))
}
