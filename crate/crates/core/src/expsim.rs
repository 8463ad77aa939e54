//! Simulated experiments: coincidence tables, the count-based estimators,
//! truth tables, GHZ generation, state tomography and phase compensation.
//!
//! Floats in JSON and CSV output are written with 17 significant digits.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::channels::{
    apply_to_operator, cnz_unitary, ChoiMatrix, DensityMatrix, PureState, SingleQubitState,
};
use crate::error::{Error, Result};
use crate::probes::{
    probe_basis_all_hadamard, standard_bases, BasisKind, BoundReport, ProbeBasis,
};
use crate::qmath::{self, ComplexMatrix, C64, ONE, ZERO};

/// Serializers writing floats with 17 significant digits.
pub mod sig17 {
    use serde::{Serialize, Serializer};
    use serde_json::value::RawValue;

    fn raw(x: f64) -> Option<Box<RawValue>> {
        x.is_finite()
            .then(|| RawValue::from_string(format!("{x:.16e}")).expect("valid JSON number"))
    }

    pub fn format(x: f64) -> String {
        format!("{x:.16e}")
    }

    pub fn one<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        raw(*x).serialize(s)
    }

    pub fn opt<S: Serializer>(x: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        x.and_then(raw).serialize(s)
    }

    pub fn vec<S: Serializer>(xs: &[f64], s: S) -> Result<S::Ok, S::Error> {
        xs.iter().map(|&x| raw(x)).collect::<Vec<_>>().serialize(s)
    }

    pub fn opt_vec<S: Serializer>(xs: &[Option<f64>], s: S) -> Result<S::Ok, S::Error> {
        xs.iter()
            .map(|x| x.and_then(raw))
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn entries<S: Serializer>(xs: &[[f64; 2]], s: S) -> Result<S::Ok, S::Error> {
        xs.iter()
            .map(|[a, b]| [raw(*a), raw(*b)])
            .collect::<Vec<_>>()
            .serialize(s)
    }
}

/// Draws from a Poisson distribution: inversion below mean 30, the PTRS
/// transformed-rejection sampler above.
pub fn sample_poisson<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if !(mean > 0.0) {
        return 0;
    }
    if mean < 30.0 {
        let mut k = 0u64;
        let mut p = (-mean).exp();
        let mut cdf = p;
        let u: f64 = rng.random();
        while u > cdf && k < 1000 {
            k += 1;
            p *= mean / k as f64;
            cdf += p;
        }
        return k;
    }
    let slam = mean.sqrt();
    let loglam = mean.ln();
    let b = 0.931 + 2.53 * slam;
    let a = -0.059 + 0.02483 * b;
    let inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    let vr = 0.9277 - 3.6224 / (b - 2.0);
    loop {
        let u: f64 = rng.random::<f64>() - 0.5;
        let v: f64 = rng.random();
        let us = 0.5 - u.abs();
        let k = ((2.0 * a / us + b) * u + mean + 0.43).floor();
        if us >= 0.07 && v <= vr {
            return k as u64;
        }
        if k < 0.0 || (us < 0.013 && v > us) {
            continue;
        }
        let lhs = v.ln() + inv_alpha.ln() - (a / (us * us) + b).ln();
        let rhs = -mean + k * loglam - ln_gamma(k + 1.0);
        if lhs <= rhs {
            return k as u64;
        }
    }
}

/// How counts are produced.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CountMode {
    /// Independent Poisson draws per cell.
    #[default]
    Poisson,
    /// The expected counts themselves (infinite-statistics limit).
    Expectation,
}

/// Coincidences `C[j][j']` for input `j` and output projector `j'` in one
/// probe basis. Counts are integral in Poisson mode and may be fractional in
/// expectation mode.
#[derive(Clone, Debug, PartialEq)]
pub struct CoincidenceTable {
    pub n: usize,
    pub basis: BasisKind,
    pub counts: Vec<Vec<f64>>,
    /// Acquisition time per input, bookkeeping only.
    pub duration: f64,
}

#[derive(Serialize, Deserialize)]
struct CsvRow {
    j: usize,
    jprime: usize,
    count: String,
    k: String,
}

fn format_count(x: f64) -> String {
    if x.fract() == 0.0 && x.abs() < 1e15 {
        format!("{}", x as i64)
    } else {
        sig17::format(x)
    }
}

impl CoincidenceTable {
    pub fn dim(&self) -> usize {
        self.counts.len()
    }

    /// `S_j`
    pub fn row_totals(&self) -> Vec<f64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    /// `S`
    pub fn total(&self) -> f64 {
        self.row_totals().iter().sum()
    }

    /// Rows `j,jprime,count,k` with 1-based indices.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for (j, row) in self.counts.iter().enumerate() {
            for (jp, &c) in row.iter().enumerate() {
                w.serialize(CsvRow {
                    j: j + 1,
                    jprime: jp + 1,
                    count: format_count(c),
                    k: self.basis.to_string(),
                })
                .map_err(csv_error)?;
            }
        }
        let bytes = w.into_inner().map_err(|e| Error::InvalidArgument(e.to_string()))?;
        Ok(String::from_utf8(bytes).expect("CSV output is UTF-8"))
    }

    /// Parses the CSV written by [`to_csv`](Self::to_csv). Missing cells are
    /// zero.
    pub fn from_csv(text: &str) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let rows: Vec<CsvRow> = rdr
            .deserialize()
            .collect::<std::result::Result<_, _>>()
            .map_err(csv_error)?;
        let first = rows
            .first()
            .ok_or_else(|| Error::InvalidArgument("empty coincidence table".into()))?;
        let basis: BasisKind = first.k.parse()?;
        let d = rows.iter().map(|r| r.j.max(r.jprime)).max().unwrap_or(0);
        if d < 2 || !d.is_power_of_two() {
            return Err(Error::InvalidArgument(format!("table dimension {d} is not 2^n")));
        }
        let mut counts = vec![vec![0.0; d]; d];
        for row in &rows {
            if row.k != first.k {
                return Err(Error::InvalidArgument("table mixes probe bases".into()));
            }
            if row.j == 0 || row.jprime == 0 {
                return Err(Error::InvalidArgument("indices are 1-based".into()));
            }
            let c: f64 = row
                .count
                .parse()
                .map_err(|_| Error::InvalidArgument(format!("bad count {:?}", row.count)))?;
            if !(c >= 0.0) || !c.is_finite() {
                return Err(Error::InvalidArgument(format!("negative count {c}")));
            }
            counts[row.j - 1][row.jprime - 1] = c;
        }
        Ok(Self {
            n: d.trailing_zeros() as usize,
            basis,
            counts,
            duration: 1.0,
        })
    }
}

fn csv_error(e: csv::Error) -> Error {
    Error::InvalidArgument(format!("CSV: {e}"))
}

fn stream_of(kind: BasisKind) -> u64 {
    match kind {
        BasisKind::Hadamard(k) => k as u64,
        BasisKind::Conjugate(k) => 1000 + k as u64,
        BasisKind::FullHadamard => 2000,
    }
}

/// Output density operators (subnormalized) for every probe of a basis.
fn probe_outputs(chi: &ChoiMatrix, basis: &ProbeBasis) -> Result<Vec<ComplexMatrix>> {
    if chi.n_qubits() != basis.n_qubits() {
        return Err(Error::DimensionMismatch("channel and basis sizes differ".into()));
    }
    basis
        .states()
        .iter()
        .map(|psi| apply_to_operator(chi, &psi.projector()))
        .collect()
}

fn check_target(u: &ComplexMatrix, n: usize) -> Result<()> {
    if u.rows() != 1 << n || u.cols() != 1 << n {
        return Err(Error::DimensionMismatch("target has the wrong size".into()));
    }
    let dev = u.unitarity_deviation();
    if dev > 1e-10 {
        return Err(Error::NotUnitary(dev));
    }
    Ok(())
}

/// Coincidences for one probe basis, measured in the ideal output basis
/// `U|psi_j'>`. All inputs run for the same time, so the expected row total
/// is `mean_total p_j / sum p`.
pub fn simulate_counts(
    chi: &ChoiMatrix,
    u: &ComplexMatrix,
    basis: &ProbeBasis,
    mean_total: f64,
    seed: u64,
    mode: CountMode,
) -> Result<CoincidenceTable> {
    if !(mean_total > 0.0 && mean_total.is_finite()) {
        return Err(Error::InvalidArgument(format!("mean total {mean_total} must be positive")));
    }
    let n = basis.n_qubits();
    check_target(u, n)?;
    let outputs = probe_outputs(chi, basis)?;
    let ideal: Vec<Vec<C64>> = basis.states().iter().map(|s| u.apply(s.amplitudes())).collect();
    let ps: Vec<f64> = outputs.iter().map(|o| o.trace().re.max(0.0)).collect();
    let psum: f64 = ps.iter().sum();
    if psum <= 0.0 {
        return Err(Error::InvalidChannel("no probe is ever transmitted".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream_of(basis.kind()));
    let counts = outputs
        .iter()
        .zip(&ps)
        .map(|(rho, &p)| {
            let row_mean = mean_total * p / psum;
            ideal
                .iter()
                .map(|v| {
                    let q = if p > 0.0 { (rho.sandwich(v, v).re / p).max(0.0) } else { 0.0 };
                    match mode {
                        CountMode::Expectation => row_mean * q,
                        CountMode::Poisson => sample_poisson(row_mean * q, &mut rng) as f64,
                    }
                })
                .collect()
        })
        .collect();
    Ok(CoincidenceTable {
        n,
        basis: basis.kind(),
        counts,
        duration: 1.0,
    })
}

/// Count-based estimates for one basis.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EstimatedFidelities {
    #[serde(serialize_with = "serialize_kind")]
    pub basis: BasisKind,
    /// `F_k = sum_j C_jj / S`
    #[serde(rename = "F", serialize_with = "sig17::one")]
    pub fidelity: f64,
    /// `sqrt(F_k (1 - F_k) / S)`
    #[serde(serialize_with = "sig17::one")]
    pub sigma: f64,
    /// `f_j = C_jj / S_j`
    #[serde(rename = "f", serialize_with = "sig17::vec")]
    pub state_fidelities: Vec<f64>,
    /// `p_j = 2^n S_j / S`
    #[serde(rename = "p", serialize_with = "sig17::vec")]
    pub success_probabilities: Vec<f64>,
    #[serde(serialize_with = "sig17::one")]
    pub total: f64,
}

fn serialize_kind<S: serde::Serializer>(k: &BasisKind, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_str(&k.to_string())
}

impl EstimatedFidelities {
    /// `sum p f / sum p`; algebraically equal to `fidelity`.
    pub fn weighted_mean(&self) -> f64 {
        let num: f64 = self
            .state_fidelities
            .iter()
            .zip(&self.success_probabilities)
            .map(|(f, p)| f * p)
            .sum();
        num / self.success_probabilities.iter().sum::<f64>()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

/// The estimators `f_j = C_jj/S_j`, `p_j = 2^n S_j/S`, `F_k = sum C_jj / S`
/// and `sigma_k^2 = F_k (1 - F_k) / S`.
pub fn estimate_from_counts(table: &CoincidenceTable) -> Result<EstimatedFidelities> {
    let d = table.dim();
    if d == 0 || table.counts.iter().any(|r| r.len() != d) {
        return Err(Error::InvalidArgument("coincidence table is not square".into()));
    }
    let rows = table.row_totals();
    if let Some(j) = rows.iter().position(|&s| s <= 0.0) {
        return Err(Error::ZeroSuccessProbability {
            basis: table.basis.to_string(),
            j: j + 1,
        });
    }
    let total: f64 = rows.iter().sum();
    let diag: f64 = (0..d).map(|j| table.counts[j][j]).sum();
    let fidelity = (diag / total).clamp(0.0, 1.0);
    Ok(EstimatedFidelities {
        basis: table.basis,
        fidelity,
        sigma: (fidelity * (1.0 - fidelity) / total).max(0.0).sqrt(),
        state_fidelities: (0..d).map(|j| table.counts[j][j] / rows[j]).collect(),
        success_probabilities: rows.iter().map(|s| d as f64 * s / total).collect(),
        total,
    })
}

/// `sigma_k = sqrt(F_k (1 - F_k) / S_k)` for reported values.
pub fn binomial_sigma(fidelity: f64, total: f64) -> f64 {
    (fidelity * (1.0 - fidelity) / total).sqrt()
}

/// Lower bound `sum F_k - n + 1` and its standard deviation
/// `sqrt(sum sigma_k^2)` from reported fidelities and coincidence totals.
pub fn bound_with_uncertainty(fidelities: &[f64], totals: &[f64]) -> Result<(f64, f64)> {
    if fidelities.len() != totals.len() || fidelities.is_empty() {
        return Err(Error::InvalidArgument("one total per fidelity is required".into()));
    }
    if totals.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::InvalidArgument("totals must be positive".into()));
    }
    let var: f64 = fidelities
        .iter()
        .zip(totals)
        .map(|(&f, &s)| binomial_sigma(f, s).powi(2))
        .sum();
    Ok((crate::probes::lower_bound_nqubit(fidelities), var.sqrt()))
}

/// Result of running every probe basis through the simulator.
#[derive(Clone, Debug, Serialize)]
pub struct ProtocolReport {
    pub n: usize,
    pub mode: CountMode,
    pub seed: u64,
    #[serde(serialize_with = "sig17::one")]
    pub mean_total: f64,
    pub bases: Vec<EstimatedFidelities>,
    pub conjugate: Option<EstimatedFidelities>,
    #[serde(serialize_with = "sig17::one")]
    pub lower_bound: f64,
    #[serde(serialize_with = "sig17::one")]
    pub lower_bound_sigma: f64,
    #[serde(serialize_with = "sig17::one")]
    pub lower_bound_3sigma: f64,
    #[serde(serialize_with = "sig17::one")]
    pub upper_bound: f64,
    #[serde(serialize_with = "sig17::opt")]
    pub hofmann: Option<f64>,
    #[serde(serialize_with = "sig17::opt")]
    pub hofmann_sigma: Option<f64>,
    /// Process fidelity of the simulated channel.
    #[serde(serialize_with = "sig17::opt")]
    pub exact: Option<f64>,
}

impl ProtocolReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// The bounds alone, in the [`BoundReport`] shape.
    pub fn bound_report(&self) -> Result<BoundReport> {
        let fs: Vec<f64> = self.bases.iter().map(|b| b.fidelity).collect();
        BoundReport::from_fidelities(&fs, self.conjugate.as_ref().map(|c| c.fidelity), self.exact)
    }
}

/// Simulates all `n` bases (and the primed basis when asked), estimates
/// each `F_k` and combines them into bounds with propagated errors.
pub fn full_protocol(
    chi: &ChoiMatrix,
    u: &ComplexMatrix,
    mean_total: f64,
    seed: u64,
    mode: CountMode,
    with_conjugate: bool,
) -> Result<ProtocolReport> {
    let n = chi.n_qubits();
    let run = |b: &ProbeBasis| -> Result<EstimatedFidelities> {
        estimate_from_counts(&simulate_counts(chi, u, b, mean_total, seed, mode)?)
    };
    let bases = standard_bases(n)?.iter().map(run).collect::<Result<Vec<_>>>()?;
    let conjugate = if with_conjugate {
        Some(run(&probe_basis_all_hadamard(n)?)?)
    } else {
        None
    };
    let fs: Vec<f64> = bases.iter().map(|b| b.fidelity).collect();
    let lower_bound = crate::probes::lower_bound_nqubit(&fs);
    let sigma = bases.iter().map(|b| b.sigma * b.sigma).sum::<f64>().sqrt();
    let mut all = fs.clone();
    all.extend(conjugate.iter().map(|c| c.fidelity));
    let last = bases.last().expect("n >= 1");
    let (hofmann, hofmann_sigma) = match &conjugate {
        Some(c) => (
            Some(crate::probes::hofmann_bound(last.fidelity, c.fidelity)),
            Some((last.sigma.powi(2) + c.sigma.powi(2)).sqrt()),
        ),
        None => (None, None),
    };
    Ok(ProtocolReport {
        n,
        mode,
        seed,
        mean_total,
        bases,
        conjugate,
        lower_bound,
        lower_bound_sigma: sigma,
        lower_bound_3sigma: 3.0 * sigma,
        upper_bound: crate::probes::upper_bound(&all)?,
        hofmann,
        hofmann_sigma,
        exact: Some(crate::channels::process_fidelity(chi, u)?),
    })
}

/// Outcome probabilities `P(j' | j)` in the probe basis itself (not the
/// ideal output basis). Rows of never-transmitted inputs are all zero.
pub fn truth_table(chi: &ChoiMatrix, basis: &ProbeBasis) -> Result<Vec<Vec<f64>>> {
    let outputs = probe_outputs(chi, basis)?;
    Ok(outputs
        .iter()
        .map(|rho| {
            let p = rho.trace().re;
            basis
                .states()
                .iter()
                .map(|s| {
                    if p > 0.0 {
                        (rho.sandwich(s.amplitudes(), s.amplitudes()).re / p).max(0.0)
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect())
}

/// Text rendering with state labels such as `+00`.
pub fn render_truth_table(table: &[Vec<f64>], basis: &ProbeBasis) -> String {
    let labels: Vec<String> = (0..basis.len()).map(|j| basis.state_label(j)).collect();
    let width = labels.iter().map(|l| l.len()).max().unwrap_or(1).max(5) + 1;
    let mut out = format!("{:width$}", "");
    for l in &labels {
        let _ = write!(out, "{l:>width$}");
    }
    out.push('\n');
    for (l, row) in labels.iter().zip(table) {
        let _ = write!(out, "{l:width$}");
        for x in row {
            let _ = write!(out, "{x:>width$.3}");
        }
        out.push('\n');
    }
    out
}

/// Output of the controlled-Z on an input state, with entanglement data.
#[derive(Clone, Debug)]
pub struct GhzReport {
    pub output: PureState,
    /// Largest Schmidt weight across the cut isolating each qubit.
    pub cut_weights: Vec<f64>,
}

impl GhzReport {
    /// Whether the cut isolating qubit `m` (1-based) is entangled.
    pub fn entangled(&self, m: usize) -> bool {
        self.cut_weights[m - 1] < 1.0 - 1e-10
    }

    pub fn is_product(&self) -> bool {
        (1..=self.cut_weights.len()).all(|m| !self.entangled(m))
    }

    pub fn fidelity_to(&self, target: &PureState) -> f64 {
        self.output.fidelity(target)
    }
}

/// Applies the `n`-qubit controlled-Z to `input`.
pub fn ghz_output(input: &PureState) -> Result<GhzReport> {
    let n = input.n_qubits();
    let output = input.evolve(&cnz_unitary(n)?)?;
    let cut_weights = (1..=n).map(|m| output.largest_schmidt_weight(m)).collect();
    Ok(GhzReport {
        output,
        cut_weights,
    })
}

/// Counts over a set of pure-state projectors.
#[derive(Clone, Debug)]
pub struct TomographyData {
    pub n: usize,
    pub projectors: Vec<Vec<C64>>,
    pub counts: Vec<f64>,
}

/// All `6^n` products of `|0>, |1>, |+>, |->, |+i>, |-i>`.
pub fn product_projectors(n: usize) -> Vec<Vec<C64>> {
    let mut out = vec![vec![ONE]];
    for _ in 0..n {
        out = out
            .iter()
            .flat_map(|v| {
                SingleQubitState::ALL
                    .iter()
                    .map(move |s| qmath::kron_vec(v, &s.amplitudes()))
            })
            .collect();
    }
    out
}

fn projector_probability(rho: &ComplexMatrix, v: &[C64]) -> f64 {
    rho.sandwich(v, v).re
}

impl TomographyData {
    /// Expected counts `total * q_i / sum q` for a known state.
    pub fn exact(rho: &DensityMatrix, projectors: Vec<Vec<C64>>, total: f64) -> Self {
        let qs: Vec<f64> = projectors
            .iter()
            .map(|v| projector_probability(rho.matrix(), v).max(0.0))
            .collect();
        let qsum: f64 = qs.iter().sum();
        Self {
            n: rho.n_qubits(),
            projectors,
            counts: qs.iter().map(|q| total * q / qsum).collect(),
        }
    }

    /// Poisson counts with the same means as [`exact`](Self::exact).
    pub fn simulated(rho: &DensityMatrix, projectors: Vec<Vec<C64>>, total: f64, seed: u64) -> Self {
        let mut data = Self::exact(rho, projectors, total);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for c in &mut data.counts {
            *c = sample_poisson(*c, &mut rng) as f64;
        }
        data
    }

    /// Whether the projectors span the full operator space.
    pub fn is_complete(&self) -> Result<bool> {
        let d = 1usize << self.n;
        let mut frame = ComplexMatrix::zeros(d * d, d * d);
        for v in &self.projectors {
            let vec_p: Vec<C64> = ComplexMatrix::outer(v, v).into_vec();
            frame.add_outer(ONE, &vec_p, &vec_p);
        }
        let eig = frame.eigvalsh()?;
        let top = eig.last().copied().unwrap_or(0.0);
        Ok(eig.iter().filter(|&&x| x > 1e-10 * top).count() == d * d)
    }
}

/// Maximum-likelihood reconstruction.
#[derive(Clone, Debug)]
pub struct TomographyResult {
    pub rho: DensityMatrix,
    pub fidelity_vs_target: Option<f64>,
    pub purity: f64,
    pub iterations: usize,
    pub log_likelihood: f64,
    /// False when the projectors are not informationally complete and the
    /// estimate may not be unique.
    pub complete: bool,
    /// Log-likelihood after each iteration, starting from the initial state.
    pub likelihood_history: Vec<f64>,
}

/// Serialized form of a [`TomographyResult`].
#[derive(Clone, Debug, Serialize)]
pub struct TomographyReport {
    pub n_qubits: usize,
    #[serde(serialize_with = "sig17::entries")]
    pub entries: Vec<[f64; 2]>,
    #[serde(serialize_with = "sig17::opt")]
    pub fidelity: Option<f64>,
    #[serde(serialize_with = "sig17::one")]
    pub purity: f64,
    pub iterations: usize,
    #[serde(serialize_with = "sig17::one")]
    pub log_likelihood: f64,
    pub complete: bool,
}

impl TomographyResult {
    pub fn report(&self) -> TomographyReport {
        TomographyReport {
            n_qubits: self.rho.n_qubits(),
            entries: self.rho.matrix().as_slice().iter().map(|z| [z.re, z.im]).collect(),
            fidelity: self.fidelity_vs_target,
            purity: self.purity,
            iterations: self.iterations,
            log_likelihood: self.log_likelihood,
            complete: self.complete,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.report())?)
    }
}

pub const MLE_MAX_ITERATIONS: usize = 5000;
pub const MLE_RELATIVE_GAIN: f64 = 1e-10;

fn log_likelihood(rho: &ComplexMatrix, data: &TomographyData) -> f64 {
    let qs: Vec<f64> = data
        .projectors
        .iter()
        .map(|v| projector_probability(rho, v).max(0.0))
        .collect();
    let qsum: f64 = qs.iter().sum();
    data.counts
        .iter()
        .zip(&qs)
        .filter(|(&n, _)| n > 0.0)
        .map(|(&n, &q)| n * (q / qsum).max(f64::MIN_POSITIVE).ln())
        .sum()
}

/// `M rho M / Tr` with `M = (1 - t) I + t R`. `t = 1` is the plain
/// `R rho R` step and `t < 1` the diluted step `I + eps R` with
/// `eps = t / (1 - t)`.
fn rho_step(rho: &ComplexMatrix, r_op: &ComplexMatrix, t: f64) -> ComplexMatrix {
    let d = rho.rows();
    let mut m = ComplexMatrix::identity(d).scale_real(1.0 - t);
    m.add_scaled(C64::new(t, 0.0), r_op);
    let next = &(&m * rho) * &m;
    let tr = next.trace().re;
    let out = next.scale_real(1.0 / tr);
    // keep exact Hermiticity
    let h = out.dagger();
    (&out + &h).scale_real(0.5)
}

/// Iterative `R rho R` maximum-likelihood estimate, diluting the step
/// whenever the full step would lower the likelihood. Stops when the
/// relative gain drops below 1e-10 or after 5000 iterations.
///
/// Near a pure state that gives every projector a nonzero probability the
/// likelihood is quadratic in the infidelity, so the stop rule leaves an
/// infidelity around 1e-3 there. States with many zero-probability outcomes
/// (stabilizer and GHZ-type states) converge much further.
pub fn tomography_mle(data: &TomographyData, target: Option<&PureState>) -> Result<TomographyResult> {
    let d = 1usize << data.n;
    if data.projectors.len() != data.counts.len() {
        return Err(Error::InvalidArgument("one count per projector is required".into()));
    }
    if data.projectors.iter().any(|v| v.len() != d) {
        return Err(Error::DimensionMismatch("projector has the wrong size".into()));
    }
    let total: f64 = data.counts.iter().sum();
    if !(total > 0.0) {
        return Err(Error::InvalidArgument("no counts".into()));
    }
    let complete = data.is_complete()?;
    let mut rho = ComplexMatrix::identity(d).scale_real(1.0 / d as f64);
    let mut ll = log_likelihood(&rho, data);
    let mut history = vec![ll];
    let mut iterations = 0;
    while iterations < MLE_MAX_ITERATIONS {
        let mut r_op = ComplexMatrix::zeros(d, d);
        for (v, &n) in data.projectors.iter().zip(&data.counts) {
            if n <= 0.0 {
                continue;
            }
            let q = projector_probability(&rho, v);
            if q > 0.0 {
                r_op.add_outer(C64::new(n / (q * total), 0.0), v, v);
            }
        }
        // halve t (dilute) until the likelihood does not drop
        let mut t = 1.0;
        let accepted = loop {
            let cand = rho_step(&rho, &r_op, t);
            let cand_ll = log_likelihood(&cand, data);
            if cand_ll >= ll {
                break Some((cand, cand_ll));
            }
            if t < 1e-8 {
                break None;
            }
            t /= 2.0;
        };
        let Some((cand, cand_ll)) = accepted else {
            break;
        };
        iterations += 1;
        let gain = (cand_ll - ll) / ll.abs().max(f64::MIN_POSITIVE);
        rho = cand;
        ll = cand_ll;
        history.push(ll);
        if gain < MLE_RELATIVE_GAIN {
            break;
        }
    }
    let rho = DensityMatrix::new(rho)?;
    Ok(TomographyResult {
        fidelity_vs_target: target.map(|t| rho.fidelity_with(t)),
        purity: rho.purity(),
        rho,
        iterations,
        log_likelihood: ll,
        complete,
        likelihood_history: history,
    })
}

/// Best single-qubit phase correction.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct PhaseCompensation {
    /// Phase applied to `|1>` of the chosen qubit, in `(-pi, pi]`.
    #[serde(serialize_with = "sig17::one")]
    pub phi_opt: f64,
    #[serde(serialize_with = "sig17::one")]
    pub fidelity_before: f64,
    #[serde(serialize_with = "sig17::one")]
    pub fidelity_after: f64,
}

/// Finds the phase `phi` on `|1>` of qubit `site` (1-based; qubit 1 is the
/// interferometer arm) that maximizes the fidelity of
/// `P(phi) rho P(phi)^dagger` with `target`.
///
/// The fidelity is `A + 2 Re(e^{i phi} c)` with `c = <t_1| rho |t_0>`,
/// where `t_b` is the part of the target with qubit `site` equal to `b`, so
/// the optimum is `phi = -arg c`. A flat objective returns 0.
pub fn phase_compensate(rho: &DensityMatrix, target: &PureState, site: usize) -> Result<PhaseCompensation> {
    let n = rho.n_qubits();
    if target.n_qubits() != n {
        return Err(Error::DimensionMismatch("target and state sizes differ".into()));
    }
    if site == 0 || site > n {
        return Err(Error::InvalidArgument(format!("site {site} not in 1..={n}")));
    }
    let shift = n - site;
    let split = |bit: usize| -> Vec<C64> {
        target
            .amplitudes()
            .iter()
            .enumerate()
            .map(|(i, &a)| if (i >> shift) & 1 == bit { a } else { ZERO })
            .collect()
    };
    let (t0, t1) = (split(0), split(1));
    let coherence = rho.matrix().sandwich(&t1, &t0) / rho.trace();
    let phi_opt = if coherence.norm() < 1e-12 {
        0.0
    } else {
        let phi = -coherence.arg();
        if phi <= -std::f64::consts::PI {
            phi + 2.0 * std::f64::consts::PI
        } else {
            phi
        }
    };
    let fidelity_before = rho.fidelity_with(target);
    let phase = ComplexMatrix::from_diag(&[ONE, C64::from_polar(1.0, phi_opt)]);
    let gate = crate::channels::on_qubit(n, site, &phase)?;
    let fidelity_after = rho.conjugate(&gate)?.fidelity_with(target);
    Ok(PhaseCompensation {
        phi_opt,
        fidelity_before,
        fidelity_after,
    })
}
