//! Monte Carlo fidelity estimation from a Pauli expansion, and the count of
//! measurement settings it needs.
//!
//! The fidelity with a target `U` is written as a sum over Pauli pairs
//! `(P_in, P_out)` with coefficients `u = Tr[P_out U P_in U^dagger] / 2^n`.
//! Pairs are drawn with probability `u^2 / sum u^2` and each contributes the
//! ratio `m / u`, where `m = Tr[P_out E(P_in)] / Tr[chi]` is the measured
//! average. Normalizing `m` by `Tr[chi]` keeps the estimator aimed at the
//! process fidelity for trace-decreasing maps too.

use std::fmt;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Binomial;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channels::{apply_to_operator, ChoiMatrix};
use crate::error::{Error, Result};
use crate::qmath::{c, ComplexMatrix, C64, ONE, ZERO};

/// Coefficients below this are treated as zero.
pub const COEFFICIENT_TOL: f64 = 1e-10;

/// Default number of shots per sampled setting.
pub const DEFAULT_SHOTS: u64 = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PauliLetter {
    I,
    X,
    Y,
    Z,
}

impl PauliLetter {
    pub const ALL: [PauliLetter; 4] = [PauliLetter::I, PauliLetter::X, PauliLetter::Y, PauliLetter::Z];

    fn flips(self) -> bool {
        matches!(self, PauliLetter::X | PauliLetter::Y)
    }

    /// `<bit XOR flip| P |bit>`
    fn phase(self, bit: usize) -> C64 {
        match (self, bit) {
            (PauliLetter::I | PauliLetter::X, _) => ONE,
            (PauliLetter::Y, 0) => c(0.0, 1.0),
            (PauliLetter::Y, _) => c(0.0, -1.0),
            (PauliLetter::Z, 0) => ONE,
            (PauliLetter::Z, _) => c(-1.0, 0.0),
        }
    }

    fn symbol(self) -> char {
        match self {
            PauliLetter::I => 'I',
            PauliLetter::X => 'X',
            PauliLetter::Y => 'Y',
            PauliLetter::Z => 'Z',
        }
    }
}

/// A tensor product of Pauli operators, qubit 1 first.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PauliLabel {
    letters: Vec<PauliLetter>,
}

impl PauliLabel {
    pub fn new(letters: Vec<PauliLetter>) -> Self {
        Self { letters }
    }

    /// The `index`-th label in base-4 order `I < X < Y < Z`, qubit 1 most
    /// significant.
    pub fn from_index(n: usize, index: usize) -> Self {
        let letters = (0..n)
            .map(|q| PauliLetter::ALL[(index >> (2 * (n - 1 - q))) & 3])
            .collect();
        Self { letters }
    }

    pub fn n(&self) -> usize {
        self.letters.len()
    }

    pub fn letters(&self) -> &[PauliLetter] {
        &self.letters
    }

    pub fn is_identity(&self) -> bool {
        self.letters.iter().all(|&l| l == PauliLetter::I)
    }

    /// No identity factors.
    pub fn is_full_weight(&self) -> bool {
        self.letters.iter().all(|&l| l != PauliLetter::I)
    }

    /// Bit mask of qubits where the operator flips the computational state.
    pub fn flip_mask(&self) -> usize {
        let n = self.n();
        self.letters
            .iter()
            .enumerate()
            .filter(|(_, l)| l.flips())
            .fold(0, |m, (q, _)| m | (1 << (n - 1 - q)))
    }

    /// `P|y> = phase(y) |y XOR mask>`
    fn phase_of(&self, y: usize) -> C64 {
        let n = self.n();
        self.letters
            .iter()
            .enumerate()
            .fold(ONE, |acc, (q, l)| acc * l.phase((y >> (n - 1 - q)) & 1))
    }

    pub fn matrix(&self) -> ComplexMatrix {
        let d = 1usize << self.n();
        let mask = self.flip_mask();
        let mut m = ComplexMatrix::zeros(d, d);
        for y in 0..d {
            m[(y ^ mask, y)] = self.phase_of(y);
        }
        m
    }

    /// `Tr[P A]` in `O(d)`.
    pub fn trace_with(&self, a: &ComplexMatrix) -> C64 {
        let mask = self.flip_mask();
        (0..a.rows()).fold(ZERO, |acc, y| acc + self.phase_of(y) * a[(y, y ^ mask)])
    }

    /// Whether `self` agrees with `full` on every non-identity letter.
    fn covered_by(&self, full: &PauliLabel) -> bool {
        self.letters
            .iter()
            .zip(&full.letters)
            .all(|(a, b)| *a == PauliLetter::I || a == b)
    }

    /// Product eigenbasis: `(amplitudes, eigenvalue)` for each of the `2^n`
    /// states. Identity factors use the computational basis with eigenvalue 1.
    pub fn eigenstates(&self) -> Vec<(Vec<C64>, f64)> {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let single = |l: PauliLetter, s: usize| -> ([C64; 2], f64) {
            let sign = if s == 0 { 1.0 } else { -1.0 };
            match l {
                PauliLetter::I => (if s == 0 { [ONE, ZERO] } else { [ZERO, ONE] }, 1.0),
                PauliLetter::Z => (if s == 0 { [ONE, ZERO] } else { [ZERO, ONE] }, sign),
                PauliLetter::X => ([c(h, 0.0), c(sign * h, 0.0)], sign),
                PauliLetter::Y => ([c(h, 0.0), c(0.0, sign * h)], sign),
            }
        };
        let n = self.n();
        (0..1usize << n)
            .map(|s| {
                let mut amps = vec![ONE];
                let mut lambda = 1.0;
                for (q, &l) in self.letters.iter().enumerate() {
                    let (v, e) = single(l, (s >> (n - 1 - q)) & 1);
                    amps = crate::qmath::kron_vec(&amps, &v);
                    lambda *= e;
                }
                (amps, lambda)
            })
            .collect()
    }
}

impl fmt::Display for PauliLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for l in &self.letters {
            write!(f, "{}", l.symbol())?;
        }
        Ok(())
    }
}

impl std::str::FromStr for PauliLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.chars()
            .map(|ch| match ch.to_ascii_uppercase() {
                'I' => Ok(PauliLetter::I),
                'X' => Ok(PauliLetter::X),
                'Y' => Ok(PauliLetter::Y),
                'Z' => Ok(PauliLetter::Z),
                _ => Err(Error::InvalidArgument(format!("bad Pauli letter {ch:?}"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(PauliLabel::new)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PauliPair {
    pub input: PauliLabel,
    pub output: PauliLabel,
    /// `Tr[P_out U P_in U^dagger] / 2^n`
    pub coefficient: f64,
}

/// Nonzero Pauli pairs of a target unitary and their relevance weights.
#[derive(Clone, Debug)]
pub struct PauliPairExpansion {
    n: usize,
    pairs: Vec<PauliPair>,
    relevance: Vec<f64>,
    total_weight: f64,
}

impl PauliPairExpansion {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn pairs(&self) -> &[PauliPair] {
        &self.pairs
    }

    /// `u^2 / sum u^2` per pair.
    pub fn relevance(&self) -> &[f64] {
        &self.relevance
    }

    /// `sum u^2`, equal to `4^n` for a unitary.
    pub fn total_weight(&self) -> f64 {
        self.total_weight
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

fn check_unitary(u: &ComplexMatrix) -> Result<usize> {
    let n = u.qubit_count()?;
    let dev = u.unitarity_deviation();
    if dev > 1e-10 {
        return Err(Error::NotUnitary(dev));
    }
    Ok(n)
}

/// `U P U^dagger` using the one-entry-per-column structure of `P`.
fn conjugated_pauli(u: &ComplexMatrix, p: &PauliLabel) -> ComplexMatrix {
    let d = u.rows();
    let mask = p.flip_mask();
    let up = ComplexMatrix::from_fn(d, d, |row, y| u[(row, y ^ mask)] * p.phase_of(y));
    &up * &u.dagger()
}

/// All pairs with `|u| > 1e-10`, in base-4 order of `(P_in, P_out)`.
pub fn pauli_expansion(u: &ComplexMatrix) -> Result<PauliPairExpansion> {
    let n = check_unitary(u)?;
    let d = 1usize << n;
    let count = d * d;
    let mut pairs = Vec::new();
    for i in 0..count {
        let p_in = PauliLabel::from_index(n, i);
        let m = conjugated_pauli(u, &p_in);
        for o in 0..count {
            let p_out = PauliLabel::from_index(n, o);
            let coeff = p_out.trace_with(&m).re / d as f64;
            if coeff.abs() > COEFFICIENT_TOL {
                pairs.push(PauliPair {
                    input: p_in.clone(),
                    output: p_out,
                    coefficient: coeff,
                });
            }
        }
    }
    let total_weight: f64 = pairs.iter().map(|p| p.coefficient * p.coefficient).sum();
    let relevance = pairs
        .iter()
        .map(|p| p.coefficient * p.coefficient / total_weight)
        .collect();
    Ok(PauliPairExpansion {
        n,
        pairs,
        relevance,
        total_weight,
    })
}

/// `m = Tr[P_out E(P_in)] / Tr[chi]` for every pair of the expansion.
pub fn measured_averages(chi: &ChoiMatrix, exp: &PauliPairExpansion) -> Result<Vec<f64>> {
    if chi.n_qubits() != exp.n {
        return Err(Error::DimensionMismatch("channel and expansion sizes differ".into()));
    }
    let tr = chi.trace();
    let mut cache: Option<(PauliLabel, ComplexMatrix)> = None;
    let mut out = Vec::with_capacity(exp.len());
    for pair in &exp.pairs {
        let fresh = !matches!(&cache, Some((label, _)) if *label == pair.input);
        if fresh {
            let image = apply_to_operator(chi, &pair.input.matrix())?;
            cache = Some((pair.input.clone(), image));
        }
        let image = &cache.as_ref().expect("filled above").1;
        out.push(pair.output.trace_with(image).re / tr);
    }
    Ok(out)
}

/// `sum Pr(pair) m / u` over every pair; equals the process fidelity.
pub fn full_resummation(chi: &ChoiMatrix, exp: &PauliPairExpansion) -> Result<f64> {
    let ms = measured_averages(chi, exp)?;
    Ok(exp
        .pairs
        .iter()
        .zip(&exp.relevance)
        .zip(&ms)
        .map(|((pair, pr), m)| pr * m / pair.coefficient)
        .sum())
}

/// Measurement settings needed by the Monte Carlo method and by the bounds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SettingsAccount {
    /// Distinct average values left after dropping those recoverable from
    /// full-weight averages by ignoring identity factors.
    pub nontrivial_averages: usize,
    /// One setting per average and input eigenstate.
    pub settings: usize,
    /// Settings when a detector only reports a single outcome.
    pub settings_single_outcome: usize,
}

/// Counts the averages a full Monte Carlo run has to measure.
///
/// An average containing identity factors is free when some full-weight
/// nonzero pair agrees with it on every non-identity letter of input and
/// output.
pub fn settings_account(exp: &PauliPairExpansion) -> SettingsAccount {
    let full: Vec<&PauliPair> = exp
        .pairs
        .iter()
        .filter(|p| p.input.is_full_weight() && p.output.is_full_weight())
        .collect();
    let uncovered = exp
        .pairs
        .iter()
        .filter(|p| !(p.input.is_full_weight() && p.output.is_full_weight()))
        .filter(|p| !(p.input.is_identity() && p.output.is_identity()))
        .filter(|p| {
            !full
                .iter()
                .any(|f| p.input.covered_by(&f.input) && p.output.covered_by(&f.output))
        })
        .count();
    let averages = full.len() + uncovered;
    let d = 1usize << exp.n;
    SettingsAccount {
        nontrivial_averages: averages,
        settings: averages * d,
        settings_single_outcome: averages * d * d,
    }
}

/// Settings for the bound protocol: `n` bases of `2^n` inputs, and that
/// times `2^n` for single-outcome detection.
pub fn bound_method_settings(n: usize) -> (usize, usize) {
    let d = 1usize << n;
    (n * d, n * d * d)
}

/// `M = 1/((1-p) eps^2)`, rounded to the nearest integer.
pub fn required_settings(epsilon: f64, p: f64) -> Result<usize> {
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidArgument(format!("epsilon {epsilon} not in (0, 1)")));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidArgument(format!("confidence {p} not in (0, 1)")));
    }
    Ok(((1.0 / ((1.0 - p) * epsilon * epsilon)).round() as usize).max(1))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub settings_used: usize,
    pub epsilon: f64,
    pub p: f64,
    pub seed: u64,
    /// Shots per setting; `None` for exact averages.
    pub shots: Option<u64>,
}

impl McEstimate {
    pub fn to_report_json(&self) -> Result<String> {
        let report = serde_json::json!({
            "method": "mc",
            "settings": self.settings_used,
            "estimate": self.estimate,
            "epsilon": self.epsilon,
            "p": self.p,
            "seed": self.seed,
            "shots": self.shots,
        });
        Ok(serde_json::to_string_pretty(&report)?)
    }
}

/// Outputs `E(|s><s|)` of each eigenstate of each sampled input operator.
struct EigenImages {
    per_input: Vec<(PauliLabel, Vec<(ComplexMatrix, f64)>)>,
}

impl EigenImages {
    fn build(chi: &ChoiMatrix, exp: &PauliPairExpansion) -> Result<Self> {
        let mut per_input: Vec<(PauliLabel, Vec<(ComplexMatrix, f64)>)> = Vec::new();
        for pair in &exp.pairs {
            if per_input.last().is_some_and(|(l, _)| *l == pair.input) {
                continue;
            }
            let images = pair
                .input
                .eigenstates()
                .into_iter()
                .map(|(v, lambda)| {
                    apply_to_operator(chi, &ComplexMatrix::outer(&v, &v)).map(|img| (img, lambda))
                })
                .collect::<Result<Vec<_>>>()?;
            per_input.push((pair.input.clone(), images));
        }
        Ok(Self { per_input })
    }

    fn lookup(&self, label: &PauliLabel) -> &[(ComplexMatrix, f64)] {
        let idx = self
            .per_input
            .binary_search_by(|(l, _)| l.cmp(label))
            .expect("every sampled input was precomputed");
        &self.per_input[idx].1
    }
}

/// Monte Carlo estimate of the process fidelity from
/// `M = 1/((1-p) eps^2)` sampled Pauli pairs.
///
/// Sample `i` draws from its own ChaCha stream `(seed, i)`, so the result is
/// independent of the thread count. With `shots = Some(k)` every eigenstate
/// measurement is replaced by a binomial estimate from `k` shots.
pub fn mc_estimate(
    chi: &ChoiMatrix,
    u: &ComplexMatrix,
    epsilon: f64,
    p: f64,
    seed: u64,
    shots: Option<u64>,
) -> Result<McEstimate> {
    let m = required_settings(epsilon, p)?;
    let exp = pauli_expansion(u)?;
    mc_estimate_with(chi, &exp, m, seed, shots).map(|estimate| McEstimate {
        estimate,
        settings_used: m,
        epsilon,
        p,
        seed,
        shots,
    })
}

/// Mean of `m / u` over `samples` draws from the relevance distribution.
pub fn mc_estimate_with(
    chi: &ChoiMatrix,
    exp: &PauliPairExpansion,
    samples: usize,
    seed: u64,
    shots: Option<u64>,
) -> Result<f64> {
    if samples == 0 {
        return Err(Error::InvalidArgument("at least one sample is needed".into()));
    }
    if shots == Some(0) {
        return Err(Error::InvalidArgument("shots must be positive".into()));
    }
    let tr = chi.trace();
    if tr <= 0.0 {
        return Err(Error::InvalidChannel("Choi matrix has zero trace".into()));
    }
    let dist = WeightedIndex::new(exp.relevance())
        .map_err(|e| Error::InvalidArgument(format!("relevance distribution: {e}")))?;
    let ratios: Vec<f64> = match shots {
        None => {
            let ms = measured_averages(chi, exp)?;
            (0..samples)
                .into_par_iter()
                .map(|i| {
                    let mut rng = sample_rng(seed, i);
                    let k = dist.sample(&mut rng);
                    ms[k] / exp.pairs[k].coefficient
                })
                .collect()
        }
        Some(shots) => {
            let images = EigenImages::build(chi, exp)?;
            (0..samples)
                .into_par_iter()
                .map(|i| {
                    let mut rng = sample_rng(seed, i);
                    let k = dist.sample(&mut rng);
                    let pair = &exp.pairs[k];
                    let mut m = 0.0;
                    for (img, lambda) in images.lookup(&pair.input) {
                        let ps = img.trace().re;
                        if ps <= 0.0 {
                            continue;
                        }
                        let e = (pair.output.trace_with(img).re / ps).clamp(-1.0, 1.0);
                        let prob = (1.0 + e) / 2.0;
                        let plus = Binomial::new(shots, prob)
                            .expect("probability in [0, 1]")
                            .sample(&mut rng);
                        let e_hat = 2.0 * plus as f64 / shots as f64 - 1.0;
                        m += lambda * ps * e_hat;
                    }
                    m / tr / pair.coefficient
                })
                .collect()
        }
    };
    Ok(ratios.iter().sum::<f64>() / samples as f64)
}

fn sample_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// How demanding certification becomes with `n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificationScaling {
    pub n: usize,
    /// `1 - F_chi` must stay below `2^(2-n) (1 - 2^-n)` to beat doing nothing.
    pub infidelity_threshold: f64,
    /// The threshold shared among `n` basis infidelities.
    pub per_basis_threshold: f64,
    /// Monte Carlo settings at `eps` equal to the threshold and `p = 0.9`.
    pub mc_settings_p90: f64,
}

pub fn certification_scaling(n: usize) -> Result<CertificationScaling> {
    if n < 2 {
        return Err(Error::InvalidArgument("scaling needs n >= 2".into()));
    }
    let n_i = n as i32;
    let threshold = 2f64.powi(2 - n_i) * (1.0 - 2f64.powi(-n_i));
    Ok(CertificationScaling {
        n,
        infidelity_threshold: threshold,
        per_basis_threshold: threshold / n as f64,
        mc_settings_p90: 1.0 / (0.1 * threshold * threshold),
    })
}
