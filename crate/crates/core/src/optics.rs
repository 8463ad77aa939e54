//! Two-photon model of the linear-optical CCZ gate.
//!
//! Qubit 1 is the signal photon's interferometer arm (upper = 0, lower = 1),
//! qubit 2 the signal polarization and qubit 3 the idler polarization
//! (H = 0, V = 1).
//!
//! Both signal arms meet the central PPBS. In the upper arm the reflected
//! light is lost. In the lower arm the reflected signal photon leaves
//! through the idler port, and the reflected idler photon leaves through
//! the lower signal port, which is where the two photons interfere. The
//! residual phase `phi0` sits on the lower signal mode. Each side then
//! passes a balancing PPBS that attenuates H only; everything reflected at
//! a balancer is lost.
//!
//! Beam splitters transmit with real amplitude `t` and reflect with `i r`,
//! `r = sqrt(1 - t^2)`.
//!
//! Partial distinguishability is modelled with an internal label carried by
//! each photon. The signal photon has label 0 and the idler is in
//! `sqrt(v)|0> + sqrt(1 - v)|1>`, so the exchange term is weighted by the
//! visibility `v`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::channels::{
    choi_of_kraus, conjugate_output, mix, sigma_m, ChoiMatrix, KrausSet,
};
use crate::error::{Error, Result};
use crate::qmath::{c, r, ComplexMatrix, C64, ZERO};

/// Gate parameters. Transmittances are amplitudes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OpticsParams {
    #[serde(rename = "t_H")]
    pub t_h: f64,
    #[serde(rename = "t_V")]
    pub t_v: f64,
    /// H amplitude transmittance of the signal and idler balancing PPBSs.
    pub balance: [f64; 2],
    /// Two-photon overlap in `[0, 1]`.
    pub visibility: f64,
    /// Residual phase on the lower signal arm, radians.
    pub phi0: f64,
}

impl OpticsParams {
    /// `T_H = 1`, `T_V = 1/3` at the central PPBS and `1/3` H transmission
    /// at both balancers, perfect overlap, no residual phase.
    pub fn ideal() -> Self {
        let a = 1.0 / 3f64.sqrt();
        Self {
            t_h: 1.0,
            t_v: a,
            balance: [a, a],
            visibility: 1.0,
            phi0: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let named = [
            ("t_H", self.t_h),
            ("t_V", self.t_v),
            ("balance[0]", self.balance[0]),
            ("balance[1]", self.balance[1]),
            ("visibility", self.visibility),
        ];
        for (name, x) in named {
            if !(0.0..=1.0).contains(&x) {
                return Err(Error::InvalidArgument(format!("{name} = {x} not in [0, 1]")));
            }
        }
        if !self.phi0.is_finite() {
            return Err(Error::InvalidArgument("phi0 must be finite".into()));
        }
        Ok(())
    }

    /// Parses either the preset name `ideal` or a JSON object.
    pub fn from_config(text: &str) -> Result<Self> {
        let trimmed = text.trim();
        let params = if trimmed == "ideal" || trimmed == "\"ideal\"" {
            Self::ideal()
        } else {
            serde_json::from_str(trimmed)?
        };
        params.validate()?;
        Ok(params)
    }

    fn transmission(&self, pol: Pol) -> f64 {
        match pol {
            Pol::H => self.t_h,
            Pol::V => self.t_v,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Pol {
    H,
    V,
}

impl Pol {
    fn from_bit(bit: usize) -> Self {
        if bit == 0 {
            Pol::H
        } else {
            Pol::V
        }
    }

    fn bit(self) -> usize {
        match self {
            Pol::H => 0,
            Pol::V => 1,
        }
    }
}

/// Where light is discarded.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum LossPort {
    CentralUpper,
    SignalBalancerUpper,
    SignalBalancerLower,
    IdlerBalancer,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Mode {
    SignalUpper(Pol),
    SignalLower(Pol),
    Idler(Pol),
    Loss(LossPort, Pol),
}

impl Mode {
    fn is_signal(self) -> bool {
        matches!(self, Mode::SignalUpper(_) | Mode::SignalLower(_))
    }
}

/// A spatial/polarization mode plus the photon's internal label.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PhotonMode {
    pub mode: Mode,
    pub label: u8,
}

/// Two occupied photon modes in sorted order; equal entries mean a doubly
/// occupied mode.
pub type Pattern = [PhotonMode; 2];

/// Two-photon output state as Fock-basis amplitudes.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FockAmplitudeMap {
    terms: BTreeMap<Pattern, C64>,
}

impl FockAmplitudeMap {
    pub fn iter(&self) -> impl Iterator<Item = (&Pattern, &C64)> {
        self.terms.iter()
    }

    pub fn get(&self, pattern: &Pattern) -> C64 {
        self.terms.get(pattern).copied().unwrap_or(ZERO)
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Total probability; 1 for a norm-preserving network.
    pub fn norm_sqr(&self) -> f64 {
        self.terms.values().map(|z| z.norm_sqr()).sum()
    }
}

type Amplitudes = Vec<(Mode, C64)>;

fn push(out: &mut Amplitudes, mode: Mode, amp: C64) {
    if amp != ZERO {
        out.push((mode, amp));
    }
}

fn central_ppbs(p: &OpticsParams, input: Mode) -> Amplitudes {
    let mut out = Vec::new();
    let (mode, pol) = match input {
        Mode::SignalUpper(pol) | Mode::SignalLower(pol) | Mode::Idler(pol) => (input, pol),
        Mode::Loss(..) => return vec![(input, c(1.0, 0.0))],
    };
    let t = p.transmission(pol);
    let refl = c(0.0, (1.0 - t * t).max(0.0).sqrt());
    push(&mut out, mode, r(t));
    let reflected = match mode {
        Mode::SignalUpper(_) => Mode::Loss(LossPort::CentralUpper, pol),
        Mode::SignalLower(_) => Mode::Idler(pol),
        _ => Mode::SignalLower(pol),
    };
    push(&mut out, reflected, refl);
    out
}

fn balancer(p: &OpticsParams, (mode, amp): (Mode, C64)) -> Amplitudes {
    let (b, loss) = match mode {
        Mode::SignalUpper(Pol::H) => (p.balance[0], LossPort::SignalBalancerUpper),
        Mode::SignalLower(Pol::H) => (p.balance[0], LossPort::SignalBalancerLower),
        Mode::Idler(Pol::H) => (p.balance[1], LossPort::IdlerBalancer),
        _ => return vec![(mode, amp)],
    };
    let mut out = Vec::new();
    push(&mut out, mode, amp * b);
    push(
        &mut out,
        Mode::Loss(loss, Pol::H),
        amp * c(0.0, (1.0 - b * b).max(0.0).sqrt()),
    );
    out
}

/// Single-photon propagation from an input mode through the whole network.
pub fn propagate_single(p: &OpticsParams, input: Mode) -> Vec<(Mode, C64)> {
    let phase = C64::from_polar(1.0, p.phi0);
    let mut acc: BTreeMap<Mode, C64> = BTreeMap::new();
    for (mode, amp) in central_ppbs(p, input) {
        let amp = if matches!(mode, Mode::SignalLower(_)) {
            amp * phase
        } else {
            amp
        };
        for (m, a) in balancer(p, (mode, amp)) {
            *acc.entry(m).or_insert(ZERO) += a;
        }
    }
    acc.into_iter().filter(|(_, a)| *a != ZERO).collect()
}

fn input_modes(j: usize) -> (Mode, Mode) {
    let arm = (j >> 2) & 1;
    let spol = Pol::from_bit((j >> 1) & 1);
    let ipol = Pol::from_bit(j & 1);
    let signal = if arm == 0 {
        Mode::SignalUpper(spol)
    } else {
        Mode::SignalLower(spol)
    };
    (signal, Mode::Idler(ipol))
}

/// Internal-label amplitudes of the idler photon.
fn idler_labels(p: &OpticsParams) -> [f64; 2] {
    [p.visibility.sqrt(), (1.0 - p.visibility).sqrt()]
}

/// Output Fock amplitudes for computational input `j` (0..8).
pub fn propagate_input(p: &OpticsParams, j: usize) -> Result<FockAmplitudeMap> {
    p.validate()?;
    if j >= 8 {
        return Err(Error::InvalidArgument(format!("input index {j} not in 0..8")));
    }
    let (s_in, i_in) = input_modes(j);
    let alpha: Vec<(PhotonMode, C64)> = propagate_single(p, s_in)
        .into_iter()
        .map(|(mode, a)| (PhotonMode { mode, label: 0 }, a))
        .collect();
    let xi = idler_labels(p);
    let beta: Vec<(PhotonMode, C64)> = propagate_single(p, i_in)
        .into_iter()
        .flat_map(|(mode, a)| {
            (0..2u8)
                .filter(move |&l| xi[l as usize] != 0.0)
                .map(move |l| (PhotonMode { mode, label: l }, a * xi[l as usize]))
        })
        .collect();

    // a_A^dag a_B^dag |0>: distinct modes get alpha_1 beta_2 + alpha_2 beta_1,
    // a doubly occupied mode gets sqrt(2) alpha beta.
    let mut terms: BTreeMap<Pattern, C64> = BTreeMap::new();
    for &(ma, a) in &alpha {
        for &(mb, b) in &beta {
            let (key, amp) = if ma == mb {
                ([ma, mb], a * b * std::f64::consts::SQRT_2)
            } else if ma < mb {
                ([ma, mb], a * b)
            } else {
                ([mb, ma], a * b)
            };
            *terms.entry(key).or_insert(ZERO) += amp;
        }
    }
    terms.retain(|_, z| z.norm_sqr() > 1e-30);
    Ok(FockAmplitudeMap { terms })
}

/// Decodes a coincidence: one photon on the signal side and one in the idler
/// port. Returns the output qubit index and the environment labels
/// (signal-side label, idler-side label).
fn decode_success(pattern: &Pattern) -> Option<(usize, (u8, u8))> {
    let [a, b] = *pattern;
    let (s, i) = match (a.mode.is_signal(), b.mode.is_signal()) {
        (true, false) => (a, b),
        (false, true) => (b, a),
        _ => return None,
    };
    let ipol = match i.mode {
        Mode::Idler(pol) => pol,
        _ => return None,
    };
    let (arm, spol) = match s.mode {
        Mode::SignalUpper(pol) => (0, pol),
        Mode::SignalLower(pol) => (1, pol),
        _ => unreachable!(),
    };
    Some(((arm << 2) | (spol.bit() << 1) | ipol.bit(), (s.label, i.label)))
}

/// One Kraus operator per environment label pair, over the coincidence
/// subspace.
pub fn kraus_operators(p: &OpticsParams) -> Result<BTreeMap<(u8, u8), ComplexMatrix>> {
    let mut ks: BTreeMap<(u8, u8), ComplexMatrix> = BTreeMap::new();
    for j in 0..8 {
        for (pattern, &amp) in propagate_input(p, j)?.iter() {
            if let Some((out, env)) = decode_success(pattern) {
                let k = ks.entry(env).or_insert_with(|| ComplexMatrix::zeros(8, 8));
                k[(out, j)] += amp;
            }
        }
    }
    Ok(ks)
}

/// Coincidence-basis amplitude map `A = sum_b xi_b K_(0,b)`: the environment
/// projected onto the idler's own label state. At unit visibility it is the
/// full post-selected operation; in general the two-vertical-photon entry is
/// `t_V^2 - v r_V^2` (times the arm phase).
pub fn effective_operator(p: &OpticsParams) -> Result<ComplexMatrix> {
    let ks = kraus_operators(p)?;
    let xi = idler_labels(p);
    let mut a = ComplexMatrix::zeros(8, 8);
    for (b, &w) in xi.iter().enumerate() {
        if let Some(k) = ks.get(&(0, b as u8)) {
            a.add_scaled(r(w), k);
        }
    }
    Ok(a)
}

/// Choi matrix of the post-selected gate, blended with its arm-dephased
/// version: `(1 - d) E + d (E + Z_1 E Z_1) / 2`.
pub fn choi_from_optics(p: &OpticsParams, dephasing_between_arms: f64) -> Result<ChoiMatrix> {
    if !(0.0..=1.0).contains(&dephasing_between_arms) {
        return Err(Error::InvalidArgument(format!(
            "dephasing {dephasing_between_arms} not in [0, 1]"
        )));
    }
    let ops: Vec<ComplexMatrix> = kraus_operators(p)?
        .into_values()
        .filter(|k| k.max_abs() > 0.0)
        .collect();
    if ops.is_empty() {
        return Err(Error::InvalidChannel("no coincidences for any input".into()));
    }
    let chi = choi_of_kraus(&KrausSet::new(ops)?);
    if dephasing_between_arms == 0.0 {
        return Ok(chi);
    }
    let flipped = conjugate_output(&chi, &sigma_m(3, 1)?)?;
    let d = dephasing_between_arms;
    mix(&[(1.0 - d / 2.0, &chi), (d / 2.0, &flipped)])
}

/// One output pattern and whether it counts as a coincidence.
#[derive(Clone, Debug, PartialEq)]
pub struct PatternEvent {
    pub pattern: Pattern,
    pub probability: f64,
    pub success: bool,
}

/// Event classification for one computational input.
#[derive(Clone, Debug, PartialEq)]
pub struct InputEvents {
    pub input: usize,
    pub success_probability: f64,
    pub failure_probability: f64,
    pub patterns: Vec<PatternEvent>,
}

/// Splits every two-photon output pattern into coincidences (one photon in a
/// signal output, one in the idler output) and failures.
pub fn coincidence_events(p: &OpticsParams) -> Result<Vec<InputEvents>> {
    (0..8)
        .map(|j| {
            let fock = propagate_input(p, j)?;
            let patterns: Vec<PatternEvent> = fock
                .iter()
                .map(|(pat, amp)| PatternEvent {
                    pattern: *pat,
                    probability: amp.norm_sqr(),
                    success: decode_success(pat).is_some(),
                })
                .collect();
            let success: f64 = patterns.iter().filter(|e| e.success).map(|e| e.probability).sum();
            let total: f64 = patterns.iter().map(|e| e.probability).sum();
            Ok(InputEvents {
                input: j,
                success_probability: success,
                failure_probability: total - success,
                patterns,
            })
        })
        .collect()
}
