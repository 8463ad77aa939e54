//! Command-line front end. [`run`] produces the text a command prints so
//! the binary stays a thin wrapper and tests can call commands directly.

pub mod channel;

use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gatebound::channels::{apply_channel, cnz_unitary, process_fidelity, DensityMatrix, PureState, SingleQubitState};
use gatebound::expsim::{
    bound_with_uncertainty, estimate_from_counts, full_protocol, phase_compensate, PhaseCompensation, product_projectors,
    render_truth_table, simulate_counts, tomography_mle, truth_table, CountMode, TomographyData, TomographyReport,
};
use gatebound::optics::{choi_from_optics, coincidence_events, effective_operator, OpticsParams};
use gatebound::probes::{
    average_state_fidelity, hofmann_bound, r_k_excess_min_eigenvalue, r_operator, r_prime_operator, scaled_min_eigenvalue,
    standard_bases, t_tilde_spectrum, tightness_states, BasisKind, BoundReport, HofmannEntry, ProbeBasis,
    ZeroProbabilityMode, PSD_TOL,
};
use gatebound::qmath::ComplexMatrix;
use gatebound::sampling::{
    bound_method_settings, certification_scaling, mc_estimate, pauli_expansion, settings_account, DEFAULT_SHOTS,
};
use serde::Serialize;
use serde_json::{json, Value};

use channel::ChannelArgs;

/// Failure classes with stable exit codes.
#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Validation(_) => 3,
            CliError::Io(_) => 4,
        }
    }
}

impl From<gatebound::Error> for CliError {
    fn from(e: gatebound::Error) -> Self {
        use gatebound::Error as E;
        match e {
            E::InvalidArgument(_) | E::DimensionMismatch(_) | E::Json(_) => CliError::Usage(e.to_string()),
            E::Io(_) => CliError::Io(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Parser, Debug)]
#[command(name = "gatebound", version, about = "Fidelity bounds for multi-qubit controlled-Z gates")]
pub struct Cli {
    /// Seed for every random draw; required whenever counts are sampled
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Write the report to this file instead of stdout
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,

    /// Report format; csv is available for simulate and optics
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,

    /// Use exact expectations instead of sampled counts or shots
    #[arg(long, global = true)]
    pub expectation: bool,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Basis fidelities and the lower, upper and two-basis bounds
    Bound(BoundArgs),
    /// Positivity, spectrum and tightness checks behind the lower bound
    Certify(CertifyArgs),
    /// Simulated coincidence counts and the fidelity estimates derived from them
    Simulate(SimulateArgs),
    /// Monte Carlo fidelity estimate from sampled Pauli settings
    Mc(McArgs),
    /// Effective operator and success probabilities of the optical gate
    Optics(OpticsArgs),
    /// Entangled-state generation followed by state tomography
    Ghz(GhzArgs),
    /// Measurement settings needed by the Monte Carlo and bound methods
    SettingsAccount(SettingsArgs),
}

#[derive(Args, Debug)]
pub struct BoundArgs {
    #[command(flatten)]
    pub channel: ChannelArgs,

    /// Basis fidelities F_1,...,F_n given directly (arithmetic-only mode)
    #[arg(long, value_delimiter = ',', value_name = "F")]
    pub fk: Option<Vec<f64>>,

    /// Fidelity in the fully conjugate basis n' for arithmetic-only mode
    #[arg(long, value_name = "F")]
    pub fk_conjugate: Option<f64>,

    /// Coincidence totals S_k (one value or one per basis) for error propagation
    #[arg(long, value_delimiter = ',', value_name = "S")]
    pub totals: Option<Vec<f64>>,

    /// Basis pair for the two-basis bound, e.g. 3,3'
    #[arg(long, value_name = "K,K'")]
    pub hofmann: Option<String>,

    /// Also evaluate the conjugate basis n' for a channel
    #[arg(long)]
    pub conjugate: bool,
}

#[derive(Args, Debug)]
pub struct CertifyArgs {
    /// Number of qubits, 2 to 6
    #[arg(long, default_value_t = 3)]
    pub n: usize,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub channel: ChannelArgs,

    /// Single basis to simulate (1..n, n' or H); default runs the full protocol
    #[arg(long, value_name = "K")]
    pub basis: Option<String>,

    /// Expected coincidences summed over the inputs of one basis
    #[arg(long, default_value_t = 528_000.0, value_name = "S")]
    pub mean_total: f64,

    /// Include the conjugate basis n' and the two-basis bound
    #[arg(long)]
    pub conjugate: bool,

    /// Directory receiving one counts CSV per basis
    #[arg(long, value_name = "DIR")]
    pub counts: Option<PathBuf>,

    /// Print truth tables measured in the probe bases instead of estimates
    #[arg(long)]
    pub truth_table: bool,
}

#[derive(Args, Debug)]
pub struct McArgs {
    #[command(flatten)]
    pub channel: ChannelArgs,

    /// Target accuracy epsilon
    #[arg(long, default_value_t = 0.01)]
    pub epsilon: f64,

    /// Target confidence p
    #[arg(long, default_value_t = 0.9)]
    pub p: f64,

    /// Shots per setting (ignored with --expectation)
    #[arg(long, default_value_t = DEFAULT_SHOTS)]
    pub shots: u64,
}

#[derive(Args, Debug)]
pub struct OpticsArgs {
    /// "ideal" or a JSON file with t_H, t_V, balance, visibility, phi0
    #[arg(long, default_value = "ideal", value_name = "PARAMS")]
    pub params: String,

    /// Dephasing between interferometer arms, in [0, 1]
    #[arg(long, default_value_t = 0.0, value_name = "D")]
    pub dephasing: f64,
}

#[derive(Args, Debug)]
pub struct GhzArgs {
    /// Input as comma-separated tokens 0, 1, +, -, +i, -i or phi+ (two qubits)
    #[arg(long, default_value = "+,+,+", value_name = "STATE")]
    pub input: String,

    /// Optical model for the gate ("ideal" or JSON file); default is the ideal unitary
    #[arg(long, value_name = "PARAMS")]
    pub optics: Option<String>,

    /// Dephasing between interferometer arms for the optical model
    #[arg(long, default_value_t = 0.0, value_name = "D")]
    pub dephasing: f64,

    /// Total tomography counts over all projectors
    #[arg(long, default_value_t = 1e5, value_name = "N")]
    pub total: f64,

    /// Optimize a phase on |1> of this qubit (1-based) after reconstruction
    #[arg(long, value_name = "QUBIT")]
    pub compensate: Option<usize>,
}

#[derive(Args, Debug)]
pub struct SettingsArgs {
    /// Gate: toffoli, ccz, cnz or identity
    #[arg(long, default_value = "toffoli")]
    pub target: String,

    /// Number of qubits
    #[arg(long, default_value_t = 3)]
    pub n: usize,
}

/// What a command emits: the main report plus extra files.
#[derive(Debug, Default)]
pub struct Output {
    pub text: String,
    pub files: Vec<(PathBuf, String)>,
}

impl From<String> for Output {
    fn from(text: String) -> Self {
        Self { text, files: Vec::new() }
    }
}

fn pretty<T: Serialize>(v: &T) -> Result<String, CliError> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| CliError::Validation(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

fn to_value<T: Serialize>(v: &T) -> Result<Value, CliError> {
    serde_json::to_value(v).map_err(|e| CliError::Validation(e.to_string()))
}

fn require_seed(cli: &Cli) -> Result<u64, CliError> {
    cli.seed
        .ok_or_else(|| CliError::Usage("--seed is required when counts are sampled".into()))
}

fn only_json(cli: &Cli, cmd: &str) -> Result<(), CliError> {
    if cli.format == Format::Csv {
        return Err(CliError::Usage(format!("{cmd} has no CSV output")));
    }
    Ok(())
}

pub fn run(cli: &Cli) -> Result<Output, CliError> {
    match &cli.command {
        Command::Bound(a) => cmd_bound(cli, a).map(Output::from),
        Command::Certify(a) => cmd_certify(cli, a).map(Output::from),
        Command::Simulate(a) => cmd_simulate(cli, a),
        Command::Mc(a) => cmd_mc(cli, a).map(Output::from),
        Command::Optics(a) => cmd_optics(cli, a).map(Output::from),
        Command::Ghz(a) => cmd_ghz(cli, a).map(Output::from),
        Command::SettingsAccount(a) => cmd_settings(cli, a).map(Output::from),
    }
}

#[derive(Serialize)]
struct BoundOutput {
    mode: &'static str,
    #[serde(flatten)]
    report: BoundReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    lower_bound_sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    lower_bound_3sigma: Option<f64>,
}

fn parse_pair(text: &str) -> Result<[BasisKind; 2], CliError> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        return Err(CliError::Usage(format!("--hofmann expects two bases, got {text:?}")));
    }
    Ok([parts[0].parse()?, parts[1].parse()?])
}

fn cmd_bound(cli: &Cli, a: &BoundArgs) -> Result<String, CliError> {
    only_json(cli, "bound")?;
    let pair = a.hofmann.as_deref().map(parse_pair).transpose()?;
    let (mode, mut report, fk_of): (_, _, Box<dyn Fn(BasisKind) -> Result<f64, CliError>>) =
        if let Some(fs) = &a.fk {
            if a.channel.has_source() {
                return Err(CliError::Usage("--fk cannot be combined with a channel".into()));
            }
            let report = BoundReport::from_fidelities(fs, a.fk_conjugate, None)?;
            let (fs, conj) = (fs.clone(), a.fk_conjugate);
            let n = fs.len();
            let lookup = move |k: BasisKind| match k {
                BasisKind::Hadamard(i) if (1..=n).contains(&i) => Ok(fs[i - 1]),
                BasisKind::Conjugate(i) if i == n => {
                    conj.ok_or_else(|| CliError::Usage("--hofmann with n' needs --fk-conjugate".into()))
                }
                other => Err(CliError::Usage(format!("no fidelity given for basis {other}"))),
            };
            ("arithmetic-only", report, Box::new(lookup))
        } else {
            let (chi, u) = a.channel.build()?;
            let report = BoundReport::from_channel(&chi, &u, a.conjugate)?;
            let f = report.exact.expect("set for channels");
            if report.lower_bound > f + PSD_TOL || f > report.upper_bound + PSD_TOL {
                return Err(CliError::Validation(format!(
                    "bounds [{}, {}] do not contain F = {f}",
                    report.lower_bound, report.upper_bound
                )));
            }
            let lookup = move |k: BasisKind| -> Result<f64, CliError> {
                let b = ProbeBasis::new(chi.n_qubits(), k)?;
                Ok(average_state_fidelity(&chi, &u, &b, ZeroProbabilityMode::Drop)?.fidelity)
            };
            ("channel", report, Box::new(lookup))
        };
    if let Some([ka, kb]) = pair {
        let value = hofmann_bound(fk_of(ka)?, fk_of(kb)?);
        report.hofmann = Some(HofmannEntry {
            pair: [ka.to_string(), kb.to_string()],
            value,
        });
    }
    let (mut sigma, mut three) = (None, None);
    if let Some(totals) = &a.totals {
        let totals = match totals.len() {
            1 => vec![totals[0]; report.n],
            k if k == report.n => totals.clone(),
            k => return Err(CliError::Usage(format!("{k} totals for {} bases", report.n))),
        };
        let (_, s) = bound_with_uncertainty(&report.fidelities, &totals)?;
        sigma = Some(s);
        three = Some(3.0 * s);
    }
    pretty(&BoundOutput {
        mode,
        report,
        lower_bound_sigma: sigma,
        lower_bound_3sigma: three,
    })
}

fn spectrum_json(s: &BTreeMap<i64, usize>) -> Value {
    Value::Object(s.iter().map(|(k, v)| (k.to_string(), json!(v))).collect())
}

fn cmd_certify(cli: &Cli, a: &CertifyArgs) -> Result<String, CliError> {
    only_json(cli, "certify")?;
    let n = a.n;
    if !(2..=6).contains(&n) {
        return Err(CliError::Usage(format!("certify supports 2 <= n <= 6, got {n}")));
    }
    let u = cnz_unitary(n)?;
    let r_full = r_operator(&u)?;
    let r_min = scaled_min_eigenvalue(&r_full)?;
    let r_prime = r_prime_operator(&u)?;
    let r_prime_min = scaled_min_eigenvalue(&r_prime)?;
    let difference_min = scaled_min_eigenvalue(&(&r_full - &r_prime))?;
    drop((r_full, r_prime));

    let mut bases = standard_bases(n)?;
    bases.push(gatebound::probes::probe_basis_all_hadamard(n)?);
    let mut r_k_checks = Vec::new();
    let mut r_k_ok = true;
    for b in &bases {
        let m = r_k_excess_min_eigenvalue(&u, b)?;
        r_k_ok &= m >= -1e-10;
        r_k_checks.push(json!({"basis": b.kind().to_string(), "min_eigenvalue": m}));
    }

    let spectrum = t_tilde_spectrum(n)?;
    let zero_mult = spectrum.analytic.get(&0).copied().unwrap_or(0);
    let expected_zero = if n == 2 { 7 } else { n + 1 };

    let mut tightness = Vec::new();
    let mut tight_ok = true;
    for t in tightness_states(&u)? {
        let rep = BoundReport::from_unitary(&t.unitary, &u, false)?;
        let f = rep.exact.expect("set for channels");
        let gap = (rep.lower_bound - f).abs();
        tight_ok &= gap <= 1e-9;
        tightness.push(json!({"label": t.label, "lower_bound": rep.lower_bound, "fidelity": f, "gap": gap}));
    }

    let checks = [
        ("r_psd", r_min >= -PSD_TOL),
        ("r_prime_psd", r_prime_min >= -PSD_TOL),
        ("r_minus_r_prime_psd", difference_min >= -PSD_TOL),
        ("r_k_dominates_target", r_k_ok),
        ("spectra_agree", spectrum.agree()),
        ("spectrum_nonnegative", spectrum.min_eigenvalue() >= 0),
        ("zero_multiplicity", zero_mult == expected_zero),
        ("tightness", tight_ok),
    ];
    let passed = checks.iter().all(|(_, ok)| *ok);
    let report = json!({
        "n": n,
        "passed": passed,
        "checks": Value::Object(checks.iter().map(|(k, v)| (k.to_string(), json!(v))).collect()),
        "r_min_eigenvalue": r_min,
        "r_prime_min_eigenvalue": r_prime_min,
        "r_minus_r_prime_min_eigenvalue": difference_min,
        "r_k_minus_target": r_k_checks,
        "spectrum": {
            "analytic": spectrum_json(&spectrum.analytic),
            "numeric": spectrum_json(&spectrum.numeric),
            "zero_multiplicity": zero_mult,
            "expected_zero_multiplicity": expected_zero,
            "bell_residual": spectrum.bell_residual,
            "rounding_residual": spectrum.rounding_residual,
        },
        "tightness": tightness,
    });
    let text = pretty(&report)?;
    if !passed {
        let failed: Vec<&str> = checks.iter().filter(|(_, ok)| !ok).map(|(k, _)| *k).collect();
        return Err(CliError::Validation(format!("{text}certification failed: {}", failed.join(", "))));
    }
    Ok(text)
}

fn count_mode(cli: &Cli) -> Result<(CountMode, u64), CliError> {
    if cli.expectation {
        Ok((CountMode::Expectation, cli.seed.unwrap_or(0)))
    } else {
        Ok((CountMode::Poisson, require_seed(cli)?))
    }
}

fn cmd_simulate(cli: &Cli, a: &SimulateArgs) -> Result<Output, CliError> {
    let (chi, u) = a.channel.build()?;
    let n = chi.n_qubits();
    let bases: Vec<ProbeBasis> = match &a.basis {
        Some(k) => vec![ProbeBasis::new(n, k.parse()?)?],
        None => {
            let mut v = standard_bases(n)?;
            if a.conjugate {
                v.push(gatebound::probes::probe_basis_all_hadamard(n)?);
            }
            v
        }
    };
    if a.truth_table {
        let mut text = String::new();
        for b in &bases {
            text.push_str(&format!("basis {}\n", b.kind()));
            text.push_str(&render_truth_table(&truth_table(&chi, b)?, b));
            text.push('\n');
        }
        return Ok(text.into());
    }
    let (mode, seed) = count_mode(cli)?;
    let tables = bases
        .iter()
        .map(|b| simulate_counts(&chi, &u, b, a.mean_total, seed, mode))
        .collect::<gatebound::Result<Vec<_>>>()?;
    let mut files = Vec::new();
    if let Some(dir) = &a.counts {
        for t in &tables {
            let name = format!("counts_{}.csv", t.basis.to_string().replace('\'', "p"));
            files.push((dir.join(name), t.to_csv()?));
        }
    }
    let text = match cli.format {
        Format::Csv => {
            let mut out = String::new();
            for (i, t) in tables.iter().enumerate() {
                let csv = t.to_csv()?;
                // one header for the concatenated tables
                out.push_str(if i == 0 { &csv } else { csv.split_once('\n').map_or("", |x| x.1) });
            }
            out
        }
        Format::Json => {
            if a.basis.is_some() {
                estimate_from_counts(&tables[0])?.to_json()? + "\n"
            } else {
                full_protocol(&chi, &u, a.mean_total, seed, mode, a.conjugate)?.to_json()? + "\n"
            }
        }
    };
    Ok(Output { text, files })
}

fn cmd_mc(cli: &Cli, a: &McArgs) -> Result<String, CliError> {
    only_json(cli, "mc")?;
    let (chi, u) = a.channel.build()?;
    let seed = require_seed(cli)?;
    let shots = if cli.expectation { None } else { Some(a.shots) };
    let est = mc_estimate(&chi, &u, a.epsilon, a.p, seed, shots)?;
    Ok(est.to_report_json()? + "\n")
}

fn optics_params(spec: &str) -> Result<OpticsParams, CliError> {
    let text = if spec.trim() == "ideal" {
        spec.to_string()
    } else {
        std::fs::read_to_string(spec).map_err(|e| CliError::Io(format!("{spec}: {e}")))?
    };
    Ok(OpticsParams::from_config(&text)?)
}

fn cmd_optics(cli: &Cli, a: &OpticsArgs) -> Result<String, CliError> {
    let p = optics_params(&a.params)?;
    let events = coincidence_events(&p)?;
    if cli.format == Format::Csv {
        let mut out = String::from("j,input,success,failure\n");
        for ev in &events {
            out.push_str(&format!(
                "{},{:03b},{:.16e},{:.16e}\n",
                ev.input + 1,
                ev.input,
                ev.success_probability,
                ev.failure_probability
            ));
        }
        return Ok(out);
    }
    let chi = choi_from_optics(&p, a.dephasing)?;
    let u = cnz_unitary(3)?;
    let a_op = effective_operator(&p)?;
    let bounds = BoundReport::from_channel(&chi, &u, true)?;
    let report = json!({
        "params": to_value(&p)?,
        "dephasing": a.dephasing,
        "success": events.iter().map(|e| e.success_probability).collect::<Vec<_>>(),
        "effective_operator": a_op.as_slice().iter().map(|z| [z.re, z.im]).collect::<Vec<_>>(),
        "process_fidelity": process_fidelity(&chi, &u)?,
        "bounds": to_value(&bounds)?,
        "choi": serde_json::from_str::<Value>(&chi.to_json()?).map_err(|e| CliError::Validation(e.to_string()))?,
    });
    pretty(&report)
}

/// Parses comma-separated single-qubit tokens and `phi+` pairs.
pub fn parse_input_state(text: &str) -> Result<PureState, CliError> {
    use SingleQubitState::*;
    let mut state: Option<PureState> = None;
    for token in text.split(',').map(str::trim) {
        let part = match token {
            "0" => PureState::product(&[Zero]),
            "1" => PureState::product(&[One]),
            "+" => PureState::product(&[Plus]),
            "-" => PureState::product(&[Minus]),
            "+i" => PureState::product(&[PlusI]),
            "-i" => PureState::product(&[MinusI]),
            "phi+" => PureState::phi_plus(1),
            other => return Err(CliError::Usage(format!("unknown input token {other:?}"))),
        };
        state = Some(match state {
            None => part,
            Some(s) => s.kron(&part),
        });
    }
    state.ok_or_else(|| CliError::Usage("empty input state".into()))
}

fn cmd_ghz(cli: &Cli, a: &GhzArgs) -> Result<String, CliError> {
    only_json(cli, "ghz")?;
    let input = parse_input_state(&a.input)?;
    let n = input.n_qubits();
    let ideal = gatebound::expsim::ghz_output(&input)?;
    let actual = match &a.optics {
        Some(spec) => {
            if n != 3 {
                return Err(CliError::Usage("the optical gate acts on three qubits".into()));
            }
            let chi = choi_from_optics(&optics_params(spec)?, a.dephasing)?;
            apply_channel(&chi, &DensityMatrix::from_pure(&input))?.normalized()?
        }
        None => DensityMatrix::from_pure(&ideal.output),
    };
    let projectors = product_projectors(n);
    let data = if cli.expectation {
        TomographyData::exact(&actual, projectors, a.total)
    } else {
        TomographyData::simulated(&actual, projectors, a.total, require_seed(cli)?)
    };
    let result = tomography_mle(&data, Some(&ideal.output))?;
    let tomography = result.report();
    let phase_compensation = a
        .compensate
        .map(|site| phase_compensate(&result.rho, &ideal.output, site))
        .transpose()?;
    pretty(&GhzOutput {
        input: &a.input,
        cut_weights: &ideal.cut_weights,
        tomography,
        phase_compensation,
    })
}

#[derive(Serialize)]
struct GhzOutput<'a> {
    input: &'a str,
    cut_weights: &'a [f64],
    tomography: TomographyReport,
    phase_compensation: Option<PhaseCompensation>,
}

fn cmd_settings(cli: &Cli, a: &SettingsArgs) -> Result<String, CliError> {
    only_json(cli, "settings-account")?;
    let u: ComplexMatrix = channel::target_unitary(&a.target, a.n)?;
    let exp = pauli_expansion(&u)?;
    let account = settings_account(&exp);
    let (bound_settings, bound_single) = bound_method_settings(a.n);
    let scaling = if a.n >= 2 { Some(to_value(&certification_scaling(a.n)?)?) } else { None };
    pretty(&json!({
        "target": a.target,
        "n": a.n,
        "nonzero_pairs": exp.len(),
        "monte_carlo": to_value(&account)?,
        "bound_method": {"settings": bound_settings, "settings_single_outcome": bound_single},
        "scaling": scaling,
    }))
}
