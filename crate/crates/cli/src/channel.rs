//! Turning command-line channel options into a Choi matrix and a target.

use std::path::{Path, PathBuf};

use clap::Args;
use gatebound::channels::{
    choi_of_kraus, choi_of_unitary, cnz_unitary, conjugate_input, depolarizing, mix, sigma_m,
    state_dependent_loss, toffoli_unitary, ChoiMatrix, KrausSet,
};
use gatebound::optics::{choi_from_optics, OpticsParams};
use gatebound::probes::anti_overestimate_fixture;
use gatebound::qmath::{ComplexMatrix, C64};
use serde::Deserialize;

use crate::CliError;

#[derive(Args, Debug, Clone)]
pub struct ChannelArgs {
    /// Number of qubits for presets and targets
    #[arg(long, default_value_t = 3)]
    pub n: usize,

    /// Built-in channel: ccz-ideal (the n-qubit CNZ), identity, toffoli, loss-fixture
    #[arg(long, value_name = "NAME")]
    pub preset: Option<String>,

    /// JSON file {"n_qubits": n, "kraus": [[[re, im], ...], ...]} with row-major operators
    #[arg(long, value_name = "FILE")]
    pub kraus: Option<PathBuf>,

    /// JSON file holding a Choi matrix in the unnormalized convention
    #[arg(long, value_name = "FILE")]
    pub choi: Option<PathBuf>,

    /// Optical gate model: "ideal" or a JSON parameter file
    #[arg(long, value_name = "PARAMS")]
    pub optics: Option<String>,

    /// Dephasing between interferometer arms for the optical model, in [0, 1]
    #[arg(long, default_value_t = 0.0, value_name = "D")]
    pub dephasing: f64,

    /// Noise applied in order: vm-mixture:uniform, vm-mixture:W0,...,Wn, depolarizing:Q, loss:T1,...,Td
    #[arg(long, value_name = "SPEC")]
    pub noise: Vec<String>,

    /// Ideal gate: cnz, ccz, toffoli or identity (default follows the preset, else cnz)
    #[arg(long, value_name = "NAME")]
    pub target: Option<String>,
}

#[derive(Deserialize)]
struct KrausFile {
    n_qubits: usize,
    kraus: Vec<Vec<[f64; 2]>>,
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn read(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

pub fn target_unitary(name: &str, n: usize) -> Result<ComplexMatrix, CliError> {
    Ok(match name {
        "cnz" | "ccz" | "ccz-ideal" | "loss-fixture" => cnz_unitary(n)?,
        "toffoli" => {
            if n != 3 {
                return Err(usage("the Toffoli target needs --n 3"));
            }
            toffoli_unitary(3)?
        }
        "identity" => ComplexMatrix::identity(1 << n),
        other => return Err(usage(format!("unknown target {other:?}"))),
    })
}

fn parse_list(text: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|_| usage(format!("bad number {x:?}"))))
        .collect()
}

fn apply_noise(chi: ChoiMatrix, spec: &str) -> Result<ChoiMatrix, CliError> {
    let n = chi.n_qubits();
    let (kind, arg) = spec.split_once(':').unwrap_or((spec, ""));
    match kind {
        "vm-mixture" => {
            let weights = if arg == "uniform" {
                vec![1.0 / (n + 1) as f64; n + 1]
            } else {
                parse_list(arg)?
            };
            if weights.len() != n + 1 {
                return Err(usage(format!("vm-mixture needs {} weights", n + 1)));
            }
            let mut parts = vec![chi.clone()];
            for m in 1..=n {
                parts.push(conjugate_input(&chi, &sigma_m(n, m)?)?);
            }
            let pairs: Vec<(f64, &ChoiMatrix)> = weights.iter().copied().zip(parts.iter()).collect();
            Ok(mix(&pairs)?)
        }
        "depolarizing" => {
            let q: f64 = arg.parse().map_err(|_| usage(format!("bad depolarizing strength {arg:?}")))?;
            Ok(depolarizing(&chi, q)?)
        }
        "loss" => Ok(state_dependent_loss(&chi, &parse_list(arg)?)?),
        other => Err(usage(format!("unknown noise {other:?}"))),
    }
}

impl ChannelArgs {
    fn source_count(&self) -> usize {
        [
            self.preset.is_some(),
            self.kraus.is_some(),
            self.choi.is_some(),
            self.optics.is_some(),
        ]
        .iter()
        .filter(|&&b| b)
        .count()
    }

    pub fn has_source(&self) -> bool {
        self.source_count() > 0
    }

    /// The channel and its target unitary.
    pub fn build(&self) -> Result<(ChoiMatrix, ComplexMatrix), CliError> {
        if self.source_count() != 1 {
            return Err(usage(
                "give exactly one of --preset, --kraus, --choi, --optics",
            ));
        }
        let mut n = self.n;
        let mut default_target = "cnz";
        let chi = if let Some(name) = &self.preset {
            match name.as_str() {
                "ccz-ideal" | "cnz" => choi_of_unitary(&cnz_unitary(n)?)?,
                "identity" => choi_of_unitary(&ComplexMatrix::identity(1 << n))?,
                "toffoli" => {
                    default_target = "toffoli";
                    choi_of_unitary(&target_unitary("toffoli", n)?)?
                }
                "loss-fixture" => {
                    n = 3;
                    anti_overestimate_fixture()?.0
                }
                other => return Err(usage(format!("unknown preset {other:?}"))),
            }
        } else if let Some(path) = &self.kraus {
            let file: KrausFile = serde_json::from_str(&read(path)?)
                .map_err(|e| usage(format!("{}: {e}", path.display())))?;
            n = file.n_qubits;
            let d = 1usize << n;
            let ops = file
                .kraus
                .iter()
                .map(|entries| {
                    let data = entries.iter().map(|[re, im]| C64::new(*re, *im)).collect();
                    ComplexMatrix::from_vec(d, d, data)
                })
                .collect::<gatebound::Result<Vec<_>>>()?;
            choi_of_kraus(&KrausSet::new(ops)?)
        } else if let Some(path) = &self.choi {
            let chi = ChoiMatrix::from_json(&read(path)?)?;
            n = chi.n_qubits();
            chi
        } else {
            let spec = self.optics.as_deref().expect("one source is set");
            let text = if spec.trim() == "ideal" { spec.to_string() } else { read(Path::new(spec))? };
            n = 3;
            choi_from_optics(&OpticsParams::from_config(&text)?, self.dephasing)?
        };
        let mut chi = chi;
        for spec in &self.noise {
            chi = apply_noise(chi, spec)?;
        }
        let u = target_unitary(self.target.as_deref().unwrap_or(default_target), n)?;
        if u.rows() != chi.dim() {
            return Err(usage("target and channel sizes differ"));
        }
        Ok((chi, u))
    }
}
