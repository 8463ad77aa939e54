//! Python module `pygatebound`. Matrices cross the boundary as nested
//! lists of complex numbers; reports come back as small classes or JSON.

use std::collections::BTreeMap;

use gatebound::channels::{self, ChoiMatrix, KrausSet, PureState};
use gatebound::expsim::{self, CountMode};
use gatebound::optics::{self, OpticsParams};
use gatebound::probes::{self, BoundReport, ProbeBasis, ZeroProbabilityMode};
use gatebound::qmath::ComplexMatrix;
use gatebound::sampling;
use num_complex::Complex64;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

type Rows = Vec<Vec<Complex64>>;

fn err(e: gatebound::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn to_matrix(rows: Rows) -> PyResult<ComplexMatrix> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(PyValueError::new_err("ragged matrix"));
    }
    ComplexMatrix::from_vec(r, c, rows.into_iter().flatten().collect()).map_err(err)
}

fn to_rows(m: &ComplexMatrix) -> Rows {
    (0..m.rows()).map(|i| m.row(i).to_vec()).collect()
}

/// A quantum operation stored as its Choi matrix (trace `2^n` when
/// trace preserving).
#[pyclass(name = "Channel", module = "pygatebound", from_py_object)]
#[derive(Clone)]
struct PyChannel {
    inner: ChoiMatrix,
}

#[pymethods]
impl PyChannel {
    #[staticmethod]
    fn unitary(u: Rows) -> PyResult<Self> {
        let inner = channels::choi_of_unitary(&to_matrix(u)?).map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn kraus(ops: Vec<Rows>) -> PyResult<Self> {
        let ops = ops.into_iter().map(to_matrix).collect::<PyResult<Vec<_>>>()?;
        let set = KrausSet::new(ops).map_err(err)?;
        Ok(Self {
            inner: channels::choi_of_kraus(&set),
        })
    }

    /// Phase-flip mixture `sum_m w_m chi_{U Sigma_m}`.
    #[staticmethod]
    fn phase_flip_mixture(u: Rows, weights: Vec<f64>) -> PyResult<Self> {
        let inner = channels::phase_flip_mixture(&to_matrix(u)?, &weights).map_err(err)?;
        Ok(Self { inner })
    }

    /// The optical CCZ gate in the coincidence basis.
    #[staticmethod]
    #[pyo3(signature = (visibility=1.0, phi0=0.0, dephasing=0.0))]
    fn optics(visibility: f64, phi0: f64, dephasing: f64) -> PyResult<Self> {
        let p = OpticsParams {
            visibility,
            phi0,
            ..OpticsParams::ideal()
        };
        p.validate().map_err(err)?;
        let inner = optics::choi_from_optics(&p, dephasing).map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: ChoiMatrix::from_json(text).map_err(err)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(err)
    }

    #[getter]
    fn n_qubits(&self) -> usize {
        self.inner.n_qubits()
    }

    #[getter]
    fn trace(&self) -> f64 {
        self.inner.trace()
    }

    fn matrix(&self) -> Rows {
        to_rows(self.inner.matrix())
    }

    fn depolarize(&self, q: f64) -> PyResult<Self> {
        Ok(Self {
            inner: channels::depolarizing(&self.inner, q).map_err(err)?,
        })
    }

    /// Input filter transmitting basis state `j` with intensity `t[j]`.
    fn with_loss(&self, transmission: Vec<f64>) -> PyResult<Self> {
        Ok(Self {
            inner: channels::state_dependent_loss(&self.inner, &transmission).map_err(err)?,
        })
    }

    fn process_fidelity(&self, u: Rows) -> PyResult<f64> {
        channels::process_fidelity(&self.inner, &to_matrix(u)?).map_err(err)
    }

    /// Weighted average state fidelity in basis `1..n`, `n'` or `H`.
    fn basis_fidelity(&self, u: Rows, basis: &str) -> PyResult<f64> {
        let kind = basis.parse().map_err(err)?;
        let b = ProbeBasis::new(self.inner.n_qubits(), kind).map_err(err)?;
        let f = probes::average_state_fidelity(&self.inner, &to_matrix(u)?, &b, ZeroProbabilityMode::Drop)
            .map_err(err)?;
        Ok(f.fidelity)
    }

    #[pyo3(signature = (u, conjugate=false))]
    fn bounds(&self, u: Rows, conjugate: bool) -> PyResult<PyBounds> {
        let r = BoundReport::from_channel(&self.inner, &to_matrix(u)?, conjugate).map_err(err)?;
        Ok(PyBounds::from(r))
    }

    fn __repr__(&self) -> String {
        format!("Channel(n_qubits={}, trace={})", self.inner.n_qubits(), self.inner.trace())
    }
}

#[pyclass(name = "Bounds", module = "pygatebound", get_all, skip_from_py_object)]
#[derive(Clone)]
struct PyBounds {
    fidelities: Vec<f64>,
    lower_bound: f64,
    upper_bound: f64,
    hofmann: Option<f64>,
    exact: Option<f64>,
    json: String,
}

impl From<BoundReport> for PyBounds {
    fn from(r: BoundReport) -> Self {
        Self {
            json: r.to_json().unwrap_or_default(),
            fidelities: r.fidelities,
            lower_bound: r.lower_bound,
            upper_bound: r.upper_bound,
            hofmann: r.hofmann.map(|h| h.value),
            exact: r.exact,
        }
    }
}

#[pymethods]
impl PyBounds {
    fn to_json(&self) -> String {
        self.json.clone()
    }

    fn __repr__(&self) -> String {
        format!(
            "Bounds(lower={}, upper={}, exact={:?})",
            self.lower_bound, self.upper_bound, self.exact
        )
    }
}

#[pyfunction]
fn cnz_unitary(n: usize) -> PyResult<Rows> {
    Ok(to_rows(&channels::cnz_unitary(n).map_err(err)?))
}

#[pyfunction]
#[pyo3(signature = (target=3))]
fn toffoli_unitary(target: usize) -> PyResult<Rows> {
    Ok(to_rows(&channels::toffoli_unitary(target).map_err(err)?))
}

#[pyfunction]
fn lower_bound(fidelities: Vec<f64>) -> f64 {
    probes::lower_bound_nqubit(&fidelities)
}

#[pyfunction]
fn hofmann_bound(f_a: f64, f_b: f64) -> f64 {
    probes::hofmann_bound(f_a, f_b)
}

#[pyfunction]
fn upper_bound(fidelities: Vec<f64>) -> PyResult<f64> {
    probes::upper_bound(&fidelities).map_err(err)
}

#[pyfunction]
fn bounds_from_fidelities(fidelities: Vec<f64>, conjugate: Option<f64>) -> PyResult<PyBounds> {
    Ok(BoundReport::from_fidelities(&fidelities, conjugate, None)
        .map_err(err)?
        .into())
}

/// Multiplicities of the integer eigenvalues of the regrouped operator.
#[pyfunction]
fn t_tilde_spectrum(n: usize) -> PyResult<BTreeMap<i64, usize>> {
    let r = probes::t_tilde_spectrum(n).map_err(err)?;
    if !r.agree() {
        return Err(PyValueError::new_err("analytic and numeric spectra differ"));
    }
    Ok(r.analytic)
}

#[pyfunction]
fn identity_fidelity(n: usize) -> f64 {
    channels::identity_fidelity(n)
}

/// Simulated protocol over all bases; returns the JSON report.
#[pyfunction]
#[pyo3(signature = (channel, u, mean_total, seed, expectation=false, conjugate=false))]
fn simulate(
    channel: &PyChannel,
    u: Rows,
    mean_total: f64,
    seed: u64,
    expectation: bool,
    conjugate: bool,
) -> PyResult<String> {
    let mode = if expectation {
        CountMode::Expectation
    } else {
        CountMode::Poisson
    };
    expsim::full_protocol(&channel.inner, &to_matrix(u)?, mean_total, seed, mode, conjugate)
        .and_then(|r| r.to_json())
        .map_err(err)
}

#[pyfunction]
#[pyo3(signature = (channel, u, epsilon, p, seed, shots=None))]
fn mc_estimate(channel: &PyChannel, u: Rows, epsilon: f64, p: f64, seed: u64, shots: Option<u64>) -> PyResult<(f64, usize)> {
    let e = sampling::mc_estimate(&channel.inner, &to_matrix(u)?, epsilon, p, seed, shots).map_err(err)?;
    Ok((e.estimate, e.settings_used))
}

/// `U_CNZ |psi>` and the largest Schmidt weight across each single-qubit cut.
#[pyfunction]
fn ghz_output(amplitudes: Vec<Complex64>) -> PyResult<(Vec<Complex64>, Vec<f64>)> {
    let input = PureState::new(amplitudes).map_err(err)?;
    let r = expsim::ghz_output(&input).map_err(err)?;
    Ok((r.output.amplitudes().to_vec(), r.cut_weights))
}

#[pymodule]
fn pygatebound(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyChannel>()?;
    m.add_class::<PyBounds>()?;
    m.add_function(wrap_pyfunction!(cnz_unitary, m)?)?;
    m.add_function(wrap_pyfunction!(toffoli_unitary, m)?)?;
    m.add_function(wrap_pyfunction!(lower_bound, m)?)?;
    m.add_function(wrap_pyfunction!(hofmann_bound, m)?)?;
    m.add_function(wrap_pyfunction!(upper_bound, m)?)?;
    m.add_function(wrap_pyfunction!(bounds_from_fidelities, m)?)?;
    m.add_function(wrap_pyfunction!(t_tilde_spectrum, m)?)?;
    m.add_function(wrap_pyfunction!(identity_fidelity, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(mc_estimate, m)?)?;
    m.add_function(wrap_pyfunction!(ghz_output, m)?)?;
    Ok(())
}
