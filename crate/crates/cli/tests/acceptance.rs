//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits nonzero if any fails.

use std::f64::consts::PI;
use std::process::{Command, ExitCode};
use std::time::{Duration, Instant};

use gatebound::channels::{
    choi_of_unitary, cnz_unitary, identity_fidelity, on_qubit, phase_flip_mixture, process_fidelity,
    toffoli_unitary, DensityMatrix, PureState, SingleQubitState,
};
use gatebound::expsim::{
    bound_with_uncertainty, estimate_from_counts, ghz_output, phase_compensate, product_projectors,
    simulate_counts, tomography_mle, CountMode, TomographyData,
};
use gatebound::optics::{coincidence_events, effective_operator, propagate_input, OpticsParams};
use gatebound::probes::{
    anti_overestimate_fixture, average_state_fidelity, hofmann_bound, lower_bound_nqubit, probe_basis,
    probe_basis_all_hadamard, r_k_excess_min_eigenvalue, r_operator, r_prime_operator, standard_bases,
    t_tilde_spectrum, tightness_states, upper_bound, BoundReport, ZeroProbabilityMode,
};
use gatebound::qmath::{ComplexMatrix, C64};
use gatebound::random::random_unitary;
use gatebound::sampling::{
    bound_method_settings, full_resummation, mc_estimate, pauli_expansion, required_settings,
    settings_account,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[path = "../../core/tests/common/mod.rs"]
mod common;

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn within(elapsed: Duration, limit: Duration) -> Result<(), String> {
    ensure(elapsed < limit, format!("took {elapsed:?}, limit {limit:?}"))
}

fn bound_arithmetic() -> Check {
    let start = Instant::now();
    let f = [0.928, 0.947, 0.955];
    let lb = lower_bound_nqubit(&f);
    ensure((lb - 0.830).abs() <= 1e-12, format!("lower bound {lb}"))?;
    let (b, sigma) = bound_with_uncertainty(&f, &[8.0 * 6.6e4; 3]).map_err(|e| e.to_string())?;
    ensure(b == lb, "bound differs between paths")?;
    ensure((3.0 * sigma - 0.002).abs() <= 0.001, format!("3 sigma = {}", 3.0 * sigma))?;
    within(start.elapsed(), Duration::from_secs(1))?;
    Ok(format!("bound {lb:.3}, 3 sigma {:.4}", 3.0 * sigma))
}

fn hofmann_pair() -> Check {
    let h = hofmann_bound(0.955, 0.921);
    let up = upper_bound(&[0.928, 0.947, 0.955, 0.921]).map_err(|e| e.to_string())?;
    ensure((h - 0.876).abs() <= 1e-12, format!("hofmann {h}"))?;
    ensure((up - 0.921).abs() <= 1e-12, format!("upper {up}"))?;
    Ok(format!("hofmann {h:.3}, upper {up:.3}"))
}

fn min_eig(a: &ComplexMatrix) -> Result<f64, String> {
    let ev = a.eigvalsh().map_err(|e| e.to_string())?;
    Ok(ev.iter().copied().fold(f64::INFINITY, f64::min))
}

fn psd_certification() -> Check {
    let start = Instant::now();
    let u = cnz_unitary(3).map_err(|e| e.to_string())?;
    let r = r_operator(&u).map_err(|e| e.to_string())?;
    let r_prime = r_prime_operator(&u).map_err(|e| e.to_string())?;
    let mut worst = min_eig(&r)?;
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    for _ in 0..50 {
        let v = random_unitary(8, &mut rng);
        worst = worst.min(min_eig(&r_operator(&v).map_err(|e| e.to_string())?)?);
    }
    ensure(worst >= -1e-9, format!("R min eigenvalue {worst}"))?;
    let diff = min_eig(&(&r - &r_prime))?;
    ensure(diff >= -1e-9, format!("R - R' min eigenvalue {diff}"))?;
    let mut bases = standard_bases(3).map_err(|e| e.to_string())?;
    bases.push(probe_basis_all_hadamard(3).map_err(|e| e.to_string())?);
    let mut excess = f64::INFINITY;
    for b in &bases {
        excess = excess.min(r_k_excess_min_eigenvalue(&u, b).map_err(|e| e.to_string())?);
    }
    ensure(excess >= -1e-10, format!("R_k - chi/8 min eigenvalue {excess}"))?;
    within(start.elapsed(), Duration::from_secs(120))?;
    Ok(format!("min eig R {worst:.1e}, R-R' {diff:.1e}, R_k excess {excess:.1e}"))
}

fn spectrum() -> Check {
    let mut zeros = Vec::new();
    for n in 2..=5 {
        let rep = t_tilde_spectrum(n).map_err(|e| e.to_string())?;
        ensure(rep.agree(), format!("n={n}: spectra differ"))?;
        ensure(rep.min_eigenvalue() >= 0, format!("n={n}: negative eigenvalue"))?;
        let z = rep.analytic.get(&0).copied().unwrap_or(0);
        let expected = if n == 2 { 7 } else { n + 1 };
        ensure(z == expected, format!("n={n}: zero multiplicity {z}"))?;
        zeros.push(z);
    }
    Ok(format!("zero multiplicities {zeros:?}"))
}

fn sandwich() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    let mut violations = 0;
    for i in 0..500 {
        let n = 2 + i % 3;
        let u = common::random_target(n, &mut rng);
        let chi = common::random_test_channel(&u, &mut rng);
        let rep = BoundReport::from_channel(&chi, &u, false).map_err(|e| e.to_string())?;
        let f = rep.exact.unwrap_or(f64::NAN);
        let min_fk = rep.fidelities.iter().copied().fold(1.0, f64::min);
        if !(rep.lower_bound <= f + 1e-9 && f <= min_fk + 1e-9) {
            violations += 1;
        }
    }
    ensure(violations == 0, format!("{violations} violations"))?;
    Ok("500 channels, 0 violations".into())
}

fn tightness() -> Check {
    let mut cases = 0;
    let mut worst: f64 = 0.0;
    for n in 2..=4 {
        let u = cnz_unitary(n).map_err(|e| e.to_string())?;
        for s in tightness_states(&u).map_err(|e| e.to_string())? {
            let rep = BoundReport::from_channel(&s.choi(), &u, false).map_err(|e| e.to_string())?;
            let gap = (rep.lower_bound - rep.exact.unwrap_or(f64::NAN)).abs();
            ensure(gap <= 1e-9, format!("n={n} {}: gap {gap}", s.label))?;
            worst = worst.max(gap);
            cases += 1;
        }
    }
    let u = cnz_unitary(3).map_err(|e| e.to_string())?;
    let chi = phase_flip_mixture(&u, &[0.25; 4]).map_err(|e| e.to_string())?;
    let rep = BoundReport::from_channel(&chi, &u, false).map_err(|e| e.to_string())?;
    let f = rep.exact.unwrap_or(f64::NAN);
    ensure(
        (rep.lower_bound - 0.25).abs() <= 1e-9 && (f - 0.25).abs() <= 1e-9,
        format!("uniform mixture: bound {}, fidelity {f}", rep.lower_bound),
    )?;
    Ok(format!("{cases} tight cases, worst gap {worst:.1e}, uniform mixture 0.25"))
}

fn identity() -> Check {
    for n in 1..=6 {
        let u = cnz_unitary(n).map_err(|e| e.to_string())?;
        let chi = choi_of_unitary(&u).map_err(|e| e.to_string())?;
        let f = process_fidelity(&chi, &ComplexMatrix::identity(1 << n)).map_err(|e| e.to_string())?;
        let closed = identity_fidelity(n);
        ensure((f - closed).abs() <= 1e-10, format!("n={n}: {f} vs {closed}"))?;
    }
    let f3 = identity_fidelity(3);
    ensure((f3 - 0.5625).abs() <= 1e-10, format!("n=3 value {f3}"))?;
    Ok(format!("n=1..6 agree, n=3 {f3}"))
}

fn optics() -> Check {
    let p = OpticsParams::ideal();
    let a = effective_operator(&p).map_err(|e| e.to_string())?;
    let target = cnz_unitary(3).map_err(|e| e.to_string())?.scale(C64::new(1.0 / 3.0, 0.0));
    let dev = a.max_abs_diff(&target);
    ensure(dev <= 1e-12, format!("effective operator off by {dev}"))?;
    for ev in coincidence_events(&p).map_err(|e| e.to_string())? {
        let s = ev.success_probability;
        ensure((s - 1.0 / 9.0).abs() <= 1e-12, format!("success probability {s}"))?;
    }
    let mut params = vec![p];
    params.push(OpticsParams { t_h: 0.9, t_v: 0.4, balance: [0.7, 0.5], visibility: 0.8, phi0: 0.3 });
    params.push(OpticsParams { visibility: 0.0, phi0: -1.2, ..OpticsParams::ideal() });
    let mut norm_dev: f64 = 0.0;
    for q in &params {
        for j in 0..8 {
            let norm = propagate_input(q, j).map_err(|e| e.to_string())?.norm_sqr();
            norm_dev = norm_dev.max((norm - 1.0).abs());
        }
    }
    ensure(norm_dev <= 1e-10, format!("norm deviation {norm_dev}"))?;
    Ok(format!("operator off by {dev:.1e}, success 1/9, norm deviation {norm_dev:.1e}"))
}

fn monte_carlo() -> Check {
    let start = Instant::now();
    let exp = pauli_expansion(&toffoli_unitary(3).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    ensure(exp.len() == 232, format!("{} pairs", exp.len()))?;
    let acc = settings_account(&exp);
    let triple = (acc.nontrivial_averages, acc.settings, acc.settings_single_outcome);
    ensure(triple == (63, 504, 4032), format!("settings {triple:?}"))?;
    ensure(bound_method_settings(3) == (24, 192), "bound method settings")?;

    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for i in 0..100 {
        let n = 1 + i % 3;
        let u = common::random_target(n, &mut rng);
        let chi = common::random_test_channel(&u, &mut rng);
        let e = pauli_expansion(&u).map_err(|e| e.to_string())?;
        let f = process_fidelity(&chi, &u).map_err(|e| e.to_string())?;
        let s = full_resummation(&chi, &e).map_err(|e| e.to_string())?;
        ensure((s - f).abs() <= 1e-9, format!("resummation case {i}: {s} vs {f}"))?;
    }
    let m = required_settings(0.01, 0.9).map_err(|e| e.to_string())?;
    ensure(m == 100_000, format!("M = {m}"))?;

    let (chi, u) = anti_overestimate_fixture().map_err(|e| e.to_string())?;
    let f = process_fidelity(&chi, &u).map_err(|e| e.to_string())?;
    let (eps, p, trials) = (0.1, 0.9, 200u64);
    let mut inside = 0;
    for s in 0..trials {
        let est = mc_estimate(&chi, &u, eps, p, s, None).map_err(|e| e.to_string())?;
        if (est.estimate - f).abs() < eps {
            inside += 1;
        }
    }
    let slack = 3.0 * (p * (1.0 - p) / trials as f64).sqrt();
    let rate = inside as f64 / trials as f64;
    ensure(rate >= p - slack, format!("coverage {inside}/{trials}"))?;
    within(start.elapsed(), Duration::from_secs(600))?;
    Ok(format!("232 pairs, (63, 504, 4032), (24, 192), M = {m}, coverage {rate:.3}"))
}

fn estimator() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut worst: f64 = 0.0;
    for i in 0..30 {
        let n = 1 + i % 3;
        let u = common::random_target(n, &mut rng);
        let chi = common::random_test_channel(&u, &mut rng);
        for b in standard_bases(n).map_err(|e| e.to_string())? {
            let exact = average_state_fidelity(&chi, &u, &b, ZeroProbabilityMode::Drop).map_err(|e| e.to_string())?;
            let t = simulate_counts(&chi, &u, &b, 1e9, 0, CountMode::Expectation).map_err(|e| e.to_string())?;
            let est = estimate_from_counts(&t).map_err(|e| e.to_string())?;
            worst = worst.max((est.fidelity - exact.fidelity).abs());
        }
    }
    ensure(worst <= 1e-10, format!("expectation mode off by {worst}"))?;

    let (chi, u) = anti_overestimate_fixture().map_err(|e| e.to_string())?;
    let b = probe_basis(3, 2).map_err(|e| e.to_string())?;
    let truth = average_state_fidelity(&chi, &u, &b, ZeroProbabilityMode::Strict)
        .map_err(|e| e.to_string())?
        .fidelity;
    let reps = 300;
    let mut covered = 0;
    for s in 0..reps {
        let t = simulate_counts(&chi, &u, &b, 2e4, s, CountMode::Poisson).map_err(|e| e.to_string())?;
        let est = estimate_from_counts(&t).map_err(|e| e.to_string())?;
        if (est.fidelity - truth).abs() <= 3.0 * est.sigma {
            covered += 1;
        }
    }
    let rate = covered as f64 / reps as f64;
    ensure(rate >= 0.99, format!("3 sigma coverage {covered}/{reps}"))?;

    let f = process_fidelity(&chi, &u).map_err(|e| e.to_string())?;
    let per_basis = standard_bases(3)
        .map_err(|e| e.to_string())?
        .iter()
        .map(|b| average_state_fidelity(&chi, &u, b, ZeroProbabilityMode::Drop))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| e.to_string())?;
    let weighted: Vec<f64> = per_basis.iter().map(|b| b.fidelity).collect();
    let unweighted: Vec<f64> = per_basis.iter().map(|b| b.unweighted_mean()).collect();
    let (lw, lu) = (lower_bound_nqubit(&weighted), lower_bound_nqubit(&unweighted));
    ensure(lw <= f && lu > f, format!("fixture: weighted {lw}, unweighted {lu}, F {f}"))?;
    Ok(format!(
        "expectation off by {worst:.1e}, coverage {rate:.3}, fixture F {f:.4} weighted {lw:.4} unweighted {lu:.4}"
    ))
}

fn ghz_pipeline() -> Check {
    use SingleQubitState::{Plus, Zero};
    let input = PureState::phi_plus(1).kron(&PureState::product(&[Plus]));
    let out = ghz_output(&input).map_err(|e| e.to_string())?.output;
    let h = std::f64::consts::FRAC_1_SQRT_2;
    let mut expected = [0.0; 8];
    // (|00+> + |11->)/sqrt2
    expected[0b000] = h * h;
    expected[0b001] = h * h;
    expected[0b110] = h * h;
    expected[0b111] = -h * h;
    let dev = out
        .amplitudes()
        .iter()
        .zip(expected)
        .map(|(a, e)| (a - C64::new(e, 0.0)).norm())
        .fold(0.0, f64::max);
    ensure(dev <= 1e-12, format!("GHZ output off by {dev}"))?;

    // the GHZ-type and stabilizer states the gate produces
    let ghz = |factors: &[SingleQubitState]| ghz_output(&PureState::product(factors)).map(|r| r.output);
    let known = [
        out.clone(),
        ghz(&[Plus, Plus, Plus]).map_err(|e| e.to_string())?,
        ghz(&[Plus, Zero, Plus]).map_err(|e| e.to_string())?,
        PureState::phi_plus(1).kron(&PureState::product(&[Zero])),
        PureState::product(&[Plus, Zero, Plus]),
    ];
    let mut worst = 1.0f64;
    for state in &known {
        let data = TomographyData::exact(&DensityMatrix::from_pure(state), product_projectors(3), 1e6);
        let res = tomography_mle(&data, Some(state)).map_err(|e| e.to_string())?;
        worst = worst.min(res.fidelity_vs_target.unwrap_or(0.0));
    }
    ensure(worst >= 1.0 - 1e-6, format!("tomography fidelity {worst}"))?;

    let target = ghz_output(&PureState::product(&[Plus, Plus, Plus])).map_err(|e| e.to_string())?.output;
    let kick = ComplexMatrix::from_diag(&[C64::new(1.0, 0.0), C64::from_polar(1.0, PI / 11.0)]);
    let gate = on_qubit(3, 1, &kick).map_err(|e| e.to_string())?;
    let rho = DensityMatrix::from_pure(&target).conjugate(&gate).map_err(|e| e.to_string())?;
    let pc = phase_compensate(&rho, &target, 1).map_err(|e| e.to_string())?;
    ensure((pc.phi_opt + PI / 11.0).abs() <= 1e-6, format!("phi_opt {}", pc.phi_opt))?;
    ensure((pc.fidelity_after - 1.0).abs() <= 1e-6, format!("fidelity after {}", pc.fidelity_after))?;
    Ok(format!(
        "output off by {dev:.1e}, tomography fidelity {worst:.9}, phi_opt {:.6}",
        pc.phi_opt
    ))
}

fn determinism() -> Check {
    let runs: [&[&str]; 5] = [
        &["simulate", "--preset", "loss-fixture", "--seed", "3", "--conjugate"],
        &["simulate", "--optics", "ideal", "--noise", "depolarizing:0.1", "--seed", "8", "--format", "csv"],
        &["mc", "--preset", "loss-fixture", "--epsilon", "0.05", "--seed", "2"],
        &["ghz", "--input", "phi+,+", "--optics", "ideal", "--seed", "4", "--compensate", "1"],
        &["bound", "--preset", "loss-fixture", "--conjugate"],
    ];
    for args in runs {
        let mut outputs = Vec::new();
        for threads in ["1", "1", "4"] {
            let out = Command::new(env!("CARGO_BIN_EXE_gatebound"))
                .env("GATEBOUND_THREADS", threads)
                .args(args)
                .output()
                .map_err(|e| e.to_string())?;
            ensure(out.status.success(), format!("{args:?} exited with {}", out.status))?;
            outputs.push(out.stdout);
        }
        ensure(outputs[0] == outputs[1], format!("{args:?} differs between runs"))?;
        ensure(outputs[0] == outputs[2], format!("{args:?} differs between thread counts"))?;
    }
    Ok(format!("{} seeded runs byte-identical at 1 and 4 threads", runs.len()))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Check); 12] = [
        ("bound arithmetic", bound_arithmetic),
        ("hofmann pair", hofmann_pair),
        ("PSD certification", psd_certification),
        ("spectrum", spectrum),
        ("sandwich", sandwich),
        ("tightness", tightness),
        ("identity fidelity", identity),
        ("optics", optics),
        ("monte carlo", monte_carlo),
        ("estimator pipeline", estimator),
        ("GHZ pipeline", ghz_pipeline),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = check();
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("criterion {:>2} {name}: PASS ({detail}; {secs:.2}s)", i + 1),
            Err(why) => {
                failed += 1;
                println!("criterion {:>2} {name}: FAIL ({why}; {secs:.2}s)", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
