//! Acceptance checks, one PASS/FAIL line each. Exits non-zero on failure.

use std::f64::consts::PI;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spinbench::avgham::{decoupling_report, Cycle, CycleName};
use spinbench::compile::{canonical_cnot, canonical_cphase, hadamard_scheme, two_qubit_gate, verify_scheme, Axis, GateKind, SeqItem, Sequence};
use spinbench::composite::{composite_library, fidelity_sweep, CompositeName, ErrorKind, RotationSpec};
use spinbench::evolve::{evolve_sequence, sequence_unitary, DensityMatrix, EvolveOptions, Frame, Observable, Perturbation};
use spinbench::experiments::{dominant_frequency, run_experiment, ExperimentKind, ExperimentParams, NoiseSpec};
use spinbench::linalg::{CMatrix, Operator, C64};
use spinbench::metrics::{haar_state, Channel};
use spinbench::optimize::{find_pulse, segment_propagator, PulseSearchSpec};
use spinbench::shapes::{compose_simultaneous, frequency_response, segments_response, PulseSegment, ShapeFamily, ShapeSpec, SimultaneousPulse};
use spinbench::spinsys::{effective_frequency, CouplingModel, DipolarGeometry, Relaxation, SpinSystem};
use spinbench::tomo::{chi_of_unitary, default_settings, process_tomography, simulate_process, simulate_readouts, standard_input_basis, state_tomography};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn random_mixed(n: usize, rng: &mut ChaCha8Rng) -> DensityMatrix {
    let d = 1 << n;
    let mut m = CMatrix::zeros(d, d);
    let mut total = 0.0;
    for _ in 0..d {
        let w: f64 = rng.random();
        let psi = haar_state(d, rng);
        m += &psi * psi.adjoint() * C64::new(w, 0.0);
        total += w;
    }
    DensityMatrix::new(Operator::new(m / C64::new(total, 0.0)).unwrap()).unwrap()
}

fn bb1_law() -> Outcome {
    let target = RotationSpec::x(PI / 2.0).ideal();
    let bb1 = composite_library(CompositeName::Bb1, PI / 2.0).map_err(|e| e.to_string())?;
    let eps = [0.01, 0.02, 0.05];
    let pts = fidelity_sweep(&bb1, &target, ErrorKind::AmplitudeLinear, &eps).map_err(|e| e.to_string())?;
    let bb1_dev = pts
        .iter()
        .map(|p| (p.avg_gate_fidelity - (1.0 - 21.0 * PI.powi(6) * p.epsilon.powi(6) / 16384.0)).abs())
        .fold(0.0, f64::max);
    let grid: Vec<f64> = (0..=60).map(|k| -0.3 + 0.01 * k as f64).collect();
    let plain = fidelity_sweep(&[RotationSpec::x(PI / 2.0)], &target, ErrorKind::AmplitudeLinear, &grid).map_err(|e| e.to_string())?;
    let plain_dev = plain
        .iter()
        .map(|p| (p.avg_gate_fidelity - (2.0 + (p.epsilon * PI / 2.0).cos()) / 3.0).abs())
        .fold(0.0, f64::max);
    check(bb1_dev <= 1e-7 && plain_dev <= 1e-10, format!("BB1 max |Δ| {bb1_dev:.2e}, plain max |Δ| {plain_dev:.2e}"))
}

fn cnot_compilation() -> Outcome {
    let mut worst: f64 = 0.0;
    for j in [215.0, -140.0, 50.0] {
        let sys = SpinSystem::pair(300.0, -800.0, j, CouplingModel::WeakZz).unwrap();
        for (kind, canon) in [(GateKind::Cnot, canonical_cnot()), (GateKind::Cphase, canonical_cphase())] {
            let seq = two_qubit_gate(&sys, kind, 0, 1).map_err(|e| e.to_string())?;
            let u = sequence_unitary(&sys, &seq, Frame::MultiplyRotating, None).map_err(|e| e.to_string())?;
            worst = worst.max(u.phase_aligned_distance(&canon));
        }
    }
    check(worst <= 1e-10, format!("max deviation from canonical CNOT/CPHASE {worst:.2e}"))
}

fn random_j(n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut j = vec![vec![0.0; n]; n];
    for a in 0..n {
        for b in a + 1..n {
            let v = rng.random_range(-200.0..200.0);
            j[a][b] = v;
            j[b][a] = v;
        }
    }
    j
}

fn hadamard_refocusing() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut full, mut kept_err, mut others) = (0.0f64, 0.0f64, 0.0f64);
    for n in [4, 5] {
        for _ in 0..10 {
            let offsets: Vec<f64> = (0..n).map(|_| rng.random_range(-500.0..500.0)).collect();
            let sys = SpinSystem::new(offsets, random_j(n, &mut rng), CouplingModel::WeakZz).unwrap();
            let scheme = hadamard_scheme(n, None).map_err(|e| e.to_string())?.with_total_duration(0.01);
            let r = verify_scheme(&scheme, &sys).map_err(|e| e.to_string())?;
            full = full.max(r.unitary_deviation);
            let (a, b) = (rng.random_range(0..n), rng.random_range(0..n - 1));
            let b = if b >= a { b + 1 } else { b };
            let keep = hadamard_scheme(n, Some((a, b))).map_err(|e| e.to_string())?.with_total_duration(0.01);
            let r = verify_scheme(&keep, &sys).map_err(|e| e.to_string())?;
            for i in 0..n {
                for k in i + 1..n {
                    let got = r.effective_j_hz[i][k];
                    if (i, k) == (a.min(b), a.max(b)) {
                        kept_err = kept_err.max((got - sys.coupling(i, k)).abs());
                    } else {
                        others = others.max(got.abs());
                    }
                }
            }
        }
    }
    check(
        full <= 1e-10 && kept_err <= 1e-10 && others <= 1e-10,
        format!("full-decoupling |U−I| {full:.2e}, kept J error {kept_err:.2e} Hz, other J {others:.2e} Hz"),
    )
}

fn magnus_wahuha() -> Outcome {
    let sys = SpinSystem::pair(400.0, 250.0, 0.0, CouplingModel::DipolarSecular).unwrap();
    let d = decoupling_report(&sys, Some(&DipolarGeometry::pair(1500.0)), CycleName::Wahuha4, 5e-6).map_err(|e| e.to_string())?;
    let dip = d.report.residuals["dipolar_h0"];
    let scale = d.report.zeeman_scaling.iter().map(|s| (s - 1.0 / 3f64.sqrt()).abs()).fold(0.0, f64::max);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let cycle = Cycle::echo3(1, 1e-4).map_err(|e| e.to_string())?;
    let mut echo: f64 = 0.0;
    for _ in 0..20 {
        let mut h = CMatrix::from_fn(2, 2, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)) * 2000.0);
        h = (&h + h.adjoint()) * C64::new(0.5, 0.0);
        let shift = h.trace() / C64::new(2.0, 0.0);
        h -= CMatrix::identity(2, 2) * shift;
        let h = Operator::new(h).unwrap();
        echo = echo.max(cycle.magnus(&h).map_err(|e| e.to_string())?.h0.frobenius_norm());
    }
    check(
        dip <= 1e-10 && scale <= 1e-10 && echo <= 1e-10,
        format!("dipolar H0 {dip:.2e}, Zeeman scaling error {scale:.2e}, echo3 max ‖H0‖ {echo:.2e}"),
    )
}

fn tomography() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let settings = default_settings(2);
    let mut state_err: f64 = 0.0;
    for _ in 0..20 {
        let rho = random_mixed(2, &mut rng);
        let vals = simulate_readouts(&rho, &settings, None).map_err(|e| e.to_string())?;
        let back = state_tomography(2, &settings, &vals, Default::default()).map_err(|e| e.to_string())?;
        state_err = state_err.max(back.max_abs_diff(rho.operator()));
    }
    let inputs = standard_input_basis(2);
    let u = canonical_cnot();
    let chi = process_tomography(&inputs, &simulate_process(&Channel::Unitary(u.clone()), &inputs), Default::default()).map_err(|e| e.to_string())?;
    let cnot_err = chi.max_abs_diff(&chi_of_unitary(&u).map_err(|e| e.to_string())?);
    let (t2, dt) = (0.2, 0.05);
    let ch = spinbench::evolve::damping_channels(f64::INFINITY, t2, dt).map_err(|e| e.to_string())?.phase;
    let gamma = (-2.0 * dt / t2).exp();
    let in1 = standard_input_basis(1);
    let chi1 = process_tomography(&in1, &simulate_process(&Channel::Kraus(ch), &in1), Default::default()).map_err(|e| e.to_string())?;
    let diff = (chi1.entry("0", "0").unwrap() - chi1.entry("z", "z").unwrap()).re;
    let gamma_err = (diff * diff - gamma).abs();
    check(
        state_err <= 1e-10 && cnot_err <= 1e-8 && gamma_err <= 1e-6,
        format!("state error {state_err:.2e}, CNOT χ error {cnot_err:.2e}, γ error {gamma_err:.2e}"),
    )
}

fn offresonance_geometry() -> Outcome {
    let factor_err = (effective_frequency(1.0, 0.5) - 1.25f64.sqrt()).abs();
    let grid: Vec<f64> = (0..41).map(|k| -2000.0 + 100.0 * k as f64).collect();
    let pts = frequency_response(&ShapeSpec::rectangular(), 1e-3, PI, &grid, [0.0, 0.0, 1.0]).map_err(|e| e.to_string())?;
    let on = pts.iter().find(|p| p.detuning_hz == 0.0).unwrap().mz();
    let off_min = pts.iter().filter(|p| p.detuning_hz != 0.0).map(|p| p.mz()).fold(f64::INFINITY, f64::min);
    check(
        factor_err <= 1e-12 && (on + 1.0).abs() <= 1e-12 && off_min > -1.0,
        format!("√(5/4) error {factor_err:.2e}, on-resonance Mz {on:.15}, min off-resonance Mz {off_min:.12}"),
    )
}

fn bloch_siegert() -> Outcome {
    let p = |c: f64| SimultaneousPulse {
        shape: ShapeSpec::new(ShapeFamily::hermite_180(), 256),
        t_pw_s: 2650e-6,
        angle_rad: PI,
        carrier_hz: c,
        phase_rad: PI,
    };
    let residual = |track: bool| -> Result<Vec<f64>, String> {
        let segs = compose_simultaneous(&[p(0.0), p(3273.0)], track).map_err(|e| e.to_string())?;
        Ok(segments_response(&segs, &[0.0, 3273.0], [0.0, 0.0, 1.0]).map_err(|e| e.to_string())?.iter().map(|r| r.mxy()).collect())
    };
    let (bare, fixed) = (residual(false)?, residual(true)?);
    check(
        bare.iter().all(|&r| r > 0.30) && fixed.iter().all(|&r| r < 0.10),
        format!("uncorrected |Mxy| {:.4}/{:.4}, tracked {:.4}/{:.4}", bare[0], bare[1], fixed[0], fixed[1]),
    )
}

fn experiments() -> Outcome {
    let one = SpinSystem::uncoupled(vec![0.0]).unwrap();
    let grid = |n: usize, t: f64| -> Vec<f64> { (0..n).map(|i| t * i as f64 / (n - 1) as f64).collect() };
    let err = |e: spinbench::Error| e.to_string();
    let a = 250.0;
    let rabi = run_experiment(&one, ExperimentKind::Rabi, &ExperimentParams::new(grid(41, 8e-3)).with_amplitude(a), None).map_err(err)?;
    let rabi_err = rabi
        .abscissa_s
        .iter()
        .zip(rabi.series("p1").unwrap())
        .map(|(t, p)| (p - (PI * a * t).sin().powi(2)).abs())
        .fold(0.0, f64::max);
    let det = 137.0;
    let g = grid(256, 255.0 * 2e-4);
    let ramsey = run_experiment(&SpinSystem::uncoupled(vec![det]).unwrap(), ExperimentKind::Ramsey, &ExperimentParams::new(g.clone()), None).map_err(err)?;
    let (fringe, bin) = dominant_frequency(&g, ramsey.series("p1").unwrap()).map_err(err)?;
    let (t2, fwhm) = (0.02, 20.0);
    let relaxing = one.clone().with_relaxation(vec![Relaxation::new(f64::INFINITY, t2).unwrap()]).unwrap();
    let larmor = run_experiment(&relaxing, ExperimentKind::Larmor, &ExperimentParams::new(grid(26, 0.025)), Some(&NoiseSpec::lorentzian(fwhm, 200, 11)))
        .map_err(err)?;
    let rate = 1.0 / larmor.fits["transverse"].tau_s;
    let rate_rel = (rate / (1.0 / t2 + PI * fwhm) - 1.0).abs();
    let t1 = 0.8;
    let ir_sys = one.clone().with_uniform_relaxation(t1, 0.5).unwrap();
    let ir = run_experiment(&ir_sys, ExperimentKind::InversionRecovery, &ExperimentParams::new(grid(12, 3.0)), None).map_err(err)?;
    let t1_rel = (ir.fits["sz"].tau_s / t1 - 1.0).abs();
    let noise = NoiseSpec::ou(50.0, 0.02, 200, 21);
    let cg = grid(8, 0.018)[1..].to_vec();
    let mut taus = Vec::new();
    for n in [1, 2, 4] {
        let r = run_experiment(&one, ExperimentKind::Cpmg, &ExperimentParams::new(cg.clone()).with_pulse_count(n), Some(&noise)).map_err(err)?;
        taus.push(r.fits["transverse"].tau_s);
    }
    let monotone = taus.windows(2).all(|w| w[0] <= w[1]);
    check(
        rabi_err <= 1e-10 && (fringe - det).abs() <= bin && rate_rel <= 0.02 && t1_rel <= 0.02 && monotone,
        format!(
            "Rabi error {rabi_err:.2e}, fringe {fringe:.2} Hz (bin {bin:.2}), 1/T2* off by {:.2}%, T1 off by {:.3}%, CPMG τ(n=1,2,4) = {:.4}/{:.4}/{:.4} s",
            100.0 * rate_rel,
            100.0 * t1_rel,
            taus[0],
            taus[1],
            taus[2]
        ),
    )
}

fn optimizer() -> Outcome {
    let sys = SpinSystem::pair(0.0, 600.0, 50.0, CouplingModel::WeakZz).unwrap();
    let target = SeqItem::rotation(0, Axis::X, PI / 2.0).ideal_unitary(2).unwrap();
    let spec = PulseSearchSpec::new(&sys, target);
    let a = find_pulse(&sys, &spec, 7).map_err(|e| e.to_string())?;
    let b = find_pulse(&sys, &spec, 7).map_err(|e| e.to_string())?;
    check(
        a.fidelity >= 0.99 && a.segments.len() <= 6 && spec.restarts <= 8 && a == b,
        format!("fidelity {:.6} with {} segment(s), rerun identical: {}", a.fidelity, a.segments.len(), a == b),
    )
}

fn global_numerics() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let (mut unit_err, mut trace_err, mut herm_err, mut min_eig) = (0.0f64, 0.0f64, 0.0f64, f64::INFINITY);
    for trial in 0..30 {
        let n = 1 + trial % 3;
        let offsets: Vec<f64> = (0..n).map(|_| rng.random_range(-800.0..800.0)).collect();
        let sys = SpinSystem::new(offsets, random_j(n, &mut rng), CouplingModel::WeakZz).unwrap();
        let t2 = rng.random_range(0.005..0.05);
        let sys = sys.with_uniform_relaxation(t2 * rng.random_range(0.6..3.0), t2).unwrap();
        let mut seq = Sequence::new();
        for _ in 0..6 {
            let seg = PulseSegment::new(rng.random_range(1e-5..5e-4), rng.random_range(0.0..3000.0), rng.random_range(-PI..PI), rng.random_range(-500.0..500.0));
            unit_err = unit_err.max(segment_propagator(&sys, &seg).map_err(|e| e.to_string())?.unitarity_error());
            seq.push(SeqItem::Pulse(seg));
            seq.push(SeqItem::delay(rng.random_range(0.0..2e-3)));
            seq.push(SeqItem::rotation(rng.random_range(0..n), Axis::InPlane(rng.random_range(-PI..PI)), rng.random_range(-PI..PI)));
        }
        for frame in [Frame::Common, Frame::MultiplyRotating] {
            unit_err = unit_err.max(sequence_unitary(&sys, &seq, frame, None).map_err(|e| e.to_string())?.unitarity_error());
        }
        let pert = Perturbation { static_offsets_hz: (0..n).map(|_| rng.random_range(-50.0..50.0)).collect(), trajectory: None };
        let opts = EvolveOptions { perturbation: Some(pert), observables: Observable::bloch_components(n), ..EvolveOptions::default() };
        let rho0 = random_mixed(n, &mut rng);
        let ev = evolve_sequence(&sys, &seq, &rho0, &opts).map_err(|e| e.to_string())?;
        let op = ev.rho.operator();
        trace_err = trace_err.max((op.trace() - C64::new(1.0, 0.0)).norm());
        herm_err = herm_err.max(op.hermiticity_error());
        min_eig = min_eig.min(ev.rho.min_eigenvalue());
    }
    check(
        unit_err <= 1e-10 && trace_err <= 1e-10 && herm_err <= 1e-12 && min_eig >= -1e-10,
        format!("max unitarity error {unit_err:.2e}, trace error {trace_err:.2e}, hermiticity {herm_err:.2e}, min eigenvalue {min_eig:.2e}"),
    )
}

fn main() {
    let criteria: Vec<(&str, Duration, fn() -> Outcome)> = vec![
        ("BB1 law", Duration::from_secs(1), bb1_law),
        ("CNOT compilation", Duration::from_secs(1), cnot_compilation),
        ("Hadamard refocusing", Duration::from_secs(5), hadamard_refocusing),
        ("Magnus/WAHUHA", Duration::from_secs(2), magnus_wahuha),
        ("Tomography round-trips", Duration::from_secs(30), tomography),
        ("Off-resonance geometry", Duration::from_secs(1), offresonance_geometry),
        ("Bloch-Siegert correction", Duration::from_secs(10), bloch_siegert),
        ("Standard experiments", Duration::from_secs(120), experiments),
        ("Optimizer", Duration::from_secs(300), optimizer),
        ("Global numerics", Duration::from_secs(60), global_numerics),
    ];
    let mut failed = 0;
    for (i, (name, budget, f)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let outcome = f();
        let took = start.elapsed();
        let (ok, detail) = match outcome {
            Ok(d) if took <= budget => (true, d),
            Ok(d) => (false, format!("{d}; over the {budget:?} budget")),
            Err(d) => (false, d),
        };
        if !ok {
            failed += 1;
        }
        println!("{} {:>2} {name}: {detail} [{:.3} s]", if ok { "PASS" } else { "FAIL" }, i + 1, took.as_secs_f64());
    }
    println!("{} of 10 criteria passed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
