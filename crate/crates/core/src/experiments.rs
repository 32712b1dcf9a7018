//! Standard characterization experiments with ideal hard pulses, noise
//! averaging, decay fitting and free-induction spectra.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::compile::{Axis, SeqItem, Sequence};
use crate::error::{Error, Result};
use crate::evolve::{evolve_sequence, DensityMatrix, EvolveOptions, Observable, OffsetTrajectory, Perturbation};
use crate::io::{fmt_f64, Table};
use crate::linalg::{CMatrix, C64};
use crate::shapes::PulseSegment;
use crate::spinsys::{spin_op, system_hamiltonian, CouplingModel, PauliLabel, SpinSystem};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Rabi,
    Larmor,
    Ramsey,
    Echo,
    CarrPurcell,
    Cpmg,
    InversionRecovery,
    SaturationRecovery,
    SpinLock,
}

impl std::str::FromStr for ExperimentKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "rabi" => ExperimentKind::Rabi,
            "larmor" | "fid" => ExperimentKind::Larmor,
            "ramsey" => ExperimentKind::Ramsey,
            "echo" | "hahn" => ExperimentKind::Echo,
            "carr_purcell" | "cp" => ExperimentKind::CarrPurcell,
            "cpmg" => ExperimentKind::Cpmg,
            "inversion_recovery" | "ir" => ExperimentKind::InversionRecovery,
            "saturation_recovery" | "sr" => ExperimentKind::SaturationRecovery,
            "spin_lock" => ExperimentKind::SpinLock,
            other => return Err(Error::invalid(format!("unknown experiment '{other}'"))),
        })
    }
}

fn one() -> usize {
    1
}

/// Grid values are pulse widths for Rabi, the total evolution time for the
/// echo trains and the recovery or lock time otherwise.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentParams {
    #[serde(default, with = "crate::io::one_based")]
    pub spin: usize,
    pub grid_s: Vec<f64>,
    /// Drive amplitude for Rabi nutation and the spin-lock field.
    #[serde(default)]
    pub amplitude_hz: Option<f64>,
    /// Refocusing pulses per echo train.
    #[serde(default = "one")]
    pub pulse_count: usize,
}

impl ExperimentParams {
    pub fn new(grid_s: Vec<f64>) -> Self {
        ExperimentParams { spin: 0, grid_s, amplitude_hz: None, pulse_count: 1 }
    }

    pub fn with_amplitude(mut self, hz: f64) -> Self {
        self.amplitude_hz = Some(hz);
        self
    }

    pub fn with_pulse_count(mut self, n: usize) -> Self {
        self.pulse_count = n;
        self
    }

    pub fn on_spin(mut self, k: usize) -> Self {
        self.spin = k;
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseKind {
    /// Per-realization static offsets drawn from a Lorentzian of full width
    /// at half maximum `fwhm_hz`, giving coherence decay e^{−πΔt}, so
    /// T2′ = 1/(πΔ).
    StaticLorentzian { fwhm_hz: f64 },
    /// Ornstein-Uhlenbeck offset noise of standard deviation `sigma_hz`.
    OuProcess { sigma_hz: f64, correlation_time_s: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    #[serde(flatten)]
    pub kind: NoiseKind,
    pub realizations: usize,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn lorentzian(fwhm_hz: f64, realizations: usize, seed: u64) -> Self {
        NoiseSpec { kind: NoiseKind::StaticLorentzian { fwhm_hz }, realizations, seed }
    }

    pub fn ou(sigma_hz: f64, correlation_time_s: f64, realizations: usize, seed: u64) -> Self {
        NoiseSpec { kind: NoiseKind::OuProcess { sigma_hz, correlation_time_s }, realizations, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if self.realizations == 0 {
            return Err(Error::invalid("noise needs at least one realization"));
        }
        let ok = match self.kind {
            NoiseKind::StaticLorentzian { fwhm_hz } => fwhm_hz >= 0.0 && fwhm_hz.is_finite(),
            NoiseKind::OuProcess { sigma_hz, correlation_time_s } => {
                sigma_hz >= 0.0 && sigma_hz.is_finite() && correlation_time_s > 0.0 && correlation_time_s.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid("noise widths must be finite and non-negative, correlation times positive"))
        }
    }

    /// Offset perturbations for every realization. Lorentzian offsets are
    /// stratified in probability so that each realization covers one
    /// quantile band, with bands shuffled independently per spin.
    pub fn perturbations(&self, n: usize, duration_s: f64, step_s: f64) -> Result<Vec<Perturbation>> {
        self.validate()?;
        let r_count = self.realizations;
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        match self.kind {
            NoiseKind::StaticLorentzian { fwhm_hz } => {
                let half = 0.5 * fwhm_hz;
                let mut offsets = vec![vec![0.0; n]; r_count];
                for k in 0..n {
                    let mut bands: Vec<usize> = (0..r_count).collect();
                    bands.shuffle(&mut rng);
                    for (r, b) in bands.into_iter().enumerate() {
                        let q = (b as f64 + rng.random::<f64>()) / r_count as f64;
                        offsets[r][k] = half * (PI * (q - 0.5)).tan();
                    }
                }
                Ok(offsets.into_iter().map(|o| Perturbation { static_offsets_hz: o, trajectory: None }).collect())
            }
            NoiseKind::OuProcess { sigma_hz, correlation_time_s } => {
                let dt = step_s.min(correlation_time_s / 10.0);
                let steps = ((duration_s / dt).ceil() as usize).max(1);
                let decay = (-dt / correlation_time_s).exp();
                let kick = sigma_hz * (1.0 - decay * decay).sqrt();
                Ok((0..r_count)
                    .map(|_| {
                        let mut x: Vec<f64> = (0..n).map(|_| { let z: f64 = StandardNormal.sample(&mut rng); sigma_hz * z }).collect();
                        let mut values = Vec::with_capacity(steps);
                        for _ in 0..steps {
                            values.push(x.clone());
                            for v in &mut x {
                                let z: f64 = StandardNormal.sample(&mut rng);
                                *v = *v * decay + kick * z;
                            }
                        }
                        Perturbation { static_offsets_hz: Vec::new(), trajectory: Some(OffsetTrajectory { dt_s: dt, values_hz: values }) }
                    })
                    .collect())
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayModel {
    Exponential,
    ExponentialWithOffset,
}

/// y = amplitude·e^{−t/τ} + offset; `residual` is the RMS misfit.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub tau_s: f64,
    pub amplitude: f64,
    pub offset: f64,
    pub residual: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub kind: ExperimentKind,
    pub abscissa_s: Vec<f64>,
    pub series: BTreeMap<String, Vec<f64>>,
    pub fits: BTreeMap<String, DecayFit>,
}

impl ExperimentResult {
    pub fn series(&self, name: &str) -> Result<&[f64]> {
        self.series.get(name).map(|v| v.as_slice()).ok_or_else(|| Error::invalid(format!("no series '{name}'")))
    }

    pub fn to_table(&self) -> Table {
        let mut headers = vec!["t_s"];
        headers.extend(self.series.keys().map(|s| s.as_str()));
        let mut t = Table::new(&headers);
        for (i, &x) in self.abscissa_s.iter().enumerate() {
            let mut row = vec![x];
            row.extend(self.series.values().map(|v| v[i]));
            t.push(row);
        }
        t
    }

    pub fn fits_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.fits)?)
    }
}

fn hard_pulse(n: usize, axis: Axis, angle: f64) -> Vec<SeqItem> {
    (0..n).map(|k| SeqItem::rotation(k, axis, angle)).collect()
}

fn delay(t: f64) -> Option<SeqItem> {
    (t > 0.0).then(|| SeqItem::delay(t))
}

/// Timed part of each experiment after the instantaneous preparation.
fn body(kind: ExperimentKind, n: usize, t: f64, params: &ExperimentParams) -> Sequence {
    let mut items = Vec::new();
    match kind {
        ExperimentKind::Ramsey => {
            items.extend(delay(t));
            items.extend(hard_pulse(n, Axis::X, PI / 2.0));
        }
        ExperimentKind::Echo => {
            items.extend(delay(0.5 * t));
            items.extend(hard_pulse(n, Axis::X, PI));
            items.extend(delay(0.5 * t));
        }
        ExperimentKind::CarrPurcell | ExperimentKind::Cpmg => {
            let axis = if kind == ExperimentKind::Cpmg { Axis::Y } else { Axis::X };
            let m = params.pulse_count as f64;
            for i in 0..params.pulse_count {
                items.extend(delay(if i == 0 { t / (2.0 * m) } else { t / m }));
                items.extend(hard_pulse(n, axis, PI));
            }
            items.extend(delay(t / (2.0 * m)));
        }
        _ => items.extend(delay(t)),
    }
    Sequence::from_items(items)
}

fn validate_params(sys: &SpinSystem, kind: ExperimentKind, params: &ExperimentParams) -> Result<()> {
    if params.spin >= sys.n() {
        return Err(Error::invalid(format!("spin {} out of range", params.spin + 1)));
    }
    if params.grid_s.is_empty() || params.grid_s.iter().any(|&t| !(t >= 0.0) || !t.is_finite()) {
        return Err(Error::invalid("experiment grid must be non-empty with finite non-negative times"));
    }
    let needs_drive = matches!(kind, ExperimentKind::Rabi | ExperimentKind::SpinLock);
    match params.amplitude_hz {
        Some(a) if !(a > 0.0) || !a.is_finite() => return Err(Error::invalid("drive amplitude must be positive")),
        None if needs_drive => return Err(Error::invalid(format!("{kind:?} needs a drive amplitude"))),
        _ => {}
    }
    if matches!(kind, ExperimentKind::CarrPurcell | ExperimentKind::Cpmg) && params.pulse_count == 0 {
        return Err(Error::invalid("echo trains need at least one refocusing pulse"));
    }
    Ok(())
}

/// Bloch vector of the observed spin at each grid point for one realization.
fn run_realization(
    sys: &SpinSystem,
    kind: ExperimentKind,
    params: &ExperimentParams,
    perturbation: Option<Perturbation>,
) -> Result<Vec<[f64; 3]>> {
    let n = sys.n();
    let k = params.spin;
    let obs: Vec<Observable> = Observable::bloch_components(n).into_iter().skip(3 * k).take(3).collect();
    let ground = DensityMatrix::ground(n);
    let rot = |axis, angle| Sequence::from_items(hard_pulse(n, axis, angle)).items().iter().fold(
        crate::linalg::Operator::identity(sys.dim()),
        |u, it| &it.ideal_unitary(n).expect("rotation") * &u,
    );
    let prepared = match kind {
        ExperimentKind::Rabi => ground,
        ExperimentKind::InversionRecovery => ground.evolve_unitary(&rot(Axis::X, PI)),
        ExperimentKind::SaturationRecovery => {
            let tilted = ground.evolve_unitary(&rot(Axis::X, PI / 2.0));
            let z = spin_op(n, k, PauliLabel::Z).scale_real(2.0);
            let op = tilted.operator();
            DensityMatrix::new((op + &z.conjugate(op)).scale_real(0.5))?
        }
        _ => ground.evolve_unitary(&rot(Axis::X, PI / 2.0)),
    };
    let opts = EvolveOptions { perturbation, observables: obs, ..EvolveOptions::default() };
    let bloch_at = |samples: &[crate::evolve::TrajectorySample], t: f64| -> [f64; 3] {
        let mut v = [0.0; 3];
        for s in samples.iter().filter(|s| s.t_s == t) {
            let idx = if s.observable_name.ends_with(".x") { 0 } else if s.observable_name.ends_with(".y") { 1 } else { 2 };
            v[idx] = s.value;
        }
        v
    };
    let tmax = params.grid_s.iter().cloned().fold(0.0, f64::max);
    let single_run = matches!(
        kind,
        ExperimentKind::Rabi
            | ExperimentKind::Larmor
            | ExperimentKind::SpinLock
            | ExperimentKind::InversionRecovery
            | ExperimentKind::SaturationRecovery
    );
    if single_run {
        let mut seq = Sequence::new();
        if tmax > 0.0 {
            match kind {
                // The nutation pulse has phase π, about +x.
                ExperimentKind::Rabi => seq.push(SeqItem::Pulse(PulseSegment::new(tmax, params.amplitude_hz.unwrap(), PI, 0.0))),
                // After the x quarter turn the spin lies along −y; a field of
                // phase π/2 points there.
                ExperimentKind::SpinLock => {
                    seq.push(SeqItem::Pulse(PulseSegment::new(tmax, params.amplitude_hz.unwrap(), PI / 2.0, 0.0)))
                }
                _ => seq.push(SeqItem::delay(tmax)),
            }
        }
        let mut o = opts;
        o.sample_times_s = params.grid_s.clone();
        let ev = evolve_sequence(sys, &seq, &prepared, &o)?;
        return Ok(params.grid_s.iter().map(|&t| bloch_at(&ev.samples, t)).collect());
    }
    params
        .grid_s
        .iter()
        .map(|&t| {
            let seq = body(kind, n, t, params);
            let ev = evolve_sequence(sys, &seq, &prepared, &opts)?;
            let b = ev.rho.bloch(k);
            Ok(b)
        })
        .collect()
}

/// Runs an experiment, averaging the observed spin's Bloch vector over noise
/// realizations when noise is given. Series: `sx`, `sy`, `sz`, `transverse`
/// (|⟨σx⟩ + i⟨σy⟩| of the average), `p1` for Rabi and Ramsey, `locked` for
/// spin locking.
pub fn run_experiment(
    sys: &SpinSystem,
    kind: ExperimentKind,
    params: &ExperimentParams,
    noise: Option<&NoiseSpec>,
) -> Result<ExperimentResult> {
    validate_params(sys, kind, params)?;
    let tmax = params.grid_s.iter().cloned().fold(0.0, f64::max);
    let runs: Vec<Vec<[f64; 3]>> = match noise {
        None => vec![run_realization(sys, kind, params, None)?],
        Some(ns) => {
            let step = sys
                .relaxation()
                .map(|r| r.iter().map(|x| x.t2.min(2.0 * x.t1)).fold(f64::INFINITY, f64::min) / 100.0)
                .unwrap_or(f64::INFINITY);
            let perts = ns.perturbations(sys.n(), tmax.max(1e-12), step)?;
            perts.into_par_iter().map(|p| run_realization(sys, kind, params, Some(p))).collect::<Result<Vec<_>>>()?
        }
    };
    let m = params.grid_s.len();
    let mut mean = vec![[0.0; 3]; m];
    for r in &runs {
        for (acc, v) in mean.iter_mut().zip(r) {
            for c in 0..3 {
                acc[c] += v[c];
            }
        }
    }
    let scale = 1.0 / runs.len() as f64;
    let col = |c: usize| mean.iter().map(|v| v[c] * scale).collect::<Vec<f64>>();
    let (sx, sy, sz) = (col(0), col(1), col(2));
    let mut series = BTreeMap::new();
    series.insert("transverse".to_string(), sx.iter().zip(&sy).map(|(x, y)| x.hypot(*y)).collect());
    match kind {
        ExperimentKind::Rabi | ExperimentKind::Ramsey => {
            series.insert("p1".to_string(), sz.iter().map(|z| 0.5 * (1.0 - z)).collect());
        }
        ExperimentKind::SpinLock => {
            series.insert("locked".to_string(), sy.iter().map(|y| -y).collect());
        }
        _ => {}
    }
    series.insert("sx".to_string(), sx);
    series.insert("sy".to_string(), sy);
    series.insert("sz".to_string(), sz);
    let mut fits = BTreeMap::new();
    let fit_target = match kind {
        ExperimentKind::Larmor | ExperimentKind::Echo | ExperimentKind::CarrPurcell | ExperimentKind::Cpmg => {
            Some(("transverse", DecayModel::Exponential))
        }
        ExperimentKind::InversionRecovery | ExperimentKind::SaturationRecovery => Some(("sz", DecayModel::ExponentialWithOffset)),
        ExperimentKind::SpinLock => Some(("locked", DecayModel::Exponential)),
        _ => None,
    };
    if let Some((name, model)) = fit_target {
        if let Ok(f) = fit_decay(&params.grid_s, &series[name], model) {
            fits.insert(name.to_string(), f);
        }
    }
    Ok(ExperimentResult { kind, abscissa_s: params.grid_s.clone(), series, fits })
}

fn linear_amplitudes(t: &[f64], y: &[f64], k: f64, with_offset: bool) -> (f64, f64, f64) {
    let e: Vec<f64> = t.iter().map(|&ti| (-k * ti).exp()).collect();
    let (a, c) = if with_offset {
        let n = t.len() as f64;
        let (se, see) = (e.iter().sum::<f64>(), e.iter().map(|x| x * x).sum::<f64>());
        let (sy, sey) = (y.iter().sum::<f64>(), e.iter().zip(y).map(|(a, b)| a * b).sum::<f64>());
        let det = see * n - se * se;
        if det.abs() < 1e-300 {
            (0.0, sy / n)
        } else {
            ((sey * n - se * sy) / det, (see * sy - se * sey) / det)
        }
    } else {
        let see = e.iter().map(|x| x * x).sum::<f64>();
        (e.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / see.max(1e-300), 0.0)
    };
    let cost = e.iter().zip(y).map(|(ei, yi)| (a * ei + c - yi).powi(2)).sum();
    (a, c, cost)
}

/// Least-squares exponential fit: a scan over the rate with the linear
/// parameters solved exactly, then Levenberg-Marquardt on all parameters.
pub fn fit_decay(t: &[f64], y: &[f64], model: DecayModel) -> Result<DecayFit> {
    if t.len() != y.len() {
        return Err(Error::Dimension { expected: t.len(), found: y.len() });
    }
    if t.len() < 4 {
        return Err(Error::invalid("decay fit needs at least 4 points"));
    }
    if t.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::invalid("decay fit data must be finite"));
    }
    let with_offset = model == DecayModel::ExponentialWithOffset;
    let span = t.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - t.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(span > 0.0) {
        return Err(Error::invalid("decay fit needs distinct times"));
    }
    let mut best = (f64::INFINITY, 0.0);
    for i in 0..=400 {
        let k = 10f64.powf(-2.0 + 4.0 * i as f64 / 400.0) / span;
        let (_, _, cost) = linear_amplitudes(t, y, k, with_offset);
        if cost < best.0 {
            best = (cost, k);
        }
    }
    let (a0, c0, _) = linear_amplitudes(t, y, best.1, with_offset);
    let np = if with_offset { 3 } else { 2 };
    let mut p = vec![a0, best.1, c0];
    let eval = |p: &[f64]| -> (Vec<f64>, CMatrix) {
        let r: Vec<f64> = t.iter().zip(y).map(|(&ti, &yi)| p[0] * (-p[1] * ti).exp() + p[2] - yi).collect();
        let j = CMatrix::from_fn(t.len(), np, |i, c| {
            let e = (-p[1] * t[i]).exp();
            C64::new([e, -p[0] * t[i] * e, 1.0][c], 0.0)
        });
        (r, j)
    };
    let cost = |r: &[f64]| r.iter().map(|x| x * x).sum::<f64>();
    let (mut r, mut j) = eval(&p);
    let mut f = cost(&r);
    let mut lambda = 1e-3;
    let mut converged = false;
    for _ in 0..500 {
        let jr = nalgebra::DMatrix::from_fn(t.len(), np, |i, c| j[(i, c)].re);
        let jtj = jr.transpose() * &jr;
        let g = jr.transpose() * nalgebra::DVector::from_column_slice(&r);
        let mut damped = jtj.clone();
        for d in 0..np {
            damped[(d, d)] += lambda * jtj[(d, d)].max(1e-300);
        }
        let Some(step) = damped.lu().solve(&(-&g)) else {
            lambda *= 10.0;
            continue;
        };
        let mut trial = p.clone();
        for d in 0..np {
            trial[d] += step[d];
        }
        let (rt, jt) = eval(&trial);
        let ft = cost(&rt);
        if ft.is_finite() && ft <= f {
            let rel = (0..np).map(|d| step[d].abs() / trial[d].abs().max(1e-300)).fold(0.0, f64::max);
            p = trial;
            r = rt;
            j = jt;
            let small = f - ft <= 1e-30 + 1e-15 * f;
            f = ft;
            lambda = (lambda * 0.3).max(1e-12);
            if rel < 1e-13 || small {
                converged = true;
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e12 {
                converged = true;
                break;
            }
        }
    }
    if !converged || !(p[1] > 0.0) || !p[1].is_finite() {
        return Err(Error::NotConverged(format!("exponential fit did not settle (rate {})", p[1])));
    }
    Ok(DecayFit { tau_s: 1.0 / p[1], amplitude: p[0], offset: p[2], residual: (f / t.len() as f64).sqrt() })
}

/// Location of the largest DFT peak of a uniformly sampled real series after
/// removing its mean, in Hz, with the bin width.
pub fn dominant_frequency(t: &[f64], y: &[f64]) -> Result<(f64, f64)> {
    if t.len() < 4 || t.len() != y.len() {
        return Err(Error::invalid("need at least 4 uniformly sampled points"));
    }
    let dt = t[1] - t[0];
    if !(dt > 0.0) || t.windows(2).any(|w| ((w[1] - w[0]) - dt).abs() > 1e-9 * dt) {
        return Err(Error::invalid("samples must be uniformly spaced"));
    }
    let mean = y.iter().sum::<f64>() / y.len() as f64;
    let mut buf: Vec<C64> = y.iter().map(|&v| C64::new(v - mean, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    let half = buf.len() / 2;
    let (idx, _) = buf[..=half].iter().enumerate().skip(1).fold((1, 0.0), |b, (i, z)| if z.norm() > b.1 { (i, z.norm()) } else { b });
    let bin = 1.0 / (dt * buf.len() as f64);
    Ok((idx as f64 * bin, bin))
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Acquisition {
    pub dwell_s: f64,
    pub points: usize,
    /// Exponential line broadening, Hz.
    #[serde(default)]
    pub line_broadening_hz: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    pub times_s: Vec<f64>,
    pub fid: Vec<C64>,
    /// Frequencies in ascending order, zero at the centre.
    pub frequencies_hz: Vec<f64>,
    pub spectrum: Vec<C64>,
}

impl Spectrum {
    pub fn bin_hz(&self) -> f64 {
        self.frequencies_hz[1] - self.frequencies_hz[0]
    }

    /// Local maxima of |S| above `fraction` of the tallest, ascending.
    pub fn peaks(&self, fraction: f64) -> Vec<f64> {
        let mag: Vec<f64> = self.spectrum.iter().map(|z| z.norm()).collect();
        let top = mag.iter().cloned().fold(0.0, f64::max);
        let m = mag.len();
        (0..m)
            .filter(|&i| {
                let l = mag[(i + m - 1) % m];
                let r = mag[(i + 1) % m];
                mag[i] >= fraction * top && mag[i] > l && mag[i] >= r
            })
            .map(|i| self.frequencies_hz[i])
            .collect()
    }

    pub fn to_table(&self) -> Table {
        let mut t = Table::new(&["t_s", "fid_re", "fid_im", "f_hz", "spec_re", "spec_im"]);
        for i in 0..self.fid.len() {
            t.push(vec![
                self.times_s[i],
                self.fid[i].re,
                self.fid[i].im,
                self.frequencies_hz[i],
                self.spectrum[i].re,
                self.spectrum[i].im,
            ]);
        }
        t
    }
}

/// Free induction of `rho0`, observing Σ_k Tr(ρ(−iσx − σy)_k), and its
/// centred DFT. Positive offsets appear at positive frequencies.
pub fn spectrum(sys: &SpinSystem, rho0: &DensityMatrix, acq: &Acquisition) -> Result<Spectrum> {
    if sys.model() != CouplingModel::WeakZz && sys.couplings_hz().iter().flatten().any(|&j| j != 0.0) {
        return Err(Error::invalid("spectra are computed for the weak coupling model"));
    }
    if !(acq.dwell_s > 0.0) || acq.points < 2 || !(acq.line_broadening_hz >= 0.0) {
        return Err(Error::invalid("acquisition needs a positive dwell, at least 2 points and non-negative broadening"));
    }
    if rho0.dim() != sys.dim() {
        return Err(Error::Dimension { expected: sys.dim(), found: rho0.dim() });
    }
    let n = sys.n();
    let times: Vec<f64> = (0..acq.points).map(|i| i as f64 * acq.dwell_s).collect();
    let fid: Vec<C64> = if sys.has_relaxation() {
        let obs: Vec<Observable> = Observable::bloch_components(n);
        let opts = EvolveOptions { sample_times_s: times.clone(), observables: obs, ..EvolveOptions::default() };
        let seq = Sequence::from_items(vec![SeqItem::delay(*times.last().unwrap())]);
        let ev = evolve_sequence(sys, &seq, rho0, &opts)?;
        times
            .iter()
            .map(|&t| {
                ev.samples
                    .iter()
                    .filter(|s| s.t_s == t)
                    .map(|s| match s.observable_name.rsplit('.').next() {
                        Some("x") => C64::new(0.0, -s.value),
                        Some("y") => C64::new(-s.value, 0.0),
                        _ => C64::new(0.0, 0.0),
                    })
                    .sum()
            })
            .collect()
    } else {
        let h = system_hamiltonian(sys, None)?;
        let u = h.expm_hermitian(acq.dwell_s);
        let detector = (0..n).fold(crate::linalg::Operator::zeros(sys.dim()), |acc, k| {
            acc + spin_op(n, k, PauliLabel::X).scale(C64::new(0.0, -2.0)) - spin_op(n, k, PauliLabel::Y).scale_real(2.0)
        });
        let mut rho = rho0.operator().clone();
        let mut out = Vec::with_capacity(acq.points);
        for _ in 0..acq.points {
            out.push((&rho * &detector).trace());
            rho = u.conjugate(&rho);
        }
        out
    };
    let mut buf: Vec<C64> = fid
        .iter()
        .zip(&times)
        .map(|(z, &t)| z * (-PI * acq.line_broadening_hz * t).exp())
        .collect();
    FftPlanner::new().plan_fft_forward(buf.len()).process(&mut buf);
    let m = buf.len();
    let shift = m / 2;
    let spec: Vec<C64> = (0..m).map(|i| buf[(i + m - shift) % m]).collect();
    let df = 1.0 / (m as f64 * acq.dwell_s);
    let freqs = (0..m).map(|i| (i as f64 - shift as f64) * df).collect();
    Ok(Spectrum { times_s: times, fid, frequencies_hz: freqs, spectrum: spec })
}

/// Summary line of a fit for reports.
pub fn describe_fit(name: &str, f: &DecayFit) -> String {
    format!("{name}: tau={} s amplitude={} offset={} rms={}", fmt_f64(f.tau_s), fmt_f64(f.amplitude), fmt_f64(f.offset), fmt_f64(f.residual))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spinsys::Relaxation;

    fn single(offset: f64) -> SpinSystem {
        SpinSystem::uncoupled(vec![offset]).unwrap()
    }

    fn grid(n: usize, tmax: f64) -> Vec<f64> {
        (0..n).map(|i| tmax * i as f64 / (n - 1) as f64).collect()
    }

    #[test]
    fn rabi_matches_nutation_formula() {
        let a = 250.0;
        let p = ExperimentParams::new(grid(41, 8e-3)).with_amplitude(a);
        let r = run_experiment(&single(0.0), ExperimentKind::Rabi, &p, None).unwrap();
        for (t, p1) in r.abscissa_s.iter().zip(r.series("p1").unwrap()) {
            let w1 = 2.0 * PI * a;
            assert!((p1 - (w1 * t / 2.0).sin().powi(2)).abs() < 1e-10);
        }
    }

    #[test]
    fn ramsey_fringes_at_detuning() {
        let det = 137.0;
        let g = grid(256, 255.0 * 2e-4);
        let r = run_experiment(&single(det), ExperimentKind::Ramsey, &ExperimentParams::new(g.clone()), None).unwrap();
        let (f, bin) = dominant_frequency(&g, r.series("p1").unwrap()).unwrap();
        assert!((f - det).abs() <= bin, "fringe {f} bin {bin}");
    }

    #[test]
    fn fit_recovers_exact_time_constant() {
        let t = grid(30, 5e-3);
        let y: Vec<f64> = t.iter().map(|x| 0.8 * (-x / 1.3e-3).exp()).collect();
        let f = fit_decay(&t, &y, DecayModel::Exponential).unwrap();
        assert!((f.tau_s - 1.3e-3).abs() < 1e-8 * 1.3e-3);
        let y2: Vec<f64> = t.iter().map(|x| 1.0 - 2.0 * (-x / 2e-3).exp()).collect();
        let f2 = fit_decay(&t, &y2, DecayModel::ExponentialWithOffset).unwrap();
        assert!((f2.tau_s - 2e-3).abs() < 1e-8 * 2e-3);
        assert!((f2.offset - 1.0).abs() < 1e-8 && (f2.amplitude + 2.0).abs() < 1e-8);
        assert!(fit_decay(&t[..3], &y[..3], DecayModel::Exponential).is_err());
    }

    #[test]
    fn cpmg_refocuses_static_inhomogeneity() {
        let noise = NoiseSpec::lorentzian(40.0, 50, 4);
        for n in [2, 4, 6, 8] {
            let p = ExperimentParams::new(vec![0.004, 0.02]).with_pulse_count(n);
            let r = run_experiment(&single(30.0), ExperimentKind::Cpmg, &p, Some(&noise)).unwrap();
            for v in r.series("transverse").unwrap() {
                assert!((v - 1.0).abs() < 1e-6, "n={n}: {v}");
            }
        }
        let p = ExperimentParams::new(vec![0.02]);
        let fid = run_experiment(&single(30.0), ExperimentKind::Larmor, &p, Some(&noise)).unwrap();
        assert!(fid.series("transverse").unwrap()[0] < 0.5);
    }

    #[test]
    fn inversion_recovery_gives_t1() {
        let t1 = 0.8;
        let sys = single(0.0).with_uniform_relaxation(t1, 0.5).unwrap();
        let r = run_experiment(&sys, ExperimentKind::InversionRecovery, &ExperimentParams::new(grid(12, 3.0)), None).unwrap();
        let f = r.fits["sz"];
        assert!((f.tau_s / t1 - 1.0).abs() < 0.02, "{}", f.tau_s);
        assert!((r.series("sz").unwrap()[0] + 1.0).abs() < 1e-12);
        let s = run_experiment(&sys, ExperimentKind::SaturationRecovery, &ExperimentParams::new(grid(12, 3.0)), None).unwrap();
        assert!((s.fits["sz"].tau_s / t1 - 1.0).abs() < 0.02);
        assert!(s.series("sz").unwrap()[0].abs() < 1e-12);
    }

    #[test]
    fn lorentzian_inhomogeneity_adds_rates() {
        let (t2, fwhm) = (0.02, 20.0);
        let sys = single(0.0).with_relaxation(vec![Relaxation::new(f64::INFINITY, t2).unwrap()]).unwrap();
        let noise = NoiseSpec::lorentzian(fwhm, 200, 11);
        let g = grid(26, 0.025);
        let r = run_experiment(&sys, ExperimentKind::Larmor, &ExperimentParams::new(g.clone()), Some(&noise)).unwrap();
        let expect = 1.0 / t2 + PI * fwhm;
        let got = 1.0 / r.fits["transverse"].tau_s;
        assert!((got / expect - 1.0).abs() < 0.02, "rate {got} vs {expect}");
        let e = run_experiment(&sys, ExperimentKind::Echo, &ExperimentParams::new(g), Some(&noise)).unwrap();
        assert!(e.fits["transverse"].tau_s >= r.fits["transverse"].tau_s);
        assert!((e.fits["transverse"].tau_s / t2 - 1.0).abs() < 0.02);
    }

    #[test]
    fn cpmg_lengthens_with_pulse_count_under_slow_noise() {
        let noise = NoiseSpec::ou(50.0, 0.02, 200, 21);
        let g = grid(8, 0.018)[1..].to_vec();
        let taus: Vec<f64> = [1, 2, 4]
            .iter()
            .map(|&n| {
                let p = ExperimentParams::new(g.clone()).with_pulse_count(n);
                run_experiment(&single(0.0), ExperimentKind::Cpmg, &p, Some(&noise)).unwrap().fits["transverse"].tau_s
            })
            .collect();
        assert!(taus[0] <= taus[1] && taus[1] <= taus[2], "{taus:?}");
    }

    #[test]
    fn spin_lock_outlasts_free_decay() {
        let noise = NoiseSpec::lorentzian(60.0, 60, 5);
        let g = grid(9, 0.02);
        let p = ExperimentParams::new(g.clone()).with_amplitude(2000.0);
        let lock = run_experiment(&single(0.0), ExperimentKind::SpinLock, &p, Some(&noise)).unwrap();
        let free = run_experiment(&single(0.0), ExperimentKind::Larmor, &ExperimentParams::new(g), Some(&noise)).unwrap();
        let (l, f) = (lock.series("locked").unwrap(), free.series("transverse").unwrap());
        assert!((l[0] - 1.0).abs() < 1e-12);
        assert!(l.last().unwrap() > f.last().unwrap());
        assert!(*l.last().unwrap() > 0.9);
    }

    #[test]
    fn spin_lock_relaxes_fastest_near_rabi_frequency() {
        let a = 1000.0;
        let w1 = 2.0 * PI * a;
        let g = grid(5, 0.01);
        let p = ExperimentParams::new(g).with_amplitude(a);
        let end: Vec<f64> = [0.1, 1.0, 10.0]
            .iter()
            .map(|&m| {
                let noise = NoiseSpec::ou(150.0, m / w1, 40, 8);
                *run_experiment(&single(0.0), ExperimentKind::SpinLock, &p, Some(&noise)).unwrap().series("locked").unwrap().last().unwrap()
            })
            .collect();
        assert!(end[1] < end[0] && end[1] < end[2], "{end:?}");
    }

    fn tilted(n: usize) -> DensityMatrix {
        let u = (0..n).fold(crate::linalg::Operator::identity(1 << n), |u, k| {
            &SeqItem::rotation(k, Axis::X, PI / 2.0).ideal_unitary(n).unwrap() * &u
        });
        DensityMatrix::ground(n).evolve_unitary(&u)
    }

    #[test]
    fn two_spin_spectrum_lines() {
        let sys = SpinSystem::pair(200.0, -200.0, 50.0, CouplingModel::WeakZz).unwrap();
        let acq = Acquisition { dwell_s: 1.0 / 2000.0, points: 400, line_broadening_hz: 0.0 };
        let s = spectrum(&sys, &tilted(2), &acq).unwrap();
        let peaks = s.peaks(0.3);
        let want = [-225.0, -175.0, 175.0, 225.0];
        assert_eq!(peaks.len(), 4, "{peaks:?}");
        for (p, w) in peaks.iter().zip(want) {
            assert!((p - w).abs() <= s.bin_hz());
        }
    }

    #[test]
    fn multiplets_double_per_coupled_spin() {
        let j = vec![vec![0.0, 40.0, 12.0], vec![40.0, 0.0, 25.0], vec![12.0, 25.0, 0.0]];
        let sys = SpinSystem::new(vec![-300.0, 50.0, 400.0], j, CouplingModel::WeakZz).unwrap();
        let acq = Acquisition { dwell_s: 1.0 / 2000.0, points: 2000, line_broadening_hz: 0.0 };
        let s = spectrum(&sys, &tilted(3), &acq).unwrap();
        let peaks = s.peaks(0.3);
        assert_eq!(peaks.len(), 12, "{peaks:?}");
        // Single-flip eigenvalue differences of the diagonal Hamiltonian.
        let h = system_hamiltonian(&sys, None).unwrap();
        let mut lines = Vec::new();
        for a in 0..8usize {
            for k in 0..3 {
                let b = a ^ (1 << (2 - k));
                if a & (1 << (2 - k)) == 0 {
                    lines.push((h.get(b, b).re - h.get(a, a).re) / (2.0 * PI));
                }
            }
        }
        lines.sort_by(f64::total_cmp);
        for (p, l) in peaks.iter().zip(&lines) {
            assert!((p - l).abs() <= s.bin_hz(), "{p} vs {l}");
        }
    }

    #[test]
    fn single_spin_single_line() {
        let acq = Acquisition { dwell_s: 1e-3, points: 500, line_broadening_hz: 5.0 };
        let s = spectrum(&single(120.0), &tilted(1), &acq).unwrap();
        let peaks = s.peaks(0.5);
        assert_eq!(peaks.len(), 1);
        assert!((peaks[0] - 120.0).abs() <= s.bin_hz());
    }

    #[test]
    fn bad_params_rejected() {
        let sys = single(0.0);
        assert!(run_experiment(&sys, ExperimentKind::Rabi, &ExperimentParams::new(vec![0.0, 1e-3]), None).is_err());
        assert!(run_experiment(&sys, ExperimentKind::Larmor, &ExperimentParams::new(vec![]), None).is_err());
        assert!(run_experiment(&sys, ExperimentKind::Larmor, &ExperimentParams::new(vec![1e-3]).on_spin(1), None).is_err());
        assert!(NoiseSpec::lorentzian(10.0, 0, 1).validate().is_err());
    }
}
