//! Numerical search for strongly modulated pulses that implement a target
//! unitary.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolve::{segment_propagator_common, Frame};
use crate::linalg::Operator;
use crate::metrics::avg_gate_fidelity_unitary;
use crate::shapes::{wrap_phase, PulseSegment};
use crate::spinsys::{system_hamiltonian, zeeman_hamiltonian, CouplingModel, SpinSystem};

#[derive(Clone, Debug, PartialEq)]
pub struct NelderMeadConfig {
    pub max_evals: usize,
    /// Stop when the spread of simplex values falls below this.
    pub f_tol: f64,
    /// ...and every vertex lies within this distance of the best one.
    pub x_tol: f64,
    /// Edge length of the initial simplex around `x0`.
    pub initial_step: f64,
}

impl Default for NelderMeadConfig {
    fn default() -> Self {
        NelderMeadConfig { max_evals: 10_000, f_tol: 1e-10, x_tol: 1e-10, initial_step: 0.1 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NelderMeadResult {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
    /// False when the evaluation cap was hit before the simplex collapsed.
    pub converged: bool,
    /// Best value after each iteration.
    pub trace: Vec<f64>,
}

/// Downhill simplex with reflection 1, expansion 2, contraction 0.5 and
/// shrink 0.5. Non-finite objective values are treated as +∞.
pub fn nelder_mead(mut f: impl FnMut(&[f64]) -> f64, x0: &[f64], cfg: &NelderMeadConfig) -> NelderMeadResult {
    let n = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    if n == 0 {
        let v = eval(x0, &mut evals);
        return NelderMeadResult { x: vec![], value: v, evaluations: evals, converged: true, trace: vec![v] };
    }
    let mut simplex: Vec<Vec<f64>> = vec![x0.to_vec()];
    for i in 0..n {
        let mut v = x0.to_vec();
        v[i] += cfg.initial_step;
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|x| eval(x, &mut evals)).collect();
    let mut trace = Vec::new();
    let mut converged = false;

    loop {
        let mut order: Vec<usize> = (0..=n).collect();
        order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = order.iter().map(|&i| simplex[i].clone()).collect();
        values = order.iter().map(|&i| values[i]).collect();
        trace.push(values[0]);

        let f_spread = values[n] - values[0];
        let x_spread = simplex[1..]
            .iter()
            .flat_map(|v| v.iter().zip(&simplex[0]).map(|(a, b)| (a - b).abs()))
            .fold(0.0, f64::max);
        if f_spread <= cfg.f_tol && x_spread <= cfg.x_tol {
            converged = true;
            break;
        }
        if evals >= cfg.max_evals {
            break;
        }

        let centroid: Vec<f64> = (0..n).map(|j| simplex[..n].iter().map(|v| v[j]).sum::<f64>() / n as f64).collect();
        let along = |t: f64| -> Vec<f64> { (0..n).map(|j| centroid[j] + t * (simplex[n][j] - centroid[j])).collect() };

        let xr = along(-1.0);
        let fr = eval(&xr, &mut evals);
        if fr < values[0] {
            let xe = along(-2.0);
            let fe = eval(&xe, &mut evals);
            if fe < fr {
                simplex[n] = xe;
                values[n] = fe;
            } else {
                simplex[n] = xr;
                values[n] = fr;
            }
            continue;
        }
        if fr < values[n - 1] {
            simplex[n] = xr;
            values[n] = fr;
            continue;
        }
        let (xc, fc) = if fr < values[n] {
            let xc = along(-0.5);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        } else {
            let xc = along(0.5);
            let fc = eval(&xc, &mut evals);
            (xc, fc)
        };
        if fc < values[n].min(fr) {
            simplex[n] = xc;
            values[n] = fc;
            continue;
        }
        for i in 1..=n {
            let v: Vec<f64> = (0..n).map(|j| simplex[0][j] + 0.5 * (simplex[i][j] - simplex[0][j])).collect();
            values[i] = eval(&v, &mut evals);
            simplex[i] = v;
        }
    }
    NelderMeadResult { x: simplex[0].clone(), value: values[0], evaluations: evals, converged, trace }
}

/// Propagator of one segment in the common frame: transform into the
/// segment's transmitter frame, evolve under the static rotating-frame
/// Hamiltonian, transform back.
pub fn segment_propagator(sys: &SpinSystem, seg: &PulseSegment) -> Result<Operator> {
    if sys.model() == CouplingModel::DipolarSecular {
        return Err(Error::invalid("segment_propagator supports weak_zz and isotropic couplings"));
    }
    seg.validate(sys.n())?;
    let h = system_hamiltonian(sys, None)?;
    Ok(segment_propagator_common(&h, sys.n(), seg))
}

/// Net propagator of a segment list, expressed in `frame`.
pub fn segments_unitary(sys: &SpinSystem, segments: &[PulseSegment], frame: Frame) -> Result<Operator> {
    if sys.model() == CouplingModel::DipolarSecular {
        return Err(Error::invalid("segment_propagator supports weak_zz and isotropic couplings"));
    }
    let h = system_hamiltonian(sys, None)?;
    let mut u = Operator::identity(sys.dim());
    let mut t = 0.0;
    for seg in segments {
        seg.validate(sys.n())?;
        u = &segment_propagator_common(&h, sys.n(), seg) * &u;
        t += seg.duration_s;
    }
    if frame == Frame::MultiplyRotating {
        u = &zeeman_hamiltonian(sys).expm_hermitian(-t) * &u;
    }
    Ok(u)
}

/// Inclusive range of a searched parameter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl Range {
    pub fn new(min: f64, max: f64) -> Self {
        Range { min, max }
    }

    fn validate(&self, what: &str, positive: bool) -> Result<()> {
        if !(self.min.is_finite() && self.max.is_finite()) || self.min > self.max || (positive && self.min <= 0.0) {
            return Err(Error::invalid(format!("bad {what} bounds [{}, {}]", self.min, self.max)));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchBounds {
    pub duration_s: Range,
    pub amplitude_hz: Range,
    pub transmitter_offset_hz: Range,
}

/// Penalty weights added to the infidelity.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Penalties {
    /// Times the mean squared amplitude relative to the amplitude bound.
    pub power: f64,
    /// Times the mean squared transmitter excursion relative to the bound.
    pub frequency: f64,
    /// Times total duration relative to the per-segment duration bound.
    pub duration: f64,
}

#[derive(Clone, Debug)]
pub struct PulseSearchSpec {
    pub target: Operator,
    /// Frame in which the net propagator is compared to the target.
    pub frame: Frame,
    pub max_segments: usize,
    pub bounds: SearchBounds,
    pub penalties: Penalties,
    pub fidelity_goal: f64,
    pub restarts: usize,
    pub nelder_mead: NelderMeadConfig,
}

impl PulseSearchSpec {
    /// Defaults sized to the system: durations 10 µs to 5 ms, amplitudes
    /// 10 Hz to 10 kHz, transmitter within 1 kHz of the offset range.
    pub fn new(sys: &SpinSystem, target: Operator) -> Self {
        let lo = sys.offsets_hz().iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = sys.offsets_hz().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        PulseSearchSpec {
            target,
            frame: Frame::MultiplyRotating,
            max_segments: 6,
            bounds: SearchBounds {
                duration_s: Range::new(1e-5, 5e-3),
                amplitude_hz: Range::new(10.0, 1e4),
                transmitter_offset_hz: Range::new(lo - 1000.0, hi + 1000.0),
            },
            penalties: Penalties::default(),
            fidelity_goal: 0.99,
            restarts: 8,
            nelder_mead: NelderMeadConfig { max_evals: 6000, f_tol: 1e-12, x_tol: 1e-9, initial_step: 0.5 },
        }
    }

    fn validate(&self, sys: &SpinSystem) -> Result<()> {
        if self.target.dim() != sys.dim() {
            return Err(Error::Dimension { expected: sys.dim(), found: self.target.dim() });
        }
        self.target.require_unitary("target")?;
        if self.max_segments == 0 || self.restarts == 0 {
            return Err(Error::invalid("max_segments and restarts must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.fidelity_goal) {
            return Err(Error::invalid("fidelity_goal must lie in [0, 1]"));
        }
        self.bounds.duration_s.validate("duration", true)?;
        self.bounds.amplitude_hz.validate("amplitude", true)?;
        self.bounds.transmitter_offset_hz.validate("transmitter offset", false)
    }
}

fn sigmoid(u: f64) -> f64 {
    1.0 / (1.0 + (-u).exp())
}

fn log_map(r: Range, u: f64) -> f64 {
    (r.min.ln() + (r.max.ln() - r.min.ln()) * sigmoid(u)).exp().clamp(r.min, r.max)
}

fn lin_map(r: Range, u: f64) -> f64 {
    (r.min + (r.max - r.min) * sigmoid(u)).clamp(r.min, r.max)
}

/// Four unconstrained parameters per segment: logit of log-duration, logit
/// of log-amplitude, logit of transmitter offset, and phase.
const PARAMS_PER_SEGMENT: usize = 4;

fn decode(x: &[f64], b: &SearchBounds) -> Vec<PulseSegment> {
    x.chunks(PARAMS_PER_SEGMENT)
        .map(|p| {
            PulseSegment::new(
                log_map(b.duration_s, p[0]),
                log_map(b.amplitude_hz, p[1]),
                wrap_phase(p[3]),
                lin_map(b.transmitter_offset_hz, p[2]),
            )
        })
        .collect()
}

struct Objective<'a> {
    sys: &'a SpinSystem,
    spec: &'a PulseSearchSpec,
    h: Operator,
    hz: Operator,
}

impl Objective<'_> {
    fn fidelity(&self, segments: &[PulseSegment]) -> f64 {
        let n = self.sys.n();
        let mut u = Operator::identity(self.sys.dim());
        let mut t = 0.0;
        for seg in segments {
            u = &segment_propagator_common(&self.h, n, seg) * &u;
            t += seg.duration_s;
        }
        if self.spec.frame == Frame::MultiplyRotating {
            u = &self.hz.expm_hermitian(-t) * &u;
        }
        avg_gate_fidelity_unitary(&u, &self.spec.target)
    }

    fn penalty(&self, segments: &[PulseSegment]) -> f64 {
        let p = &self.spec.penalties;
        let b = &self.spec.bounds;
        let total: f64 = segments.iter().map(|s| s.duration_s).sum();
        let mut v = 0.0;
        if p.power != 0.0 {
            v += p.power * segments.iter().map(|s| (s.amplitude_hz / b.amplitude_hz.max).powi(2) * s.duration_s).sum::<f64>() / total;
        }
        if p.frequency != 0.0 {
            let scale = b.transmitter_offset_hz.max.abs().max(b.transmitter_offset_hz.min.abs()).max(1.0);
            v += p.frequency * segments.iter().map(|s| (s.transmitter_offset_hz / scale).powi(2)).sum::<f64>() / segments.len() as f64;
        }
        if p.duration != 0.0 {
            v += p.duration * total / b.duration_s.max;
        }
        v
    }

    fn value(&self, x: &[f64]) -> f64 {
        let segs = decode(x, &self.spec.bounds);
        1.0 - self.fidelity(&segs) + self.penalty(&segs)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub iteration: usize,
    pub best_value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseSearchResult {
    pub segments: Vec<PulseSegment>,
    pub fidelity: f64,
    pub objective: f64,
    pub evaluations: usize,
    /// Seed of the winning restart.
    pub seed: u64,
    pub trace: Vec<TracePoint>,
}

struct Run {
    x: Vec<f64>,
    value: f64,
    seed: u64,
    evaluations: usize,
    trace: Vec<f64>,
}

fn random_segment(rng: &mut ChaCha8Rng) -> [f64; PARAMS_PER_SEGMENT] {
    [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(0.0..2.0 * PI)]
}

/// Iterative deepening over the number of segments. At each depth the
/// restarts run in parallel; restart 0 extends the best pulse of the previous
/// depth by one random segment and the rest start from random points. The
/// first depth whose best fidelity meets the goal is returned.
pub fn find_pulse(sys: &SpinSystem, spec: &PulseSearchSpec, seed: u64) -> Result<PulseSearchResult> {
    spec.validate(sys)?;
    if sys.model() == CouplingModel::DipolarSecular {
        return Err(Error::invalid("pulse search supports weak_zz and isotropic couplings"));
    }
    let obj = Objective { sys, spec, h: system_hamiltonian(sys, None)?, hz: zeeman_hamiltonian(sys) };
    let mut previous: Option<Vec<f64>> = None;
    let mut trace = Vec::new();
    let mut evaluations = 0;
    let mut best_overall = (f64::NEG_INFINITY, 0usize);
    for depth in 1..=spec.max_segments {
        let runs: Vec<Run> = (0..spec.restarts)
            .into_par_iter()
            .map(|r| {
                let run_seed = seed.wrapping_add((depth as u64) << 32).wrapping_add(r as u64);
                let mut rng = ChaCha8Rng::seed_from_u64(run_seed);
                let mut x0: Vec<f64> = match (&previous, r) {
                    (Some(p), 0) => p.clone(),
                    _ => (0..depth - 1).flat_map(|_| random_segment(&mut rng)).collect(),
                };
                x0.extend(random_segment(&mut rng));
                let res = nelder_mead(|x| obj.value(x), &x0, &spec.nelder_mead);
                Run { x: res.x, value: res.value, seed: run_seed, evaluations: res.evaluations, trace: res.trace }
            })
            .collect();
        evaluations += runs.iter().map(|r| r.evaluations).sum::<usize>();
        let best = runs
            .into_iter()
            .min_by(|a, b| a.value.total_cmp(&b.value).then(a.seed.cmp(&b.seed)))
            .expect("at least one restart");
        let base = trace.len();
        trace.extend(best.trace.iter().enumerate().map(|(i, &v)| TracePoint { iteration: base + i, best_value: v }));
        let segments = decode(&best.x, &spec.bounds);
        let fidelity = obj.fidelity(&segments);
        if fidelity > best_overall.0 {
            best_overall = (fidelity, depth);
        }
        if fidelity >= spec.fidelity_goal {
            return Ok(PulseSearchResult { segments, fidelity, objective: best.value, evaluations, seed: best.seed, trace });
        }
        previous = Some(best.x);
    }
    Err(Error::NotConverged(format!(
        "fidelity goal {} not reached with up to {} segments (best {:.6} at {} segments)",
        spec.fidelity_goal, spec.max_segments, best_overall.0, best_overall.1
    )))
}
