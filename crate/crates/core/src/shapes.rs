//! Pulse segments, shaped pulses, phase ramping, Bloch-Siegert shifts,
//! frequency responses and coupling unwinding.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::evolve::{segment_propagator_common, DensityMatrix};
use crate::linalg::Operator;
use crate::metrics::avg_gate_fidelity_unitary;
use crate::spinsys::{coupling_hamiltonian, system_hamiltonian, CouplingModel, PauliLabel, SpinSystem};

/// One piecewise-constant stretch of RF.
///
/// `phase_rad` is the RF phase: phase π drives a rotation about +x. The
/// transmitter offset is relative to the reference frame. `target_spins`
/// restricts which spins feel the field; `None` means all of them. Spin
/// indices are 0-based in Rust and 1-based in JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PulseSegment {
    pub duration_s: f64,
    pub amplitude_hz: f64,
    pub phase_rad: f64,
    #[serde(default)]
    pub transmitter_offset_hz: f64,
    #[serde(default, with = "crate::io::one_based_set", skip_serializing_if = "Option::is_none")]
    pub target_spins: Option<Vec<usize>>,
}

impl PulseSegment {
    pub fn new(duration_s: f64, amplitude_hz: f64, phase_rad: f64, transmitter_offset_hz: f64) -> Self {
        PulseSegment { duration_s, amplitude_hz, phase_rad, transmitter_offset_hz, target_spins: None }
    }

    pub fn on_spins(mut self, spins: Vec<usize>) -> Self {
        self.target_spins = Some(spins);
        self
    }

    pub fn targets(&self, k: usize) -> bool {
        self.target_spins.as_ref().is_none_or(|t| t.contains(&k))
    }

    pub fn validate(&self, n: usize) -> Result<()> {
        if !(self.duration_s > 0.0) || !self.duration_s.is_finite() {
            return Err(Error::invalid(format!("segment duration must be positive, got {}", self.duration_s)));
        }
        if !(self.amplitude_hz >= 0.0) || !self.amplitude_hz.is_finite() {
            return Err(Error::invalid(format!("segment amplitude must be non-negative, got {}", self.amplitude_hz)));
        }
        if !self.phase_rad.is_finite() || !self.transmitter_offset_hz.is_finite() {
            return Err(Error::invalid("segment phase and transmitter offset must be finite"));
        }
        if let Some(t) = &self.target_spins {
            if let Some(&bad) = t.iter().find(|&&k| k >= n) {
                return Err(Error::invalid(format!("target spin {} out of range for {n} spins", bad + 1)));
            }
        }
        Ok(())
    }

    /// Rotation angle on resonance, 2π·amp·τ.
    pub fn nutation_angle(&self) -> f64 {
        2.0 * PI * self.amplitude_hz * self.duration_s
    }
}

/// Shape families and their parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params", rename_all = "snake_case")]
pub enum ShapeFamily {
    Rectangular,
    /// Gaussian truncated where it has fallen to `truncation` of its peak.
    Gaussian { truncation: f64 },
    /// (1 − c·x²)·exp(−x²) sampled on x ∈ [−x_max, x_max].
    Hermite90 { c: f64, x_max: f64 },
    Hermite180 { c: f64, x_max: f64 },
    /// A0 + Σ_n A_n cos(2πnt/t_pw) + B_n sin(2πnt/t_pw); `a` holds A0, A1, ...
    /// and `b` holds B1, B2, ...
    FourierSeries { a: Vec<f64>, b: Vec<f64> },
}

impl ShapeFamily {
    pub fn gaussian() -> Self {
        ShapeFamily::Gaussian { truncation: 0.01 }
    }

    pub fn hermite_90() -> Self {
        ShapeFamily::Hermite90 { c: 0.667, x_max: 2.0 }
    }

    pub fn hermite_180() -> Self {
        ShapeFamily::Hermite180 { c: 1.0, x_max: 2.9 }
    }

    /// Family with default parameters from a short name.
    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "rect" | "rectangular" => Ok(ShapeFamily::Rectangular),
            "gauss" | "gaussian" => Ok(ShapeFamily::gaussian()),
            "hermite_90" | "hermite90" => Ok(ShapeFamily::hermite_90()),
            "hermite_180" | "hermite180" => Ok(ShapeFamily::hermite_180()),
            other => Err(Error::invalid(format!("unknown shape family '{other}'"))),
        }
    }

    /// Signed envelope at fractional time u ∈ [0, 1].
    fn envelope(&self, u: f64) -> Result<f64> {
        Ok(match self {
            ShapeFamily::Rectangular => 1.0,
            ShapeFamily::Gaussian { truncation } => {
                if !(*truncation > 0.0 && *truncation < 1.0) {
                    return Err(Error::invalid("gaussian truncation must lie in (0, 1)"));
                }
                let x = 2.0 * u - 1.0;
                (x * x * truncation.ln()).exp()
            }
            ShapeFamily::Hermite90 { c, x_max } | ShapeFamily::Hermite180 { c, x_max } => {
                if !(*x_max > 0.0) {
                    return Err(Error::invalid("hermite x_max must be positive"));
                }
                let x = x_max * (2.0 * u - 1.0);
                (1.0 - c * x * x) * (-x * x).exp()
            }
            ShapeFamily::FourierSeries { a, b } => {
                let w = 2.0 * PI * u;
                let mut s = a.first().copied().unwrap_or(0.0);
                for (n, an) in a.iter().enumerate().skip(1) {
                    s += an * (n as f64 * w).cos();
                }
                for (n, bn) in b.iter().enumerate() {
                    s += bn * ((n + 1) as f64 * w).sin();
                }
                s
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShapeSpec {
    #[serde(flatten)]
    pub family: ShapeFamily,
    #[serde(default = "default_slices")]
    pub n_slices: usize,
}

fn default_slices() -> usize {
    DEFAULT_SLICES
}

pub const DEFAULT_SLICES: usize = 256;

impl ShapeSpec {
    pub fn new(family: ShapeFamily, n_slices: usize) -> Self {
        ShapeSpec { family, n_slices }
    }

    pub fn rectangular() -> Self {
        ShapeSpec::new(ShapeFamily::Rectangular, 1)
    }

    /// Signed slice amplitudes in Hz whose area gives `angle` on resonance.
    pub fn signed_amplitudes(&self, t_pw: f64, angle: f64) -> Result<Vec<f64>> {
        if self.n_slices == 0 {
            return Err(Error::invalid("n_slices must be at least 1"));
        }
        if !(t_pw > 0.0) || !t_pw.is_finite() {
            return Err(Error::invalid(format!("pulse width must be positive, got {t_pw}")));
        }
        let m = self.n_slices;
        let dt = t_pw / m as f64;
        let raw = (0..m)
            .map(|k| self.family.envelope((k as f64 + 0.5) / m as f64))
            .collect::<Result<Vec<f64>>>()?;
        let area: f64 = raw.iter().sum::<f64>() * dt;
        if area.abs() < 1e-300 {
            return Err(Error::invalid("shape has zero net area and cannot be normalized"));
        }
        let scale = angle / (2.0 * PI * area);
        Ok(raw.into_iter().map(|r| r * scale).collect())
    }
}

/// Slices a shape into segments at transmitter offset 0 and RF phase π
/// (rotation about +x). Negative lobes become a phase shift of π.
pub fn sample_shape(spec: &ShapeSpec, t_pw: f64, nominal_angle: f64) -> Result<Vec<PulseSegment>> {
    sample_shape_with_phase(spec, t_pw, nominal_angle, PI)
}

pub fn sample_shape_with_phase(spec: &ShapeSpec, t_pw: f64, angle: f64, phase: f64) -> Result<Vec<PulseSegment>> {
    let dt = t_pw / spec.n_slices.max(1) as f64;
    Ok(spec
        .signed_amplitudes(t_pw, angle)?
        .into_iter()
        .map(|a| signed_segment(dt, a, phase, 0.0))
        .collect())
}

fn signed_segment(dt: f64, amp: f64, phase: f64, tx: f64) -> PulseSegment {
    if amp < 0.0 {
        PulseSegment::new(dt, -amp, wrap_phase(phase + PI), tx)
    } else {
        PulseSegment::new(dt, amp, wrap_phase(phase), tx)
    }
}

pub(crate) fn wrap_phase(p: f64) -> f64 {
    let w = p.rem_euclid(2.0 * PI);
    if w > PI {
        w - 2.0 * PI
    } else {
        w
    }
}

fn uniform_slice(segments: &[PulseSegment]) -> Result<f64> {
    let first = segments.first().ok_or_else(|| Error::invalid("no segments"))?.duration_s;
    if segments.iter().any(|s| (s.duration_s - first).abs() > 1e-12 * first) {
        return Err(Error::invalid("phase ramping needs uniform slice durations"));
    }
    Ok(first)
}

/// Emulates a transmitter shift of `freq_shift` Hz by per-slice phase steps
/// of 2π·f·Δt. The field rotates in the negative sense for a positive
/// shift, matching how a spin at a positive offset precesses, and the ramp
/// is referenced to slice centers.
pub fn phase_ramp(segments: &[PulseSegment], freq_shift: f64) -> Result<Vec<PulseSegment>> {
    if segments.is_empty() {
        return Ok(Vec::new());
    }
    let dt = uniform_slice(segments)?;
    if freq_shift == 0.0 {
        return Ok(segments.to_vec());
    }
    Ok(segments
        .iter()
        .enumerate()
        .map(|(k, s)| {
            let mut out = s.clone();
            out.phase_rad = wrap_phase(s.phase_rad - 2.0 * PI * freq_shift * (k as f64 + 0.5) * dt);
            out
        })
        .collect())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlochSiegert {
    pub shift_hz: f64,
    /// False when |offset| does not exceed the amplitude.
    pub valid: bool,
}

/// ω1²/(2Δ), Δ = spin offset minus transmitter. A spin above the transmitter
/// is pushed further up.
pub fn bloch_siegert_shift(amp_hz: f64, offset_hz: f64) -> BlochSiegert {
    let valid = offset_hz.abs() > amp_hz.abs();
    let shift_hz = if amp_hz == 0.0 { 0.0 } else { amp_hz * amp_hz / (2.0 * offset_hz) };
    BlochSiegert { shift_hz, valid }
}

/// Exact shift of the effective precession frequency, sign(Δ)(√(Δ²+ω1²) − |Δ|),
/// whose leading term is the Bloch-Siegert expression.
pub fn offresonance_shift(amp_hz: f64, offset_hz: f64) -> f64 {
    offset_hz.signum() * (offset_hz.hypot(amp_hz) - offset_hz.abs())
}

/// One component of a simultaneous multi-frequency pulse.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimultaneousPulse {
    pub shape: ShapeSpec,
    pub t_pw_s: f64,
    pub angle_rad: f64,
    pub carrier_hz: f64,
    #[serde(default = "pi")]
    pub phase_rad: f64,
}

fn pi() -> f64 {
    PI
}

/// Adds the slice fields of several shaped pulses, each carried at its own
/// frequency by phase ramping, into one segment list at transmitter offset 0.
///
/// With `track_shifts`, each pulse's frequency follows, slice by slice, the
/// shift its target spin suffers from the other pulses' instantaneous fields.
pub fn compose_simultaneous(pulses: &[SimultaneousPulse], track_shifts: bool) -> Result<Vec<PulseSegment>> {
    let first = pulses.first().ok_or_else(|| Error::invalid("no pulses to compose"))?;
    let m = first.shape.n_slices;
    if pulses.iter().any(|p| p.shape.n_slices != m || (p.t_pw_s - first.t_pw_s).abs() > 1e-15) {
        return Err(Error::invalid("simultaneous pulses need equal widths and slice counts"));
    }
    let dt = first.t_pw_s / m as f64;
    let amps = pulses
        .iter()
        .map(|p| p.shape.signed_amplitudes(p.t_pw_s, p.angle_rad))
        .collect::<Result<Vec<_>>>()?;
    let mut accumulated = vec![0.0; pulses.len()];
    let mut out = Vec::with_capacity(m);
    for k in 0..m {
        let mut field = num_complex::Complex64::new(0.0, 0.0);
        for (p, pulse) in pulses.iter().enumerate() {
            let mut freq = pulse.carrier_hz;
            if track_shifts {
                for (q, other) in pulses.iter().enumerate() {
                    if q != p {
                        freq += offresonance_shift(amps[q][k].abs(), pulse.carrier_hz - other.carrier_hz);
                    }
                }
            }
            let phase = pulse.phase_rad - 2.0 * PI * (accumulated[p] + 0.5 * freq * dt);
            accumulated[p] += freq * dt;
            field += num_complex::Complex64::from_polar(amps[p][k], phase);
        }
        out.push(PulseSegment::new(dt, field.norm(), wrap_phase(field.arg()), 0.0));
    }
    Ok(out)
}

/// Final Bloch vector of one detuning.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResponsePoint {
    pub detuning_hz: f64,
    pub bloch: [f64; 3],
}

impl ResponsePoint {
    pub fn mz(&self) -> f64 {
        self.bloch[2]
    }

    pub fn mxy(&self) -> f64 {
        self.bloch[0].hypot(self.bloch[1])
    }
}

/// Response of isolated spins at each detuning to an arbitrary segment list.
pub fn segments_response(segments: &[PulseSegment], detunings_hz: &[f64], initial: [f64; 3]) -> Result<Vec<ResponsePoint>> {
    for s in segments {
        s.validate(1)?;
    }
    let rho0 = DensityMatrix::from_bloch(initial)?;
    detunings_hz
        .par_iter()
        .map(|&d| {
            let sys = SpinSystem::uncoupled(vec![d])?;
            let h = system_hamiltonian(&sys, None)?;
            let u = segments
                .iter()
                .fold(Operator::identity(2), |acc, s| &segment_propagator_common(&h, 1, s) * &acc);
            let rho = rho0.evolve_unitary(&u);
            Ok(ResponsePoint { detuning_hz: d, bloch: rho.bloch(0) })
        })
        .collect()
}

/// Frequency response of a shaped pulse.
pub fn frequency_response(
    spec: &ShapeSpec,
    t_pw: f64,
    nominal_angle: f64,
    detunings_hz: &[f64],
    initial: [f64; 3],
) -> Result<Vec<ResponsePoint>> {
    segments_response(&sample_shape(spec, t_pw, nominal_angle)?, detunings_hz, initial)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnwindResult {
    /// Unwinding time applied on each side of the pulse.
    pub tau_s: f64,
    pub fidelity: f64,
    /// Best unwinding applied entirely after the pulse.
    pub one_sided_tau_s: f64,
    pub one_sided_fidelity: f64,
    /// Fidelity without any unwinding.
    pub bare_fidelity: f64,
}

fn golden_section_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> (f64, f64) {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - r * (b - a);
    let mut x2 = a + r * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while (b - a).abs() > tol {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + r * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - r * (b - a);
            f1 = f(x1);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}

/// Finds the coupling-unwinding time τ for which
/// e^{+iH_J τ} U_pulse e^{+iH_J τ} best matches the same pulse simulated
/// without couplings, by golden-section search over τ ∈ [0, t_pw].
pub fn unwind_coupling(segments: &[PulseSegment], sys: &SpinSystem) -> Result<UnwindResult> {
    if sys.n() < 2 || sys.model() != CouplingModel::WeakZz {
        return Err(Error::invalid("coupling unwinding needs at least two spins with the weak_zz model"));
    }
    for s in segments {
        s.validate(sys.n())?;
    }
    let t_pw: f64 = segments.iter().map(|s| s.duration_s).sum();
    if sys.couplings_hz().iter().flatten().all(|&j| j == 0.0) {
        return Ok(UnwindResult { tau_s: 0.0, fidelity: 1.0, one_sided_tau_s: 0.0, one_sided_fidelity: 1.0, bare_fidelity: 1.0 });
    }
    let run = |h: &Operator| {
        segments
            .iter()
            .fold(Operator::identity(sys.dim()), |acc, s| &segment_propagator_common(h, sys.n(), s) * &acc)
    };
    let h_full = system_hamiltonian(sys, None)?;
    let hj = coupling_hamiltonian(sys, None)?;
    let ideal = run(&(&h_full - &hj));
    let actual = run(&h_full);
    let unwind = |tau: f64| hj.expm_hermitian(-tau);
    let symmetric = |tau: f64| {
        let w = unwind(tau);
        avg_gate_fidelity_unitary(&(&(&w * &actual) * &w), &ideal)
    };
    let one_sided = |tau: f64| avg_gate_fidelity_unitary(&(&unwind(tau) * &actual), &ideal);
    let probes: Vec<f64> = (0..=8).map(|k| symmetric(t_pw * k as f64 / 8.0)).collect();
    let spread = probes.iter().cloned().fold(f64::MIN, f64::max) - probes.iter().cloned().fold(f64::MAX, f64::min);
    if spread < 1e-14 {
        return Err(Error::NotConverged("unwinding objective is flat".into()));
    }
    let tol = 1e-9 * t_pw;
    let (tau, fid) = golden_section_max(symmetric, 0.0, t_pw, tol);
    let (tau1, fid1) = golden_section_max(one_sided, 0.0, 2.0 * t_pw, tol);
    Ok(UnwindResult { tau_s: tau, fidelity: fid, one_sided_tau_s: tau1, one_sided_fidelity: fid1, bare_fidelity: symmetric(0.0) })
}

/// Bloch vector (⟨σx⟩, ⟨σy⟩, ⟨σz⟩) of spin `k` of a state.
pub fn bloch_of(rho: &Operator, k: usize) -> [f64; 3] {
    let n = rho.n_spins();
    let comp = |l: PauliLabel| (rho * &crate::spinsys::spin_op(n, k, l)).trace().re * 2.0;
    [comp(PauliLabel::X), comp(PauliLabel::Y), comp(PauliLabel::Z)]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{rotation_2x2, C64};
    use approx::assert_abs_diff_eq;

    fn area(segs: &[PulseSegment]) -> f64 {
        segs.iter().map(|s| s.nutation_angle() * -s.phase_rad.cos()).sum()
    }

    #[test]
    fn rectangular_pi_is_500_hz() {
        let segs = sample_shape(&ShapeSpec::rectangular(), 1e-3, PI).unwrap();
        assert_eq!(segs.len(), 1);
        assert_abs_diff_eq!(segs[0].amplitude_hz, 500.0, epsilon = 1e-9);
    }

    #[test]
    fn every_family_has_the_nominal_area() {
        let families = [
            ShapeFamily::Rectangular,
            ShapeFamily::gaussian(),
            ShapeFamily::hermite_90(),
            ShapeFamily::hermite_180(),
            ShapeFamily::FourierSeries { a: vec![1.0, -0.6, 0.2], b: vec![0.1] },
        ];
        for f in families {
            let segs = sample_shape(&ShapeSpec::new(f, 128), 2e-3, PI / 2.0).unwrap();
            assert_abs_diff_eq!(area(&segs), PI / 2.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn single_slice_gaussian_is_rectangular() {
        let g = sample_shape(&ShapeSpec::new(ShapeFamily::gaussian(), 1), 1e-3, PI).unwrap();
        let r = sample_shape(&ShapeSpec::rectangular(), 1e-3, PI).unwrap();
        assert_abs_diff_eq!(g[0].amplitude_hz, r[0].amplitude_hz, epsilon = 1e-9);
    }

    #[test]
    fn shape_json_round_trip() {
        let spec = ShapeSpec::new(ShapeFamily::FourierSeries { a: vec![1.0, 0.5], b: vec![0.25] }, 64);
        let text = serde_json::to_string(&spec).unwrap();
        assert!(text.contains("\"family\":\"fourier_series\""));
        assert_eq!(serde_json::from_str::<ShapeSpec>(&text).unwrap(), spec);
        let rect: ShapeSpec = serde_json::from_str(r#"{"family":"rectangular","n_slices":1}"#).unwrap();
        assert_eq!(rect, ShapeSpec::rectangular());
    }

    #[test]
    fn zero_ramp_is_identity_and_steps_are_uniform() {
        let segs = sample_shape(&ShapeSpec::new(ShapeFamily::Rectangular, 16), 1e-3, PI).unwrap();
        assert_eq!(phase_ramp(&segs, 0.0).unwrap(), segs);
        let f = 730.0;
        let r = phase_ramp(&segs, f).unwrap();
        let dt = 1e-3 / 16.0;
        for w in r.windows(2) {
            let step = wrap_phase(w[0].phase_rad - w[1].phase_rad);
            assert_abs_diff_eq!(step, 2.0 * PI * f * dt, epsilon = 1e-12);
        }
    }

    #[test]
    fn nonuniform_slices_rejected() {
        let segs = vec![PulseSegment::new(1e-4, 10.0, 0.0, 0.0), PulseSegment::new(2e-4, 10.0, 0.0, 0.0)];
        assert!(phase_ramp(&segs, 100.0).is_err());
    }

    #[test]
    fn ramped_pulse_follows_the_shifted_spin() {
        for family in [ShapeFamily::Rectangular, ShapeFamily::gaussian(), ShapeFamily::hermite_90()] {
            for f in [-450.0, 120.0, 900.0] {
                let t = 1e-3;
                let segs = sample_shape(&ShapeSpec::new(family.clone(), 256), t, PI / 2.0).unwrap();
                let ramped = phase_ramp(&segs, f).unwrap();
                let moved = segments_response(&ramped, &[f], [0.0, 0.0, 1.0]).unwrap()[0].bloch;
                let still = segments_response(&segs, &[0.0], [0.0, 0.0, 1.0]).unwrap()[0].bloch;
                // Undo the spin's own precession, a rotation by −2πft about z.
                let a = 2.0 * PI * f * t;
                let own = [moved[0] * a.cos() - moved[1] * a.sin(), moved[0] * a.sin() + moved[1] * a.cos(), moved[2]];
                let overlap: f64 = (0..3).map(|i| own[i] * still[i]).sum();
                let fidelity = (1.0 + overlap) / 2.0;
                assert!(fidelity >= 1.0 - 1e-6, "{family:?} f={f} fidelity {fidelity}");
            }
        }
    }

    #[test]
    fn bloch_siegert_values() {
        let bs = bloch_siegert_shift(500.0, 3273.0);
        assert_abs_diff_eq!(bs.shift_hz, 38.19, epsilon = 0.005);
        assert!(bs.valid);
        assert_abs_diff_eq!(bloch_siegert_shift(500.0, -3273.0).shift_hz, -bs.shift_hz, epsilon = 1e-12);
        assert_eq!(bloch_siegert_shift(0.0, 100.0).shift_hz, 0.0);
        assert!(!bloch_siegert_shift(500.0, 300.0).valid);
    }

    #[test]
    fn bloch_siegert_matches_simulated_phase() {
        // Precession frequency of a far-detuned spin with and without drive,
        // read from the eigenphase splitting of a short propagator.
        let (amp, off, t) = (500.0, 3273.0, 1e-4);
        let sys = SpinSystem::uncoupled(vec![off]).unwrap();
        let h = system_hamiltonian(&sys, None).unwrap();
        let freq = |a: f64| {
            let u = segment_propagator_common(&h, 1, &PulseSegment::new(t, a, PI, 0.0));
            let (ph, _) = u.unitary_eigen();
            (ph[0] - ph[1]).abs() / (2.0 * PI * t)
        };
        let measured = freq(amp) - freq(0.0);
        assert_abs_diff_eq!(measured, offresonance_shift(amp, off), epsilon = 1e-6);
        // The second-order estimate differs from the exact shift by a
        // relative (ω1/Δ)²/4 at next order.
        let approx = bloch_siegert_shift(amp, off).shift_hz;
        let next = (amp / off).powi(2) / 4.0;
        assert!(((approx - measured) / approx - next).abs() < 0.1 * next);
    }

    #[test]
    fn rectangular_inversion_and_offresonance() {
        let pts = frequency_response(&ShapeSpec::rectangular(), 1e-3, PI, &[0.0, 500.0, 50_000.0], [0.0, 0.0, 1.0]).unwrap();
        assert_abs_diff_eq!(pts[0].mz(), -1.0, epsilon = 1e-12);
        assert!(pts[2].mz() > 0.999);
        // Δω = ω1: rotation by √2·π about the axis at 45° to z.
        let r = rotation_2x2([1.0, 0.0, -1.0], 2f64.sqrt() * PI);
        let rho = DensityMatrix::from_bloch([0.0, 0.0, 1.0]).unwrap().evolve_unitary(&r);
        assert_abs_diff_eq!(pts[1].mz(), rho.bloch(0)[2], epsilon = 1e-10);
        for p in &pts {
            let norm: f64 = p.bloch.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert_abs_diff_eq!(norm, 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn unwinding_without_coupling_is_trivial() {
        let sys = SpinSystem::pair(0.0, 300.0, 0.0, CouplingModel::WeakZz).unwrap();
        let segs = vec![PulseSegment::new(1e-3, 250.0, PI, 0.0).on_spins(vec![0])];
        let r = unwind_coupling(&segs, &sys).unwrap();
        assert_eq!(r.tau_s, 0.0);
        assert_eq!(r.fidelity, 1.0);
    }

    #[test]
    fn unwinding_time_is_near_half_the_pulse() {
        let sys = SpinSystem::pair(0.0, 0.0, 80.0, CouplingModel::WeakZz).unwrap();
        let t = 2e-3;
        let segs = vec![PulseSegment::new(t, 125.0, PI, 0.0).on_spins(vec![0])];
        let r = unwind_coupling(&segs, &sys).unwrap();
        assert!(r.tau_s > 0.2 * t && r.tau_s < 0.8 * t, "tau {}", r.tau_s);
        assert!((r.tau_s - t / 2.0).abs() > 1e-3 * t);
        assert!(r.fidelity >= r.one_sided_fidelity - 1e-12);
        assert!(r.fidelity > r.bare_fidelity);
    }

    #[test]
    fn composed_pulse_without_tracking_is_a_plain_sum() {
        let p = |c: f64| SimultaneousPulse {
            shape: ShapeSpec::new(ShapeFamily::Rectangular, 8),
            t_pw_s: 1e-3,
            angle_rad: PI,
            carrier_hz: c,
            phase_rad: PI,
        };
        let segs = compose_simultaneous(&[p(0.0), p(0.0)], false).unwrap();
        assert_abs_diff_eq!(segs[0].amplitude_hz, 1000.0, epsilon = 1e-9);
        let single = compose_simultaneous(&[p(250.0)], false).unwrap();
        let ramped = phase_ramp(&sample_shape(&ShapeSpec::new(ShapeFamily::Rectangular, 8), 1e-3, PI).unwrap(), 250.0).unwrap();
        for (a, b) in single.iter().zip(&ramped) {
            assert_abs_diff_eq!(a.phase_rad, b.phase_rad, epsilon = 1e-12);
        }
        let _ = C64::new(0.0, 0.0);
    }
}
