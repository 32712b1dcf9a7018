//! Unitary propagation, density matrices, relaxation channels and
//! time-stepped sequence evolution.

use std::collections::HashMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::compile::{SeqItem, Sequence};
use crate::error::{Error, Result};
use crate::linalg::{embed, normalized, CMatrix, CVector, Operator, C64, STRUCTURE_TOL};
use crate::shapes::PulseSegment;
use crate::spinsys::{
    control_hamiltonian_common, spin_op, system_hamiltonian, total_spin_op, zeeman_hamiltonian, DipolarGeometry, PauliLabel,
    SpinSystem,
};

/// Ordered product of exp(−i H_k τ_k), later slices on the left.
pub fn propagate(h_slices: &[(Operator, f64)]) -> Result<Operator> {
    let dim = h_slices.first().map_or(1, |(h, _)| h.dim());
    let mut u = Operator::identity(dim);
    for (k, (h, t)) in h_slices.iter().enumerate() {
        if h.dim() != dim {
            return Err(Error::Dimension { expected: dim, found: h.dim() });
        }
        h.require_hermitian(&format!("slice {k} Hamiltonian"))?;
        u = &h.expm_hermitian(*t) * &u;
    }
    check_unitary(&u)?;
    Ok(u)
}

pub(crate) fn check_unitary(u: &Operator) -> Result<()> {
    let e = u.unitarity_error();
    if e > STRUCTURE_TOL {
        return Err(Error::numerical(format!("propagator lost unitarity (error {e:.3e})")));
    }
    Ok(())
}

/// Exact propagator of one segment in the common frame rotating at the
/// reference frequency.
///
/// In the frame of the segment's transmitter the drive is static, so
/// U = exp(+i ω_tx τ F_z) · exp(−i (H_sys + ω_tx F_z + H_c) τ), with F_z the
/// total z angular momentum. H_sys must commute with F_z, which holds for
/// every coupling model here.
pub fn segment_propagator_common(h_sys: &Operator, n: usize, seg: &PulseSegment) -> Operator {
    let w_tx = 2.0 * PI * seg.transmitter_offset_hz;
    let hc = control_hamiltonian_common(n, seg, 0.0);
    if w_tx == 0.0 {
        return (h_sys + &hc).expm_hermitian(seg.duration_s);
    }
    let fz = total_spin_op(n, PauliLabel::Z);
    let h_rot = h_sys + &hc + fz.scale_real(w_tx);
    &fz.expm_hermitian(-w_tx * seg.duration_s) * &h_rot.expm_hermitian(seg.duration_s)
}

/// Unit-trace, Hermitian, positive semidefinite state.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix(Operator);

/// Tolerance for Hermiticity and trace checks on states.
pub const STATE_TOL: f64 = 1e-10;
/// Most negative eigenvalue accepted in a state.
pub const PSD_TOL: f64 = 1e-9;

impl DensityMatrix {
    pub fn new(op: Operator) -> Result<Self> {
        let rho = DensityMatrix(op);
        rho.validate()?;
        Ok(rho)
    }

    pub fn validate(&self) -> Result<()> {
        let h = self.0.hermiticity_error();
        if h > STATE_TOL {
            return Err(Error::invalid(format!("density matrix is not Hermitian (error {h:.3e})")));
        }
        let tr = self.0.trace();
        if (tr.re - 1.0).abs() > STATE_TOL || tr.im.abs() > STATE_TOL {
            return Err(Error::invalid(format!("density matrix trace is {tr}, not 1")));
        }
        let min = self.min_eigenvalue();
        if min < -PSD_TOL {
            return Err(Error::invalid(format!("density matrix has negative eigenvalue {min:.3e}")));
        }
        Ok(())
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.0.hermitian_eigen().0[0]
    }

    pub fn from_pure(psi: &CVector) -> Result<Self> {
        if psi.len() == 0 || !psi.len().is_power_of_two() {
            return Err(Error::invalid("state vector length must be a power of two"));
        }
        let v = normalized(psi);
        Ok(DensityMatrix(Operator::from_matrix_unchecked(&v * v.adjoint())))
    }

    /// Computational basis state |index⟩ of `n` spins.
    pub fn basis(n: usize, index: usize) -> Self {
        let dim = 1 << n;
        let mut m = CMatrix::zeros(dim, dim);
        m[(index, index)] = C64::new(1.0, 0.0);
        DensityMatrix(Operator::from_matrix_unchecked(m))
    }

    pub fn ground(n: usize) -> Self {
        DensityMatrix::basis(n, 0)
    }

    pub fn maximally_mixed(n: usize) -> Self {
        DensityMatrix(Operator::identity(1 << n).scale_real(1.0 / (1 << n) as f64))
    }

    /// Single-spin state (I + m·σ)/2 for |m| ≤ 1.
    pub fn from_bloch(m: [f64; 3]) -> Result<Self> {
        let norm = (m[0] * m[0] + m[1] * m[1] + m[2] * m[2]).sqrt();
        if norm > 1.0 + 1e-12 {
            return Err(Error::invalid(format!("Bloch vector length {norm} exceeds 1")));
        }
        let op = Operator::identity(2)
            + PauliLabel::X.sigma().scale_real(m[0])
            + PauliLabel::Y.sigma().scale_real(m[1])
            + PauliLabel::Z.sigma().scale_real(m[2]);
        Ok(DensityMatrix(op.scale_real(0.5)))
    }

    /// Tensor product of single-spin Bloch states, spin 1 first.
    pub fn product_of_bloch(ms: &[[f64; 3]]) -> Result<Self> {
        let mut it = ms.iter();
        let first = DensityMatrix::from_bloch(*it.next().ok_or_else(|| Error::invalid("no spins"))?)?;
        it.try_fold(first, |acc, m| Ok(DensityMatrix(acc.0.kron(&DensityMatrix::from_bloch(*m)?.0))))
    }

    pub fn operator(&self) -> &Operator {
        &self.0
    }

    pub fn into_operator(self) -> Operator {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn n_spins(&self) -> usize {
        self.0.n_spins()
    }

    pub fn evolve_unitary(&self, u: &Operator) -> DensityMatrix {
        DensityMatrix(u.conjugate(&self.0))
    }

    /// Tr(ρ O).
    pub fn expectation(&self, o: &Operator) -> C64 {
        (&self.0 * o).trace()
    }

    /// (⟨σx⟩, ⟨σy⟩, ⟨σz⟩) of spin `k`.
    pub fn bloch(&self, k: usize) -> [f64; 3] {
        crate::shapes::bloch_of(&self.0, k)
    }

    pub fn max_abs_diff(&self, other: &DensityMatrix) -> f64 {
        self.0.max_abs_diff(&other.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KrausKind {
    PhaseDamping,
    AmplitudeDamping,
    Custom,
}

#[derive(Clone, Debug, PartialEq)]
pub struct KrausSet {
    pub operators: Vec<Operator>,
    pub kind: KrausKind,
}

impl KrausSet {
    pub fn new(operators: Vec<Operator>, kind: KrausKind) -> Result<Self> {
        let dim = operators.first().ok_or_else(|| Error::invalid("empty Kraus set"))?.dim();
        if operators.iter().any(|a| a.dim() != dim) {
            return Err(Error::invalid("Kraus operators differ in dimension"));
        }
        Ok(KrausSet { operators, kind })
    }

    pub fn unitary(u: Operator) -> Self {
        KrausSet { operators: vec![u], kind: KrausKind::Custom }
    }

    pub fn dim(&self) -> usize {
        self.operators[0].dim()
    }

    /// max entry of |Σ A†A − I|.
    pub fn completeness_error(&self) -> f64 {
        let sum = self
            .operators
            .iter()
            .fold(Operator::zeros(self.dim()), |acc, a| acc + &a.dagger() * a);
        sum.max_abs_diff(&Operator::identity(self.dim()))
    }

    pub fn is_trace_preserving(&self, tol: f64) -> bool {
        self.completeness_error() <= tol
    }

    /// Σ A ρ A† on an arbitrary (not necessarily physical) operator.
    pub fn apply_operator(&self, rho: &Operator) -> Operator {
        self.operators.iter().fold(Operator::zeros(rho.dim()), |acc, a| acc + a.conjugate(rho))
    }

    pub fn apply(&self, rho: &DensityMatrix) -> DensityMatrix {
        DensityMatrix(self.apply_operator(&rho.0))
    }

    /// Lifts a single-spin channel onto spin `k` of `n`.
    pub fn on_spin(&self, k: usize, n: usize) -> KrausSet {
        KrausSet { operators: self.operators.iter().map(|a| embed(a, k, n)).collect(), kind: self.kind }
    }

    /// Channel composition: `self` after `first`.
    pub fn after(&self, first: &KrausSet) -> KrausSet {
        let mut ops = Vec::with_capacity(self.operators.len() * first.operators.len());
        for a in &self.operators {
            for b in &first.operators {
                ops.push(a * b);
            }
        }
        KrausSet { operators: ops, kind: KrausKind::Custom }
    }
}

/// Phase- and amplitude-damping sets for one spin over one step.
#[derive(Clone, Debug, PartialEq)]
pub struct SpinDamping {
    pub phase: KrausSet,
    pub amplitude: KrausSet,
}

impl SpinDamping {
    pub fn combined(&self) -> KrausSet {
        self.phase.after(&self.amplitude)
    }
}

/// Per-step damping channels.
///
/// Amplitude damping uses γ_a = e^{−dt/T1}, so ρ11 decays as e^{−dt/T1} and
/// coherences by √γ_a. Phase damping uses γ = e^{−2dt/T_φ} with
/// 1/T_φ = 1/T2 − 1/(2T1), so the two together scale coherences by
/// exactly e^{−dt/T2}. The fixed point is |0⟩⟨0|.
pub fn damping_channels(t1: f64, t2: f64, dt: f64) -> Result<SpinDamping> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::invalid(format!("damping step must be positive, got {dt}")));
    }
    if !(t1 > 0.0) || !(t2 > 0.0) {
        return Err(Error::invalid("relaxation times must be positive"));
    }
    if t2 > 2.0 * t1 * (1.0 + 1e-12) {
        return Err(Error::invalid(format!("T2={t2} exceeds 2*T1={}", 2.0 * t1)));
    }
    let rate_phi = (1.0 / t2 - 0.5 / t1).max(0.0);
    let gamma = (-2.0 * dt * rate_phi).exp();
    let gamma_a = (-dt / t1).exp();
    let r = |x: f64| C64::new(x, 0.0);
    let phase = KrausSet {
        operators: vec![
            Operator::diagonal(&[r(1.0), r(gamma.sqrt())]),
            Operator::diagonal(&[r(0.0), r((1.0 - gamma).sqrt())]),
        ],
        kind: KrausKind::PhaseDamping,
    };
    let amplitude = KrausSet {
        operators: vec![
            Operator::diagonal(&[r(1.0), r(gamma_a.sqrt())]),
            Operator::from_rows(2, &[r(0.0), r((1.0 - gamma_a).sqrt()), r(0.0), r(0.0)]).expect("2x2"),
        ],
        kind: KrausKind::AmplitudeDamping,
    };
    Ok(SpinDamping { phase, amplitude })
}

/// Frame in which sequence results are expressed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Frame {
    /// Single frame rotating at the reference frequency; spin offsets precess.
    #[default]
    Common,
    /// Each spin in its own rotating frame; offsets drop out and ideal
    /// rotations act about each spin's own axes.
    MultiplyRotating,
}

/// Offset perturbations for one noise realization.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Perturbation {
    /// Constant extra offset per spin, Hz.
    pub static_offsets_hz: Vec<f64>,
    /// Piecewise-constant extra offsets: `values[step][spin]` holds over
    /// [step·dt, (step+1)·dt); the last value persists.
    pub trajectory: Option<OffsetTrajectory>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OffsetTrajectory {
    pub dt_s: f64,
    pub values_hz: Vec<Vec<f64>>,
}

impl OffsetTrajectory {
    fn at(&self, t: f64, k: usize) -> f64 {
        if self.values_hz.is_empty() {
            return 0.0;
        }
        let idx = ((t / self.dt_s).floor().max(0.0) as usize).min(self.values_hz.len() - 1);
        self.values_hz[idx][k]
    }
}

/// Named Hermitian observable recorded along a trajectory.
#[derive(Clone, Debug)]
pub struct Observable {
    pub name: String,
    pub operator: Operator,
}

impl Observable {
    /// ⟨σx⟩, ⟨σy⟩, ⟨σz⟩ for every spin, named like "s1.x".
    pub fn bloch_components(n: usize) -> Vec<Observable> {
        let mut v = Vec::new();
        for k in 0..n {
            for (l, tag) in [(PauliLabel::X, "x"), (PauliLabel::Y, "y"), (PauliLabel::Z, "z")] {
                v.push(Observable { name: format!("s{}.{tag}", k + 1), operator: spin_op(n, k, l).scale_real(2.0) });
            }
        }
        v
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub t_s: f64,
    pub observable_name: String,
    pub value: f64,
}

#[derive(Clone, Debug)]
pub struct EvolveOptions {
    /// Longest unitary step between damping channels. Defaults to T2/100 of
    /// the fastest-dephasing spin when relaxation is active.
    pub max_step_s: Option<f64>,
    pub relaxation: bool,
    pub perturbation: Option<Perturbation>,
    pub geometry: Option<DipolarGeometry>,
    pub frame: Frame,
    pub sample_times_s: Vec<f64>,
    pub observables: Vec<Observable>,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        EvolveOptions {
            max_step_s: None,
            relaxation: true,
            perturbation: None,
            geometry: None,
            frame: Frame::Common,
            sample_times_s: Vec::new(),
            observables: Vec::new(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct Evolution {
    pub rho: DensityMatrix,
    pub samples: Vec<TrajectorySample>,
    pub duration_s: f64,
}

struct Stepper<'a> {
    sys: &'a SpinSystem,
    opts: &'a EvolveOptions,
    h_base: Operator,
    h_zeeman: Operator,
    max_step: f64,
    damping: Option<Vec<(f64, f64)>>,
    channel_cache: HashMap<u64, Vec<KrausSet>>,
    time_varying: bool,
    samples: Vec<TrajectorySample>,
    next_sample: usize,
    sample_times: Vec<f64>,
    t: f64,
}

impl<'a> Stepper<'a> {
    fn new(sys: &'a SpinSystem, opts: &'a EvolveOptions) -> Result<Self> {
        let mut h_base = system_hamiltonian(sys, opts.geometry.as_ref())?;
        let n = sys.n();
        if let Some(p) = &opts.perturbation {
            if !p.static_offsets_hz.is_empty() && p.static_offsets_hz.len() != n {
                return Err(Error::Dimension { expected: n, found: p.static_offsets_hz.len() });
            }
            for (k, d) in p.static_offsets_hz.iter().enumerate() {
                h_base += &spin_op(n, k, PauliLabel::Z).scale_real(-2.0 * PI * d);
            }
            if let Some(tr) = &p.trajectory {
                if !(tr.dt_s > 0.0) || tr.values_hz.iter().any(|v| v.len() != n) {
                    return Err(Error::invalid("offset trajectory needs a positive step and one value per spin"));
                }
            }
        }
        let damping = if opts.relaxation && sys.has_relaxation() {
            Some(sys.relaxation().unwrap().iter().map(|r| (r.t1, r.t2)).collect::<Vec<_>>())
        } else {
            None
        };
        let mut max_step = opts.max_step_s.unwrap_or(f64::INFINITY);
        if let (None, Some(d)) = (opts.max_step_s, &damping) {
            let t2min = d.iter().map(|&(t1, t2)| t2.min(2.0 * t1)).fold(f64::INFINITY, f64::min);
            max_step = t2min / 100.0;
        }
        let traj = opts.perturbation.as_ref().and_then(|p| p.trajectory.as_ref());
        if let Some(tr) = traj {
            max_step = max_step.min(tr.dt_s);
        }
        if !(max_step > 0.0) {
            return Err(Error::invalid("interleave step must be positive"));
        }
        let mut sample_times = opts.sample_times_s.clone();
        sample_times.sort_by(f64::total_cmp);
        Ok(Stepper {
            sys,
            opts,
            h_zeeman: zeeman_hamiltonian(sys),
            h_base,
            max_step,
            damping,
            channel_cache: HashMap::new(),
            time_varying: traj.is_some(),
            samples: Vec::new(),
            next_sample: 0,
            sample_times,
            t: 0.0,
        })
    }

    fn hamiltonian_at(&self, t_mid: f64) -> Operator {
        let mut h = self.h_base.clone();
        if let Some(tr) = self.opts.perturbation.as_ref().and_then(|p| p.trajectory.as_ref()) {
            let n = self.sys.n();
            for k in 0..n {
                let d = tr.at(t_mid, k);
                if d != 0.0 {
                    h += &spin_op(n, k, PauliLabel::Z).scale_real(-2.0 * PI * d);
                }
            }
        }
        h
    }

    fn channels(&mut self, dt: f64) -> Result<Option<&Vec<KrausSet>>> {
        let Some(d) = &self.damping else { return Ok(None) };
        let key = dt.to_bits();
        if !self.channel_cache.contains_key(&key) {
            let n = self.sys.n();
            let mut sets = Vec::new();
            for (k, &(t1, t2)) in d.iter().enumerate() {
                if t1.is_infinite() && t2.is_infinite() {
                    continue;
                }
                let ch = damping_channels(t1, t2, dt)?;
                sets.push(ch.combined().on_spin(k, n));
            }
            self.channel_cache.insert(key, sets);
        }
        Ok(self.channel_cache.get(&key))
    }

    /// State in the reporting frame.
    fn reported(&self, rho: &Operator, t: f64) -> Operator {
        match self.opts.frame {
            Frame::Common => rho.clone(),
            Frame::MultiplyRotating => self.h_zeeman.expm_hermitian(-t).conjugate(rho),
        }
    }

    fn record(&mut self, rho: &Operator) {
        let tol = 1e-15 + 1e-12 * self.t.abs();
        while self.next_sample < self.sample_times.len() && self.sample_times[self.next_sample] <= self.t + tol {
            let ts = self.sample_times[self.next_sample];
            let view = self.reported(rho, self.t);
            for o in &self.opts.observables {
                let value = (&view * &o.operator).trace().re;
                self.samples.push(TrajectorySample { t_s: ts, observable_name: o.name.clone(), value });
            }
            self.next_sample += 1;
        }
    }

    /// Breakpoints inside (t, t+duration): sample times and step limits.
    /// Step lengths with the local time at the end of each step.
    fn step_plan(&self, duration: f64) -> Vec<(f64, f64)> {
        let mut cuts: Vec<f64> = self.sample_times[self.next_sample..]
            .iter()
            .map(|&s| s - self.t)
            .filter(|&s| s > 1e-15 && s < duration - 1e-15)
            .collect();
        cuts.push(duration);
        let mut plan = Vec::new();
        let mut prev = 0.0;
        for c in cuts {
            let span = c - prev;
            let pieces = if self.max_step.is_finite() { (span / self.max_step).ceil().max(1.0) as usize } else { 1 };
            for j in 1..=pieces {
                let end = if j == pieces { c } else { prev + span * j as f64 / pieces as f64 };
                plan.push((span / pieces as f64, end));
            }
            prev = c;
        }
        plan
    }

    /// Evolves through a timed item whose Hamiltonian in the segment's
    /// transmitter frame is static apart from the noise trajectory.
    fn timed(&mut self, rho: &mut Operator, duration: f64, seg: Option<&PulseSegment>) -> Result<()> {
        if duration <= 0.0 {
            return Ok(());
        }
        let n = self.sys.n();
        let plan = self.step_plan(duration);
        let start = self.t;
        let mut local = 0.0;
        let mut cached: Option<(u64, Operator)> = None;
        for (dt, end) in plan {
            let u = match seg {
                Some(s) => {
                    let mut piece = s.clone();
                    piece.duration_s = dt;
                    let w = 2.0 * PI * s.transmitter_offset_hz;
                    piece.phase_rad = s.phase_rad - w * local;
                    let h = self.hamiltonian_at(self.t + 0.5 * dt);
                    segment_propagator_common(&h, n, &piece)
                }
                None => {
                    let reuse = !self.time_varying && cached.as_ref().is_some_and(|(k, _)| *k == dt.to_bits());
                    if reuse {
                        cached.as_ref().unwrap().1.clone()
                    } else {
                        let u = self.hamiltonian_at(self.t + 0.5 * dt).expm_hermitian(dt);
                        if !self.time_varying {
                            cached = Some((dt.to_bits(), u.clone()));
                        }
                        u
                    }
                }
            };
            self.damp(rho, 0.5 * dt)?;
            *rho = u.conjugate(rho);
            self.damp(rho, 0.5 * dt)?;
            local += dt;
            self.t = start + end;
            self.record(rho);
        }
        Ok(())
    }

    fn damp(&mut self, rho: &mut Operator, dt: f64) -> Result<()> {
        if let Some(sets) = self.channels(dt)? {
            for set in sets {
                *rho = set.apply_operator(rho);
            }
        }
        Ok(())
    }

    fn instantaneous(&self, rho: &mut Operator, u_frame: &Operator) {
        let u = match self.opts.frame {
            Frame::Common => u_frame.clone(),
            Frame::MultiplyRotating => {
                let z = self.h_zeeman.expm_hermitian(self.t);
                &(&z * u_frame) * &z.dagger()
            }
        };
        *rho = u.conjugate(rho);
    }
}

/// Evolves `rho0` through `seq`, placing each unitary step between two
/// half-step applications of the system's damping channels and recording
/// observables at the requested times.
pub fn evolve_sequence(sys: &SpinSystem, seq: &Sequence, rho0: &DensityMatrix, opts: &EvolveOptions) -> Result<Evolution> {
    if rho0.dim() != sys.dim() {
        return Err(Error::Dimension { expected: sys.dim(), found: rho0.dim() });
    }
    seq.validate(sys.n())?;
    let mut st = Stepper::new(sys, opts)?;
    let mut rho = rho0.operator().clone();
    st.record(&rho);
    for item in seq.items() {
        match item {
            SeqItem::Pulse(seg) => st.timed(&mut rho, seg.duration_s, Some(seg))?,
            SeqItem::Delay { duration_s } => st.timed(&mut rho, *duration_s, None)?,
            SeqItem::Rotation { .. } | SeqItem::FrameZ { .. } => {
                let u = item.ideal_unitary(sys.n()).expect("instantaneous item");
                st.instantaneous(&mut rho, &u);
            }
        }
    }
    let total = st.t;
    let view = st.reported(&(rho.hermitian_part()), total);
    let out = DensityMatrix::new(view).map_err(|e| Error::numerical(format!("evolved state is unphysical: {e}")))?;
    Ok(Evolution { rho: out, samples: st.samples, duration_s: total })
}

/// Closed-system propagator of a sequence, ignoring relaxation.
pub fn sequence_unitary(sys: &SpinSystem, seq: &Sequence, frame: Frame, geometry: Option<&DipolarGeometry>) -> Result<Operator> {
    seq.validate(sys.n())?;
    let n = sys.n();
    let h = system_hamiltonian(sys, geometry)?;
    let hz = zeeman_hamiltonian(sys);
    let mut u = Operator::identity(sys.dim());
    let mut t = 0.0;
    for item in seq.items() {
        match item {
            SeqItem::Pulse(seg) => {
                u = &segment_propagator_common(&h, n, seg) * &u;
                t += seg.duration_s;
            }
            SeqItem::Delay { duration_s } => {
                u = &h.expm_hermitian(*duration_s) * &u;
                t += duration_s;
            }
            SeqItem::Rotation { .. } | SeqItem::FrameZ { .. } => {
                let r = item.ideal_unitary(n).expect("instantaneous item");
                let r = match frame {
                    Frame::Common => r,
                    Frame::MultiplyRotating => {
                        let z = hz.expm_hermitian(t);
                        &(&z * &r) * &z.dagger()
                    }
                };
                u = &r * &u;
            }
        }
    }
    if frame == Frame::MultiplyRotating {
        u = &hz.expm_hermitian(-t) * &u;
    }
    check_unitary(&u)?;
    Ok(u)
}
