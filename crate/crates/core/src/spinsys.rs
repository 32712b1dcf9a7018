//! Spin systems, Pauli-product operators and Hamiltonian builders.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::linalg::{embed, kron_all, Operator, I, ONE, ZERO};
use crate::shapes::PulseSegment;

pub const MAX_SPINS: usize = 7;
const SYMMETRY_TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingModel {
    WeakZz,
    Isotropic,
    DipolarSecular,
}

impl std::str::FromStr for CouplingModel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "weak_zz" => Ok(CouplingModel::WeakZz),
            "isotropic" => Ok(CouplingModel::Isotropic),
            "dipolar_secular" => Ok(CouplingModel::DipolarSecular),
            other => Err(Error::invalid(format!("unknown coupling model '{other}'"))),
        }
    }
}

/// Relaxation times in seconds; `f64::INFINITY` disables a channel.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Relaxation {
    pub t1: f64,
    pub t2: f64,
}

impl Relaxation {
    pub fn new(t1: f64, t2: f64) -> Result<Self> {
        if !(t1 > 0.0) || !(t2 > 0.0) {
            return Err(Error::invalid(format!("relaxation times must be positive, got T1={t1}, T2={t2}")));
        }
        if t2 > 2.0 * t1 * (1.0 + 1e-12) {
            return Err(Error::invalid(format!("T2={t2} exceeds 2*T1={}", 2.0 * t1)));
        }
        Ok(Relaxation { t1, t2 })
    }

    pub fn none() -> Self {
        Relaxation { t1: f64::INFINITY, t2: f64::INFINITY }
    }

    pub fn is_active(&self) -> bool {
        self.t1.is_finite() || self.t2.is_finite()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpinSystem {
    n: usize,
    offsets_hz: Vec<f64>,
    couplings_hz: Vec<Vec<f64>>,
    model: CouplingModel,
    relaxation: Option<Vec<Relaxation>>,
}

fn check_symmetric(m: &[Vec<f64>], n: usize, what: &str) -> Result<()> {
    if m.len() != n || m.iter().any(|r| r.len() != n) {
        return Err(Error::invalid(format!("{what} must be {n}x{n}")));
    }
    for i in 0..n {
        if m[i][i].abs() > SYMMETRY_TOL {
            return Err(Error::invalid(format!("{what} diagonal entry {} is nonzero", i + 1)));
        }
        for j in 0..n {
            if !m[i][j].is_finite() {
                return Err(Error::invalid(format!("{what} has a non-finite entry")));
            }
            if (m[i][j] - m[j][i]).abs() > SYMMETRY_TOL * (1.0 + m[i][j].abs()) {
                return Err(Error::invalid(format!("{what} is not symmetric at ({}, {})", i + 1, j + 1)));
            }
        }
    }
    Ok(())
}

impl SpinSystem {
    pub fn new(offsets_hz: Vec<f64>, couplings_hz: Vec<Vec<f64>>, model: CouplingModel) -> Result<Self> {
        let n = offsets_hz.len();
        if n == 0 {
            return Err(Error::invalid("a spin system needs at least one spin"));
        }
        if n > MAX_SPINS {
            return Err(Error::invalid(format!("{n} spins exceed the limit of {MAX_SPINS}")));
        }
        if offsets_hz.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("offsets must be finite"));
        }
        check_symmetric(&couplings_hz, n, "coupling matrix")?;
        Ok(SpinSystem { n, offsets_hz, couplings_hz, model, relaxation: None })
    }

    pub fn uncoupled(offsets_hz: Vec<f64>) -> Result<Self> {
        let n = offsets_hz.len();
        SpinSystem::new(offsets_hz, vec![vec![0.0; n]; n], CouplingModel::WeakZz)
    }

    /// Two spins with a single coupling constant.
    pub fn pair(offset1: f64, offset2: f64, j_hz: f64, model: CouplingModel) -> Result<Self> {
        SpinSystem::new(vec![offset1, offset2], vec![vec![0.0, j_hz], vec![j_hz, 0.0]], model)
    }

    pub fn with_relaxation(mut self, relaxation: Vec<Relaxation>) -> Result<Self> {
        if relaxation.len() != self.n {
            return Err(Error::Dimension { expected: self.n, found: relaxation.len() });
        }
        self.relaxation = Some(relaxation);
        Ok(self)
    }

    pub fn with_uniform_relaxation(self, t1: f64, t2: f64) -> Result<Self> {
        let r = Relaxation::new(t1, t2)?;
        let n = self.n;
        self.with_relaxation(vec![r; n])
    }

    pub fn with_offsets(&self, offsets_hz: Vec<f64>) -> Result<Self> {
        let mut s = SpinSystem::new(offsets_hz, self.couplings_hz.clone(), self.model)?;
        s.relaxation = self.relaxation.clone();
        Ok(s)
    }

    pub fn with_couplings(&self, couplings_hz: Vec<Vec<f64>>) -> Result<Self> {
        let mut s = SpinSystem::new(self.offsets_hz.clone(), couplings_hz, self.model)?;
        s.relaxation = self.relaxation.clone();
        Ok(s)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        1 << self.n
    }

    pub fn offsets_hz(&self) -> &[f64] {
        &self.offsets_hz
    }

    pub fn couplings_hz(&self) -> &[Vec<f64>] {
        &self.couplings_hz
    }

    pub fn coupling(&self, i: usize, j: usize) -> f64 {
        self.couplings_hz[i][j]
    }

    pub fn model(&self) -> CouplingModel {
        self.model
    }

    pub fn relaxation(&self) -> Option<&[Relaxation]> {
        self.relaxation.as_deref()
    }

    pub fn has_relaxation(&self) -> bool {
        self.relaxation.as_ref().is_some_and(|r| r.iter().any(Relaxation::is_active))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: SpinSystemDoc = serde_json::from_str(text)?;
        doc.into_system()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&SpinSystemDoc::from(self))?)
    }
}

/// File representation of a spin system. Missing or null relaxation entries
/// mean no relaxation on that spin.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpinSystemDoc {
    pub n: usize,
    pub offsets_hz: Vec<f64>,
    pub j_hz: Vec<Vec<f64>>,
    pub model: CouplingModel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t1_s: Option<Vec<Option<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t2_s: Option<Vec<Option<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dipolar_b_hz: Option<Vec<Vec<f64>>>,
}

impl SpinSystemDoc {
    pub fn into_system(self) -> Result<SpinSystem> {
        if self.offsets_hz.len() != self.n {
            return Err(Error::Dimension { expected: self.n, found: self.offsets_hz.len() });
        }
        let sys = SpinSystem::new(self.offsets_hz, self.j_hz, self.model)?;
        match (self.t1_s, self.t2_s) {
            (None, None) => Ok(sys),
            (t1, t2) => {
                let n = sys.n;
                let t1 = t1.unwrap_or_else(|| vec![None; n]);
                let t2 = t2.unwrap_or_else(|| vec![None; n]);
                if t1.len() != n || t2.len() != n {
                    return Err(Error::invalid("t1_s and t2_s need one entry per spin"));
                }
                let relax = t1
                    .iter()
                    .zip(&t2)
                    .map(|(a, b)| Relaxation::new(a.unwrap_or(f64::INFINITY), b.unwrap_or(f64::INFINITY)))
                    .collect::<Result<Vec<_>>>()?;
                sys.with_relaxation(relax)
            }
        }
    }

    pub fn geometry(&self) -> Result<Option<DipolarGeometry>> {
        self.dipolar_b_hz.clone().map(DipolarGeometry::new).transpose()
    }
}

impl From<&SpinSystem> for SpinSystemDoc {
    fn from(s: &SpinSystem) -> Self {
        let finite = |x: f64| if x.is_finite() { Some(x) } else { None };
        SpinSystemDoc {
            n: s.n,
            offsets_hz: s.offsets_hz.clone(),
            j_hz: s.couplings_hz.clone(),
            model: s.model,
            t1_s: s.relaxation.as_ref().map(|r| r.iter().map(|x| finite(x.t1)).collect()),
            t2_s: s.relaxation.as_ref().map(|r| r.iter().map(|x| finite(x.t2)).collect()),
            dipolar_b_hz: None,
        }
    }
}

/// Secular dipolar coupling constants b_ij in Hz, one per pair, with all
/// geometric and gyromagnetic prefactors folded in.
#[derive(Clone, Debug, PartialEq)]
pub struct DipolarGeometry {
    b_hz: Vec<Vec<f64>>,
}

impl DipolarGeometry {
    pub fn new(b_hz: Vec<Vec<f64>>) -> Result<Self> {
        let n = b_hz.len();
        check_symmetric(&b_hz, n, "dipolar matrix")?;
        Ok(DipolarGeometry { b_hz })
    }

    pub fn pair(b: f64) -> Self {
        DipolarGeometry { b_hz: vec![vec![0.0, b], vec![b, 0.0]] }
    }

    pub fn b_hz(&self) -> &[Vec<f64>] {
        &self.b_hz
    }

    pub fn n(&self) -> usize {
        self.b_hz.len()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum PauliLabel {
    I,
    X,
    Y,
    Z,
}

impl PauliLabel {
    pub const ALL: [PauliLabel; 4] = [PauliLabel::I, PauliLabel::X, PauliLabel::Y, PauliLabel::Z];

    pub fn from_char(c: char) -> Result<Self> {
        match c {
            '0' | 'i' | 'I' => Ok(PauliLabel::I),
            'x' | 'X' | '1' => Ok(PauliLabel::X),
            'y' | 'Y' | '2' => Ok(PauliLabel::Y),
            'z' | 'Z' | '3' => Ok(PauliLabel::Z),
            other => Err(Error::invalid(format!("invalid Pauli label '{other}'"))),
        }
    }

    pub fn symbol(self) -> char {
        match self {
            PauliLabel::I => '0',
            PauliLabel::X => 'x',
            PauliLabel::Y => 'y',
            PauliLabel::Z => 'z',
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    /// The bare Pauli matrix σ (identity for `I`).
    pub fn sigma(self) -> Operator {
        let rows = match self {
            PauliLabel::I => [ONE, ZERO, ZERO, ONE],
            PauliLabel::X => [ZERO, ONE, ONE, ZERO],
            PauliLabel::Y => [ZERO, -I, I, ZERO],
            PauliLabel::Z => [ONE, ZERO, ZERO, -ONE],
        };
        Operator::from_rows(2, &rows).expect("2x2")
    }
}

/// Parses a label string such as "zx0".
pub fn parse_labels(s: &str) -> Result<Vec<PauliLabel>> {
    s.chars().map(PauliLabel::from_char).collect()
}

/// Tensor product of σ/2 factors, identity factors included as I/2, so that
/// Tr(P_a P_b) = δ_ab / 2^n.
pub fn pauli_product(labels: &[PauliLabel]) -> Operator {
    let factors: Vec<Operator> = labels.iter().map(|l| l.sigma().scale_real(0.5)).collect();
    kron_all(&factors)
}

/// Tensor product of bare Pauli matrices σ_a ⊗ σ_b ⊗ ...
pub fn pauli_string(labels: &[PauliLabel]) -> Operator {
    let factors: Vec<Operator> = labels.iter().map(|l| l.sigma()).collect();
    kron_all(&factors)
}

/// All 4^n label tuples in lexicographic order over (0, x, y, z).
pub fn all_labels(n: usize) -> Vec<Vec<PauliLabel>> {
    (0..1usize << (2 * n))
        .map(|mut k| {
            let mut v = vec![PauliLabel::I; n];
            for slot in v.iter_mut().rev() {
                *slot = PauliLabel::ALL[k & 3];
                k >>= 2;
            }
            v
        })
        .collect()
}

/// Angular momentum component I_α = σ_α/2 on spin `k` of `n`.
pub fn spin_op(n: usize, k: usize, label: PauliLabel) -> Operator {
    embed(&label.sigma().scale_real(0.5), k, n)
}

/// Collective Σ_k I_α^k.
pub fn total_spin_op(n: usize, label: PauliLabel) -> Operator {
    (0..n).fold(Operator::zeros(1 << n), |acc, k| acc + spin_op(n, k, label))
}

fn zz(n: usize, i: usize, j: usize) -> Operator {
    &spin_op(n, i, PauliLabel::Z) * &spin_op(n, j, PauliLabel::Z)
}

fn dot(n: usize, i: usize, j: usize) -> Operator {
    [PauliLabel::X, PauliLabel::Y, PauliLabel::Z]
        .iter()
        .fold(Operator::zeros(1 << n), |acc, &l| acc + &spin_op(n, i, l) * &spin_op(n, j, l))
}

/// −Σ 2π offset_i I_z^i.
pub fn zeeman_hamiltonian(sys: &SpinSystem) -> Operator {
    let n = sys.n;
    (0..n).fold(Operator::zeros(sys.dim()), |acc, k| {
        acc + spin_op(n, k, PauliLabel::Z).scale_real(-2.0 * PI * sys.offsets_hz[k])
    })
}

/// Coupling part of the system Hamiltonian.
///
/// `weak_zz` gives Σ 2πJ I_z I_z, `isotropic` gives Σ 2πJ I·I, and
/// `dipolar_secular` gives Σ 2πb (3 I_z I_z − I·I) plus Σ 2πJ I·I for any
/// scalar couplings present.
pub fn coupling_hamiltonian(sys: &SpinSystem, geometry: Option<&DipolarGeometry>) -> Result<Operator> {
    let n = sys.n;
    let mut h = Operator::zeros(sys.dim());
    match (sys.model, geometry) {
        (CouplingModel::DipolarSecular, None) => {
            return Err(Error::invalid("dipolar_secular model requires a dipolar geometry"))
        }
        (CouplingModel::DipolarSecular, Some(g)) => {
            if g.n() != n {
                return Err(Error::Dimension { expected: n, found: g.n() });
            }
            for i in 0..n {
                for j in i + 1..n {
                    let b = g.b_hz[i][j];
                    if b != 0.0 {
                        let term = zz(n, i, j).scale_real(3.0) - dot(n, i, j);
                        h += &term.scale_real(2.0 * PI * b);
                    }
                }
            }
        }
        (_, Some(_)) => return Err(Error::invalid("dipolar geometry given for a non-dipolar coupling model")),
        (_, None) => {}
    }
    for i in 0..n {
        for j in i + 1..n {
            let jij = sys.couplings_hz[i][j];
            if jij == 0.0 {
                continue;
            }
            let term = match sys.model {
                CouplingModel::WeakZz => zz(n, i, j),
                CouplingModel::Isotropic | CouplingModel::DipolarSecular => dot(n, i, j),
            };
            h += &term.scale_real(2.0 * PI * jij);
        }
    }
    Ok(h)
}

/// Rotating-frame system Hamiltonian in rad/s.
pub fn system_hamiltonian(sys: &SpinSystem, geometry: Option<&DipolarGeometry>) -> Result<Operator> {
    Ok(zeeman_hamiltonian(sys) + coupling_hamiltonian(sys, geometry)?)
}

/// Control Hamiltonian, in rad/s, of `seg` at time `t` (seconds from the
/// start of the segment) in the multiply rotating frame, where each spin's
/// offset has been removed:
///
/// −2π·amp Σ_i [cos((Δ_i − f_tx)·2πt + φ) I_x^i + sin(...) I_y^i]
///
/// with Δ_i the spin's offset and f_tx the transmitter offset, both relative
/// to the reference frame. A spin at the transmitter frequency sees a static
/// field of phase φ.
pub fn control_hamiltonian(sys: &SpinSystem, seg: &PulseSegment, t: f64) -> Result<Operator> {
    seg.validate(sys.n)?;
    let n = sys.n;
    let mut h = Operator::zeros(sys.dim());
    if seg.amplitude_hz == 0.0 {
        return Ok(h);
    }
    for k in 0..n {
        if !seg.targets(k) {
            continue;
        }
        let angle = 2.0 * PI * (sys.offsets_hz[k] - seg.transmitter_offset_hz) * t + seg.phase_rad;
        let w1 = -2.0 * PI * seg.amplitude_hz;
        h += &(spin_op(n, k, PauliLabel::X).scale_real(w1 * angle.cos())
            + spin_op(n, k, PauliLabel::Y).scale_real(w1 * angle.sin()));
    }
    Ok(h)
}

/// Control Hamiltonian in the common frame rotating at the reference
/// frequency, where the field of phase φ rotates at the transmitter offset:
/// −2π·amp Σ_i [cos(φ − 2π f_tx t) I_x^i + sin(φ − 2π f_tx t) I_y^i].
pub fn control_hamiltonian_common(n: usize, seg: &PulseSegment, t: f64) -> Operator {
    let mut h = Operator::zeros(1 << n);
    if seg.amplitude_hz == 0.0 {
        return h;
    }
    let angle = seg.phase_rad - 2.0 * PI * seg.transmitter_offset_hz * t;
    let w1 = -2.0 * PI * seg.amplitude_hz;
    for k in 0..n {
        if seg.targets(k) {
            h += &(spin_op(n, k, PauliLabel::X).scale_real(w1 * angle.cos())
                + spin_op(n, k, PauliLabel::Y).scale_real(w1 * angle.sin()));
        }
    }
    h
}

/// Tilt of the effective field away from z for a constant drive, arctan(ω1/Δω).
pub fn tilt_angle(amplitude_hz: f64, detuning_hz: f64) -> f64 {
    amplitude_hz.atan2(detuning_hz)
}

/// Effective nutation frequency √(ω1² + Δω²), in Hz.
pub fn effective_frequency(amplitude_hz: f64, detuning_hz: f64) -> f64 {
    amplitude_hz.hypot(detuning_hz)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{rotation_2x2, C64};

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn iz_definition() {
        let z = pauli_product(&[PauliLabel::Z]);
        assert_eq!(z, Operator::diagonal(&[c(0.5), c(-0.5)]));
        let zz = pauli_product(&parse_labels("zz").unwrap());
        assert_eq!(zz, Operator::diagonal(&[c(0.25), c(-0.25), c(-0.25), c(0.25)]));
    }

    #[test]
    fn trace_orthogonality() {
        for n in 1..=3 {
            let labels = all_labels(n);
            for a in &labels {
                for b in &labels {
                    let t = (&pauli_product(a) * &pauli_product(b)).trace();
                    let expect = if a == b { 0.5f64.powi(n as i32) } else { 0.0 };
                    assert!((t - c(expect)).norm() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn invalid_label_rejected() {
        assert!(parse_labels("zq").is_err());
    }

    #[test]
    fn single_spin_zeeman() {
        let s = SpinSystem::uncoupled(vec![100.0]).unwrap();
        let h = system_hamiltonian(&s, None).unwrap();
        let (vals, _) = h.hermitian_eigen();
        assert!((vals[0] + PI * 100.0).abs() < 1e-10);
        assert!((vals[1] - PI * 100.0).abs() < 1e-10);
        assert!(h.max_abs_diff(&spin_op(1, 0, PauliLabel::Z).scale_real(-2.0 * PI * 100.0)) < 1e-12);
    }

    #[test]
    fn weak_coupling_is_diagonal() {
        let s = SpinSystem::pair(0.0, 0.0, 50.0, CouplingModel::WeakZz).unwrap();
        let h = system_hamiltonian(&s, None).unwrap();
        let q = PI * 25.0;
        assert!(h.max_abs_diff(&Operator::diagonal(&[c(q), c(-q), c(-q), c(q)])) < 1e-12);
    }

    #[test]
    fn isotropic_minus_weak_is_flip_flop() {
        let w = SpinSystem::pair(30.0, -70.0, 50.0, CouplingModel::WeakZz).unwrap();
        let iso = SpinSystem::pair(30.0, -70.0, 50.0, CouplingModel::Isotropic).unwrap();
        let diff = system_hamiltonian(&iso, None).unwrap() - system_hamiltonian(&w, None).unwrap();
        let xx = &spin_op(2, 0, PauliLabel::X) * &spin_op(2, 1, PauliLabel::X);
        let yy = &spin_op(2, 0, PauliLabel::Y) * &spin_op(2, 1, PauliLabel::Y);
        let oracle = (xx + yy).scale_real(2.0 * PI * 50.0);
        assert!(diff.max_abs_diff(&oracle) < 1e-12);
        let fz = total_spin_op(2, PauliLabel::Z);
        let h = system_hamiltonian(&iso, None).unwrap();
        assert!(h.commutator(&fz).max_abs() < 1e-12);
    }

    #[test]
    fn geometry_required_for_dipolar() {
        let s = SpinSystem::pair(0.0, 0.0, 0.0, CouplingModel::DipolarSecular).unwrap();
        assert!(system_hamiltonian(&s, None).is_err());
        let h = system_hamiltonian(&s, Some(&DipolarGeometry::pair(1000.0))).unwrap();
        assert!(h.is_hermitian(1e-12));
        let w = SpinSystem::pair(0.0, 0.0, 5.0, CouplingModel::WeakZz).unwrap();
        assert!(system_hamiltonian(&w, Some(&DipolarGeometry::pair(1.0))).is_err());
    }

    #[test]
    fn rejects_invalid_systems() {
        assert!(SpinSystem::uncoupled(vec![0.0; 8]).is_err());
        assert!(SpinSystem::uncoupled(vec![]).is_err());
        assert!(SpinSystem::new(vec![0.0, 0.0], vec![vec![0.0, 1.0], vec![2.0, 0.0]], CouplingModel::WeakZz).is_err());
        assert!(SpinSystem::new(vec![0.0, 0.0], vec![vec![1.0, 0.0], vec![0.0, 0.0]], CouplingModel::WeakZz).is_err());
        assert!(Relaxation::new(1.0, 2.5).is_err());
        assert!(Relaxation::new(1.0, 2.0).is_ok());
    }

    #[test]
    fn phase_pi_on_resonance_rotates_about_plus_x() {
        let s = SpinSystem::uncoupled(vec![0.0]).unwrap();
        let seg = PulseSegment::new(1e-3, 250.0, PI, 0.0);
        let h = control_hamiltonian(&s, &seg, 0.0).unwrap();
        let u = h.expm_hermitian(seg.duration_s);
        let rx90 = rotation_2x2([1.0, 0.0, 0.0], PI / 2.0);
        assert!(u.max_abs_diff(&rx90) < 1e-12);
    }

    #[test]
    fn quarter_turn_of_phase_swaps_x_and_y() {
        let s = SpinSystem::uncoupled(vec![0.0]).unwrap();
        let hx = control_hamiltonian(&s, &PulseSegment::new(1e-3, 100.0, 0.0, 0.0), 0.0).unwrap();
        let hy = control_hamiltonian(&s, &PulseSegment::new(1e-3, 100.0, PI / 2.0, 0.0), 0.0).unwrap();
        let w = -2.0 * PI * 100.0;
        assert!(hx.max_abs_diff(&spin_op(1, 0, PauliLabel::X).scale_real(w)) < 1e-12);
        assert!(hy.max_abs_diff(&spin_op(1, 0, PauliLabel::Y).scale_real(w)) < 1e-12);
    }

    #[test]
    fn detuned_drive_tilts_effective_axis() {
        let (amp, det) = (300.0, 400.0);
        let s = SpinSystem::uncoupled(vec![det]).unwrap();
        let seg = PulseSegment::new(1e-3, amp, PI, 0.0);
        let h = zeeman_hamiltonian(&s) + control_hamiltonian_common(1, &seg, 0.0);
        // h = (ω1 σx − Δω σz)/2, so the axis makes angle atan(ω1/Δω) with −z.
        let hx = 2.0 * h.get(0, 1).re;
        let hz = 2.0 * h.get(0, 0).re;
        assert!((hx.atan2(-hz) - tilt_angle(amp, det)).abs() < 1e-12);
        let norm = hx.hypot(hz) / (2.0 * PI);
        assert!((norm - effective_frequency(amp, det)).abs() < 1e-9);
    }

    #[test]
    fn json_round_trip() {
        let s = SpinSystem::pair(10.0, -20.0, 5.0, CouplingModel::Isotropic)
            .unwrap()
            .with_relaxation(vec![Relaxation::new(1.0, 0.5).unwrap(), Relaxation::none()])
            .unwrap();
        let text = s.to_json().unwrap();
        assert_eq!(SpinSystem::from_json(&text).unwrap(), s);
    }
}
