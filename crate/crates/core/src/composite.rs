//! Composite single-qubit rotations, systematic error models and fidelity
//! sweeps.

use std::f64::consts::PI;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io::fmt_f64;
use crate::linalg::{rotation_2x2, Operator};
use crate::metrics::avg_gate_fidelity_unitary;
use crate::shapes::{wrap_phase, PulseSegment};

/// Rotation by `angle` about the in-plane axis [cos φ, sin φ, 0], or about
/// an explicit unit axis when one is given.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RotationSpec {
    pub axis_phase: f64,
    pub angle: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axis: Option<[f64; 3]>,
}

impl RotationSpec {
    pub fn new(axis_phase: f64, angle: f64) -> Self {
        RotationSpec { axis_phase, angle, axis: None }
    }

    pub fn about(axis: [f64; 3], angle: f64) -> Result<Self> {
        let norm = axis.iter().map(|a| a * a).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::invalid("rotation axis must be a nonzero finite vector"));
        }
        let n = [axis[0] / norm, axis[1] / norm, axis[2] / norm];
        Ok(RotationSpec { axis_phase: n[1].atan2(n[0]), angle, axis: Some(n) })
    }

    pub fn x(angle: f64) -> Self {
        Self::new(0.0, angle)
    }

    pub fn y(angle: f64) -> Self {
        Self::new(PI / 2.0, angle)
    }

    pub fn axis_vector(&self) -> [f64; 3] {
        self.axis.unwrap_or([self.axis_phase.cos(), self.axis_phase.sin(), 0.0])
    }

    pub fn ideal(&self) -> Operator {
        rotation_2x2(self.axis_vector(), self.angle)
    }

    fn validate(&self) -> Result<()> {
        if !self.angle.is_finite() || !self.axis_phase.is_finite() {
            return Err(Error::invalid("rotation angle and phase must be finite"));
        }
        if let Some(a) = self.axis {
            let norm = a.iter().map(|x| x * x).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > 1e-12 {
                return Err(Error::invalid("rotation axis must be normalized"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    /// Angle scaled by (1 + ε); any finite ε.
    AmplitudeLinear,
    /// In-plane axis turned by ε radians about z; any finite ε.
    PhaseOffset,
    /// Drive detuned by ε = Δω/ω1; any finite ε.
    ResonanceOffset,
}

impl FromStr for ErrorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "amplitude_linear" | "amplitude" => Ok(ErrorKind::AmplitudeLinear),
            "phase_offset" | "phase" => Ok(ErrorKind::PhaseOffset),
            "resonance_offset" | "offset" => Ok(ErrorKind::ResonanceOffset),
            _ => Err(Error::invalid(format!("unknown error kind '{s}'"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErrorModel {
    pub kind: ErrorKind,
    pub epsilon: f64,
}

impl ErrorModel {
    pub fn new(kind: ErrorKind, epsilon: f64) -> Self {
        ErrorModel { kind, epsilon }
    }

    pub fn none() -> Self {
        ErrorModel { kind: ErrorKind::AmplitudeLinear, epsilon: 0.0 }
    }
}

/// The 2×2 unitary actually applied when `rot` suffers `err`.
///
/// An off-resonant drive of relative detuning r rotates about the tilted
/// axis (n̂ − r ẑ)/√(1+r²) by θ√(1+r²).
pub fn apply_error(rot: &RotationSpec, err: &ErrorModel) -> Result<Operator> {
    rot.validate()?;
    let e = err.epsilon;
    if !e.is_finite() {
        return Err(Error::invalid("error magnitude must be finite"));
    }
    let n = rot.axis_vector();
    Ok(match err.kind {
        ErrorKind::AmplitudeLinear => rotation_2x2(n, rot.angle * (1.0 + e)),
        ErrorKind::PhaseOffset => {
            let (s, c) = e.sin_cos();
            rotation_2x2([c * n[0] - s * n[1], s * n[0] + c * n[1], n[2]], rot.angle)
        }
        ErrorKind::ResonanceOffset => {
            // Negative angles are rotations about the reversed axis, whose
            // drive sees the same detuning.
            let sgn = if rot.angle < 0.0 { -1.0 } else { 1.0 };
            let m = (1.0 + e * e).sqrt();
            let axis = [sgn * n[0] / m, sgn * n[1] / m, (sgn * n[2] - e) / m];
            rotation_2x2(axis, rot.angle.abs() * m)
        }
    })
}

/// Product of the listed rotations; element 0 is leftmost, so the last
/// element acts first.
pub fn compose(seq: &[RotationSpec], err: &ErrorModel) -> Result<Operator> {
    seq.iter().try_fold(Operator::identity(2), |acc, r| Ok(&acc * &apply_error(r, err)?))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CompositeName {
    Bb1,
    Sym180,
    LengthComp180,
    OffresY,
}

impl FromStr for CompositeName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bb1" => Ok(CompositeName::Bb1),
            "sym_180" => Ok(CompositeName::Sym180),
            "length_comp_180" => Ok(CompositeName::LengthComp180),
            "offres_y" => Ok(CompositeName::OffresY),
            _ => Err(Error::invalid(format!("unknown composite sequence '{s}'"))),
        }
    }
}

/// φ = arccos(−θ/4π).
pub fn bb1_phase(theta: f64) -> f64 {
    (-theta / (4.0 * PI)).acos()
}

/// Rotation list of a named sequence, leftmost first. `theta` is used only
/// by BB1.
///
/// - `bb1`: R_φ(π) R_3φ(2π) R_φ(π) R_x(θ)
/// - `sym_180`: R_x(90°) R_−y(180°) R_x(90°)
/// - `length_comp_180`: R_60(180°) R_300(180°) R_60(180°)
/// - `offres_y`: R_y(385°) R_y(−320°) R_y(25°)
pub fn composite_library(name: CompositeName, theta: f64) -> Result<Vec<RotationSpec>> {
    let deg = PI / 180.0;
    Ok(match name {
        CompositeName::Bb1 => {
            if !theta.is_finite() || theta.abs() > 4.0 * PI {
                return Err(Error::invalid("bb1 needs |theta| <= 4π"));
            }
            let phi = bb1_phase(theta);
            vec![RotationSpec::new(phi, PI), RotationSpec::new(3.0 * phi, 2.0 * PI), RotationSpec::new(phi, PI), RotationSpec::x(theta)]
        }
        CompositeName::Sym180 => vec![RotationSpec::x(PI / 2.0), RotationSpec::new(-PI / 2.0, PI), RotationSpec::x(PI / 2.0)],
        CompositeName::LengthComp180 => vec![
            RotationSpec::new(60.0 * deg, PI),
            RotationSpec::new(300.0 * deg, PI),
            RotationSpec::new(60.0 * deg, PI),
        ],
        CompositeName::OffresY => vec![
            RotationSpec::y(385.0 * deg),
            RotationSpec::y(-320.0 * deg),
            RotationSpec::y(25.0 * deg),
        ],
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub epsilon: f64,
    pub avg_gate_fidelity: f64,
}

/// Average gate fidelity of the erroneous sequence against `target` at each ε.
pub fn fidelity_sweep(seq: &[RotationSpec], target: &Operator, kind: ErrorKind, eps_grid: &[f64]) -> Result<Vec<SweepPoint>> {
    if target.dim() != 2 {
        return Err(Error::Dimension { expected: 2, found: target.dim() });
    }
    eps_grid
        .par_iter()
        .map(|&e| {
            let u = compose(seq, &ErrorModel::new(kind, e))?;
            Ok(SweepPoint { epsilon: e, avg_gate_fidelity: avg_gate_fidelity_unitary(&u, target) })
        })
        .collect()
}

pub fn sweep_csv(points: &[SweepPoint]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["epsilon", "avg_gate_fidelity"])?;
    for p in points {
        w.write_record([fmt_f64(p.epsilon), fmt_f64(p.avg_gate_fidelity)])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("ascii"))
}

/// Physical pulse segments at a fixed amplitude, in time order (the last
/// list element first). A field of phase φ+π rotates about the axis of
/// phase φ; negative angles flip the phase by π.
pub fn to_segments(seq: &[RotationSpec], amplitude_hz: f64) -> Result<Vec<PulseSegment>> {
    if !(amplitude_hz > 0.0) {
        return Err(Error::invalid("amplitude must be positive"));
    }
    seq.iter()
        .rev()
        .map(|r| {
            r.validate()?;
            if r.axis.is_some_and(|a| a[2].abs() > 1e-12) {
                return Err(Error::invalid("only in-plane rotations map to pulses"));
            }
            let flip = if r.angle < 0.0 { PI } else { 0.0 };
            let duration = r.angle.abs() / (2.0 * PI * amplitude_hz);
            Ok(PulseSegment::new(duration, amplitude_hz, wrap_phase(r.axis_phase + PI + flip), 0.0))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{CVector, C64};
    use crate::metrics::fidelity_pure;
    use approx::assert_abs_diff_eq;

    fn ket0() -> CVector {
        CVector::from_vec(vec![C64::new(1.0, 0.0), C64::new(0.0, 0.0)])
    }

    fn ket1() -> CVector {
        CVector::from_vec(vec![C64::new(0.0, 0.0), C64::new(1.0, 0.0)])
    }

    fn bb1_fidelity(eps: f64) -> f64 {
        let seq = composite_library(CompositeName::Bb1, PI / 2.0).unwrap();
        let u = compose(&seq, &ErrorModel::new(ErrorKind::AmplitudeLinear, eps)).unwrap();
        avg_gate_fidelity_unitary(&u, &RotationSpec::x(PI / 2.0).ideal())
    }

    fn plain_fidelity(eps: f64) -> f64 {
        let u = apply_error(&RotationSpec::x(PI / 2.0), &ErrorModel::new(ErrorKind::AmplitudeLinear, eps)).unwrap();
        avg_gate_fidelity_unitary(&u, &RotationSpec::x(PI / 2.0).ideal())
    }

    #[test]
    fn zero_error_is_ideal() {
        for r in [RotationSpec::x(0.7), RotationSpec::new(1.2, -2.0)] {
            for kind in [ErrorKind::AmplitudeLinear, ErrorKind::PhaseOffset, ErrorKind::ResonanceOffset] {
                assert!(apply_error(&r, &ErrorModel::new(kind, 0.0)).unwrap().max_abs_diff(&r.ideal()) < 1e-15);
            }
        }
    }

    #[test]
    fn offset_scales_rotation_angle() {
        let r = RotationSpec::x(2.0 * PI);
        let u = apply_error(&r, &ErrorModel::new(ErrorKind::ResonanceOffset, 0.5)).unwrap();
        // Tr R(α) = 2 cos(α/2).
        let alpha = 2.0 * (u.trace().re / 2.0).acos();
        let expected = 2.0 * PI * (1.25f64).sqrt();
        assert_abs_diff_eq!(alpha, 4.0 * PI - expected, epsilon = 1e-12);
    }

    #[test]
    fn offset_model_matches_detuned_hamiltonian() {
        // ω1 = 2π·100 Hz on x for a quarter turn, detuned by r·ω1.
        let r = 0.3;
        let w1 = 2.0 * PI * 100.0;
        let t = (PI / 2.0) / w1;
        let ix = crate::spinsys::spin_op(1, 0, crate::spinsys::PauliLabel::X);
        let iz = crate::spinsys::spin_op(1, 0, crate::spinsys::PauliLabel::Z);
        let u = (ix.scale_real(w1) - iz.scale_real(r * w1)).expm_hermitian(t);
        let model = apply_error(&RotationSpec::x(PI / 2.0), &ErrorModel::new(ErrorKind::ResonanceOffset, r)).unwrap();
        assert!(u.max_abs_diff(&model) < 1e-12);
    }

    #[test]
    fn bb1_phase_value() {
        assert_abs_diff_eq!(bb1_phase(PI / 2.0), (-1.0f64 / 8.0).acos(), epsilon = 1e-15);
        assert_abs_diff_eq!(bb1_phase(PI / 2.0), 1.6961, epsilon = 1e-4);
    }

    #[test]
    fn bb1_phase_maximizes_robustness() {
        // Nudging φ away from arccos(−θ/4π) worsens the fidelity at ε = 0.05.
        let eps = ErrorModel::new(ErrorKind::AmplitudeLinear, 0.05);
        let target = RotationSpec::x(PI / 2.0).ideal();
        let fid = |phi: f64| {
            let seq = [RotationSpec::new(phi, PI), RotationSpec::new(3.0 * phi, 2.0 * PI), RotationSpec::new(phi, PI), RotationSpec::x(PI / 2.0)];
            avg_gate_fidelity_unitary(&compose(&seq, &eps).unwrap(), &target)
        };
        let best = fid(bb1_phase(PI / 2.0));
        for d in [-0.02, -0.005, 0.005, 0.02] {
            assert!(fid(bb1_phase(PI / 2.0) + d) < best);
        }
    }

    #[test]
    fn plain_pulse_law() {
        for k in -30..=30 {
            let e = k as f64 * 0.01;
            assert_abs_diff_eq!(plain_fidelity(e), (2.0 + (e * PI / 2.0).cos()) / 3.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn bb1_sixth_order_law() {
        for e in [0.01, 0.02, 0.03, 0.05, -0.04] {
            let infid = 1.0 - bb1_fidelity(e);
            let law = 21.0 * PI.powi(6) * e.powi(6) / 16384.0;
            assert!((infid / law - 1.0).abs() < 0.05, "ε={e}: {infid:e} vs {law:e}");
        }
        assert_abs_diff_eq!(bb1_fidelity(0.1), 0.99999877, epsilon = 5e-8);
        assert_abs_diff_eq!(plain_fidelity(0.1), 0.99589, epsilon = 1e-5);
    }

    #[test]
    fn bb1_beats_plain_pulse() {
        for k in -30..=30 {
            let e = k as f64 * 0.01;
            assert!(bb1_fidelity(e) >= plain_fidelity(e) - 1e-15);
        }
    }

    #[test]
    fn sym_180_inverts_and_resists_offsets() {
        let seq = composite_library(CompositeName::Sym180, 0.0).unwrap();
        let u0 = compose(&seq, &ErrorModel::none()).unwrap();
        // At zero error the sequence is a 180° turn about −y.
        assert!(u0.phase_aligned_distance(&RotationSpec::new(-PI / 2.0, PI).ideal()) < 1e-12);
        assert_abs_diff_eq!(fidelity_pure(&u0.apply(&ket0()), &ket1()), 1.0, epsilon = 1e-12);
        for r in [0.05, 0.1, 0.15, 0.2, -0.1, -0.2] {
            let err = ErrorModel::new(ErrorKind::ResonanceOffset, r);
            let comp = 1.0 - fidelity_pure(&compose(&seq, &err).unwrap().apply(&ket0()), &ket1()).powi(2);
            let single = 1.0 - fidelity_pure(&apply_error(&RotationSpec::x(PI), &err).unwrap().apply(&ket0()), &ket1()).powi(2);
            assert!(comp < single, "r={r}: {comp:e} vs {single:e}");
        }
    }

    #[test]
    fn length_compensated_inversion() {
        let seq = composite_library(CompositeName::LengthComp180, 0.0).unwrap();
        let err = ErrorModel::new(ErrorKind::AmplitudeLinear, 0.2);
        let comp = fidelity_pure(&compose(&seq, &err).unwrap().apply(&ket0()), &ket1());
        let single = fidelity_pure(&apply_error(&RotationSpec::x(PI), &err).unwrap().apply(&ket0()), &ket1());
        assert!(comp > single);
        let ideal = compose(&seq, &ErrorModel::none()).unwrap();
        assert_abs_diff_eq!(fidelity_pure(&ideal.apply(&ket0()), &ket1()), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn offres_y_is_a_quarter_turn() {
        let seq = composite_library(CompositeName::OffresY, 0.0).unwrap();
        let u = compose(&seq, &ErrorModel::none()).unwrap();
        assert!(u.phase_aligned_distance(&RotationSpec::y(PI / 2.0).ideal()) < 1e-12);
    }

    #[test]
    fn same_phase_pair_stays_near_start() {
        let err = ErrorModel::new(ErrorKind::ResonanceOffset, 0.5);
        let x2 = RotationSpec::x(PI);
        let x2bar = RotationSpec::new(PI, PI);
        let same = compose(&[x2, x2], &err).unwrap().apply(&ket0());
        let opposite = compose(&[x2bar, x2], &err).unwrap().apply(&ket0());
        let d_same = 1.0 - fidelity_pure(&same, &ket0());
        let d_opp = 1.0 - fidelity_pure(&opposite, &ket0());
        assert!(d_same < d_opp);
    }

    #[test]
    fn sweep_endpoints_and_csv() {
        let seq = composite_library(CompositeName::Bb1, PI / 2.0).unwrap();
        let pts = fidelity_sweep(&seq, &RotationSpec::x(PI / 2.0).ideal(), ErrorKind::AmplitudeLinear, &[-0.1, 0.0, 0.1]).unwrap();
        assert_abs_diff_eq!(pts[1].avg_gate_fidelity, 1.0, epsilon = 1e-14);
        let csv = sweep_csv(&pts).unwrap();
        assert!(csv.starts_with("epsilon,avg_gate_fidelity\n"));
        assert_eq!(csv.lines().count(), 4);
    }

    #[test]
    fn unknown_names_rejected() {
        assert!("bb2".parse::<CompositeName>().is_err());
        assert!("thermal".parse::<ErrorKind>().is_err());
    }

    #[test]
    fn segments_reproduce_the_composite() {
        let seq = composite_library(CompositeName::Bb1, PI / 2.0).unwrap();
        let segs = to_segments(&seq, 5000.0).unwrap();
        let sys = crate::spinsys::SpinSystem::uncoupled(vec![0.0]).unwrap();
        let u = crate::optimize::segments_unitary(&sys, &segs, crate::evolve::Frame::Common).unwrap();
        let ideal = compose(&seq, &ErrorModel::none()).unwrap();
        assert!(u.phase_aligned_distance(&ideal) < 1e-10);
    }
}
