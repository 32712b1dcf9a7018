//! Average Hamiltonian theory: exact effective Hamiltonians, discrete Magnus
//! terms, toggling frames and multiple-pulse cycles.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::Operator;
use crate::spinsys::{coupling_hamiltonian, spin_op, total_spin_op, zeeman_hamiltonian, CouplingModel, DipolarGeometry, PauliLabel, SpinSystem};

#[derive(Clone, Debug, PartialEq)]
pub struct MagnusResult {
    pub h0: Operator,
    pub h1: Operator,
    pub cycle_time: f64,
}

/// H̄ = i log(U) / t_c, with eigenphases on (−π, π]. Only meaningful while
/// ‖H̄‖ t_c < π.
pub fn exact_average(u: &Operator, t_c: f64) -> Result<Operator> {
    if !(t_c > 0.0) {
        return Err(Error::invalid("cycle time must be positive"));
    }
    u.require_unitary("cycle propagator")?;
    Ok(u.unitary_generator().scale_real(1.0 / t_c))
}

/// Zeroth and first Magnus terms of a piecewise-constant Hamiltonian,
/// slices listed in time order:
/// H̄⁽⁰⁾ = Σ H_k τ_k / t_c and H̄⁽¹⁾ = −i/(2t_c) Σ_{k>l} [H_k τ_k, H_l τ_l].
pub fn magnus_terms(slices: &[(Operator, f64)]) -> Result<MagnusResult> {
    let first = slices.first().ok_or_else(|| Error::invalid("need at least one slice"))?;
    let dim = first.0.dim();
    let mut t_c = 0.0;
    for (h, t) in slices {
        if h.dim() != dim {
            return Err(Error::Dimension { expected: dim, found: h.dim() });
        }
        if !(*t >= 0.0) {
            return Err(Error::invalid("slice durations must be non-negative"));
        }
        h.require_hermitian("slice Hamiltonian")?;
        t_c += t;
    }
    if !(t_c > 0.0) {
        return Err(Error::invalid("cycle time must be positive"));
    }
    let weighted: Vec<Operator> = slices.iter().map(|(h, t)| h.scale_real(*t)).collect();
    let mut h0 = Operator::zeros(dim);
    let mut acc = Operator::zeros(dim);
    let mut comm = Operator::zeros(dim);
    for w in &weighted {
        comm += &w.commutator(&acc);
        acc += w;
        h0 += w;
    }
    let h1 = comm.scale(crate::linalg::C64::new(0.0, -1.0 / (2.0 * t_c)));
    Ok(MagnusResult { h0: h0.scale_real(1.0 / t_c).hermitian_part(), h1: h1.hermitian_part(), cycle_time: t_c })
}

#[derive(Clone, Debug, PartialEq)]
pub struct TogglingFrames {
    /// H̃ in each interval: before the first pulse, then after each pulse.
    pub frames: Vec<Operator>,
    /// Distance of U_n…U_1 from the identity after global-phase alignment.
    pub closure_error: f64,
}

impl TogglingFrames {
    pub fn is_closed(&self, tol: f64) -> bool {
        self.closure_error <= tol
    }
}

/// H̃_k = U_1⁻¹ … U_k⁻¹ H0 U_k … U_1, for k = 0..n. A cycle that does not
/// return to the identity is reported through `closure_error` rather than
/// rejected.
pub fn toggling_frame(h0: &Operator, pulses: &[Operator]) -> Result<TogglingFrames> {
    let dim = h0.dim();
    let mut p = Operator::identity(dim);
    let mut frames = vec![h0.clone()];
    for (k, u) in pulses.iter().enumerate() {
        if u.dim() != dim {
            return Err(Error::Dimension { expected: dim, found: u.dim() });
        }
        u.require_unitary(&format!("pulse {k}"))?;
        p = u * &p;
        frames.push(&(&p.dagger() * h0) * &p);
    }
    let closure_error = p.phase_aligned_distance(&Operator::identity(dim));
    Ok(TogglingFrames { frames, closure_error })
}

/// Ideal instantaneous pulses with free evolution between them:
/// `delays[0]`, `pulses[0]`, `delays[1]`, …, `pulses[n−1]`, `delays[n]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Cycle {
    pub pulses: Vec<Operator>,
    pub delays: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CycleName {
    Wahuha4,
    Echo3,
}

impl FromStr for CycleName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "wahuha4" | "wahuha" => Ok(CycleName::Wahuha4),
            "echo3" => Ok(CycleName::Echo3),
            _ => Err(Error::invalid(format!("unknown cycle '{s}'"))),
        }
    }
}

fn global_rotation(n: usize, label: PauliLabel, angle: f64) -> Operator {
    total_spin_op(n, label).expm_hermitian(angle)
}

impl Cycle {
    pub fn new(pulses: Vec<Operator>, delays: Vec<f64>) -> Result<Self> {
        if delays.len() != pulses.len() + 1 {
            return Err(Error::invalid("a cycle needs one more delay than pulses"));
        }
        if delays.iter().any(|d| !(*d >= 0.0)) || delays.iter().sum::<f64>() <= 0.0 {
            return Err(Error::invalid("delays must be non-negative with a positive total"));
        }
        Ok(Cycle { pulses, delays })
    }

    /// τ X τ Ȳ 2τ Y τ X̄ τ in time order, 90° pulses on every spin.
    pub fn wahuha4(n: usize, tau: f64) -> Result<Self> {
        let q = PI / 2.0;
        Cycle::new(
            vec![
                global_rotation(n, PauliLabel::X, q),
                global_rotation(n, PauliLabel::Y, -q),
                global_rotation(n, PauliLabel::Y, q),
                global_rotation(n, PauliLabel::X, -q),
            ],
            vec![tau, tau, 2.0 * tau, tau, tau],
        )
    }

    /// Four equal intervals whose toggling frames are H, X²HX̄², Y²HȲ² and
    /// Z²HZ̄², closed by a final Z² pulse.
    pub fn echo3(n: usize, tau: f64) -> Result<Self> {
        let x2bar = global_rotation(n, PauliLabel::X, -PI);
        let y2bar = global_rotation(n, PauliLabel::Y, -PI);
        let z2bar = global_rotation(n, PauliLabel::Z, -PI);
        // Pulse k maps frame P_{k−1} to P_k, so U_k = P_k P_{k−1}†.
        let u1 = x2bar.clone();
        let u2 = &y2bar * &x2bar.dagger();
        let u3 = &z2bar * &y2bar.dagger();
        let u4 = z2bar.dagger();
        Cycle::new(vec![u1, u2, u3, u4], vec![tau, tau, tau, tau, 0.0])
    }

    pub fn named(name: CycleName, n: usize, tau: f64) -> Result<Self> {
        match name {
            CycleName::Wahuha4 => Cycle::wahuha4(n, tau),
            CycleName::Echo3 => Cycle::echo3(n, tau),
        }
    }

    pub fn cycle_time(&self) -> f64 {
        self.delays.iter().sum()
    }

    /// Exact propagator of the cycle under the static Hamiltonian `h`.
    pub fn unitary(&self, h: &Operator) -> Operator {
        let mut u = h.expm_hermitian(self.delays[0]);
        for (p, &d) in self.pulses.iter().zip(&self.delays[1..]) {
            u = &h.expm_hermitian(d) * &(p * &u);
        }
        u
    }

    pub fn frames(&self, h: &Operator) -> Result<TogglingFrames> {
        toggling_frame(h, &self.pulses)
    }

    pub fn magnus(&self, h: &Operator) -> Result<MagnusResult> {
        let tf = self.frames(h)?;
        let slices: Vec<(Operator, f64)> = tf.frames.into_iter().zip(self.delays.iter().copied()).collect();
        magnus_terms(&slices)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecouplingReport {
    pub cycle: CycleName,
    pub cycle_time_s: f64,
    /// Frobenius norms of the zeroth-order average of each Hamiltonian term.
    pub h0_norms_by_term: BTreeMap<String, f64>,
    pub h1_norm: f64,
    pub residuals: BTreeMap<String, f64>,
    /// Per spin, the length of the averaged Zeeman vector over the static one.
    pub zeeman_scaling: Vec<f64>,
    /// Per spin, unit direction of the averaged Zeeman term.
    pub zeeman_axis: Vec<[f64; 3]>,
    pub closure_error: f64,
}

pub struct Decoupling {
    pub magnus: MagnusResult,
    pub exact: Operator,
    pub report: DecouplingReport,
}

/// Magnus analysis of a named cycle with ideal pulses on the given system.
/// WAHUHA-4 requires the dipolar_secular model.
pub fn decoupling_report(sys: &SpinSystem, geometry: Option<&DipolarGeometry>, name: CycleName, tau: f64) -> Result<Decoupling> {
    if name == CycleName::Wahuha4 && sys.model() != CouplingModel::DipolarSecular {
        return Err(Error::invalid("wahuha4 analysis requires the dipolar_secular coupling model"));
    }
    if !(tau > 0.0) {
        return Err(Error::invalid("tau must be positive"));
    }
    let n = sys.n();
    let cycle = Cycle::named(name, n, tau)?;
    let hz = zeeman_hamiltonian(sys);
    let hc = coupling_hamiltonian(sys, geometry)?;
    let h = &hz + &hc;
    let magnus = cycle.magnus(&h)?;
    let exact = exact_average(&cycle.unitary(&h), cycle.cycle_time())?;
    let closure_error = cycle.frames(&h)?.closure_error;

    let h0_z = cycle.magnus(&hz)?.h0;
    let h0_c = cycle.magnus(&hc)?.h0;
    let mut terms = BTreeMap::new();
    terms.insert("zeeman".to_string(), h0_z.frobenius_norm());
    terms.insert("coupling".to_string(), h0_c.frobenius_norm());
    let mut residuals = BTreeMap::new();
    if sys.model() == CouplingModel::DipolarSecular {
        let bare = sys.with_couplings(vec![vec![0.0; n]; n])?;
        let dip = coupling_hamiltonian(&bare, geometry)?;
        residuals.insert("dipolar_h0".to_string(), cycle.magnus(&dip)?.h0.frobenius_norm());
    }
    residuals.insert(
        "exact_minus_magnus".to_string(),
        (&exact - &(&magnus.h0 + &magnus.h1)).frobenius_norm(),
    );

    let norm_sq = (1usize << n) as f64 / 4.0;
    let mut zeeman_scaling = Vec::new();
    let mut zeeman_axis = Vec::new();
    for k in 0..n {
        let v: Vec<f64> = [PauliLabel::X, PauliLabel::Y, PauliLabel::Z]
            .iter()
            .map(|&l| h0_z.inner(&spin_op(n, k, l)).re / norm_sq)
            .collect();
        let len = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let w = 2.0 * PI * sys.offsets_hz()[k].abs();
        zeeman_scaling.push(if w > 0.0 { len / w } else { 0.0 });
        zeeman_axis.push(if len > 0.0 { [v[0] / len, v[1] / len, v[2] / len] } else { [0.0; 3] });
    }

    let report = DecouplingReport {
        cycle: name,
        cycle_time_s: cycle.cycle_time(),
        h0_norms_by_term: terms,
        h1_norm: magnus.h1.frobenius_norm(),
        residuals,
        zeeman_scaling,
        zeeman_axis,
        closure_error,
    };
    Ok(Decoupling { magnus, exact, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::C64;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sigma_h(c: [f64; 3]) -> Operator {
        PauliLabel::X.sigma().scale_real(c[0]) + PauliLabel::Y.sigma().scale_real(c[1]) + PauliLabel::Z.sigma().scale_real(c[2])
    }

    #[test]
    fn identity_has_zero_average() {
        assert!(exact_average(&Operator::identity(4), 1e-3).unwrap().max_abs() < 1e-15);
        assert!(exact_average(&Operator::identity(2), 0.0).is_err());
    }

    #[test]
    fn log_recovers_hamiltonian_inside_branch() {
        let h = sigma_h([300.0, -200.0, 500.0]);
        let t = 1e-3;
        let back = exact_average(&h.expm_hermitian(t), t).unwrap();
        assert!(back.max_abs_diff(&h) < 1e-10);
    }

    #[test]
    fn commuting_slices_have_no_first_order() {
        let a = PauliLabel::Z.sigma().scale_real(2.0);
        let b = PauliLabel::Z.sigma().scale_real(-5.0);
        let m = magnus_terms(&[(a, 0.1), (b, 0.3)]).unwrap();
        assert!(m.h1.max_abs() < 1e-15);
        assert!(m.h0.max_abs_diff(&PauliLabel::Z.sigma().scale_real((0.2 - 1.5) / 0.4)) < 1e-14);
    }

    #[test]
    fn two_slice_first_order() {
        let ha = PauliLabel::X.sigma().scale_real(3.0);
        let hb = PauliLabel::Y.sigma().scale_real(2.0);
        let tau = 0.01;
        let m = magnus_terms(&[(ha.clone(), tau), (hb.clone(), tau)]).unwrap();
        let expected = hb.scale_real(tau).commutator(&ha.scale_real(tau)).scale(C64::new(0.0, -1.0 / (4.0 * tau)));
        assert!(m.h1.max_abs_diff(&expected) < 1e-14);
    }

    #[test]
    fn symmetric_sequence_has_no_first_order() {
        let a = sigma_h([1.0, 0.0, 2.0]);
        let b = sigma_h([0.0, 3.0, -1.0]);
        let c = sigma_h([-2.0, 1.0, 0.5]);
        let m = magnus_terms(&[(a.clone(), 0.1), (b.clone(), 0.2), (c, 0.3), (b, 0.2), (a, 0.1)]).unwrap();
        assert!(m.h1.max_abs() < 1e-13);
    }

    #[test]
    fn toggling_basics() {
        let h = PauliLabel::Z.sigma().scale_real(0.7);
        let none = toggling_frame(&h, &[]).unwrap();
        assert_eq!(none.frames, vec![h.clone()]);
        let x2 = global_rotation(1, PauliLabel::X, PI);
        let tf = toggling_frame(&h, &[x2.clone(), x2.dagger()]).unwrap();
        assert!(tf.frames[1].max_abs_diff(&h.scale_real(-1.0)) < 1e-14);
        assert!(tf.is_closed(1e-12));
        let open = toggling_frame(&h, &[x2]).unwrap();
        assert!(!open.is_closed(1e-6));
    }

    #[test]
    fn echo3_frames_cancel() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let h = sigma_h([rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).scale_real(500.0);
            let cyc = Cycle::echo3(1, 1e-4).unwrap();
            let tf = cyc.frames(&h).unwrap();
            assert!(tf.is_closed(1e-12));
            let sum = tf.frames[..4].iter().fold(Operator::zeros(2), |a, f| &a + f);
            assert!(sum.max_abs() < 1e-10);
            assert!(cyc.magnus(&h).unwrap().h0.frobenius_norm() < 1e-10);
        }
    }

    fn dipolar_pair() -> (SpinSystem, DipolarGeometry) {
        let sys = SpinSystem::pair(400.0, 250.0, 0.0, CouplingModel::DipolarSecular).unwrap();
        (sys, DipolarGeometry::pair(1500.0))
    }

    #[test]
    fn wahuha_removes_dipolar_and_scales_zeeman() {
        let (sys, geo) = dipolar_pair();
        let d = decoupling_report(&sys, Some(&geo), CycleName::Wahuha4, 5e-6).unwrap();
        assert!(d.report.residuals["dipolar_h0"] < 1e-10);
        let want = -1.0 / 3f64.sqrt();
        for k in 0..2 {
            assert!((d.report.zeeman_scaling[k] - 1.0 / 3f64.sqrt()).abs() < 1e-10);
            for a in d.report.zeeman_axis[k] {
                assert!((a - want).abs() < 1e-10);
            }
        }
        assert!(d.report.closure_error < 1e-12);
        assert!(d.report.h1_norm < 1e-8);
    }

    #[test]
    fn wahuha_exact_average_scales_zeeman() {
        let sys = SpinSystem::uncoupled(vec![300.0]).unwrap();
        let cyc = Cycle::wahuha4(1, 2e-6).unwrap();
        let h = zeeman_hamiltonian(&sys);
        let exact = exact_average(&cyc.unitary(&h), cyc.cycle_time()).unwrap();
        // Zeeman terms commute within each frame pair, so the average is exact.
        let expected = (spin_op(1, 0, PauliLabel::X) + spin_op(1, 0, PauliLabel::Y) + spin_op(1, 0, PauliLabel::Z))
            .scale_real(-2.0 * PI * 300.0 / 3.0);
        assert!((exact.frobenius_norm() - expected.frobenius_norm()).abs() / expected.frobenius_norm() < 1e-3);
    }

    #[test]
    fn wahuha_needs_dipolar_model() {
        let sys = SpinSystem::pair(0.0, 10.0, 5.0, CouplingModel::WeakZz).unwrap();
        assert!(decoupling_report(&sys, None, CycleName::Wahuha4, 1e-5).is_err());
    }

    #[test]
    fn faster_cycles_average_better() {
        let (sys, geo) = dipolar_pair();
        let mut last = f64::INFINITY;
        for tau in [2e-5, 1e-5, 5e-6, 2.5e-6] {
            let d = decoupling_report(&sys, Some(&geo), CycleName::Wahuha4, tau).unwrap();
            let r = d.report.residuals["exact_minus_magnus"];
            assert!(r < last, "tau={tau}: {r} !< {last}");
            last = r;
        }
    }

    #[test]
    fn exact_average_approaches_zeroth_order_linearly() {
        let h = sigma_h([200.0, 0.0, 600.0]);
        let pulse = global_rotation(1, PauliLabel::X, PI / 2.0);
        let errs: Vec<(f64, f64)> = [4e-5, 2e-5, 1e-5, 5e-6]
            .iter()
            .map(|&tau| {
                let cyc = Cycle::new(vec![pulse.clone(), pulse.dagger()], vec![tau, 2.0 * tau, 0.0]).unwrap();
                let m = cyc.magnus(&h).unwrap();
                let ex = exact_average(&cyc.unitary(&h), cyc.cycle_time()).unwrap();
                (cyc.cycle_time(), (&ex - &m.h0).frobenius_norm())
            })
            .collect();
        // Log-log slope of the error against t_c is one.
        for w in errs.windows(2) {
            let slope = (w[0].1 / w[1].1).ln() / (w[0].0 / w[1].0).ln();
            assert!((slope - 1.0).abs() < 0.05, "slope {slope}");
        }
    }

    #[test]
    fn outputs_are_hermitian() {
        let (sys, geo) = dipolar_pair();
        let d = decoupling_report(&sys, Some(&geo), CycleName::Wahuha4, 1e-5).unwrap();
        assert!(d.magnus.h0.hermiticity_error() < 1e-10);
        assert!(d.magnus.h1.hermiticity_error() < 1e-10);
        assert!(d.exact.hermiticity_error() < 1e-10);
        let json = serde_json::to_string(&d.report).unwrap();
        assert!(json.contains("h0_norms_by_term") && json.contains("residuals"));
    }
}
