//! State and gate fidelities.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evolve::{DensityMatrix, KrausSet};
use crate::linalg::{normalized, CMatrix, CVector, Operator, C64};
use crate::optimize::{nelder_mead, NelderMeadConfig};
use crate::spinsys::PauliLabel;

/// Pure or mixed state.
#[derive(Clone, Debug)]
pub enum State {
    Pure(CVector),
    Mixed(DensityMatrix),
}

impl State {
    fn dim(&self) -> usize {
        match self {
            State::Pure(v) => v.len(),
            State::Mixed(r) => r.dim(),
        }
    }
}

/// |⟨φ|ψ⟩| for normalized inputs.
pub fn fidelity_pure(phi: &CVector, psi: &CVector) -> f64 {
    normalized(phi).dotc(&normalized(psi)).norm()
}

/// √⟨ψ|ρ|ψ⟩.
pub fn fidelity_pure_mixed(psi: &CVector, rho: &DensityMatrix) -> f64 {
    let v = normalized(psi);
    v.dotc(&rho.operator().apply(&v)).re.max(0.0).sqrt()
}

/// Tr √(√σ ρ √σ), with eigenvalues of near-singular matrices clipped at 0.
pub fn fidelity_mixed(sigma: &DensityMatrix, rho: &DensityMatrix) -> f64 {
    let s = sigma.operator().psd_sqrt(1e-12);
    let inner = s.conjugate(rho.operator());
    let (vals, _) = inner.hermitian_eigen();
    vals.iter().map(|&e| if e > 1e-12 { e.sqrt() } else { 0.0 }).sum::<f64>().min(1.0)
}

/// Symmetric state fidelity, reducing to the pure-state overlaps when
/// either side is pure.
pub fn state_fidelity(a: &State, b: &State) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::Dimension { expected: a.dim(), found: b.dim() });
    }
    if let State::Mixed(r) = a {
        r.validate()?;
    }
    if let State::Mixed(r) = b {
        r.validate()?;
    }
    Ok(match (a, b) {
        (State::Pure(x), State::Pure(y)) => fidelity_pure(x, y),
        (State::Pure(x), State::Mixed(r)) | (State::Mixed(r), State::Pure(x)) => fidelity_pure_mixed(x, r),
        (State::Mixed(x), State::Mixed(y)) => fidelity_mixed(x, y),
    })
}

/// A quantum operation given either as a unitary or as Kraus operators.
#[derive(Clone, Debug)]
pub enum Channel {
    Unitary(Operator),
    Kraus(KrausSet),
}

impl Channel {
    pub fn dim(&self) -> usize {
        match self {
            Channel::Unitary(u) => u.dim(),
            Channel::Kraus(k) => k.dim(),
        }
    }

    pub fn kraus_operators(&self) -> Vec<Operator> {
        match self {
            Channel::Unitary(u) => vec![u.clone()],
            Channel::Kraus(k) => k.operators.clone(),
        }
    }

    pub fn apply(&self, rho: &Operator) -> Operator {
        match self {
            Channel::Unitary(u) => u.conjugate(rho),
            Channel::Kraus(k) => k.apply_operator(rho),
        }
    }
}

impl From<Operator> for Channel {
    fn from(u: Operator) -> Self {
        Channel::Unitary(u)
    }
}

impl From<KrausSet> for Channel {
    fn from(k: KrausSet) -> Self {
        Channel::Kraus(k)
    }
}

/// (|Tr(V†U)|² + d) / (d(d+1)) for two unitaries; insensitive to global phase.
pub fn avg_gate_fidelity_unitary(u: &Operator, target: &Operator) -> f64 {
    let d = u.dim() as f64;
    ((target.inner(u).norm_sqr() + d) / (d * (d + 1.0))).min(1.0)
}

/// Closed form for one qubit: 1/2 + 1/12 Σ_k Tr(U σ_k U† E(σ_k)).
pub fn avg_gate_fidelity_qubit(channel: &Channel, target: &Operator) -> f64 {
    let s: f64 = [PauliLabel::X, PauliLabel::Y, PauliLabel::Z]
        .iter()
        .map(|l| {
            let sig = l.sigma();
            (&target.conjugate(&sig) * &channel.apply(&sig)).trace().re
        })
        .sum();
    0.5 + s / 12.0
}

/// Exact Haar average for a trace-preserving channel in any dimension,
/// (Σ_k |Tr(U†A_k)|² + d) / (d(d+1)).
pub fn avg_gate_fidelity_kraus(channel: &Channel, target: &Operator) -> f64 {
    let d = target.dim() as f64;
    let s: f64 = channel.kraus_operators().iter().map(|a| target.inner(a).norm_sqr()).sum();
    (s + d) / (d * (d + 1.0))
}

/// Haar-averaged squared state fidelity between channel output and target
/// output. One qubit uses the closed form; larger systems use the exact
/// Kraus expression, which agrees with Monte-Carlo sampling.
pub fn avg_gate_fidelity(channel: &Channel, target: &Operator) -> Result<f64> {
    if channel.dim() != target.dim() {
        return Err(Error::Dimension { expected: target.dim(), found: channel.dim() });
    }
    let f = if target.dim() == 2 { avg_gate_fidelity_qubit(channel, target) } else { avg_gate_fidelity_kraus(channel, target) };
    Ok(f.clamp(0.0, 1.0))
}

/// Normalized complex Gaussian vector, Haar distributed on the unit sphere.
pub fn haar_state(dim: usize, rng: &mut impl rand::Rng) -> CVector {
    let v = CVector::from_fn(dim, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        C64::new(re, im)
    });
    normalized(&v)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub samples: usize,
}

fn output_fidelity_sq(channel: &Channel, target: &Operator, psi: &CVector) -> f64 {
    let rho = Operator::from_matrix_unchecked(psi * psi.adjoint());
    let out = channel.apply(&rho);
    let ideal = target.apply(psi);
    ideal.dotc(&out.apply(&ideal)).re
}

pub const MC_SHARDS: usize = 16;

/// Monte-Carlo estimate of the average gate fidelity over Haar-random pure
/// inputs. Shards run in parallel with seeds derived from `seed`.
pub fn avg_gate_fidelity_monte_carlo(channel: &Channel, target: &Operator, samples: usize, seed: u64) -> Result<MonteCarloEstimate> {
    if channel.dim() != target.dim() {
        return Err(Error::Dimension { expected: target.dim(), found: channel.dim() });
    }
    if samples < 2 {
        return Err(Error::invalid("need at least two samples"));
    }
    let dim = target.dim();
    let per = samples.div_ceil(MC_SHARDS);
    let shards: Vec<Vec<f64>> = (0..MC_SHARDS)
        .into_par_iter()
        .map(|s| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(s as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
            let count = per.min(samples.saturating_sub(s * per));
            (0..count).map(|_| output_fidelity_sq(channel, target, &haar_state(dim, &mut rng))).collect()
        })
        .collect();
    let all: Vec<f64> = shards.into_iter().flatten().collect();
    let n = all.len() as f64;
    let mean = all.iter().sum::<f64>() / n;
    let var = all.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(MonteCarloEstimate { mean, std_error: (var / n).sqrt(), samples: all.len() })
}

#[derive(Clone, Debug)]
pub struct MinFidelity {
    /// Smallest state fidelity found; an upper bound on the true minimum.
    pub value: f64,
    pub state: CVector,
    pub evaluations: usize,
}

/// Minimum over pure inputs of the state fidelity between channel output and
/// target output, by multi-start Nelder-Mead from Haar-random states.
pub fn min_gate_fidelity(channel: &Channel, target: &Operator, restarts: usize, seed: u64) -> Result<MinFidelity> {
    if channel.dim() != target.dim() {
        return Err(Error::Dimension { expected: target.dim(), found: channel.dim() });
    }
    let dim = target.dim();
    let to_state = |x: &[f64]| -> CVector {
        let v = CVector::from_fn(dim, |i, _| C64::new(x[2 * i], x[2 * i + 1]));
        if v.norm() < 1e-300 {
            CVector::from_fn(dim, |i, _| if i == 0 { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) })
        } else {
            normalized(&v)
        }
    };
    let cfg = NelderMeadConfig { max_evals: 4000 * dim, initial_step: 0.3, ..Default::default() };
    let runs: Vec<(f64, Vec<f64>, usize)> = (0..restarts.max(1))
        .into_par_iter()
        .map(|r| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(r as u64));
            let start = haar_state(dim, &mut rng);
            let x0: Vec<f64> = start.iter().flat_map(|z| [z.re, z.im]).collect();
            let res = nelder_mead(|x| output_fidelity_sq(channel, target, &to_state(x)), &x0, &cfg);
            (res.value, res.x, res.evaluations)
        })
        .collect();
    let evaluations = runs.iter().map(|r| r.2).sum();
    let best = runs.into_iter().min_by(|a, b| a.0.total_cmp(&b.0)).expect("at least one restart");
    Ok(MinFidelity { value: best.0.max(0.0).sqrt(), state: to_state(&best.1), evaluations })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FidelityKind {
    StatePure,
    StateMixed,
    AvgGate,
    MinGate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub value: f64,
    pub kind: FidelityKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

/// Identity Kraus set on `dim`.
pub fn identity_channel(dim: usize) -> Channel {
    Channel::Unitary(Operator::identity(dim))
}

/// Haar-random unitary from the QR decomposition of a complex Ginibre matrix.
pub fn random_unitary(dim: usize, rng: &mut impl rand::Rng) -> Operator {
    let m = CMatrix::from_fn(dim, dim, |_, _| {
        let re: f64 = StandardNormal.sample(rng);
        let im: f64 = StandardNormal.sample(rng);
        C64::new(re, im)
    });
    let qr = m.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..dim {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { C64::new(1.0, 0.0) };
        for i in 0..dim {
            q[(i, j)] *= phase;
        }
    }
    Operator::from_matrix_unchecked(q)
}
