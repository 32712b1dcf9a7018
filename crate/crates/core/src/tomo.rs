//! State tomography from simulated readouts and process tomography by
//! linear inversion for the χ matrix.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compile::{Axis, SeqItem};
use crate::error::{Error, Result};
use crate::evolve::DensityMatrix;
use crate::io::fmt_f64;
use crate::linalg::{kron_all, CMatrix, CVector, Operator, C64};
use crate::metrics::Channel;
use crate::spinsys::{all_labels, pauli_string, spin_op, PauliLabel};

/// Coefficients of ρ = 2⁻ⁿ Σ c_l σ_l over Pauli strings, in the order of
/// `all_labels(n)`; the identity coefficient is 1.
#[derive(Clone, Debug, PartialEq)]
pub struct PauliCoefficients {
    pub n: usize,
    pub c: Vec<f64>,
}

impl PauliCoefficients {
    pub fn from_density(rho: &DensityMatrix) -> Self {
        let n = rho.n_spins();
        let c = all_labels(n).iter().map(|l| rho.expectation(&pauli_string(l)).re).collect();
        PauliCoefficients { n, c }
    }

    pub fn to_operator(&self) -> Operator {
        let d = (1usize << self.n) as f64;
        all_labels(self.n)
            .iter()
            .zip(&self.c)
            .fold(Operator::zeros(1 << self.n), |acc, (l, &c)| acc + pauli_string(l).scale_real(c / d))
    }

    /// Coefficient of a label string such as "0x" or "zz".
    pub fn get(&self, labels: &str) -> Result<f64> {
        let want = crate::spinsys::parse_labels(labels)?;
        all_labels(self.n)
            .iter()
            .position(|l| *l == want)
            .map(|i| self.c[i])
            .ok_or_else(|| Error::invalid(format!("label '{labels}' does not fit {} spins", self.n)))
    }
}

/// Pre-measurement gate.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BasisGate {
    Rotation {
        #[serde(with = "crate::io::one_based")]
        spin: usize,
        axis: Axis,
        angle_rad: f64,
    },
    Cnot {
        #[serde(with = "crate::io::one_based")]
        control: usize,
        #[serde(with = "crate::io::one_based")]
        target: usize,
    },
}

impl BasisGate {
    fn unitary(&self, n: usize) -> Result<Operator> {
        match *self {
            BasisGate::Rotation { spin, axis, angle_rad } => {
                if spin >= n {
                    return Err(Error::invalid(format!("spin {} out of range", spin + 1)));
                }
                Ok(SeqItem::rotation(spin, axis, angle_rad).ideal_unitary(n).expect("rotation"))
            }
            BasisGate::Cnot { control, target } => {
                if control >= n || target >= n || control == target {
                    return Err(Error::invalid("cnot needs two distinct spins in range"));
                }
                let id = Operator::identity(1 << n);
                let zc = spin_op(n, control, PauliLabel::Z).scale_real(2.0);
                let xt = spin_op(n, target, PauliLabel::X).scale_real(2.0);
                let p0 = (&id + &zc).scale_real(0.5);
                let p1 = (&id - &zc).scale_real(0.5);
                Ok(&p0 + &(&p1 * &xt))
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservableSet {
    /// Probabilities of every computational basis state.
    Computational,
    /// Real and imaginary parts of each multiplet line of each spin,
    /// 2(−iσx − σy)_k ⊗ Π_j (σ0 ± σz)_j.
    NmrTransverse,
    /// ⟨σz⟩ of each spin separately.
    Bitwise,
}

/// Gates applied in list order before measuring an observable set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReadoutSetting {
    pub basis_change: Vec<BasisGate>,
    pub observable_set: ObservableSet,
    /// Unitary actually applied in place of the ideal basis change, when the
    /// gates are known to be imperfect. Used both to simulate and to invert.
    #[serde(skip)]
    pub actual: Option<Operator>,
}

impl ReadoutSetting {
    pub fn new(basis_change: Vec<BasisGate>, observable_set: ObservableSet) -> Self {
        ReadoutSetting { basis_change, observable_set, actual: None }
    }

    pub fn with_actual(mut self, u: Operator) -> Self {
        self.actual = Some(u);
        self
    }

    pub fn unitary(&self, n: usize) -> Result<Operator> {
        if let Some(u) = &self.actual {
            if u.dim() != 1 << n {
                return Err(Error::Dimension { expected: 1 << n, found: u.dim() });
            }
            u.require_unitary("actual readout unitary")?;
            return Ok(u.clone());
        }
        self.basis_change.iter().try_fold(Operator::identity(1 << n), |acc, g| Ok(&g.unitary(n)? * &acc))
    }

    /// Hermitian observables measured after the basis change.
    pub fn observables(&self, n: usize) -> Vec<(String, Operator)> {
        let d = 1usize << n;
        match self.observable_set {
            ObservableSet::Computational => (0..d)
                .map(|x| {
                    let mut diag = vec![C64::new(0.0, 0.0); d];
                    diag[x] = C64::new(1.0, 0.0);
                    (format!("p{x:0n$b}", n = n), Operator::diagonal(&diag))
                })
                .collect(),
            ObservableSet::Bitwise => (0..n).map(|k| (format!("z{}", k + 1), spin_op(n, k, PauliLabel::Z).scale_real(2.0))).collect(),
            ObservableSet::NmrTransverse => {
                let mut out = Vec::new();
                for k in 0..n {
                    for line in 0..1usize << (n - 1) {
                        let mut proj = Vec::with_capacity(n);
                        let mut tag = String::new();
                        let mut bit = 0;
                        for j in 0..n {
                            if j == k {
                                proj.push(None);
                                continue;
                            }
                            let down = line >> (n - 2 - bit) & 1 == 1;
                            bit += 1;
                            tag.push(if down { '-' } else { '+' });
                            proj.push(Some(if down { -1.0 } else { 1.0 }));
                        }
                        let factor = |l: PauliLabel| -> Vec<Operator> {
                            proj.iter()
                                .map(|p| match p {
                                    None => l.sigma(),
                                    Some(s) => &PauliLabel::I.sigma() + &PauliLabel::Z.sigma().scale_real(*s),
                                })
                                .collect()
                        };
                        // 2(−iσx − σy) has real part −2σy and imaginary part −2σx.
                        let re = kron_all(&factor(PauliLabel::Y)).scale_real(-2.0);
                        let im = kron_all(&factor(PauliLabel::X)).scale_real(-2.0);
                        out.push((format!("s{}{tag}.re", k + 1), re));
                        out.push((format!("s{}{tag}.im", k + 1), im));
                    }
                }
                out
            }
        }
    }
}

/// Every product of {identity, X, Y} quarter turns, read out in the
/// computational basis. The X turn maps σy to σz and the Y turn maps σx to σz.
pub fn default_settings(n: usize) -> Vec<ReadoutSetting> {
    let mut out = Vec::new();
    for code in 0..3usize.pow(n as u32) {
        let mut gates = Vec::new();
        let mut c = code;
        let mut digits = vec![0; n];
        for k in (0..n).rev() {
            digits[k] = c % 3;
            c /= 3;
        }
        for (k, &dg) in digits.iter().enumerate() {
            match dg {
                1 => gates.push(BasisGate::Rotation { spin: k, axis: Axis::X, angle_rad: PI / 2.0 }),
                2 => gates.push(BasisGate::Rotation { spin: k, axis: Axis::Y, angle_rad: PI / 2.0 }),
                _ => {}
            }
        }
        out.push(ReadoutSetting::new(gates, ObservableSet::Computational));
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReadoutNoise {
    pub sigma: f64,
    pub seed: u64,
}

/// Exact expectations Tr(U ρ U† M) for each observable of the setting, with
/// optional additive Gaussian noise.
pub fn simulate_readout(rho: &DensityMatrix, setting: &ReadoutSetting, noise: Option<ReadoutNoise>) -> Result<Vec<f64>> {
    let n = rho.n_spins();
    let u = setting.unitary(n)?;
    let rotated = u.conjugate(rho.operator());
    let mut values: Vec<f64> = setting.observables(n).iter().map(|(_, m)| (&rotated * m).trace().re).collect();
    if let Some(nz) = noise {
        if !(nz.sigma >= 0.0) {
            return Err(Error::invalid("noise sigma must be non-negative"));
        }
        if nz.sigma > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(nz.seed);
            let dist = Normal::new(0.0, nz.sigma).map_err(|e| Error::invalid(e.to_string()))?;
            for v in &mut values {
                *v += dist.sample(&mut rng);
            }
        }
    }
    Ok(values)
}

/// Simulated readouts for a list of settings, each with its own noise seed.
pub fn simulate_readouts(rho: &DensityMatrix, settings: &[ReadoutSetting], noise: Option<ReadoutNoise>) -> Result<Vec<Vec<f64>>> {
    settings
        .par_iter()
        .enumerate()
        .map(|(i, s)| simulate_readout(rho, s, noise.map(|nz| ReadoutNoise { sigma: nz.sigma, seed: nz.seed.wrapping_add(i as u64) })))
        .collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StateTomographyOptions {
    /// Clip negative eigenvalues and renormalize.
    pub project_psd: bool,
}

const RANK_TOL: f64 = 1e-9;

/// Least-squares estimate of ρ from readouts of the given settings. Without
/// projection a noisy estimate may have negative eigenvalues.
pub fn state_tomography(
    n: usize,
    settings: &[ReadoutSetting],
    values: &[Vec<f64>],
    opts: StateTomographyOptions,
) -> Result<Operator> {
    let rho = reconstruct_coefficients(n, settings, values)?.to_operator().hermitian_part();
    Ok(if opts.project_psd { project_psd(&rho) } else { rho })
}

/// Pauli coefficients from readouts, checking that the settings determine
/// all 4ⁿ − 1 of them.
pub fn reconstruct_coefficients(n: usize, settings: &[ReadoutSetting], values: &[Vec<f64>]) -> Result<PauliCoefficients> {
    if settings.len() != values.len() {
        return Err(Error::Dimension { expected: settings.len(), found: values.len() });
    }
    let labels = all_labels(n);
    let paulis: Vec<Operator> = labels.iter().map(|l| pauli_string(l)).collect();
    let d = (1usize << n) as f64;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut rhs = Vec::new();
    for (s, vals) in settings.iter().zip(values) {
        let u = s.unitary(n)?;
        let obs = s.observables(n);
        if obs.len() != vals.len() {
            return Err(Error::Dimension { expected: obs.len(), found: vals.len() });
        }
        for ((_, m), &v) in obs.iter().zip(vals) {
            let heis = u.dagger().conjugate(m);
            let a: Vec<f64> = paulis.iter().map(|p| (p * &heis).trace().re / d).collect();
            rows.push(a[1..].to_vec());
            rhs.push(v - a[0]);
        }
    }
    let unknowns = labels.len() - 1;
    let a = nalgebra::DMatrix::from_fn(rows.len(), unknowns, |i, j| rows[i][j]);
    let b = nalgebra::DVector::from_vec(rhs);
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let rank = svd.singular_values.iter().filter(|&&s| s > RANK_TOL * smax.max(1.0)).count();
    if rank < unknowns {
        return Err(Error::invalid(format!(
            "readout settings determine only {rank} of {unknowns} Pauli coefficients"
        )));
    }
    let x = svd.solve(&b, RANK_TOL * smax).map_err(|e| Error::numerical(e.to_string()))?;
    let mut c = vec![1.0];
    c.extend(x.iter());
    Ok(PauliCoefficients { n, c })
}

/// Nearest-by-eigenvalue-clipping unit-trace PSD matrix.
pub fn project_psd(rho: &Operator) -> Operator {
    let clipped = rho.hermitian_part().hermitian_fn(|e| C64::new(e.max(0.0), 0.0));
    let tr = clipped.trace().re;
    if tr > 0.0 {
        clipped.scale_real(1.0 / tr)
    } else {
        Operator::identity(rho.dim()).scale_real(1.0 / rho.dim() as f64)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub setting_id: usize,
    pub observable_id: String,
    pub value: f64,
}

pub fn records(settings: &[ReadoutSetting], values: &[Vec<f64>], n: usize) -> Vec<Record> {
    let mut out = Vec::new();
    for (i, (s, vals)) in settings.iter().zip(values).enumerate() {
        for ((name, _), &v) in s.observables(n).iter().zip(vals) {
            out.push(Record { setting_id: i, observable_id: name.clone(), value: v });
        }
    }
    out
}

pub fn records_to_csv(recs: &[Record]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["setting_id", "observable_id", "value"])?;
    for r in recs {
        w.write_record([r.setting_id.to_string(), r.observable_id.clone(), fmt_f64(r.value)])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::invalid(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("ascii"))
}

pub fn records_from_csv(text: &str) -> Result<Vec<Record>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    r.deserialize().map(|rec| rec.map_err(Error::from)).collect()
}

/// Groups records back into per-setting value lists in observable order.
pub fn values_from_records(settings: &[ReadoutSetting], recs: &[Record], n: usize) -> Result<Vec<Vec<f64>>> {
    settings
        .iter()
        .enumerate()
        .map(|(i, s)| {
            s.observables(n)
                .iter()
                .map(|(name, _)| {
                    recs.iter()
                        .find(|r| r.setting_id == i && r.observable_id == *name)
                        .map(|r| r.value)
                        .ok_or_else(|| Error::invalid(format!("missing record for setting {i}, observable {name}")))
                })
                .collect()
        })
        .collect()
}

/// χ in the basis of bare Pauli strings, E(ρ) = Σ χ_pq σ_p ρ σ_q.
#[derive(Clone, Debug, PartialEq)]
pub struct ChiMatrix {
    pub n: usize,
    pub chi: CMatrix,
}

impl ChiMatrix {
    pub fn basis(&self) -> Vec<Operator> {
        all_labels(self.n).iter().map(|l| pauli_string(l)).collect()
    }

    pub fn index_of(&self, labels: &str) -> Result<usize> {
        let want = crate::spinsys::parse_labels(labels)?;
        all_labels(self.n)
            .iter()
            .position(|l| *l == want)
            .ok_or_else(|| Error::invalid(format!("label '{labels}' does not fit {} spins", self.n)))
    }

    pub fn entry(&self, p: &str, q: &str) -> Result<C64> {
        Ok(self.chi[(self.index_of(p)?, self.index_of(q)?)])
    }

    pub fn apply(&self, rho: &Operator) -> Operator {
        let basis = self.basis();
        let mut out = Operator::zeros(rho.dim());
        for (p, ap) in basis.iter().enumerate() {
            let left = ap * rho;
            for (q, aq) in basis.iter().enumerate() {
                let c = self.chi[(p, q)];
                if c.norm() > 0.0 {
                    out += &(&left * aq).scale(c);
                }
            }
        }
        out
    }

    pub fn hermiticity_error(&self) -> f64 {
        let d = &self.chi - self.chi.adjoint();
        d.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Eigenvalues of the Hermitian part, ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        Operator::from_matrix_unchecked((&self.chi + self.chi.adjoint()) * C64::new(0.5, 0.0)).hermitian_eigen().0
    }

    /// max |Σ χ_pq σ_q σ_p − I|.
    pub fn tp_residual(&self) -> f64 {
        let basis = self.basis();
        let dim = 1usize << self.n;
        let mut s = Operator::zeros(dim);
        for (p, ap) in basis.iter().enumerate() {
            for (q, aq) in basis.iter().enumerate() {
                let c = self.chi[(p, q)];
                if c.norm() > 0.0 {
                    s += &(aq * ap).scale(c);
                }
            }
        }
        s.max_abs_diff(&Operator::identity(dim))
    }

    pub fn max_abs_diff(&self, other: &ChiMatrix) -> f64 {
        (&self.chi - &other.chi).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn project_psd(&self) -> ChiMatrix {
        let h = Operator::from_matrix_unchecked((&self.chi + self.chi.adjoint()) * C64::new(0.5, 0.0));
        let clipped = h.hermitian_fn(|e| C64::new(e.max(0.0), 0.0));
        ChiMatrix { n: self.n, chi: clipped.into_matrix() }
    }
}

/// χ of U ρ U†: with U = Σ a_p σ_p, χ_pq = a_p a_q*.
pub fn chi_of_unitary(u: &Operator) -> Result<ChiMatrix> {
    u.require_unitary("chi_of_unitary input")?;
    let n = u.n_spins();
    let d = u.dim() as f64;
    let a: Vec<C64> = all_labels(n).iter().map(|l| pauli_string(l).inner(u) / d).collect();
    let m = a.len();
    Ok(ChiMatrix { n, chi: CMatrix::from_fn(m, m, |p, q| a[p] * a[q].conj()) })
}

/// The 4ⁿ product states built from |0⟩, |1⟩, |+⟩ and |+i⟩.
pub fn standard_input_basis(n: usize) -> Vec<DensityMatrix> {
    let s = 0.5f64.sqrt();
    let singles = [
        [C64::new(1.0, 0.0), C64::new(0.0, 0.0)],
        [C64::new(0.0, 0.0), C64::new(1.0, 0.0)],
        [C64::new(s, 0.0), C64::new(s, 0.0)],
        [C64::new(s, 0.0), C64::new(0.0, s)],
    ];
    (0..4usize.pow(n as u32))
        .map(|code| {
            let mut v = CVector::from_element(1, C64::new(1.0, 0.0));
            for k in (0..n).rev() {
                let which = code / 4usize.pow(k as u32) % 4;
                let q = CVector::from_row_slice(&singles[which]);
                v = v.kronecker(&q);
            }
            DensityMatrix::from_pure(&v).expect("normalized product state")
        })
        .collect()
}

/// Outputs of a channel on each input state.
pub fn simulate_process(channel: &Channel, inputs: &[DensityMatrix]) -> Vec<Operator> {
    inputs.par_iter().map(|r| channel.apply(r.operator())).collect()
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ProcessTomographyOptions {
    pub project_psd: bool,
}

/// Linear inversion for χ from 4ⁿ linearly independent inputs and their
/// measured outputs. Outputs on the matrix units are recovered by linearity,
/// assembled into the Choi matrix, and converted to the Pauli basis.
pub fn process_tomography(inputs: &[DensityMatrix], outputs: &[Operator], opts: ProcessTomographyOptions) -> Result<ChiMatrix> {
    let first = inputs.first().ok_or_else(|| Error::invalid("no input states"))?;
    let n = first.n_spins();
    let d = first.dim();
    let d2 = d * d;
    if inputs.len() != d2 || outputs.len() != d2 {
        return Err(Error::invalid(format!("process tomography needs {d2} inputs and outputs")));
    }
    if inputs.iter().any(|r| r.dim() != d) || outputs.iter().any(|o| o.dim() != d) {
        return Err(Error::invalid("inputs and outputs must share one dimension"));
    }
    // Column j holds vec(ρ_j), row index r·d + c.
    let m = CMatrix::from_fn(d2, d2, |i, j| inputs[j].operator().get(i / d, i % d));
    let svd = m.clone().svd(false, false);
    let smin = svd.singular_values.min();
    let smax = svd.singular_values.max();
    if smin <= 1e-10 * smax {
        return Err(Error::invalid("input states are linearly dependent"));
    }
    let lu = m.lu();
    // E(|r⟩⟨c|) = Σ_j β_j E(ρ_j), with M β = vec(|r⟩⟨c|).
    let mut choi = CMatrix::zeros(d2, d2);
    for r in 0..d {
        for c in 0..d {
            let mut e = CVector::zeros(d2);
            e[r * d + c] = C64::new(1.0, 0.0);
            let beta = lu.solve(&e).ok_or_else(|| Error::numerical("singular input matrix"))?;
            let mut out = CMatrix::zeros(d, d);
            for (j, o) in outputs.iter().enumerate() {
                out += o.matrix() * beta[j];
            }
            // Choi J = Σ |r⟩⟨c| ⊗ E(|r⟩⟨c|).
            for a in 0..d {
                for b in 0..d {
                    choi[(r * d + a, c * d + b)] += out[(a, b)];
                }
            }
        }
    }
    // J = Σ χ_pq v_p v_q† with v_p[m·d + k] = σ_p[k, m], and v_p†v_q = d δ_pq.
    let basis: Vec<Operator> = all_labels(n).iter().map(|l| pauli_string(l)).collect();
    let v = CMatrix::from_fn(d2, basis.len(), |i, p| basis[p].get(i % d, i / d));
    let chi = v.adjoint() * choi * &v * C64::new(1.0 / (d2 as f64), 0.0);
    let mut out = ChiMatrix { n, chi: (&chi + chi.adjoint()) * C64::new(0.5, 0.0) };
    if opts.project_psd {
        out = out.project_psd();
    }
    Ok(out)
}
