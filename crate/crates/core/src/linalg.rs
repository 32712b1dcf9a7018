//! Dense complex operators on 2^n-dimensional spin spaces.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const ZERO: C64 = C64::new(0.0, 0.0);
pub const ONE: C64 = C64::new(1.0, 0.0);
pub const I: C64 = C64::new(0.0, 1.0);

/// Hermiticity and unitarity are checked to this tolerance by builders.
pub const STRUCTURE_TOL: f64 = 1e-10;

/// Square complex matrix whose dimension is a power of two.
#[derive(Clone, Debug, PartialEq)]
pub struct Operator(CMatrix);

impl Operator {
    /// Wraps a matrix, rejecting non-square or non power-of-two shapes.
    pub fn new(m: CMatrix) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::invalid(format!(
                "operator must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.nrows() == 0 || !m.nrows().is_power_of_two() {
            return Err(Error::invalid(format!(
                "operator dimension {} is not a power of two",
                m.nrows()
            )));
        }
        Ok(Operator(m))
    }

    pub(crate) fn from_matrix_unchecked(m: CMatrix) -> Self {
        Operator(m)
    }

    pub fn from_rows(dim: usize, entries: &[C64]) -> Result<Self> {
        if entries.len() != dim * dim {
            return Err(Error::Dimension { expected: dim * dim, found: entries.len() });
        }
        Operator::new(CMatrix::from_row_slice(dim, dim, entries))
    }

    pub fn from_real_rows(dim: usize, entries: &[f64]) -> Result<Self> {
        let c: Vec<C64> = entries.iter().map(|&x| C64::new(x, 0.0)).collect();
        Operator::from_rows(dim, &c)
    }

    pub fn identity(dim: usize) -> Self {
        Operator(CMatrix::identity(dim, dim))
    }

    pub fn zeros(dim: usize) -> Self {
        Operator(CMatrix::zeros(dim, dim))
    }

    pub fn diagonal(entries: &[C64]) -> Self {
        Operator(CMatrix::from_diagonal(&CVector::from_column_slice(entries)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    /// Number of spins, log2 of the dimension.
    pub fn n_spins(&self) -> usize {
        self.dim().trailing_zeros() as usize
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn get(&self, r: usize, c: usize) -> C64 {
        self.0[(r, c)]
    }

    pub fn dagger(&self) -> Operator {
        Operator(self.0.adjoint())
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    pub fn kron(&self, other: &Operator) -> Operator {
        Operator(self.0.kronecker(&other.0))
    }

    pub fn scale(&self, c: C64) -> Operator {
        Operator(&self.0 * c)
    }

    pub fn scale_real(&self, x: f64) -> Operator {
        Operator(&self.0 * C64::new(x, 0.0))
    }

    pub fn commutator(&self, other: &Operator) -> Operator {
        Operator(&self.0 * &other.0 - &other.0 * &self.0)
    }

    /// Tr(A† B).
    pub fn inner(&self, other: &Operator) -> C64 {
        self.0.iter().zip(other.0.iter()).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, other: &Operator) -> f64 {
        self.0
            .iter()
            .zip(other.0.iter())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    /// max |H - H†| entry.
    pub fn hermiticity_error(&self) -> f64 {
        let n = self.dim();
        let mut worst: f64 = 0.0;
        for r in 0..n {
            for c in r..n {
                worst = worst.max((self.0[(r, c)] - self.0[(c, r)].conj()).norm());
            }
        }
        worst
    }

    /// max |U†U - I| entry.
    pub fn unitarity_error(&self) -> f64 {
        let p = self.0.adjoint() * &self.0;
        let n = self.dim();
        let mut worst: f64 = 0.0;
        for r in 0..n {
            for c in 0..n {
                let target = if r == c { ONE } else { ZERO };
                worst = worst.max((p[(r, c)] - target).norm());
            }
        }
        worst
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.hermiticity_error() <= tol
    }

    pub fn is_unitary(&self, tol: f64) -> bool {
        self.unitarity_error() <= tol
    }

    pub fn require_hermitian(&self, what: &str) -> Result<()> {
        let e = self.hermiticity_error();
        if e > STRUCTURE_TOL * self.max_abs().max(1.0) {
            return Err(Error::invalid(format!("{what} is not Hermitian (error {e:.3e})")));
        }
        Ok(())
    }

    pub fn require_unitary(&self, what: &str) -> Result<()> {
        let e = self.unitarity_error();
        if e > STRUCTURE_TOL {
            return Err(Error::invalid(format!("{what} is not unitary (error {e:.3e})")));
        }
        Ok(())
    }

    /// (A + A†)/2.
    pub fn hermitian_part(&self) -> Operator {
        Operator((&self.0 + self.0.adjoint()) * C64::new(0.5, 0.0))
    }

    /// Global phase e^{iα} that best aligns `self` with `other`, and the
    /// resulting max entry deviation |e^{iα} self - other|.
    pub fn phase_aligned_distance(&self, other: &Operator) -> f64 {
        let overlap = self.inner(other);
        let phase = if overlap.norm() > 1e-300 { overlap / overlap.norm() } else { ONE };
        self.scale(phase).max_abs_diff(other)
    }

    /// Matrix-vector product.
    pub fn apply(&self, v: &CVector) -> CVector {
        &self.0 * v
    }

    /// A ρ A†.
    pub fn conjugate(&self, rho: &Operator) -> Operator {
        Operator(&self.0 * &rho.0 * self.0.adjoint())
    }

    /// Eigendecomposition of the Hermitian part: ascending eigenvalues and the
    /// matching orthonormal eigenvectors as columns.
    pub fn hermitian_eigen(&self) -> (Vec<f64>, CMatrix) {
        let eig = SymmetricEigen::new(self.hermitian_part().0);
        let mut idx: Vec<usize> = (0..self.dim()).collect();
        idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
        let vectors = CMatrix::from_fn(self.dim(), self.dim(), |r, c| eig.eigenvectors[(r, idx[c])]);
        (values, vectors)
    }

    /// f(H) for Hermitian H via its eigendecomposition.
    pub fn hermitian_fn(&self, f: impl Fn(f64) -> C64) -> Operator {
        let (values, v) = self.hermitian_eigen();
        let d = CMatrix::from_diagonal(&CVector::from_iterator(values.len(), values.iter().map(|&x| f(x))));
        Operator(&v * d * v.adjoint())
    }

    /// exp(-i H t) for Hermitian H.
    pub fn expm_hermitian(&self, t: f64) -> Operator {
        self.hermitian_fn(|e| C64::from_polar(1.0, -e * t))
    }

    /// Principal square root of a positive semidefinite matrix, with
    /// eigenvalues below `clip` set to zero.
    pub fn psd_sqrt(&self, clip: f64) -> Operator {
        self.hermitian_fn(|e| C64::new(if e > clip { e.sqrt() } else { 0.0 }, 0.0))
    }

    /// Eigen-decomposition of a unitary: eigenphases in (-π, π] and
    /// orthonormal eigenvectors.
    ///
    /// A normal matrix shares eigenvectors with the Hermitian matrix
    /// Re(U) + c Im(U) for any real c; an irrational c keeps distinct
    /// eigenvalues of U distinct.
    pub fn unitary_eigen(&self) -> (Vec<f64>, CMatrix) {
        let c = std::f64::consts::E / 7.0 + 0.3183;
        let re = (&self.0 + self.0.adjoint()) * C64::new(0.5, 0.0);
        let im = (&self.0 - self.0.adjoint()) * C64::new(0.0, -0.5);
        let k = Operator(re + im * C64::new(c, 0.0));
        let (_, v) = k.hermitian_eigen();
        let d = v.adjoint() * &self.0 * &v;
        let phases = (0..self.dim())
            .map(|i| {
                let p = d[(i, i)].arg();
                if p <= -std::f64::consts::PI { p + 2.0 * std::f64::consts::PI } else { p }
            })
            .collect();
        (phases, v)
    }

    /// Hermitian H with exp(-i H) = U, eigenphases taken in (-π, π].
    pub fn unitary_generator(&self) -> Operator {
        let (phases, v) = self.unitary_eigen();
        let d = CMatrix::from_diagonal(&CVector::from_iterator(
            phases.len(),
            phases.iter().map(|&p| C64::new(-p, 0.0)),
        ));
        Operator(&v * d * v.adjoint()).hermitian_part()
    }

    /// Partial trace keeping the spins listed in `keep` (0-indexed, ascending).
    pub fn partial_trace(&self, keep: &[usize]) -> Operator {
        let n = self.n_spins();
        let dk = 1usize << keep.len();
        let traced: Vec<usize> = (0..n).filter(|k| !keep.contains(k)).collect();
        let dt = 1usize << traced.len();
        let compose = |kept_bits: usize, traced_bits: usize| -> usize {
            let mut idx = 0usize;
            for (j, &s) in keep.iter().enumerate() {
                if kept_bits >> (keep.len() - 1 - j) & 1 == 1 {
                    idx |= 1 << (n - 1 - s);
                }
            }
            for (j, &s) in traced.iter().enumerate() {
                if traced_bits >> (traced.len() - 1 - j) & 1 == 1 {
                    idx |= 1 << (n - 1 - s);
                }
            }
            idx
        };
        let mut out = CMatrix::zeros(dk, dk);
        for r in 0..dk {
            for c in 0..dk {
                let mut s = ZERO;
                for t in 0..dt {
                    s += self.0[(compose(r, t), compose(c, t))];
                }
                out[(r, c)] = s;
            }
        }
        Operator(out)
    }
}

/// Places the single-spin operator `op` (2x2) on spin `k` of an `n`-spin space.
pub fn embed(op: &Operator, k: usize, n: usize) -> Operator {
    assert!(k < n && op.dim() == 2);
    let left = Operator::identity(1 << k);
    let right = Operator::identity(1 << (n - 1 - k));
    left.kron(op).kron(&right)
}

/// Tensor product of a list of operators, first factor most significant.
pub fn kron_all(ops: &[Operator]) -> Operator {
    let mut it = ops.iter();
    let first = it.next().cloned().unwrap_or_else(|| Operator::identity(1));
    it.fold(first, |acc, o| acc.kron(o))
}

/// ‖v‖-normalized copy.
pub fn normalized(v: &CVector) -> CVector {
    let n = v.norm();
    v / C64::new(n, 0.0)
}

/// Single-qubit rotation exp(-i θ n·σ/2) for a unit axis n.
pub fn rotation_2x2(axis: [f64; 3], theta: f64) -> Operator {
    let norm = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
    let (nx, ny, nz) = if norm > 0.0 {
        (axis[0] / norm, axis[1] / norm, axis[2] / norm)
    } else {
        (0.0, 0.0, 1.0)
    };
    let c = (theta / 2.0).cos();
    let s = (theta / 2.0).sin();
    Operator(CMatrix::from_row_slice(
        2,
        2,
        &[
            C64::new(c, -s * nz),
            C64::new(-s * ny, -s * nx),
            C64::new(s * ny, -s * nx),
            C64::new(c, s * nz),
        ],
    ))
}

impl Add for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        Operator(&self.0 + &rhs.0)
    }
}

impl Add for Operator {
    type Output = Operator;
    fn add(self, rhs: Operator) -> Operator {
        Operator(self.0 + rhs.0)
    }
}

impl AddAssign<&Operator> for Operator {
    fn add_assign(&mut self, rhs: &Operator) {
        self.0 += &rhs.0;
    }
}

impl Sub for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        Operator(&self.0 - &rhs.0)
    }
}

impl Sub for Operator {
    type Output = Operator;
    fn sub(self, rhs: Operator) -> Operator {
        Operator(self.0 - rhs.0)
    }
}

impl Mul for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        Operator(&self.0 * &rhs.0)
    }
}

impl Mul for Operator {
    type Output = Operator;
    fn mul(self, rhs: Operator) -> Operator {
        Operator(self.0 * rhs.0)
    }
}

impl Mul<f64> for &Operator {
    type Output = Operator;
    fn mul(self, rhs: f64) -> Operator {
        self.scale_real(rhs)
    }
}

impl Mul<f64> for Operator {
    type Output = Operator;
    fn mul(self, rhs: f64) -> Operator {
        self.scale_real(rhs)
    }
}

impl Neg for Operator {
    type Output = Operator;
    fn neg(self) -> Operator {
        Operator(-self.0)
    }
}

impl std::fmt::Display for Operator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for r in 0..self.dim() {
            let row: Vec<String> = (0..self.dim())
                .map(|c| {
                    let z = self.0[(r, c)];
                    format!("{:+.4}{:+.4}i", z.re, z.im)
                })
                .collect();
            writeln!(f, "[{}]", row.join(", "))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn random_hermitian(dim: usize, seed: u64) -> Operator {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let m = CMatrix::from_fn(dim, dim, |_, _| C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        Operator(m).hermitian_part()
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(Operator::new(CMatrix::zeros(3, 3)).is_err());
        assert!(Operator::new(CMatrix::zeros(2, 4)).is_err());
        assert!(Operator::new(CMatrix::zeros(4, 4)).is_ok());
    }

    #[test]
    fn expm_matches_taylor_series() {
        let h = random_hermitian(4, 3);
        let t = 0.37;
        let u = h.expm_hermitian(t);
        let gen = h.scale(C64::new(0.0, -t));
        let mut term = Operator::identity(4);
        let mut sum = Operator::identity(4);
        for k in 1..40 {
            term = (&term * &gen).scale_real(1.0 / k as f64);
            sum += &term;
        }
        assert!(u.max_abs_diff(&sum) < 1e-12);
        assert!(u.is_unitary(1e-12));
    }

    #[test]
    fn unitary_generator_inverts_expm() {
        let h = random_hermitian(8, 11).scale_real(0.4);
        let u = h.expm_hermitian(1.0);
        let back = u.unitary_generator();
        assert!(back.max_abs_diff(&h) < 1e-10);
    }

    #[test]
    fn unitary_generator_handles_degenerate_spectrum() {
        let u = Operator::diagonal(&[C64::from_polar(1.0, 0.3), C64::from_polar(1.0, 0.3), ONE, ONE]);
        let h = u.unitary_generator();
        assert_relative_eq!(h.get(0, 0).re, -0.3, epsilon = 1e-12);
        assert_relative_eq!(h.get(3, 3).re, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn rotation_about_x_by_pi_is_minus_i_sigma_x() {
        let r = rotation_2x2([1.0, 0.0, 0.0], std::f64::consts::PI);
        let expect = Operator::from_rows(2, &[ZERO, -I, -I, ZERO]).unwrap();
        assert!(r.max_abs_diff(&expect) < 1e-15);
    }

    #[test]
    fn partial_trace_of_product_state() {
        let a = Operator::from_real_rows(2, &[0.7, 0.0, 0.0, 0.3]).unwrap();
        let b = Operator::from_real_rows(2, &[0.5, 0.5, 0.5, 0.5]).unwrap();
        let ab = a.kron(&b);
        assert!(ab.partial_trace(&[0]).max_abs_diff(&a) < 1e-15);
        assert!(ab.partial_trace(&[1]).max_abs_diff(&b) < 1e-15);
    }

    #[test]
    fn phase_aligned_distance_ignores_global_phase() {
        let h = random_hermitian(4, 5);
        let u = h.expm_hermitian(0.8);
        let v = u.scale(C64::from_polar(1.0, 1.1));
        assert!(u.phase_aligned_distance(&v) < 1e-14);
    }
}
