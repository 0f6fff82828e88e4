//! Dense complex operators and their validated subtypes.
//!
//! Every operator in the crate is a dense `d x d` complex matrix. The wrappers
//! [`Projector`], [`UnitaryOp`] and [`DensityOp`] can only be built through a
//! validating constructor, so holding one is proof that its defining bounds held
//! (in Frobenius norm) at construction time.

use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Bound, Error, Result};

pub type C64 = Complex64;
pub type CMatrix = DMatrix<C64>;
pub type CVector = DVector<C64>;

pub const TOL_PROJ: f64 = 1e-10;
pub const TOL_UNIT: f64 = 1e-10;
pub const TOL_PSD: f64 = 1e-10;
pub const TOL_TRACE: f64 = 1e-12;

#[inline]
pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Operator(CMatrix);

impl Operator {
    /// Wraps a matrix after checking it is non-empty, square and finite.
    pub fn new(m: CMatrix) -> Result<Self> {
        if m.nrows() == 0 || m.ncols() == 0 {
            return Err(Error::Empty);
        }
        if m.nrows() != m.ncols() {
            return Err(Error::NotSquare { rows: m.nrows(), cols: m.ncols() });
        }
        if let Some((idx, _)) = m.iter().enumerate().find(|(_, z)| !(z.re.is_finite() && z.im.is_finite())) {
            // column-major storage
            let d = m.nrows();
            return Err(Error::NonFinite { row: idx % d, col: idx / d });
        }
        Ok(Operator(m))
    }

    pub(crate) fn from_matrix_unchecked(m: CMatrix) -> Self {
        debug_assert!(m.is_square());
        Operator(m)
    }

    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let d = rows.len();
        if d == 0 {
            return Err(Error::Empty);
        }
        if let Some(bad) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::NotSquare { rows: d, cols: bad.len() });
        }
        Operator::new(CMatrix::from_fn(d, d, |i, j| rows[i][j]))
    }

    pub fn from_real_rows(rows: &[&[f64]]) -> Result<Self> {
        let rows: Vec<Vec<C64>> = rows.iter().map(|r| r.iter().map(|&x| c(x, 0.0)).collect()).collect();
        Operator::from_rows(&rows)
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

    /// `|psi><psi|`
    pub fn outer(psi: &CVector) -> Self {
        Operator(psi * psi.adjoint())
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_matrix(self) -> CMatrix {
        self.0
    }

    pub fn adjoint(&self) -> Self {
        Operator(self.0.adjoint())
    }

    pub fn trace(&self) -> C64 {
        self.0.trace()
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    /// Frobenius distance `||self - other||_F`.
    pub fn distance(&self, other: &Operator) -> f64 {
        (&self.0 - &other.0).norm()
    }

    pub fn commutator(&self, other: &Operator) -> Self {
        Operator(&self.0 * &other.0 - &other.0 * &self.0)
    }

    pub fn scale(&self, z: C64) -> Self {
        Operator(&self.0 * z)
    }

    pub fn apply(&self, v: &CVector) -> CVector {
        &self.0 * v
    }

    pub fn hermiticity_residual(&self) -> f64 {
        (&self.0 - self.0.adjoint()).norm()
    }

    pub fn anti_hermiticity_residual(&self) -> f64 {
        (&self.0 + self.0.adjoint()).norm()
    }

    pub fn idempotence_residual(&self) -> f64 {
        (&self.0 * &self.0 - &self.0).norm()
    }

    /// `max(||A^H A - 1||_F, ||A A^H - 1||_F)`
    pub fn unitarity_residual(&self) -> f64 {
        let id = CMatrix::identity(self.dim(), self.dim());
        let a = (self.0.adjoint() * &self.0 - &id).norm();
        let b = (&self.0 * self.0.adjoint() - &id).norm();
        a.max(b)
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub(crate) fn check_dim(&self, dim: usize) -> Result<()> {
        if self.dim() == dim {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected: dim, found: self.dim() })
        }
    }
}

impl Mul<&Operator> for &Operator {
    type Output = Operator;
    fn mul(self, rhs: &Operator) -> Operator {
        Operator(&self.0 * &rhs.0)
    }
}

impl Add<&Operator> for &Operator {
    type Output = Operator;
    fn add(self, rhs: &Operator) -> Operator {
        Operator(&self.0 + &rhs.0)
    }
}

impl Sub<&Operator> for &Operator {
    type Output = Operator;
    fn sub(self, rhs: &Operator) -> Operator {
        Operator(&self.0 - &rhs.0)
    }
}

impl Neg for &Operator {
    type Output = Operator;
    fn neg(self) -> Operator {
        Operator(-&self.0)
    }
}

impl Serialize for Operator {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<Vec<[f64; 2]>> = self
            .0
            .row_iter()
            .map(|row| row.iter().map(|z| [z.re, z.im]).collect())
            .collect();
        rows.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Operator {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let rows: Vec<Vec<[f64; 2]>> = Vec::deserialize(d)?;
        let rows: Vec<Vec<C64>> = rows.into_iter().map(|r| r.into_iter().map(|[re, im]| c(re, im)).collect()).collect();
        Operator::from_rows(&rows).map_err(serde::de::Error::custom)
    }
}

/// `e^A` by scaling and squaring with a Padé approximant.
pub fn mat_exp(a: &Operator) -> Result<Operator> {
    if !a.is_finite() {
        Operator::new(a.0.clone())?;
    }
    Operator::new(a.0.exp())
}

/// Eigendecomposition of a Hermitian matrix, used for exact exponentials of
/// `i * s * K` along a one-parameter family.
#[derive(Clone, Debug)]
pub struct HermitianSpectrum {
    vectors: CMatrix,
    values: Vec<f64>,
}

impl HermitianSpectrum {
    /// Caller guarantees `k` is Hermitian to working precision.
    pub fn new(k: &Operator) -> Self {
        // symmetrize so the solver sees an exactly Hermitian input
        let sym = (&k.0 + k.0.adjoint()) * c(0.5, 0.0);
        let eig = SymmetricEigen::new(sym);
        HermitianSpectrum { vectors: eig.eigenvectors, values: eig.eigenvalues.iter().copied().collect() }
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.values
    }

    pub fn eigenvectors(&self) -> &CMatrix {
        &self.vectors
    }

    /// `e^{i s K}`
    pub fn exp_i(&self, s: f64) -> Operator {
        let mut scaled = self.vectors.clone();
        for (j, &lam) in self.values.iter().enumerate() {
            let phase = C64::from_polar(1.0, s * lam);
            for z in scaled.column_mut(j).iter_mut() {
                *z *= phase;
            }
        }
        Operator(scaled * self.vectors.adjoint())
    }
}

fn check(bound: Bound, residual: f64, tol: f64) -> Result<()> {
    if residual <= tol {
        Ok(())
    } else {
        Err(Error::Validation { bound, residual, tol })
    }
}

/// Hermitian idempotent operator.
#[derive(Clone, Debug, PartialEq)]
pub struct Projector(Operator);

impl Projector {
    pub fn validate(op: Operator, tol: f64) -> Result<Self> {
        check(Bound::Hermiticity, op.hermiticity_residual(), tol)?;
        check(Bound::Idempotence, op.idempotence_residual(), tol)?;
        Ok(Projector(op))
    }

    /// Projector onto the span of the first `rank` basis vectors.
    pub fn first_k(dim: usize, rank: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Empty);
        }
        if rank > dim {
            return Err(Error::DimensionMismatch { expected: dim, found: rank });
        }
        let diag: Vec<C64> = (0..dim).map(|i| if i < rank { c(1.0, 0.0) } else { c(0.0, 0.0) }).collect();
        Ok(Projector(Operator::diagonal(&diag)))
    }

    /// Projector onto a normalized vector.
    pub fn onto(psi: &CVector) -> Result<Self> {
        let norm = psi.norm();
        check(Bound::Normalization, (norm - 1.0).abs(), TOL_TRACE.max(1e-12))?;
        Projector::validate(Operator::outer(&(psi / c(norm, 0.0))), TOL_PROJ)
    }

    pub(crate) fn from_operator_unchecked(op: Operator) -> Self {
        Projector(op)
    }

    pub fn op(&self) -> &Operator {
        &self.0
    }

    pub fn into_op(self) -> Operator {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    /// `1 - E`
    pub fn complement(&self) -> Projector {
        Projector(&Operator::identity(self.dim()) - &self.0)
    }

    /// Number of eigenvalues above 1/2.
    pub fn rank(&self) -> usize {
        HermitianSpectrum::new(&self.0).eigenvalues().iter().filter(|&&l| l > 0.5).count()
    }
}

/// Unitary operator.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitaryOp(Operator);

impl UnitaryOp {
    pub fn validate(op: Operator, tol: f64) -> Result<Self> {
        check(Bound::Unitarity, op.unitarity_residual(), tol)?;
        Ok(UnitaryOp(op))
    }

    pub(crate) fn from_operator_unchecked(op: Operator) -> Self {
        UnitaryOp(op)
    }

    pub fn identity(dim: usize) -> Self {
        UnitaryOp(Operator::identity(dim))
    }

    pub fn op(&self) -> &Operator {
        &self.0
    }

    pub fn into_op(self) -> Operator {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn adjoint(&self) -> UnitaryOp {
        UnitaryOp(self.0.adjoint())
    }

    pub fn residual(&self) -> f64 {
        self.0.unitarity_residual()
    }
}

/// Density operator: Hermitian, positive semidefinite, unit trace.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityOp(Operator);

impl DensityOp {
    pub fn validate(op: Operator) -> Result<Self> {
        DensityOp::validate_with(op, TOL_PROJ, TOL_PSD, TOL_TRACE)
    }

    pub fn validate_with(op: Operator, tol_herm: f64, tol_psd: f64, tol_trace: f64) -> Result<Self> {
        check(Bound::Hermiticity, op.hermiticity_residual(), tol_herm)?;
        let min_eig = HermitianSpectrum::new(&op).eigenvalues().iter().copied().fold(f64::INFINITY, f64::min);
        check(Bound::PositiveSemidefinite, (-min_eig).max(0.0), tol_psd)?;
        let tr = op.trace();
        check(Bound::UnitTrace, (tr - c(1.0, 0.0)).norm(), tol_trace)?;
        Ok(DensityOp(op))
    }

    pub fn pure(psi: &CVector) -> Result<Self> {
        let norm = psi.norm();
        check(Bound::Normalization, (norm - 1.0).abs(), TOL_TRACE)?;
        Ok(DensityOp(Operator::outer(psi)))
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        DensityOp(Operator::identity(dim).scale(c(1.0 / dim as f64, 0.0)))
    }

    pub(crate) fn from_operator_unchecked(op: Operator) -> Self {
        DensityOp(op)
    }

    pub fn op(&self) -> &Operator {
        &self.0
    }

    pub fn into_op(self) -> Operator {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.dim()
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut v = HermitianSpectrum::new(&self.0).eigenvalues().to_vec();
        v.sort_by(|a, b| a.total_cmp(b));
        v
    }

    /// `<phi| rho |phi>`
    pub fn fidelity_with_pure(&self, phi: &CVector) -> f64 {
        (phi.adjoint() * &self.0 .0 * phi)[(0, 0)].re
    }
}

pub fn validate_projector(a: Operator, tol: f64) -> Result<Projector> {
    Projector::validate(a, tol)
}

/// `U E U^H`, revalidated at a slightly relaxed tolerance.
pub fn conjugate(e: &Projector, u: &UnitaryOp) -> Result<Projector> {
    e.0.check_dim(u.dim())?;
    let out = &(&u.0 * &e.0) * &u.0.adjoint();
    Projector::validate(out, 10.0 * TOL_PROJ)
}

/// Pauli matrices and qubit basis states.
pub mod pauli {
    use super::*;

    pub fn x() -> Operator {
        Operator::from_real_rows(&[&[0.0, 1.0], &[1.0, 0.0]]).unwrap()
    }

    pub fn y() -> Operator {
        Operator::from_rows(&[vec![c(0.0, 0.0), c(0.0, -1.0)], vec![c(0.0, 1.0), c(0.0, 0.0)]]).unwrap()
    }

    pub fn z() -> Operator {
        Operator::from_real_rows(&[&[1.0, 0.0], &[0.0, -1.0]]).unwrap()
    }

    pub fn ket0() -> CVector {
        CVector::from_column_slice(&[c(1.0, 0.0), c(0.0, 0.0)])
    }

    pub fn ket1() -> CVector {
        CVector::from_column_slice(&[c(0.0, 0.0), c(1.0, 0.0)])
    }

    pub fn plus() -> CVector {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        CVector::from_column_slice(&[c(s, 0.0), c(s, 0.0)])
    }
}
