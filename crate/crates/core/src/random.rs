//! Seeded random instances for fuzzing and reproducible studies.

use nalgebra::QR;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::operator::{c, CMatrix, CVector, DensityOp, Operator, Projector, UnitaryOp, C64};

/// Deterministic source of random operators; the same seed always yields the
/// same sequence of instances.
pub struct InstanceRng {
    rng: ChaCha8Rng,
    seed: u64,
}

impl InstanceRng {
    pub fn new(seed: u64) -> Self {
        InstanceRng { rng: ChaCha8Rng::seed_from_u64(seed), seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Complex normal with `E|z|^2 = 1`.
    pub fn complex_gaussian(&mut self) -> C64 {
        let re: f64 = StandardNormal.sample(&mut self.rng);
        let im: f64 = StandardNormal.sample(&mut self.rng);
        c(re, im) * std::f64::consts::FRAC_1_SQRT_2
    }

    fn ginibre(&mut self, rows: usize, cols: usize) -> CMatrix {
        // fill row by row so the draw order does not depend on storage layout
        let mut m = CMatrix::zeros(rows, cols);
        for i in 0..rows {
            for j in 0..cols {
                m[(i, j)] = self.complex_gaussian();
            }
        }
        m
    }

    /// `scale * (X + X^H) / 2` with Gaussian `X`.
    pub fn hermitian(&mut self, dim: usize, scale: f64) -> Operator {
        let x = self.ginibre(dim, dim);
        let h = (&x + x.adjoint()) * c(0.5 * scale, 0.0);
        Operator::from_matrix_unchecked(h)
    }

    /// `i` times a random Hermitian matrix.
    pub fn anti_hermitian(&mut self, dim: usize, scale: f64) -> Operator {
        self.hermitian(dim, scale).scale(c(0.0, 1.0))
    }

    /// Haar-distributed unitary via phase-corrected QR of a Ginibre matrix.
    pub fn unitary(&mut self, dim: usize) -> UnitaryOp {
        let qr = QR::new(self.ginibre(dim, dim));
        let r = qr.r();
        let mut q = qr.q();
        for j in 0..dim {
            let d = r[(j, j)];
            let phase = if d.norm() > 0.0 { d / d.norm() } else { c(1.0, 0.0) };
            for z in q.column_mut(j).iter_mut() {
                *z *= phase;
            }
        }
        UnitaryOp::from_operator_unchecked(Operator::from_matrix_unchecked(q))
    }

    /// Rank-`rank` projector in a Haar-random orientation.
    pub fn projector(&mut self, dim: usize, rank: usize) -> Projector {
        let u = self.unitary(dim);
        let base = Projector::first_k(dim, rank).expect("rank <= dim");
        let m = &(u.op() * base.op()) * &u.op().adjoint();
        // symmetrize away roundoff
        let m = (m.matrix() + m.matrix().adjoint()) * c(0.5, 0.0);
        Projector::from_operator_unchecked(Operator::from_matrix_unchecked(m))
    }

    /// Normalized random vector in the range of `e`.
    pub fn state_in_range(&mut self, e: &Projector) -> CVector {
        let v = e.op().apply(&self.ginibre(e.dim(), 1).column(0).into_owned());
        let n = v.norm();
        v / c(n, 0.0)
    }

    /// Full-rank random density operator on the range of `e`, so `E rho E = rho`.
    pub fn density_in_range(&mut self, e: &Projector) -> DensityOp {
        let d = e.dim();
        let x = e.op().matrix() * self.ginibre(d, d);
        let w = &x * x.adjoint();
        let w = (&w + w.adjoint()) * c(0.5, 0.0);
        let tr = w.trace().re;
        DensityOp::from_operator_unchecked(Operator::from_matrix_unchecked(w / c(tr, 0.0)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{TOL_PROJ, TOL_UNIT};

    #[test]
    fn same_seed_same_instances() {
        let mut a = InstanceRng::new(42);
        let mut b = InstanceRng::new(42);
        assert_eq!(a.hermitian(3, 1.0), b.hermitian(3, 1.0));
        assert_eq!(a.unitary(4), b.unitary(4));
        assert_ne!(InstanceRng::new(1).hermitian(3, 1.0), InstanceRng::new(2).hermitian(3, 1.0));
    }

    #[test]
    fn generated_operators_have_their_structure() {
        let mut rng = InstanceRng::new(3);
        assert!(rng.hermitian(5, 2.0).hermiticity_residual() == 0.0);
        assert!(rng.anti_hermitian(5, 2.0).anti_hermiticity_residual() == 0.0);
        assert!(UnitaryOp::validate(rng.unitary(6).into_op(), TOL_UNIT).is_ok());
        let e = rng.projector(4, 2);
        let e = Projector::validate(e.into_op(), TOL_PROJ).unwrap();
        assert_eq!(e.rank(), 2);
        assert!((e.op().trace().re - 2.0).abs() < 1e-12);
        let rho = rng.density_in_range(&e);
        let rho = DensityOp::validate(rho.into_op()).unwrap();
        let squeezed = &(e.op() * rho.op()) * e.op();
        assert!(squeezed.distance(rho.op()) < 1e-12);
        let psi = rng.state_in_range(&e);
        assert!((e.op().apply(&psi) - &psi).norm() < 1e-12);
    }
}
