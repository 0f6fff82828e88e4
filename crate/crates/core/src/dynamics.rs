//! Schrödinger and Heisenberg evolution along measured projector paths.
//!
//! Measurement paths are `E_s(t) = U(t) E U(t)^H` where `U` is generated by an
//! anti-Hermitian `G(t)` that is constant on each piece, so `dU/dt = G(t) U(t)`
//! holds exactly and every derivative below is analytic rather than differenced.
//! `hbar = 1` throughout.

use crate::error::{Bound, Error, Result};
use crate::operator::{c, CVector, DensityOp, HermitianSpectrum, Operator, Projector, UnitaryOp, TOL_PROJ, TOL_TRACE};

/// Relative tolerance for deciding that a time sits on a breakpoint.
const BREAKPOINT_EPS: f64 = 1e-12;

#[derive(Clone, Debug)]
pub struct Hamiltonian {
    op: Operator,
    spectrum: HermitianSpectrum,
}

impl Hamiltonian {
    pub fn new(op: Operator) -> Result<Self> {
        Hamiltonian::with_tolerance(op, TOL_PROJ)
    }

    pub fn with_tolerance(op: Operator, tol: f64) -> Result<Self> {
        let residual = op.hermiticity_residual();
        if residual > tol {
            return Err(Error::Validation { bound: Bound::Hermiticity, residual, tol });
        }
        let spectrum = HermitianSpectrum::new(&op);
        Ok(Hamiltonian { op, spectrum })
    }

    pub fn zero(dim: usize) -> Self {
        Hamiltonian::new(Operator::zeros(dim)).expect("zero is Hermitian")
    }

    pub fn op(&self) -> &Operator {
        &self.op
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    /// `e^{-iHt}`
    pub fn propagator(&self, t: f64) -> UnitaryOp {
        UnitaryOp::from_operator_unchecked(self.spectrum.exp_i(-t))
    }

    /// `e^{iHt}`, the Schrödinger-to-Heisenberg frame.
    pub fn frame(&self, t: f64) -> Operator {
        self.spectrum.exp_i(t)
    }

    /// `<psi|H|psi>`
    pub fn expectation(&self, psi: &CVector) -> f64 {
        (psi.adjoint() * self.op.matrix() * psi)[(0, 0)].re
    }
}

/// Anti-Hermitian generator `G`, with `e^{Gs}` evaluated spectrally.
#[derive(Clone, Debug)]
pub struct Generator {
    op: Operator,
    // spectrum of the Hermitian K = -iG, so e^{Gs} = e^{iKs}
    spectrum: HermitianSpectrum,
}

impl Generator {
    pub fn new(op: Operator) -> Result<Self> {
        let residual = op.anti_hermiticity_residual();
        if residual > TOL_PROJ {
            return Err(Error::Validation { bound: Bound::AntiHermiticity, residual, tol: TOL_PROJ });
        }
        let spectrum = HermitianSpectrum::new(&op.scale(c(0.0, -1.0)));
        Ok(Generator { op, spectrum })
    }

    pub fn op(&self) -> &Operator {
        &self.op
    }

    /// `e^{Gs}`
    pub fn exp(&self, s: f64) -> Operator {
        self.spectrum.exp_i(s)
    }
}

/// Which one-sided limit to take at a generator breakpoint.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Limit {
    Left,
    Right,
}

#[derive(Clone, Debug)]
struct Piece {
    start: f64,
    end: f64,
    generator: Generator,
    u_start: Operator,
}

#[derive(Clone, Debug)]
enum PathKind {
    Identity,
    Exponential(Generator),
    Piecewise(Vec<Piece>),
}

/// Unitary measurement path with `U(0) = 1`.
///
/// Piecewise paths cover `(t_end[j-1], t_end[j]]` with piece `j`, starting at
/// `t = 0`. The first generator extends to negative times and the last one
/// continues past its `t_end`, so `U` is defined on the whole real line.
#[derive(Clone, Debug)]
pub struct UnitaryPath {
    dim: usize,
    kind: PathKind,
}

impl UnitaryPath {
    pub fn identity(dim: usize) -> Self {
        UnitaryPath { dim, kind: PathKind::Identity }
    }

    /// `U(t) = e^{Gt}`
    pub fn exponential(g: Operator) -> Result<Self> {
        let dim = g.dim();
        Ok(UnitaryPath { dim, kind: PathKind::Exponential(Generator::new(g)?) })
    }

    /// Pieces given as `(t_end, G)` with strictly increasing positive `t_end`.
    pub fn piecewise(pieces: Vec<(f64, Operator)>) -> Result<Self> {
        let Some(first) = pieces.first() else {
            return Err(Error::Path("piecewise path needs at least one piece".into()));
        };
        let dim = first.1.dim();
        let mut out: Vec<Piece> = Vec::with_capacity(pieces.len());
        let mut start = 0.0;
        let mut u_start = Operator::identity(dim);
        for (j, (end, g)) in pieces.into_iter().enumerate() {
            g.check_dim(dim)?;
            if !end.is_finite() || end <= start {
                return Err(Error::Path(format!(
                    "piece {j}: t_end = {end} must be finite and greater than {start}"
                )));
            }
            let generator = Generator::new(g)?;
            let next_start = &generator.exp(end - start) * &u_start;
            out.push(Piece { start, end, generator, u_start });
            u_start = next_start;
            start = end;
        }
        Ok(UnitaryPath { dim, kind: PathKind::Piecewise(out) })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_identity(&self) -> bool {
        matches!(self.kind, PathKind::Identity)
    }

    /// Interior breakpoints where the generator jumps.
    pub fn breakpoints(&self) -> Vec<f64> {
        match &self.kind {
            PathKind::Piecewise(pieces) => pieces[..pieces.len() - 1].iter().map(|p| p.end).collect(),
            _ => Vec::new(),
        }
    }

    pub fn is_breakpoint(&self, t: f64) -> bool {
        self.breakpoints().iter().any(|&b| is_close(t, b))
    }

    fn piece_index(pieces: &[Piece], t: f64, limit: Limit) -> usize {
        let last = pieces.len() - 1;
        for (j, p) in pieces[..last].iter().enumerate() {
            let at_end = is_close(t, p.end);
            if t < p.end && !at_end || at_end && limit == Limit::Left {
                return j;
            }
        }
        last
    }

    /// `U(t)`
    pub fn at(&self, t: f64) -> UnitaryOp {
        let u = match &self.kind {
            PathKind::Identity => Operator::identity(self.dim),
            PathKind::Exponential(g) => g.exp(t),
            PathKind::Piecewise(pieces) => {
                let p = &pieces[Self::piece_index(pieces, t, Limit::Left)];
                &p.generator.exp(t - p.start) * &p.u_start
            }
        };
        UnitaryOp::from_operator_unchecked(u)
    }

    /// `G(t)` with `dU/dt = G(t) U(t)`; the requested one-sided value at breakpoints.
    pub fn generator_at(&self, t: f64, limit: Limit) -> Operator {
        match &self.kind {
            PathKind::Identity => Operator::zeros(self.dim),
            PathKind::Exponential(g) => g.op().clone(),
            PathKind::Piecewise(pieces) => pieces[Self::piece_index(pieces, t, limit)].generator.op().clone(),
        }
    }
}

fn is_close(t: f64, b: f64) -> bool {
    (t - b).abs() <= BREAKPOINT_EPS * b.abs().max(1.0)
}

/// Measured Schrödinger projector `E_s(t) = U(t) E U(t)^H`.
#[derive(Clone, Debug)]
pub struct ProjectorPath {
    base: Projector,
    path: UnitaryPath,
}

impl ProjectorPath {
    pub fn new(base: Projector, path: UnitaryPath) -> Result<Self> {
        base.op().check_dim(path.dim())?;
        Ok(ProjectorPath { base, path })
    }

    /// Static projector, `U = 1`.
    pub fn fixed(base: Projector) -> Self {
        let dim = base.dim();
        ProjectorPath { base, path: UnitaryPath::identity(dim) }
    }

    pub fn base(&self) -> &Projector {
        &self.base
    }

    pub fn path(&self) -> &UnitaryPath {
        &self.path
    }

    pub fn dim(&self) -> usize {
        self.base.dim()
    }

    pub fn schrodinger(&self, t: f64) -> Projector {
        let u = self.path.at(t);
        Projector::from_operator_unchecked(&(u.op() * self.base.op()) * &u.op().adjoint())
    }
}

fn check_h(h: &Hamiltonian, dim: usize) -> Result<()> {
    h.op().check_dim(dim)
}

/// `V(t) = e^{iHt} U(t)`
pub fn combined_unitary(h: &Hamiltonian, path: &UnitaryPath, t: f64) -> UnitaryOp {
    UnitaryOp::from_operator_unchecked(&h.frame(t) * path.at(t).op())
}

pub fn evolve_state(h: &Hamiltonian, t: f64, psi0: &CVector) -> Result<CVector> {
    if psi0.len() != h.dim() {
        return Err(Error::DimensionMismatch { expected: h.dim(), found: psi0.len() });
    }
    let residual = (psi0.norm() - 1.0).abs();
    if residual > TOL_TRACE {
        return Err(Error::Validation { bound: Bound::Normalization, residual, tol: TOL_TRACE });
    }
    Ok(h.propagator(t).op().apply(psi0))
}

pub fn evolve_density(h: &Hamiltonian, t: f64, rho0: &DensityOp) -> Result<DensityOp> {
    check_h(h, rho0.dim())?;
    let u = h.propagator(t);
    Ok(DensityOp::from_operator_unchecked(&(u.op() * rho0.op()) * &u.op().adjoint()))
}

pub(crate) fn heisenberg_matrix(h: &Hamiltonian, path: &ProjectorPath, t: f64) -> Operator {
    let v = combined_unitary(h, path.path(), t);
    &(v.op() * path.base().op()) * &v.op().adjoint()
}

/// `E_H(t) = V(t) E V(t)^H`
pub fn heisenberg_projector(h: &Hamiltonian, path: &ProjectorPath, t: f64) -> Result<Projector> {
    check_h(h, path.dim())?;
    Projector::validate(heisenberg_matrix(h, path, t), 1e-9)
}

pub(crate) fn rate_matrix(h: &Hamiltonian, path: &ProjectorPath, t: f64, limit: Limit) -> Operator {
    let frame = h.frame(t);
    let v = &frame * path.path().at(t).op();
    let e_h = &(&v * path.base().op()) * &v.adjoint();
    let g = path.path().generator_at(t, limit);
    // dE_H/dt = [iH + e^{iHt} G e^{-iHt}, E_H]
    let k = &h.op().scale(c(0.0, 1.0)) + &(&(&frame * &g) * &frame.adjoint());
    k.commutator(&e_h)
}

/// `dE_H/dt` at `t`; fails on a breakpoint, where a one-sided limit must be requested.
pub fn heisenberg_rate(h: &Hamiltonian, path: &ProjectorPath, t: f64) -> Result<Operator> {
    if path.path().is_breakpoint(t) {
        return Err(Error::Breakpoint(t));
    }
    heisenberg_rate_limit(h, path, t, Limit::Left)
}

pub fn heisenberg_rate_limit(h: &Hamiltonian, path: &ProjectorPath, t: f64, limit: Limit) -> Result<Operator> {
    check_h(h, path.dim())?;
    Ok(rate_matrix(h, path, t, limit))
}

pub(crate) fn drag_matrix(h: &Hamiltonian, path: &UnitaryPath, t: f64, limit: Limit) -> Operator {
    let u = path.at(t);
    let g = path.generator_at(t, limit);
    // (dU^H/dt) U - i U^H H U = -U^H (G + iH) U
    let inner = &g + &h.op().scale(c(0.0, 1.0));
    -&(&(&u.op().adjoint() * &inner) * u.op())
}

/// `M(t) = (dV^H/dt) V`, anti-Hermitian.
pub fn drag_generator(h: &Hamiltonian, path: &UnitaryPath, t: f64) -> Result<Operator> {
    if path.is_breakpoint(t) {
        return Err(Error::Breakpoint(t));
    }
    drag_generator_limit(h, path, t, Limit::Left)
}

pub fn drag_generator_limit(h: &Hamiltonian, path: &UnitaryPath, t: f64, limit: Limit) -> Result<Operator> {
    check_h(h, path.dim())?;
    Ok(drag_matrix(h, path, t, limit))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operator::{mat_exp, pauli};
    use std::f64::consts::FRAC_PI_2;

    fn p0() -> Projector {
        Projector::onto(&pauli::ket0()).unwrap()
    }

    fn sigma_x_h() -> Hamiltonian {
        Hamiltonian::new(pauli::x()).unwrap()
    }

    #[test]
    fn evolve_state_cases() {
        let psi = pauli::plus();
        let out = evolve_state(&Hamiltonian::zero(2), 3.7, &psi).unwrap();
        assert!((out - &psi).norm() < 1e-15);

        let hz = Hamiltonian::new(pauli::z()).unwrap();
        let t = 0.83;
        let out = evolve_state(&hz, t, &pauli::ket0()).unwrap();
        assert!((out - pauli::ket0() * C64::from_polar(1.0, -t)).norm() < 1e-15);

        // oracle: Taylor-free closed form e^{-i sigma_x pi/2} = -i sigma_x
        let oracle = mat_exp(&pauli::x().scale(c(0.0, -FRAC_PI_2))).unwrap().apply(&pauli::ket0());
        let out = evolve_state(&sigma_x_h(), FRAC_PI_2, &pauli::ket0()).unwrap();
        assert!((&out - &oracle).norm() < 1e-14);
        assert!((out - pauli::ket1() * c(0.0, -1.0)).norm() < 1e-14);
        assert!((oracle.norm() - 1.0).abs() < 1e-12);

        assert!(matches!(evolve_state(&sigma_x_h(), 1.0, &CVector::from_element(3, c(0.0, 0.0))), Err(Error::DimensionMismatch { .. })));
    }

    use crate::operator::C64;

    #[test]
    fn evolve_density_cases() {
        let rho = DensityOp::pure(&pauli::plus()).unwrap();
        let same = evolve_density(&Hamiltonian::zero(2), 1.0, &rho).unwrap();
        assert!(same.op().distance(rho.op()) < 1e-15);

        let mixed = DensityOp::maximally_mixed(2);
        let out = evolve_density(&sigma_x_h(), 0.4, &mixed).unwrap();
        assert!(out.op().distance(mixed.op()) < 1e-15);

        let rho0 = DensityOp::pure(&pauli::ket0()).unwrap();
        let oracle = evolve_state(&sigma_x_h(), FRAC_PI_2, &pauli::ket0()).unwrap();
        let out = evolve_density(&sigma_x_h(), FRAC_PI_2, &rho0).unwrap();
        assert!(out.op().distance(&Operator::outer(&oracle)) < 1e-14);
        assert!(out.op().distance(&Operator::outer(&pauli::ket1())) < 1e-14);
        assert!((out.op().trace().re - 1.0).abs() < 1e-12);
    }

    #[test]
    fn heisenberg_projector_cases() {
        let path = ProjectorPath::fixed(p0());
        let e = heisenberg_projector(&sigma_x_h(), &path, 0.0).unwrap();
        assert!(e.op().distance(p0().op()) < 1e-15);

        let hz = Hamiltonian::new(pauli::z()).unwrap();
        for t in [0.1, 1.0, 7.5] {
            let e = heisenberg_projector(&hz, &path, t).unwrap();
            assert!(e.op().distance(p0().op()) < 1e-14);
        }

        // e^{i sigma_x pi/2} |0><0| e^{-i sigma_x pi/2} = |1><1|
        let f = mat_exp(&pauli::x().scale(c(0.0, FRAC_PI_2))).unwrap();
        let oracle = &(&f * p0().op()) * &f.adjoint();
        let e = heisenberg_projector(&sigma_x_h(), &path, FRAC_PI_2).unwrap();
        assert!(e.op().distance(&oracle) < 1e-14);
        assert!(e.op().distance(&Operator::outer(&pauli::ket1())) < 1e-14);
    }

    #[test]
    fn heisenberg_rate_cases() {
        let path = ProjectorPath::fixed(p0());
        assert!(heisenberg_rate(&Hamiltonian::zero(2), &path, 0.3).unwrap().norm() == 0.0);
        let hz = Hamiltonian::new(pauli::z()).unwrap();
        assert!(heisenberg_rate(&hz, &path, 0.3).unwrap().norm() < 1e-15);

        let delta = 1e-6;
        let plus = heisenberg_projector(&sigma_x_h(), &path, delta).unwrap();
        let minus = heisenberg_projector(&sigma_x_h(), &path, -delta).unwrap();
        let fd = (plus.op() - minus.op()).scale(c(0.5 / delta, 0.0));
        let rate = heisenberg_rate(&sigma_x_h(), &path, 0.0).unwrap();
        assert!(rate.distance(&fd) < 1e-8);
        assert!(rate.distance(&pauli::y()) < 1e-14);
        assert!(rate.hermiticity_residual() < 1e-14);
    }

    #[test]
    fn drag_generator_cases() {
        let id = UnitaryPath::identity(2);
        assert!(drag_generator(&Hamiltonian::zero(2), &id, 0.5).unwrap().norm() == 0.0);

        let g = pauli::y().scale(c(0.0, -0.7));
        let path = UnitaryPath::exponential(g.clone()).unwrap();
        let delta = 1e-6;
        for t in [0.0, 0.4, 1.3] {
            let m = drag_generator(&Hamiltonian::zero(2), &path, t).unwrap();
            assert!(m.distance(&(-&g)) < 1e-14);
            // finite difference of V^H(t + d) V(t)
            let back = &path.at(t + delta).op().adjoint() * path.at(t).op();
            let fd = (&back - &Operator::identity(2)).scale(c(1.0 / delta, 0.0));
            assert!(fd.distance(&m) < 1e-5);
        }

        let h = sigma_x_h();
        let m = drag_generator(&h, &id, 0.9).unwrap();
        assert!(m.distance(&h.op().scale(c(0.0, -1.0))) < 1e-15);
    }

    #[test]
    fn piecewise_path_is_continuous_and_flags_breakpoints() {
        let g1 = pauli::y().scale(c(0.0, -1.0));
        let g2 = pauli::x().scale(c(0.0, 0.5));
        let path = UnitaryPath::piecewise(vec![(0.5, g1.clone()), (2.0, g2.clone())]).unwrap();
        assert!(path.at(0.0).op().distance(&Operator::identity(2)) < 1e-15);
        assert_eq!(path.breakpoints(), vec![0.5]);
        let left = path.at(0.5 - 1e-9);
        let right = path.at(0.5 + 1e-9);
        assert!(left.op().distance(right.op()) < 1e-8);
        assert_eq!(path.generator_at(0.5, Limit::Left), g1);
        assert_eq!(path.generator_at(0.5, Limit::Right), g2);
        assert_eq!(path.generator_at(3.0, Limit::Left), g2);
        assert!(path.at(1.7).residual() < 1e-13);

        let pp = ProjectorPath::new(p0(), path.clone()).unwrap();
        let h = sigma_x_h();
        assert!(matches!(heisenberg_rate(&h, &pp, 0.5), Err(Error::Breakpoint(_))));
        assert!(heisenberg_rate_limit(&h, &pp, 0.5, Limit::Right).is_ok());
        assert!(matches!(drag_generator(&h, &path, 0.5), Err(Error::Breakpoint(_))));

        assert!(UnitaryPath::piecewise(vec![(0.5, g1.clone()), (0.5, g2)]).is_err());
        assert!(UnitaryPath::piecewise(vec![(0.0, g1)]).is_err());
        assert!(UnitaryPath::piecewise(vec![(1.0, pauli::x())]).is_err());
    }
}
