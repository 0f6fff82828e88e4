//! The continuous-measurement limit.
//!
//! Three routes to `A_h(t, t1)` for a continuously watched projector path:
//! integrating `dA/dt = (dE_H/dt) A(t_-)` from `A(t1) = E_H(t1)`, summing the
//! time-ordered series up to third order, and the closed forms for a static
//! projector (`zeno_closed_form`) and a dragged one (`anti_zeno_propagator`).

use std::f64::consts::PI;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::dynamics::{combined_unitary, drag_matrix, heisenberg_matrix, rate_matrix, Hamiltonian, Limit, ProjectorPath, UnitaryPath};
use crate::error::{Bound, Error, Result};
use crate::operator::{c, CVector, Operator, Projector, UnitaryOp, C64, TOL_TRACE};

/// Unitarity residual of `W` above which integration is rejected.
pub const W_REJECT: f64 = 1e-6;
/// Unitarity residual of `W` expected at the default step.
pub const W_EXPECTED: f64 = 1e-8;
pub const MAX_SERIES_ORDER: usize = 3;
pub const MIN_QUADRATURE_POINTS: usize = 16;
/// Default step as a fraction of the integration interval.
pub const DEFAULT_RELATIVE_STEP: f64 = 1e-4;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OdeMethod {
    #[default]
    Rk4Fixed,
    /// First order: `A <- (1 + h R(t_k)) A`.
    OrderedProduct,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OdeSettings {
    /// Absolute step; `None` means `1e-4 * (t - t1)`.
    pub step: Option<f64>,
    pub method: OdeMethod,
}

impl OdeSettings {
    pub fn with_step(step: f64) -> Self {
        OdeSettings { step: Some(step), method: OdeMethod::Rk4Fixed }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesSettings {
    pub order: usize,
    pub points: usize,
}

impl Default for SeriesSettings {
    fn default() -> Self {
        SeriesSettings { order: MAX_SERIES_ORDER, points: MIN_QUADRATURE_POINTS }
    }
}

/// Uniform step grid on `[t1, t]` whose nodes include every interior breakpoint.
#[derive(Clone, Debug)]
pub struct StepGrid {
    t1: f64,
    t: f64,
    step: f64,
    steps: usize,
    breaks: Vec<bool>,
}

impl StepGrid {
    pub fn new(t1: f64, t: f64, step: Option<f64>, breakpoints: &[f64]) -> Result<Self> {
        if !(t1.is_finite() && t.is_finite()) || t <= t1 {
            return Err(Error::Schedule(format!("need finite t > t1, got t1 = {t1}, t = {t}")));
        }
        let span = t - t1;
        let max = span / 10.0;
        let requested = step.unwrap_or(DEFAULT_RELATIVE_STEP * span);
        if !requested.is_finite() || requested <= 0.0 {
            return Err(Error::Schedule(format!("ODE step must be positive, got {requested}")));
        }
        if requested > max * (1.0 + 1e-12) {
            return Err(Error::StepTooLarge { step: requested, max });
        }
        let steps = ((span / requested) * (1.0 - 1e-12)).ceil().max(10.0) as usize;
        let h = span / steps as f64;
        let mut breaks = vec![false; steps + 1];
        for &b in breakpoints.iter().filter(|&&b| b > t1 && b < t) {
            let k = (b - t1) / h;
            let nearest = k.round();
            if (k - nearest).abs() > 1e-6 {
                return Err(Error::BreakpointOffGrid(b));
            }
            breaks[nearest as usize] = true;
        }
        Ok(StepGrid { t1, t, step: h, steps, breaks })
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn node(&self, k: usize) -> f64 {
        if k == self.steps {
            self.t
        } else {
            self.t1 + self.step * k as f64
        }
    }

    pub fn is_break(&self, k: usize) -> bool {
        self.breaks[k]
    }
}

/// One classical RK4 step of `dA/dt = R(t) A`, forward or backward.
///
/// The rate at the step endpoints is taken as the one-sided limit from inside
/// the step, so breakpoints on step boundaries never mix pieces.
pub fn rk4_step<F>(rate: &F, t: f64, h: f64, a: &Operator) -> Operator
where
    F: Fn(f64, Limit) -> Operator,
{
    let (start, end) = if h >= 0.0 { (Limit::Right, Limit::Left) } else { (Limit::Left, Limit::Right) };
    rk4_step_with(&rate(t, start), &rate(t + 0.5 * h, start), &rate(t + h, end), h, a)
}

fn rk4_step_with(r0: &Operator, rm: &Operator, r1: &Operator, h: f64, a: &Operator) -> Operator {
    let half = c(0.5 * h, 0.0);
    let k1 = r0 * a;
    let k2 = rm * &(a + &k1.scale(half));
    let k3 = rm * &(a + &k2.scale(half));
    let k4 = r1 * &(a + &k3.scale(c(h, 0.0)));
    let incr = &(&k1 + &k2.scale(c(2.0, 0.0))) + &(&k3.scale(c(2.0, 0.0)) + &k4);
    a + &incr.scale(c(h / 6.0, 0.0))
}

/// Integrates `dA/dt = R(t) A` over the grid, calling `observe(k, t_k, A_k)` at every node.
pub fn integrate_observed<F, O>(rate: F, initial: Operator, grid: &StepGrid, method: OdeMethod, mut observe: O) -> Result<Operator>
where
    F: Fn(f64, Limit) -> Operator,
    O: FnMut(usize, f64, &Operator) -> Result<()>,
{
    let mut a = initial;
    observe(0, grid.node(0), &a)?;
    // rate at the current node seen from the right, reused from the previous step when smooth
    let mut r_start: Option<Operator> = None;
    for k in 0..grid.steps() {
        let t0 = grid.node(k);
        let t1 = grid.node(k + 1);
        let r0 = match r_start.take() {
            Some(r) => r,
            None => rate(t0, Limit::Right),
        };
        a = match method {
            OdeMethod::OrderedProduct => &a + &(&r0 * &a).scale(c(t1 - t0, 0.0)),
            OdeMethod::Rk4Fixed => {
                let rm = rate(0.5 * (t0 + t1), Limit::Right);
                let r1 = rate(t1, Limit::Left);
                let next = rk4_step_with(&r0, &rm, &r1, t1 - t0, &a);
                if k + 1 < grid.steps() && !grid.is_break(k + 1) {
                    r_start = Some(r1);
                }
                next
            }
        };
        if !a.is_finite() {
            return Err(Error::NonFiniteIntermediate(t1));
        }
        observe(k + 1, t1, &a)?;
    }
    Ok(a)
}

pub fn integrate<F>(rate: F, initial: Operator, grid: &StepGrid, method: OdeMethod) -> Result<Operator>
where
    F: Fn(f64, Limit) -> Operator,
{
    integrate_observed(rate, initial, grid, method, |_, _, _| Ok(()))
}

fn chain_grid(h: &Hamiltonian, path: &ProjectorPath, t1: f64, t: f64, settings: &OdeSettings) -> Result<StepGrid> {
    h.op().check_dim(path.dim())?;
    StepGrid::new(t1, t, settings.step, &path.path().breakpoints())
}

/// Solves `dA/dt = (dE_H/dt) A`, `A(t1) = E_H(t1)`.
pub fn integrate_chain_ode(h: &Hamiltonian, path: &ProjectorPath, t1: f64, t: f64, settings: &OdeSettings) -> Result<Operator> {
    let grid = chain_grid(h, path, t1, t, settings)?;
    integrate(|s, lim| rate_matrix(h, path, s, lim), heisenberg_matrix(h, path, t1), &grid, settings.method)
}

/// Solves the complement equation, rate `-dE_H/dt` and `A(t1) = 1 - E_H(t1)`.
pub fn complement_chain_ode(h: &Hamiltonian, path: &ProjectorPath, t1: f64, t: f64, settings: &OdeSettings) -> Result<Operator> {
    let grid = chain_grid(h, path, t1, t, settings)?;
    let initial = &Operator::identity(path.dim()) - &heisenberg_matrix(h, path, t1);
    integrate(|s, lim| -&rate_matrix(h, path, s, lim), initial, &grid, settings.method)
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    fn legendre(n: usize, x: f64) -> (f64, f64) {
        let (mut p0, mut p1) = (1.0, x);
        for k in 1..n {
            let p2 = ((2 * k + 1) as f64 * x * p1 - k as f64 * p0) / (k + 1) as f64;
            p0 = p1;
            p1 = p2;
        }
        let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
        (p1, dp)
    }
    let mut nodes = Vec::with_capacity(n);
    let mut weights = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre(n, x);
        nodes.push(x);
        weights.push(2.0 / ((1.0 - x * x) * dp * dp));
    }
    (nodes, weights)
}

/// Nested integrals `I_k(s) = int_{t1}^{s} R(u) I_{k-1}(u) du`, `I_0 = 1`,
/// returned as `[I_0(t), ..., I_order(t)]`.
pub fn time_ordered_terms<F>(rate: F, dim: usize, t1: f64, t: f64, settings: &SeriesSettings) -> Result<Vec<Operator>>
where
    F: Fn(f64) -> Operator,
{
    if settings.order > MAX_SERIES_ORDER {
        return Err(Error::SeriesOrder(settings.order));
    }
    if settings.points < MIN_QUADRATURE_POINTS {
        return Err(Error::Quadrature(format!(
            "{} points per dimension, at least {MIN_QUADRATURE_POINTS} required",
            settings.points
        )));
    }
    let rule = gauss_legendre(settings.points);

    fn nested<F: Fn(f64) -> Operator>(rate: &F, rule: &(Vec<f64>, Vec<f64>), dim: usize, t1: f64, s: f64, depth: usize) -> Vec<Operator> {
        let mut out = vec![Operator::identity(dim)];
        out.extend((0..depth).map(|_| Operator::zeros(dim)));
        if depth == 0 {
            return out;
        }
        let half = 0.5 * (s - t1);
        for (&x, &w) in rule.0.iter().zip(&rule.1) {
            let u = t1 + half * (x + 1.0);
            let inner = nested(rate, rule, dim, t1, u, depth - 1);
            let r = rate(u).scale(c(w * half, 0.0));
            for j in 1..=depth {
                out[j] = &out[j] + &(&r * &inner[j - 1]);
            }
        }
        out
    }

    Ok(nested(&rate, &rule, dim, t1, t, settings.order))
}

/// `[1 + sum_{k <= order} I_k] E_H(t1)` with the rate `dE_H/dt`.
pub fn dyson_series(h: &Hamiltonian, path: &ProjectorPath, t1: f64, t: f64, settings: &SeriesSettings) -> Result<Operator> {
    h.op().check_dim(path.dim())?;
    if t.is_nan() || t1.is_nan() || t <= t1 {
        return Err(Error::Schedule(format!("need t > t1, got t1 = {t1}, t = {t}")));
    }
    let terms = time_ordered_terms(|s| rate_matrix(h, path, s, Limit::Left), path.dim(), t1, t, settings)?;
    let sum = terms.iter().skip(1).fold(terms[0].clone(), |acc, term| &acc + term);
    Ok(&sum * &heisenberg_matrix(h, path, t1))
}

/// `e^{i(H - Hbar)t} |psi0><psi0| e^{-i(H - Hbar)t1}` with `Hbar = <psi0|H|psi0>`.
pub fn zeno_closed_form(h: &Hamiltonian, psi0: &CVector, t1: f64, t: f64) -> Result<Operator> {
    if psi0.len() != h.dim() {
        return Err(Error::DimensionMismatch { expected: h.dim(), found: psi0.len() });
    }
    let residual = (psi0.norm() - 1.0).abs();
    if residual > TOL_TRACE {
        return Err(Error::Validation { bound: Bound::Normalization, residual, tol: TOL_TRACE });
    }
    let h_bar = h.expectation(psi0);
    let phase = C64::from_polar(1.0, -h_bar * (t - t1));
    let a = &(&h.frame(t) * &Operator::outer(psi0)) * &h.frame(-t1);
    Ok(a.scale(phase))
}


fn check_drag_inputs(h: &Hamiltonian, path: &UnitaryPath, e: &Projector) -> Result<()> {
    h.op().check_dim(path.dim())?;
    e.op().check_dim(path.dim())
}

/// `W(t, t1) = T exp(int E M E)`, RK4 on `dW/dt = E M(t) E W`, `W(t1) = 1`.
pub fn w_operator(h: &Hamiltonian, path: &UnitaryPath, e: &Projector, t1: f64, t: f64, settings: &OdeSettings) -> Result<UnitaryOp> {
    check_drag_inputs(h, path, e)?;
    let grid = StepGrid::new(t1, t, settings.step, &path.breakpoints())?;
    let w = integrate(|s, lim| squeezed_drag(h, path, e, s, lim), Operator::identity(path.dim()), &grid, OdeMethod::Rk4Fixed)?;
    checked_unitary(w)
}

fn squeezed_drag(h: &Hamiltonian, path: &UnitaryPath, e: &Projector, s: f64, lim: Limit) -> Operator {
    &(e.op() * &drag_matrix(h, path, s, lim)) * e.op()
}

fn checked_unitary(w: Operator) -> Result<UnitaryOp> {
    let residual = w.unitarity_residual();
    if residual > W_REJECT {
        return Err(Error::UnitarityLoss(residual));
    }
    if residual > W_EXPECTED {
        warn!("W unitarity residual {residual:.3e} above {W_EXPECTED:e}; consider a smaller ODE step");
    }
    Ok(UnitaryOp::from_operator_unchecked(w))
}

#[derive(Clone, Debug)]
pub struct AntiZenoSolution {
    pub propagator: Operator,
    pub w: UnitaryOp,
}

impl AntiZenoSolution {
    pub fn w_residual(&self) -> f64 {
        self.w.residual()
    }
}

/// `A_h(t, t1) = V(t) W(t, t1) E V^H(t1)` together with `W`.
pub fn anti_zeno_solution(h: &Hamiltonian, path: &UnitaryPath, e: &Projector, t1: f64, t: f64, settings: &OdeSettings) -> Result<AntiZenoSolution> {
    let w = w_operator(h, path, e, t1, t, settings)?;
    let propagator = dragged_propagator(h, path, e, w.op(), t1, t);
    Ok(AntiZenoSolution { propagator, w })
}

pub fn anti_zeno_propagator(h: &Hamiltonian, path: &UnitaryPath, e: &Projector, t1: f64, t: f64, settings: &OdeSettings) -> Result<Operator> {
    anti_zeno_solution(h, path, e, t1, t, settings).map(|s| s.propagator)
}

fn dragged_propagator(h: &Hamiltonian, path: &UnitaryPath, e: &Projector, w: &Operator, t1: f64, t: f64) -> Operator {
    let v = combined_unitary(h, path, t);
    let v1 = combined_unitary(h, path, t1);
    &(&(v.op() * w) * e.op()) * &v1.op().adjoint()
}

/// Worst-case mismatch between the central-difference derivative of the dragged
/// closed form and `(dE_H/dt) A`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualCheck {
    pub max_residual: f64,
    pub delta: f64,
    pub samples: Vec<ResidualSample>,
    /// Sample times skipped because they sit on a generator breakpoint.
    pub skipped: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualSample {
    pub t: f64,
    pub residual: f64,
}

/// Evaluates the residual at `samples` evenly spaced grid nodes in `(t1, t]`.
///
/// `W` is integrated once along the grid; at each sampled node it is advanced
/// by single RK4 steps of `+-delta` to get `A(s +- delta)`.
#[allow(clippy::too_many_arguments)]
pub fn propagator_residual(
    h: &Hamiltonian,
    path: &UnitaryPath,
    e: &Projector,
    t1: f64,
    t: f64,
    settings: &OdeSettings,
    samples: usize,
    delta: f64,
) -> Result<ResidualCheck> {
    check_drag_inputs(h, path, e)?;
    if samples == 0 || delta.is_nan() || delta <= 0.0 {
        return Err(Error::Experiment("residual check needs samples >= 1 and delta > 0".into()));
    }
    let grid = StepGrid::new(t1, t, settings.step, &path.breakpoints())?;
    let wanted: Vec<usize> = (1..=samples).map(|j| (j * grid.steps() + samples / 2) / samples).collect();
    let projector_path = ProjectorPath::new(e.clone(), path.clone())?;
    let drag = |s: f64, lim: Limit| squeezed_drag(h, path, e, s, lim);

    let mut out = Vec::with_capacity(samples);
    let mut skipped = Vec::new();
    let w_final = integrate_observed(drag, Operator::identity(path.dim()), &grid, OdeMethod::Rk4Fixed, |k, s, w| {
        if !wanted.contains(&k) {
            return Ok(());
        }
        if path.is_breakpoint(s) || path.is_breakpoint(s - delta) || path.is_breakpoint(s + delta) {
            skipped.push(s);
            return Ok(());
        }
        let drag = |u: f64, lim: Limit| squeezed_drag(h, path, e, u, lim);
        let w_plus = rk4_step(&drag, s, delta, w);
        let w_minus = rk4_step(&drag, s, -delta, w);
        let a = dragged_propagator(h, path, e, w, t1, s);
        let a_plus = dragged_propagator(h, path, e, &w_plus, t1, s + delta);
        let a_minus = dragged_propagator(h, path, e, &w_minus, t1, s - delta);
        let derivative = (&a_plus - &a_minus).scale(c(0.5 / delta, 0.0));
        let rhs = &rate_matrix(h, &projector_path, s, Limit::Left) * &a;
        out.push(ResidualSample { t: s, residual: derivative.distance(&rhs) });
        Ok(())
    })?;
    checked_unitary(w_final)?;
    let max_residual = out.iter().map(|s| s.residual).fold(0.0, f64::max);
    Ok(ResidualCheck { max_residual, delta, samples: out, skipped })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{chain_operator, complement_chain, sequence_probability, MeasurementSchedule};
    use crate::dynamics::heisenberg_rate;
    use crate::operator::{mat_exp, pauli, DensityOp};
    use crate::random::InstanceRng;
    use std::f64::consts::FRAC_PI_2;

    fn p0() -> Projector {
        Projector::onto(&pauli::ket0()).unwrap()
    }

    #[test]
    fn gauss_legendre_is_exact_for_degree_2n_minus_1() {
        let (x, w) = gauss_legendre(16);
        assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14);
        for deg in [2, 10, 30, 31] {
            let approx: f64 = x.iter().zip(&w).map(|(&x, &w)| w * x.powi(deg)).sum();
            let exact = if deg % 2 == 1 { 0.0 } else { 2.0 / (deg as f64 + 1.0) };
            assert!((approx - exact).abs() < 1e-14, "degree {deg}");
        }
    }

    #[test]
    fn grid_rejects_coarse_steps_and_offgrid_breakpoints() {
        assert!(matches!(StepGrid::new(0.0, 1.0, Some(0.2), &[]), Err(Error::StepTooLarge { .. })));
        let g = StepGrid::new(0.0, 1.0, Some(0.1), &[]).unwrap();
        assert_eq!(g.steps(), 10);
        assert_eq!(StepGrid::new(0.0, 2.0, None, &[]).unwrap().steps(), 10_000);
        assert!(matches!(StepGrid::new(0.0, 1.0, Some(0.1), &[0.55]), Err(Error::BreakpointOffGrid(_))));
        let g = StepGrid::new(0.0, 1.0, Some(0.1), &[0.5]).unwrap();
        assert!(g.is_break(5) && !g.is_break(4));
    }

    #[test]
    fn ode_with_zero_rate_keeps_projector() {
        let path = ProjectorPath::fixed(p0());
        for method in [OdeMethod::Rk4Fixed, OdeMethod::OrderedProduct] {
            let settings = OdeSettings { step: Some(0.01), method };
            let a = integrate_chain_ode(&Hamiltonian::zero(2), &path, 0.0, 1.0, &settings).unwrap();
            assert_eq!(a, p0().into_op());
        }
    }

    #[test]
    fn ode_matches_zeno_closed_form_on_qubit() {
        let h = Hamiltonian::new(pauli::x()).unwrap();
        let path = ProjectorPath::fixed(p0());
        let a = integrate_chain_ode(&h, &path, 0.0, 1.0, &OdeSettings::with_step(1e-4)).unwrap();
        let closed = zeno_closed_form(&h, &pauli::ket0(), 0.0, 1.0).unwrap();
        assert!(a.distance(&closed) < 1e-6, "{:e}", a.distance(&closed));
        // first-order product converges too, just more slowly
        let settings = OdeSettings { step: Some(1e-4), method: OdeMethod::OrderedProduct };
        let b = integrate_chain_ode(&h, &path, 0.0, 1.0, &settings).unwrap();
        assert!(b.distance(&closed) < 1e-3);
    }

    #[test]
    fn ode_matches_discrete_chain_random_3d() {
        let mut rng = InstanceRng::new(5);
        let h = Hamiltonian::new(rng.hermitian(3, 1.0)).unwrap();
        let path = ProjectorPath::new(rng.projector(3, 1), UnitaryPath::exponential(rng.anti_hermitian(3, 1.0)).unwrap()).unwrap();
        let ode = integrate_chain_ode(&h, &path, 0.0, 1.0, &OdeSettings::default()).unwrap();
        let chain = chain_operator(&h, &path, &MeasurementSchedule::new(0.0, 1.0, 100_000).unwrap()).unwrap();
        assert!(ode.distance(&chain) < 1e-4, "{:e}", ode.distance(&chain));
    }

    #[test]
    fn complement_ode_cases() {
        let h = Hamiltonian::new(pauli::x()).unwrap();
        let settings = OdeSettings::with_step(0.01);
        let full = ProjectorPath::fixed(Projector::validate(Operator::identity(2), 1e-12).unwrap());
        assert!(complement_chain_ode(&h, &full, 0.0, 1.0, &settings).unwrap().norm() < 1e-15);
        let empty = ProjectorPath::fixed(Projector::validate(Operator::zeros(2), 1e-12).unwrap());
        assert!(complement_chain_ode(&h, &empty, 0.0, 1.0, &settings).unwrap().distance(&Operator::identity(2)) < 1e-14);

        let mut rng = InstanceRng::new(9);
        let h = Hamiltonian::new(rng.hermitian(2, 1.0)).unwrap();
        let path = ProjectorPath::new(rng.projector(2, 1), UnitaryPath::exponential(rng.anti_hermitian(2, 1.0)).unwrap()).unwrap();
        let ode = complement_chain_ode(&h, &path, 0.0, 1.0, &OdeSettings::default()).unwrap();
        let chain = complement_chain(&h, &path, &MeasurementSchedule::new(0.0, 1.0, 100_000).unwrap()).unwrap();
        assert!(ode.distance(&chain) < 1e-4, "{:e}", ode.distance(&chain));
    }

    #[test]
    fn series_for_constant_rate_reproduces_taylor_partial_sums() {
        let r = Operator::from_rows(&[vec![c(0.3, 0.0), c(0.1, 0.2)], vec![c(0.1, -0.2), c(-0.4, 0.0)]]).unwrap();
        let span = 0.7;
        let settings = SeriesSettings::default();
        let terms = time_ordered_terms(|_| r.clone(), 2, 0.0, span, &settings).unwrap();
        let mut power = Operator::identity(2);
        let mut factorial = 1.0;
        for (k, term) in terms.iter().enumerate() {
            if k > 0 {
                power = &power * &r;
                factorial *= k as f64;
            }
            let expected = power.scale(c(span.powi(k as i32) / factorial, 0.0));
            assert!(term.distance(&expected) < 1e-14, "order {k}");
        }
        // partial sums approach the exponential
        let sum = terms.iter().skip(1).fold(terms[0].clone(), |a, t| &a + t);
        let exp = mat_exp(&r.scale(c(span, 0.0))).unwrap();
        assert!(sum.distance(&exp) < r.norm().powi(4) * span.powi(4) / 24.0 * 2.0);
    }

    #[test]
    fn series_orders() {
        let h = Hamiltonian::new(pauli::x()).unwrap();
        let path = ProjectorPath::fixed(p0());
        let zero = dyson_series(&h, &path, 0.2, 0.5, &SeriesSettings { order: 0, points: 16 }).unwrap();
        assert!(zero.distance(&heisenberg_matrix(&h, &path, 0.2)) < 1e-15);
        assert!(matches!(dyson_series(&h, &path, 0.0, 0.1, &SeriesSettings { order: 4, points: 16 }), Err(Error::SeriesOrder(4))));
        assert!(dyson_series(&h, &path, 0.0, 0.1, &SeriesSettings { order: 2, points: 8 }).is_err());
    }

    #[test]
    fn order_three_series_tracks_ode_on_short_interval() {
        let mut rng = InstanceRng::new(21);
        let h = Hamiltonian::new(rng.hermitian(3, 1.0)).unwrap();
        let path = ProjectorPath::new(rng.projector(3, 1), UnitaryPath::exponential(rng.anti_hermitian(3, 1.0)).unwrap()).unwrap();
        let rate_norm = heisenberg_rate(&h, &path, 0.0).unwrap().norm();
        let span = 0.05 / rate_norm;
        let series = dyson_series(&h, &path, 0.0, span, &SeriesSettings::default()).unwrap();
        let ode = integrate_chain_ode(&h, &path, 0.0, span, &OdeSettings::default()).unwrap();
        let bound = (rate_norm * span).powi(4) / 24.0 * 4.0;
        assert!(series.distance(&ode) < bound, "{:e} vs bound {bound:e}", series.distance(&ode));
    }

    #[test]
    fn zeno_closed_form_cases() {
        let hz = Hamiltonian::new(pauli::z()).unwrap();
        assert!((hz.expectation(&pauli::ket0()) - 1.0).abs() < 1e-15);
        for t in [0.5, 2.0] {
            let a = zeno_closed_form(&hz, &pauli::ket0(), 0.0, t).unwrap();
            assert!(a.distance(p0().op()) < 1e-14);
        }
        let hx = Hamiltonian::new(pauli::x()).unwrap();
        assert_eq!(hx.expectation(&pauli::ket0()), 0.0);

        let mut rng = InstanceRng::new(2);
        let h = Hamiltonian::new(rng.hermitian(3, 1.0)).unwrap();
        let e = rng.projector(3, 1);
        let psi = rng.state_in_range(&e);
        let rho = DensityOp::pure(&psi).unwrap();
        for t in [0.3, 1.0, 4.0] {
            let a = zeno_closed_form(&h, &psi, 0.0, t).unwrap();
            let p = sequence_probability(&a, &rho).unwrap().checked().unwrap();
            assert!((p - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn w_for_static_projector_is_exponential_of_squeezed_hamiltonian() {
        let mut rng = InstanceRng::new(13);
        let h = Hamiltonian::new(rng.hermitian(3, 1.0)).unwrap();
        let e = rng.projector(3, 2);
        let (t1, t) = (0.25, 1.25);
        let w = w_operator(&h, &UnitaryPath::identity(3), &e, t1, t, &OdeSettings::default()).unwrap();
        let ehe = &(e.op() * h.op()) * e.op();
        let oracle = mat_exp(&ehe.scale(c(0.0, -(t - t1)))).unwrap();
        assert!(w.op().distance(&oracle) < 1e-10, "{:e}", w.op().distance(&oracle));
    }

    fn rotating_path(theta: f64) -> UnitaryPath {
        // U(t) = e^{-i theta t sigma_y}
        UnitaryPath::exponential(pauli::y().scale(c(0.0, -theta))).unwrap()
    }

    #[test]
    fn w_is_identity_when_squeezed_drag_vanishes() {
        let w = w_operator(&Hamiltonian::zero(2), &rotating_path(0.8), &p0(), 0.0, 1.0, &OdeSettings::default()).unwrap();
        assert!(w.op().distance(&Operator::identity(2)) < 1e-15);
    }

    #[test]
    fn w_is_unitary_for_random_inputs() {
        let mut rng = InstanceRng::new(17);
        let h = Hamiltonian::new(rng.hermitian(4, 1.0)).unwrap();
        let path = UnitaryPath::exponential(rng.anti_hermitian(4, 1.0)).unwrap();
        let e = rng.projector(4, 2);
        let w = w_operator(&h, &path, &e, 0.0, 1.0, &OdeSettings::default()).unwrap();
        assert!(w.residual() < W_EXPECTED, "{:e}", w.residual());
    }

    #[test]
    fn coarse_step_is_rejected() {
        let err = w_operator(&Hamiltonian::zero(2), &rotating_path(1.0), &p0(), 0.0, 1.0, &OdeSettings::with_step(0.2)).unwrap_err();
        assert!(err.is_numerical_quality());
    }

    #[test]
    fn anti_zeno_reduces_to_zeno_for_static_rank_one_projector() {
        let mut rng = InstanceRng::new(23);
        let h = Hamiltonian::new(rng.hermitian(3, 1.0)).unwrap();
        let e = rng.projector(3, 1);
        let psi = rng.state_in_range(&e);
        let e = Projector::onto(&psi).unwrap();
        let a = anti_zeno_propagator(&h, &UnitaryPath::identity(3), &e, 0.0, 1.0, &OdeSettings::default()).unwrap();
        let z = zeno_closed_form(&h, &psi, 0.0, 1.0).unwrap();
        assert!(a.distance(&z) < 1e-8, "{:e}", a.distance(&z));
    }

    #[test]
    fn dragged_state_follows_rotated_projector() {
        let theta = FRAC_PI_2;
        let path = rotating_path(theta);
        let h = Hamiltonian::zero(2);
        let a = anti_zeno_propagator(&h, &path, &p0(), 0.0, 1.0, &OdeSettings::default()).unwrap();
        let expected = path.at(1.0).op() * p0().op();
        assert!(a.distance(&expected) < 1e-14);
        let pp = ProjectorPath::new(p0(), path).unwrap();
        let chain = chain_operator(&h, &pp, &MeasurementSchedule::new(0.0, 1.0, 10_000).unwrap()).unwrap();
        // chain survival cos^{2(n-1)}(theta dt) costs O(1/n)
        assert!(a.distance(&chain) < 1e-3, "{:e}", a.distance(&chain));
        let rho = DensityOp::pure(&pauli::ket0()).unwrap();
        let p = sequence_probability(&a, &rho).unwrap().checked().unwrap();
        assert!((p - 1.0).abs() < 1e-14);
    }

    #[test]
    fn residual_of_dragged_closed_form_is_small() {
        let path = ProjectorPath::fixed(p0());
        let zero = propagator_residual(&Hamiltonian::zero(2), path.path(), &p0(), 0.0, 1.0, &OdeSettings::default(), 8, 1e-5).unwrap();
        assert!(zero.max_residual < 1e-12);

        let mut rng = InstanceRng::new(29);
        let h = Hamiltonian::new(rng.hermitian(3, 1.0)).unwrap();
        let upath = UnitaryPath::exponential(rng.anti_hermitian(3, 1.0)).unwrap();
        let e = rng.projector(3, 2);
        let check = propagator_residual(&h, &upath, &e, 0.0, 1.0, &OdeSettings::default(), 16, 1e-5).unwrap();
        assert_eq!(check.samples.len(), 16);
        assert!(check.max_residual < 1e-5, "{:e}", check.max_residual);
    }

    #[test]
    fn piecewise_path_integrates_across_breakpoint() {
        let g1 = pauli::y().scale(c(0.0, -1.0));
        let g2 = pauli::x().scale(c(0.0, 0.6));
        let upath = UnitaryPath::piecewise(vec![(0.5, g1), (1.0, g2)]).unwrap();
        let h = Hamiltonian::new(pauli::z().scale(c(0.3, 0.0))).unwrap();
        let pp = ProjectorPath::new(p0(), upath.clone()).unwrap();
        let ode = integrate_chain_ode(&h, &pp, 0.0, 1.0, &OdeSettings::default()).unwrap();
        let closed = anti_zeno_propagator(&h, &upath, &p0(), 0.0, 1.0, &OdeSettings::default()).unwrap();
        assert!(ode.distance(&closed) < 1e-8, "{:e}", ode.distance(&closed));
        let check = propagator_residual(&h, &upath, &p0(), 0.0, 1.0, &OdeSettings::default(), 4, 1e-5).unwrap();
        assert_eq!(check.skipped, vec![0.5]);
        assert!(check.max_residual < 1e-5);
    }
}
