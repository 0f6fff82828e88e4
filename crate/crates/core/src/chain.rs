//! Finite sequences of projective measurements.
//!
//! A chain is the time-ordered product `E_H(t_n) ... E_H(t_1)` over a uniform
//! schedule. Everything in [`crate::continuum`] is checked against these
//! products.

use log::debug;
use serde::{Deserialize, Serialize};

use crate::dynamics::{combined_unitary, heisenberg_matrix, Hamiltonian, ProjectorPath, UnitaryPath};
use crate::error::{Error, Result};
use crate::operator::{c, DensityOp, Operator, Projector};

pub const EPS_COLLAPSE: f64 = 1e-14;
/// Roundoff band outside `[0, 1]` that is clamped rather than reported.
pub const PROBABILITY_CLAMP: f64 = 1e-10;

/// Uniform grid `t_i = t1 + (t - t1)(i - 1)/(n - 1)`, or `{t1}` when `n = 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSchedule {
    t1: f64,
    t: f64,
    n: usize,
}

impl MeasurementSchedule {
    pub fn new(t1: f64, t: f64, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Schedule("n must be at least 1".into()));
        }
        if !(t1.is_finite() && t.is_finite()) || t <= t1 {
            return Err(Error::Schedule(format!("need finite t > t1, got t1 = {t1}, t = {t}")));
        }
        Ok(MeasurementSchedule { t1, t, n })
    }

    pub fn t1(&self) -> f64 {
        self.t1
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn time(&self, i: usize) -> f64 {
        debug_assert!(i < self.n);
        if i == 0 {
            self.t1
        } else if i + 1 == self.n {
            self.t
        } else {
            self.t1 + (self.t - self.t1) * i as f64 / (self.n - 1) as f64
        }
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(move |i| self.time(i))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Route {
    Discrete,
    Ode,
    Series,
    ClosedForm,
}

/// `Tr(A rho A^H)` after roundoff clamping.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Probability {
    pub value: f64,
    pub raw: f64,
    pub range_violation: bool,
}

impl Probability {
    /// The value, or an error when it left `[0, 1]` by more than roundoff.
    pub fn checked(self) -> Result<f64> {
        if self.range_violation {
            Err(Error::ProbabilityRange(self.raw))
        } else {
            Ok(self.value)
        }
    }
}

/// A propagator modifier together with the event probability it implies.
#[derive(Clone, Debug)]
pub struct ChainResult {
    pub operator: Operator,
    pub probability: f64,
    pub n: usize,
    pub route: Route,
}

impl ChainResult {
    pub fn evaluate(operator: Operator, rho0: &DensityOp, n: usize, route: Route) -> Result<Self> {
        let probability = sequence_probability(&operator, rho0)?.checked()?;
        Ok(ChainResult { operator, probability, n, route })
    }
}

/// Instantaneous measurement of `E`: `(Tr(E rho E), E rho E / Tr(E rho E))`.
pub fn collapse(rho: &DensityOp, e: &Projector) -> Result<(f64, DensityOp)> {
    rho.op().check_dim(e.dim())?;
    let projected = &(e.op() * rho.op()) * e.op();
    let p = projected.trace().re;
    if p <= EPS_COLLAPSE {
        return Err(Error::ZeroProbability(p));
    }
    let after = DensityOp::validate(projected.scale(c(1.0 / p, 0.0)))?;
    Ok((p, after))
}

fn ordered_product<F>(h: &Hamiltonian, path: &ProjectorPath, schedule: &MeasurementSchedule, factor: F) -> Result<Operator>
where
    F: Fn(Operator) -> Operator,
{
    h.op().check_dim(path.dim())?;
    let mut times = schedule.times();
    let first = times.next().expect("schedule is non-empty");
    let mut acc = factor(heisenberg_matrix(h, path, first));
    for t in times {
        acc = &factor(heisenberg_matrix(h, path, t)) * &acc;
    }
    Ok(acc)
}

/// `A_h = E_H(t_n) ... E_H(t_1)`
pub fn chain_operator(h: &Hamiltonian, path: &ProjectorPath, schedule: &MeasurementSchedule) -> Result<Operator> {
    ordered_product(h, path, schedule, |e| e)
}

/// `A_hbar`, the same product over `1 - E_H(t_i)`.
pub fn complement_chain(h: &Hamiltonian, path: &ProjectorPath, schedule: &MeasurementSchedule) -> Result<Operator> {
    let id = Operator::identity(path.dim());
    ordered_product(h, path, schedule, |e| &id - &e)
}

/// `K_h' = e^{-iH t_final} (1 - A_hbar)`: at least one `E_i = 1` outcome.
pub fn union_propagator(
    h: &Hamiltonian,
    path: &ProjectorPath,
    schedule: &MeasurementSchedule,
    t_final: f64,
) -> Result<Operator> {
    if t_final < schedule.t() {
        return Err(Error::Schedule(format!("t_final = {t_final} precedes the last measurement at {}", schedule.t())));
    }
    let complement = complement_chain(h, path, schedule)?;
    let rest = &Operator::identity(path.dim()) - &complement;
    Ok(h.propagator(t_final).op() * &rest)
}

pub fn sequence_probability(a: &Operator, rho0: &DensityOp) -> Result<Probability> {
    a.check_dim(rho0.dim())?;
    let raw = (&(a * rho0.op()) * &a.adjoint()).trace().re;
    let (value, range_violation) = if (0.0..=1.0).contains(&raw) {
        (raw, false)
    } else if (-PROBABILITY_CLAMP..=1.0 + PROBABILITY_CLAMP).contains(&raw) {
        debug!("clamping probability {raw:e} into [0, 1]");
        (raw.clamp(0.0, 1.0), false)
    } else {
        (raw, true)
    };
    Ok(Probability { value, raw, range_violation })
}

/// `A_h = V(t_n) [X(t_{n-1}) ... X(t_1)] V^H(t_1)` with `X(t_i) = E V^H(t_{i+1}) V(t_i) E`.
///
/// Algebraically identical to [`chain_operator`] on `E_s = U E U^H` but factored
/// through the combined unitary instead of Heisenberg projectors.
pub fn dragged_chain_discrete(
    h: &Hamiltonian,
    e: &Projector,
    path: &UnitaryPath,
    schedule: &MeasurementSchedule,
) -> Result<Operator> {
    h.op().check_dim(e.dim())?;
    e.op().check_dim(path.dim())?;
    if schedule.n() < 2 {
        return Err(Error::Schedule("dragged chain needs n >= 2".into()));
    }
    let e = e.op();
    let v_first = combined_unitary(h, path, schedule.t1());
    let mut v_prev = v_first.clone();
    let mut y = e.clone();
    for t in schedule.times().skip(1) {
        let v = combined_unitary(h, path, t);
        let x = &(&(e * &v.op().adjoint()) * v_prev.op()) * e;
        y = &x * &y;
        v_prev = v;
    }
    Ok(&(v_prev.op() * &y) * &v_first.op().adjoint())
}
