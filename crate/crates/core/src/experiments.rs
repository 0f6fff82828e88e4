//! Scenario runners: Zeno and anti-Zeno demonstrations, convergence studies and
//! residual certification, each producing an [`ExperimentReport`].
//!
//! Reports are pure functions of the configuration. Per-n chain evaluations may
//! run concurrently; results are gathered in `n_list` order, so the parallel and
//! sequential paths yield identical reports.

use std::time::Instant;

use log::info;
use serde::{Deserialize, Serialize};

use crate::chain::{chain_operator, sequence_probability, MeasurementSchedule};
use crate::continuum::{anti_zeno_solution, propagator_residual, zeno_closed_form, OdeSettings, ResidualCheck, StepGrid};
use crate::dynamics::{Hamiltonian, ProjectorPath, UnitaryPath};
use crate::error::{Error, Result};
use crate::fit::{fit_loglog, ConvergenceFit};
use crate::operator::{c, CVector, DensityOp, HermitianSpectrum, Operator, Projector};
use crate::par::{self, Execution};

/// Bound on `||E rho0 E - rho0||_F` for the dragged-state theorem to apply.
pub const SUPPORT_TOL: f64 = 1e-12;
pub const DEFAULT_RESIDUAL_SAMPLES: usize = 16;
/// Residual finite-difference step as a fraction of `t - t1`.
pub const RESIDUAL_RELATIVE_DELTA: f64 = 1e-5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Zeno,
    AntiZeno,
    Converge,
    Residual,
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scenario::Zeno => "zeno",
            Scenario::AntiZeno => "anti-zeno",
            Scenario::Converge => "converge",
            Scenario::Residual => "residual",
        })
    }
}

/// A fully resolved experiment: every operator validated, random instances drawn.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub hamiltonian: Hamiltonian,
    pub projector: Projector,
    pub path: UnitaryPath,
    pub rho0: DensityOp,
    /// Initial state vector, when `rho0` was given as a pure state.
    pub psi0: Option<CVector>,
    pub t1: f64,
    pub t: f64,
    pub n_list: Vec<usize>,
    pub ode: OdeSettings,
    pub seed: u64,
    pub residual_samples: usize,
    pub execution: Execution,
}

impl ExperimentConfig {
    pub fn new(hamiltonian: Hamiltonian, projector: Projector, path: UnitaryPath, rho0: DensityOp, t1: f64, t: f64) -> Result<Self> {
        let config = ExperimentConfig {
            hamiltonian,
            projector,
            path,
            rho0,
            psi0: None,
            t1,
            t,
            n_list: vec![11, 101, 1001],
            ode: OdeSettings::default(),
            seed: 0,
            residual_samples: DEFAULT_RESIDUAL_SAMPLES,
            execution: Execution::default(),
        };
        config.validate()?;
        Ok(config)
    }

    pub fn with_n_list(mut self, n_list: Vec<usize>) -> Self {
        self.n_list = n_list;
        self
    }

    pub fn with_ode(mut self, ode: OdeSettings) -> Self {
        self.ode = ode;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_execution(mut self, execution: Execution) -> Self {
        self.execution = execution;
        self
    }

    pub fn dim(&self) -> usize {
        self.projector.dim()
    }

    /// Dimension agreement, time ordering and chain lengths.
    pub fn validate(&self) -> Result<()> {
        let d = self.dim();
        self.hamiltonian.op().check_dim(d)?;
        self.rho0.op().check_dim(d)?;
        if self.path.dim() != d {
            return Err(Error::DimensionMismatch { expected: d, found: self.path.dim() });
        }
        if let Some(psi) = &self.psi0 {
            if psi.len() != d {
                return Err(Error::DimensionMismatch { expected: d, found: psi.len() });
            }
        }
        MeasurementSchedule::new(self.t1, self.t, 1)?;
        if self.n_list.is_empty() || self.n_list.contains(&0) {
            return Err(Error::Experiment("n_list must be non-empty with every n >= 1".into()));
        }
        Ok(())
    }

    /// `||E rho0 E - rho0||_F`
    pub fn support_residual(&self) -> f64 {
        let e = self.projector.op();
        (&(e * self.rho0.op()) * e).distance(self.rho0.op())
    }

    fn projector_path(&self) -> Result<ProjectorPath> {
        ProjectorPath::new(self.projector.clone(), self.path.clone())
    }

    /// Statically watched rank-one projector onto the initial pure state.
    pub fn is_zeno_shaped(&self) -> bool {
        self.path.is_identity() && self.projector.rank() == 1 && self.rho0.op().distance(self.projector.op()) <= SUPPORT_TOL
    }

    fn zeno_state(&self) -> CVector {
        if let Some(psi) = &self.psi0 {
            return psi.clone();
        }
        let eig = HermitianSpectrum::new(self.projector.op());
        let top = eig
            .eigenvalues()
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .expect("non-empty spectrum");
        let v = eig.eigenvectors().column(top).into_owned();
        let n = v.norm();
        v / c(n, 0.0)
    }

    /// Checks the scenario's physical preconditions.
    pub fn check_for(&self, scenario: Scenario) -> Result<()> {
        self.validate()?;
        match scenario {
            Scenario::Zeno => {
                if !self.path.is_identity() {
                    let residual = self.path.at(self.t).op().distance(&Operator::identity(self.dim()));
                    return Err(Error::Precondition { what: "zeno scenario needs a static projector (identity path)".into(), residual });
                }
                let rank = self.projector.rank();
                if rank != 1 {
                    return Err(Error::Precondition { what: format!("zeno scenario needs a rank-1 projector, got rank {rank}"), residual: (rank as f64 - 1.0).abs() });
                }
                let residual = self.rho0.op().distance(self.projector.op());
                if residual > SUPPORT_TOL {
                    return Err(Error::Precondition { what: "zeno scenario needs rho0 = |psi0><psi0| = E".into(), residual });
                }
            }
            Scenario::AntiZeno | Scenario::Residual => {
                let residual = self.support_residual();
                if residual > SUPPORT_TOL {
                    return Err(Error::Precondition { what: "E rho0 E = rho0 must hold".into(), residual });
                }
            }
            Scenario::Converge => {
                let mut ns = self.n_list.clone();
                ns.sort_unstable();
                ns.dedup();
                if ns.len() < 3 {
                    return Err(Error::Experiment(format!("convergence study needs >= 3 distinct n values, got {}", ns.len())));
                }
                let (lo, hi) = (ns[0], ns[ns.len() - 1]);
                if (hi as f64) < 100.0 * lo as f64 {
                    return Err(Error::Experiment(format!("n_list must span >= 2 decades, got {lo}..{hi}")));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeriesRow {
    pub n: usize,
    pub p_discrete: f64,
    pub op_error: f64,
    pub p_closed_form: f64,
}

/// How far the post-measurement state moved from the initial one.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StateChange {
    /// `||rho_final - rho0||_F`
    pub frobenius: f64,
    /// `Tr(rho_final rho0)`
    pub overlap: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Timing {
    pub label: &'static str,
    pub seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentReport {
    pub scenario: Scenario,
    pub seed: u64,
    pub dim: usize,
    pub t1: f64,
    pub t: f64,
    pub ode_step: f64,
    /// Generator breakpoints; rates there use one-sided limits.
    pub breakpoints: Vec<f64>,
    pub series: Vec<SeriesRow>,
    pub closed_form_probability: Option<f64>,
    pub convergence: Option<ConvergenceFit>,
    /// `max_n n (1 - p(n))`, the constant in `1 - p(n) <= C / n`.
    pub deficit_constant: Option<f64>,
    pub w_unitarity_residual: Option<f64>,
    pub residual: Option<ResidualCheck>,
    pub support_residual: Option<f64>,
    pub final_state: Option<Operator>,
    pub state_change: Option<StateChange>,
    #[serde(skip)]
    pub timings: Vec<Timing>,
}

impl ExperimentReport {
    fn new(scenario: Scenario, config: &ExperimentConfig) -> Result<Self> {
        let grid = StepGrid::new(config.t1, config.t, config.ode.step, &config.path.breakpoints())?;
        Ok(ExperimentReport {
            scenario,
            seed: config.seed,
            dim: config.dim(),
            t1: config.t1,
            t: config.t,
            ode_step: grid.step(),
            breakpoints: config.path.breakpoints(),
            series: Vec::new(),
            closed_form_probability: None,
            convergence: None,
            deficit_constant: None,
            w_unitarity_residual: None,
            residual: None,
            support_residual: None,
            final_state: None,
            state_change: None,
            timings: Vec::new(),
        })
    }

    fn timed<T>(&mut self, label: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let start = Instant::now();
        let out = f()?;
        let seconds = start.elapsed().as_secs_f64();
        info!("{label}: {seconds:.3} s");
        self.timings.push(Timing { label, seconds });
        Ok(out)
    }

    fn fit_series(&mut self) {
        let rows: Vec<&SeriesRow> = self.series.iter().filter(|r| r.n >= 2).collect();
        let x: Vec<f64> = rows.iter().map(|r| r.n as f64).collect();
        let y: Vec<f64> = rows.iter().map(|r| r.op_error).collect();
        self.convergence = Some(fit_loglog(&x, &y));
    }

    fn ensure_finite(&self) -> Result<()> {
        let mut values: Vec<f64> = vec![self.t1, self.t, self.ode_step];
        values.extend(self.series.iter().flat_map(|r| [r.p_discrete, r.op_error, r.p_closed_form]));
        values.extend(self.closed_form_probability);
        values.extend(self.deficit_constant);
        values.extend(self.w_unitarity_residual);
        values.extend(self.support_residual);
        if let Some(fit) = &self.convergence {
            values.extend(fit.slope.iter().chain(&fit.intercept).chain(&fit.residual));
        }
        if let Some(r) = &self.residual {
            values.push(r.max_residual);
        }
        if let Some(s) = &self.state_change {
            values.extend([s.frobenius, s.overlap]);
        }
        if self.final_state.as_ref().is_some_and(|op| !op.is_finite()) || values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteIntermediate(self.t));
        }
        Ok(())
    }
}

/// Closed-form limit operator for the configuration, with `W`'s unitarity residual when used.
fn closed_form(config: &ExperimentConfig) -> Result<(Operator, Option<f64>)> {
    if config.is_zeno_shaped() {
        let psi = config.zeno_state();
        Ok((zeno_closed_form(&config.hamiltonian, &psi, config.t1, config.t)?, None))
    } else {
        let sol = anti_zeno_solution(&config.hamiltonian, &config.path, &config.projector, config.t1, config.t, &config.ode)?;
        let residual = sol.w_residual();
        Ok((sol.propagator, Some(residual)))
    }
}

fn discrete_series(config: &ExperimentConfig, closed: &Operator, p_closed: f64) -> Result<Vec<SeriesRow>> {
    let path = config.projector_path()?;
    let rows = par::map(config.execution, &config.n_list, |&n| -> Result<SeriesRow> {
        let schedule = MeasurementSchedule::new(config.t1, config.t, n)?;
        let a = chain_operator(&config.hamiltonian, &path, &schedule)?;
        let p = sequence_probability(&a, &config.rho0)?.checked()?;
        Ok(SeriesRow { n, p_discrete: p, op_error: a.distance(closed), p_closed_form: p_closed })
    });
    rows.into_iter().collect()
}

/// Static watching of `|psi0><psi0|`: discrete survival against the closed form.
pub fn run_zeno(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.check_for(Scenario::Zeno)?;
    let mut report = ExperimentReport::new(Scenario::Zeno, config)?;
    let psi = config.zeno_state();
    let closed = report.timed("closed_form", || zeno_closed_form(&config.hamiltonian, &psi, config.t1, config.t))?;
    let p_closed = sequence_probability(&closed, &config.rho0)?.checked()?;
    report.closed_form_probability = Some(p_closed);
    report.series = report.timed("chains", || discrete_series(config, &closed, p_closed))?;
    report.fit_series();
    report.deficit_constant = report
        .series
        .iter()
        .filter(|r| r.n >= 2)
        .map(|r| r.n as f64 * (1.0 - r.p_discrete))
        .reduce(f64::max);
    report.support_residual = Some(config.support_residual());
    report.ensure_finite()?;
    Ok(report)
}

/// Dragged watching of `U(t) E U(t)^H` with `E rho0 E = rho0`.
pub fn run_anti_zeno(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.check_for(Scenario::AntiZeno)?;
    let mut report = ExperimentReport::new(Scenario::AntiZeno, config)?;
    let sol = report.timed("closed_form", || {
        anti_zeno_solution(&config.hamiltonian, &config.path, &config.projector, config.t1, config.t, &config.ode)
    })?;
    let p_closed = sequence_probability(&sol.propagator, &config.rho0)?.checked()?;
    report.closed_form_probability = Some(p_closed);
    report.w_unitarity_residual = Some(sol.w_residual());
    report.support_residual = Some(config.support_residual());
    report.series = report.timed("chains", || discrete_series(config, &sol.propagator, p_closed))?;
    report.fit_series();

    // Schrödinger-picture state right after the last measurement
    let k = config.hamiltonian.propagator(config.t).op() * &sol.propagator;
    let unnormalized = &(&k * config.rho0.op()) * &k.adjoint();
    let final_state = unnormalized.scale(c(1.0 / p_closed, 0.0));
    report.state_change = Some(StateChange {
        frobenius: final_state.distance(config.rho0.op()),
        overlap: (&final_state * config.rho0.op()).trace().re,
    });
    report.final_state = Some(final_state);
    report.ensure_finite()?;
    Ok(report)
}

/// Fits the discrete-to-closed-form operator error against `n`.
pub fn convergence_study(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.check_for(Scenario::Converge)?;
    let mut report = ExperimentReport::new(Scenario::Converge, config)?;
    let (closed, w_residual) = report.timed("closed_form", || closed_form(config))?;
    let p_closed = sequence_probability(&closed, &config.rho0)?.checked()?;
    report.closed_form_probability = Some(p_closed);
    report.w_unitarity_residual = w_residual;
    report.series = report.timed("chains", || discrete_series(config, &closed, p_closed))?;
    report.fit_series();
    report.ensure_finite()?;
    Ok(report)
}

/// Checks that the dragged closed form satisfies the measurement equation.
pub fn residual_certify(config: &ExperimentConfig) -> Result<ExperimentReport> {
    config.validate()?;
    let mut report = ExperimentReport::new(Scenario::Residual, config)?;
    let delta = RESIDUAL_RELATIVE_DELTA * (config.t - config.t1);
    let check = report.timed("residual", || {
        propagator_residual(
            &config.hamiltonian,
            &config.path,
            &config.projector,
            config.t1,
            config.t,
            &config.ode,
            config.residual_samples,
            delta,
        )
    })?;
    report.residual = Some(check);
    report.support_residual = Some(config.support_residual());
    report.ensure_finite()?;
    Ok(report)
}

pub fn run(config: &ExperimentConfig, scenario: Scenario) -> Result<ExperimentReport> {
    match scenario {
        Scenario::Zeno => run_zeno(config),
        Scenario::AntiZeno => run_anti_zeno(config),
        Scenario::Converge => convergence_study(config),
        Scenario::Residual => residual_certify(config),
    }
}

/// Random anti-Zeno instance: Hermitian `H`, rotating path `e^{Gt}`, rank-`rank`
/// projector and a density operator supported on its range.
pub fn random_anti_zeno_config(seed: u64, dim: usize, rank: usize, t: f64) -> Result<ExperimentConfig> {
    let mut rng = crate::random::InstanceRng::new(seed);
    let h = Hamiltonian::new(rng.hermitian(dim, 1.0))?;
    let path = UnitaryPath::exponential(rng.anti_hermitian(dim, 1.0))?;
    let e = rng.projector(dim, rank);
    let rho0 = rng.density_in_range(&e);
    Ok(ExperimentConfig::new(h, e, path, rho0, 0.0, t)?.with_seed(seed))
}
