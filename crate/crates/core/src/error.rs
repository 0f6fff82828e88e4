use thiserror::Error;

/// Which structural bound a validation check tested.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Bound {
    Hermiticity,
    AntiHermiticity,
    Idempotence,
    Unitarity,
    PositiveSemidefinite,
    UnitTrace,
    Normalization,
}

impl std::fmt::Display for Bound {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self {
            Bound::Hermiticity => "hermiticity ||A - A^H||_F",
            Bound::AntiHermiticity => "anti-hermiticity ||A + A^H||_F",
            Bound::Idempotence => "idempotence ||A^2 - A||_F",
            Bound::Unitarity => "unitarity ||U^H U - 1||_F",
            Bound::PositiveSemidefinite => "positive semidefiniteness (min eigenvalue)",
            Bound::UnitTrace => "unit trace |Tr(rho) - 1|",
            Bound::Normalization => "normalization | ||psi|| - 1 |",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is empty")]
    Empty,
    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("{bound} violated: residual {residual:.3e} exceeds tolerance {tol:.3e}")]
    Validation { bound: Bound, residual: f64, tol: f64 },
    #[error("zero-probability branch: Tr(E rho E) = {0:.3e}")]
    ZeroProbability(f64),
    #[error("time {0} is a generator breakpoint; request a left or right limit")]
    Breakpoint(f64),
    #[error("invalid schedule: {0}")]
    Schedule(String),
    #[error("invalid unitary path: {0}")]
    Path(String),
    #[error("ODE step {step:.3e} too large: at most {max:.3e} (>= 10 intervals) required")]
    StepTooLarge { step: f64, max: f64 },
    #[error("breakpoint {0} does not coincide with an ODE step boundary")]
    BreakpointOffGrid(f64),
    #[error("non-finite intermediate value at t = {0}")]
    NonFiniteIntermediate(f64),
    #[error("W lost unitarity: residual {0:.3e} exceeds 1e-6; use a smaller ODE step")]
    UnitarityLoss(f64),
    #[error("probability {0:.6e} outside [0, 1] beyond roundoff")]
    ProbabilityRange(f64),
    #[error("series order {0} exceeds the supported maximum of 3")]
    SeriesOrder(usize),
    #[error("invalid quadrature: {0}")]
    Quadrature(String),
    #[error("precondition failed: {what} (residual {residual:.3e})")]
    Precondition { what: String, residual: f64 },
    #[error("invalid experiment: {0}")]
    Experiment(String),
}

impl Error {
    /// True for failures caused by integration quality or roundoff rather than invalid input.
    pub fn is_numerical_quality(&self) -> bool {
        matches!(
            self,
            Error::StepTooLarge { .. }
                | Error::NonFiniteIntermediate(_)
                | Error::UnitarityLoss(_)
                | Error::ProbabilityRange(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
