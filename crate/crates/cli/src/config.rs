//! JSON configuration: schema types, `--set` overrides and resolution into a
//! validated [`ExperimentConfig`].

use kettlewatch_core::continuum::{OdeMethod, OdeSettings};
use kettlewatch_core::dynamics::{Generator, Hamiltonian, UnitaryPath};
use kettlewatch_core::experiments::{ExperimentConfig, DEFAULT_RESIDUAL_SAMPLES};
use kettlewatch_core::operator::{c, CVector, DensityOp, Operator, Projector, TOL_PROJ, TOL_UNIT};
use kettlewatch_core::par::Execution;
use kettlewatch_core::random::InstanceRng;
use serde::Deserialize;
use serde_json::Value;

use crate::CliError;

/// Pure states within this distance of unit norm are renormalized on load.
pub const STATE_NORM_TOL: f64 = 1e-6;

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum HamiltonianSpec {
    Matrix { matrix: Operator },
    Zero,
    Random { scale: f64 },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProjectorSpec {
    Matrix { matrix: Operator },
    FirstK { rank: usize },
    Random { rank: usize },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PieceSpec {
    pub t_end: f64,
    pub generator: Operator,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PathSpec {
    Identity,
    Exp { generator: Operator },
    Piecewise {
        pieces: Vec<PieceSpec>,
        #[serde(default)]
        u0: Option<Operator>,
    },
    RandomExp { scale: f64 },
}

#[derive(Clone, Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StateSpec {
    Pure { state: Vec<[f64; 2]> },
    Density { matrix: Operator },
    ProjectorNormalized,
    RandomSupported,
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OdeSpec {
    #[serde(default)]
    pub step: Option<f64>,
    #[serde(default)]
    pub method: OdeMethod,
}

fn default_n_list() -> Vec<usize> {
    vec![11, 101, 1001]
}

fn default_residual_samples() -> usize {
    DEFAULT_RESIDUAL_SAMPLES
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(default)]
    pub dim: Option<usize>,
    pub hamiltonian: HamiltonianSpec,
    pub projector: ProjectorSpec,
    #[serde(default = "default_path")]
    pub path: PathSpec,
    pub rho0: StateSpec,
    #[serde(default)]
    pub t1: f64,
    pub t: f64,
    #[serde(default = "default_n_list")]
    pub n_list: Vec<usize>,
    #[serde(default)]
    pub ode: OdeSpec,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_residual_samples")]
    pub residual_samples: usize,
    #[serde(default)]
    pub execution: Execution,
}

fn default_path() -> PathSpec {
    PathSpec::Identity
}

/// Applies `key=value` overrides to the raw document. Dotted keys descend into
/// objects, creating them as needed; values parse as JSON, else as strings.
pub fn apply_overrides(doc: &mut Value, overrides: &[String]) -> Result<(), CliError> {
    for item in overrides {
        let (key, raw) = item
            .split_once('=')
            .ok_or_else(|| CliError::validation(format!("override '{item}' is not key=value")))?;
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        let mut slot = &mut *doc;
        for part in key.split('.') {
            if part.is_empty() {
                return Err(CliError::validation(format!("override key '{key}' has an empty segment")));
            }
            if !slot.is_object() {
                *slot = Value::Object(Default::default());
            }
            slot = slot.as_object_mut().expect("object").entry(part).or_insert(Value::Null);
        }
        *slot = value;
    }
    Ok(())
}

pub fn parse_document(text: &str) -> Result<Value, CliError> {
    serde_json::from_str(text).map_err(|e| CliError::validation(format!("config is not valid JSON: {e}")))
}

pub fn parse_schema(doc: Value) -> Result<ConfigFile, CliError> {
    serde_path_to_error::deserialize(doc).map_err(|e| {
        let pointer = pointer_of(&e.path().to_string());
        CliError::validation(format!("{pointer}: {}", e.inner()))
    })
}

fn pointer_of(path: &str) -> String {
    if path == "." {
        return "/".into();
    }
    let mut out = String::new();
    for part in path.split('.') {
        for piece in part.split('[') {
            let piece = piece.trim_end_matches(']');
            if !piece.is_empty() {
                out.push('/');
                out.push_str(piece);
            }
        }
    }
    out
}

/// Parses and resolves a configuration document.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, CliError> {
    let doc = parse_document(text)?;
    resolve(parse_schema(doc)?)
}

fn at(pointer: &str) -> impl Fn(kettlewatch_core::Error) -> CliError + '_ {
    move |e| CliError::from_core(e).at(pointer)
}

fn state_vector(raw: &[[f64; 2]]) -> Result<CVector, CliError> {
    let psi = CVector::from_iterator(raw.len(), raw.iter().map(|&[re, im]| c(re, im)));
    let norm = psi.norm();
    if psi.is_empty() || !norm.is_finite() || (norm - 1.0).abs() > STATE_NORM_TOL {
        return Err(CliError::validation(format!(
            "/rho0/state: normalization | ||psi|| - 1 | violated: residual {:.3e} exceeds tolerance {STATE_NORM_TOL:.3e}",
            (norm - 1.0).abs()
        )));
    }
    Ok(psi / c(norm, 0.0))
}

fn explicit_dim(file: &ConfigFile) -> Option<usize> {
    let from_h = match &file.hamiltonian {
        HamiltonianSpec::Matrix { matrix } => Some(matrix.dim()),
        _ => None,
    };
    let from_e = match &file.projector {
        ProjectorSpec::Matrix { matrix } => Some(matrix.dim()),
        _ => None,
    };
    let from_path = match &file.path {
        PathSpec::Exp { generator } => Some(generator.dim()),
        PathSpec::Piecewise { pieces, .. } => pieces.first().map(|p| p.generator.dim()),
        _ => None,
    };
    let from_rho = match &file.rho0 {
        StateSpec::Pure { state } => Some(state.len()),
        StateSpec::Density { matrix } => Some(matrix.dim()),
        _ => None,
    };
    file.dim.or(from_h).or(from_e).or(from_path).or(from_rho)
}

/// Validates every operator and draws random parts from a generator seeded by
/// `seed`, in the order hamiltonian, path, projector, rho0.
pub fn resolve(file: ConfigFile) -> Result<ExperimentConfig, CliError> {
    let dim = explicit_dim(&file)
        .ok_or_else(|| CliError::validation("/dim: dimension is required when no operator is given explicitly"))?;
    if dim == 0 {
        return Err(CliError::validation("/dim: dimension must be at least 1"));
    }
    let check_dim = |pointer: &str, found: usize| {
        if found == dim {
            Ok(())
        } else {
            Err(CliError::validation(format!("{pointer}: dimension mismatch: expected {dim}, found {found}")))
        }
    };
    let mut rng = InstanceRng::new(file.seed);

    let hamiltonian = match file.hamiltonian {
        HamiltonianSpec::Matrix { matrix } => {
            check_dim("/hamiltonian/matrix", matrix.dim())?;
            Hamiltonian::new(matrix).map_err(at("/hamiltonian"))?
        }
        HamiltonianSpec::Zero => Hamiltonian::zero(dim),
        HamiltonianSpec::Random { scale } => Hamiltonian::new(rng.hermitian(dim, scale)).map_err(at("/hamiltonian/scale"))?,
    };

    let path = match file.path {
        PathSpec::Identity => UnitaryPath::identity(dim),
        PathSpec::Exp { generator } => {
            check_dim("/path/generator", generator.dim())?;
            UnitaryPath::exponential(generator).map_err(at("/path/generator"))?
        }
        PathSpec::Piecewise { pieces, u0 } => {
            if let Some(u0) = u0 {
                check_dim("/path/u0", u0.dim())?;
                let residual = u0.distance(&Operator::identity(dim));
                if residual > TOL_UNIT {
                    return Err(CliError::validation(format!(
                        "/path/u0: the dragging path must coincide with the identity at t = 0, U(0) = 1 (residual {residual:.3e})"
                    )));
                }
            }
            for (j, piece) in pieces.iter().enumerate() {
                let pointer = format!("/path/pieces/{j}/generator");
                check_dim(&pointer, piece.generator.dim())?;
                Generator::new(piece.generator.clone()).map_err(|e| CliError::from_core(e).at(&pointer))?;
            }
            UnitaryPath::piecewise(pieces.into_iter().map(|p| (p.t_end, p.generator)).collect()).map_err(at("/path/pieces"))?
        }
        PathSpec::RandomExp { scale } => UnitaryPath::exponential(rng.anti_hermitian(dim, scale)).map_err(at("/path/scale"))?,
    };

    let projector = match file.projector {
        ProjectorSpec::Matrix { matrix } => {
            check_dim("/projector/matrix", matrix.dim())?;
            Projector::validate(matrix, TOL_PROJ).map_err(at("/projector"))?
        }
        ProjectorSpec::FirstK { rank } => Projector::first_k(dim, rank).map_err(at("/projector/rank"))?,
        ProjectorSpec::Random { rank } => {
            if rank == 0 || rank > dim {
                return Err(CliError::validation(format!("/projector/rank: rank {rank} must lie in 1..={dim}")));
            }
            rng.projector(dim, rank)
        }
    };

    let mut psi0 = None;
    let rho0 = match file.rho0 {
        StateSpec::Pure { state } => {
            check_dim("/rho0/state", state.len())?;
            let psi = state_vector(&state)?;
            let rho = DensityOp::pure(&psi).map_err(at("/rho0/state"))?;
            psi0 = Some(psi);
            rho
        }
        StateSpec::Density { matrix } => {
            check_dim("/rho0/matrix", matrix.dim())?;
            DensityOp::validate(matrix).map_err(at("/rho0"))?
        }
        StateSpec::ProjectorNormalized => {
            let rank = projector.rank() as f64;
            DensityOp::validate(projector.op().scale(c(1.0 / rank, 0.0))).map_err(at("/rho0"))?
        }
        StateSpec::RandomSupported => rng.density_in_range(&projector),
    };

    let mut config = ExperimentConfig::new(hamiltonian, projector, path, rho0, file.t1, file.t)
        .map_err(at("/t"))?
        .with_n_list(file.n_list)
        .with_ode(OdeSettings { step: file.ode.step, method: file.ode.method })
        .with_seed(file.seed)
        .with_execution(file.execution);
    config.psi0 = psi0;
    config.residual_samples = file.residual_samples;
    config.validate().map_err(at("/"))?;
    Ok(config)
}
