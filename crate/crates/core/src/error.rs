use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Near-null direction of a normal-equation system, with a readable label.
#[derive(Clone, Debug, PartialEq)]
pub struct NullDirection {
    pub vector: Vec<f64>,
    pub label: String,
}

/// Rank-deficient 6x6 ICP system. `step` is the minimum-norm solution.
#[derive(Clone, Debug, PartialEq)]
pub struct Degeneracy {
    pub rank: usize,
    pub null_directions: Vec<NullDirection>,
    pub step: [f64; 6],
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("pitch {pitch} rad is within 1e-6 of +/-pi/2 (gimbal lock)")]
    GimbalLock { pitch: f64 },

    #[error("expected {expected} joint angles, found {found}{}", record.map(|r| format!(" (record {r})")).unwrap_or_default())]
    DimensionMismatch {
        expected: usize,
        found: usize,
        record: Option<usize>,
    },

    #[error("kinematic chain needs at least one DH row")]
    EmptyChain,

    #[error("point cloud is empty")]
    EmptyCloud,

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("normal estimation failed: all {degenerate} neighborhoods are degenerate (rank < 2)")]
    DegenerateNeighborhood { degenerate: usize },

    #[error("requested {requested} points but the cloud holds {available}")]
    TargetTooLarge { requested: usize, available: usize },

    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{}:{line}: non-finite value", path.display())]
    NonFiniteValue { path: PathBuf, line: usize },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("depth cloud has no normals")]
    MissingNormals,

    #[error("no correspondences within the maximum pairing distance")]
    NoCorrespondences,

    #[error("only {active} active correspondences; at least 6 are required")]
    InsufficientCorrespondences { active: usize },

    #[error("normal equations are rank {} (of 6)", .0.rank)]
    DegenerateNormalEquations(Box<Degeneracy>),

    #[error("no weight-1 correspondences to assemble a Hessian from")]
    NoActivePairs,

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    AsymmetricInput { asymmetry: f64 },

    #[error("rigid registration is underconstrained (rank {rank} of 6): {}", labels.join(", "))]
    DegenerateProblem { rank: usize, labels: Vec<String> },

    #[error("cost failed to decrease after {rejections} consecutive damping increases")]
    NonDecreasingCost { rejections: usize },

    #[error("unknown scene preset `{0}`")]
    UnknownPreset(String),

    #[error("unknown patch label `{0}`")]
    UnknownPatch(String),

    #[error("no patches selected")]
    EmptySelection,

    #[error("IK failed: position error {position_error:.3e} m, axis misalignment {alignment_deg:.3} deg")]
    IkFailure {
        position_error: f64,
        alignment_deg: f64,
    },

    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
