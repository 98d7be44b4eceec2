use thiserror::Error;

/// Errors surfaced by the toolkit.
///
/// Numerical failures carry the quantity that triggered them so callers can
/// report certificates that are recomputable from the inputs.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("eigensolver did not converge within {max_iter} iterations (dim {dim})")]
    EigNonConvergence { dim: usize, max_iter: usize },

    #[error("matrix is singular to tolerance: smallest singular value {sigma_min:.3e}")]
    NotInvertible { sigma_min: f64 },

    #[error("dimension mismatch: {context} (expected {expected}, got {got})")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("non-finite entry in {context}")]
    NonFiniteEntry { context: &'static str },

    #[error("no separating contour: {detail}")]
    NoSeparatingContour { detail: String },

    #[error("eigenvalue on or near contour: resolvent norm {resolvent_norm:.3e} at node {node_re}+{node_im}i")]
    EigenvalueOnContour {
        resolvent_norm: f64,
        node_re: f64,
        node_im: f64,
    },

    #[error("quadrature did not converge: idempotency residual {residual:.3e} at {nodes} nodes per edge")]
    QuadratureNonConvergence { residual: f64, nodes: usize },

    #[error("idempotent polishing diverged: initial residual {initial_residual:.3e}")]
    PolishDivergence { initial_residual: f64 },

    #[error("projection is not induced by a real operator: imaginary part norm {im_norm:.3e} exceeds {tol:.3e}")]
    NotRealInduced { im_norm: f64, tol: f64 },

    #[error("projection rank {rank} disagrees with enclosed multiplicity {enclosed}")]
    ProjectionRankMismatch { rank: usize, enclosed: usize },

    #[error("defect {defect:.3e} exceeds tolerance {tol:.3e}")]
    DefectTooLarge { defect: f64, tol: f64 },

    #[error("no complex structure in odd dimension {dim}: det(J)^2 = (-1)^{dim} is impossible over the reals")]
    OddDimension { dim: usize },

    #[error("basis degeneration: best pivot {pivot:.3e} below floor after {retries} pivot-order retries")]
    BasisDegeneration { pivot: f64, retries: usize },

    #[error("ideal budget exceeded: {detail}")]
    BudgetExceeded { detail: String },

    #[error(
        "correction series does not converge: spectral-radius estimate {rho:.6} too close to 1"
    )]
    SeriesNonConvergence { rho: f64 },

    #[error("ambiguous parity: eigenvalue {re}+{im}i has |Im| within a factor 10 of the clustering radius {radius:.3e}")]
    AmbiguousParity { re: f64, im: f64, radius: f64 },

    #[error("precondition violated: {msg}")]
    Precondition { msg: String },

    #[error("internal invariant violated: {msg}")]
    InternalInvariant { msg: String },

    #[error("defect is not almost-null: entry ({row},{col}) has nonzero tail {tail:.3e}")]
    NonNullDefect { row: usize, col: usize, tail: f64 },

    #[error("matrix-field model violation at point {point}: norm {norm:.3e}")]
    ModelViolation { point: String, norm: f64 },

    #[error("division by a vanishing function value at point {point}")]
    ZeroDivisor { point: String },

    #[error("matrix fields live on different spaces")]
    SpaceMismatch,

    #[error("amalgam constraint violated: tails {left} and {right} differ")]
    ConstraintViolated { left: f64, right: f64 },

    #[error("decomposition identity failed: residual {residual:.3e} at point {point}")]
    DecompositionIdentityFailed { residual: f64, point: String },
}

pub type Result<T> = std::result::Result<T, Error>;
