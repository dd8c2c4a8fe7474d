use thiserror::Error;

/// Everything that can go wrong while assembling, decomposing, integrating or
/// running an experiment.  Solver non-convergence is *not* an error: it is
/// reported through [`crate::poincare::Certification`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("coefficient must be strictly positive: a({x:.6}) = {value:.6e}")]
    EllipticityViolation { x: f64, value: f64 },

    #[error("lambda_target {target:.12e} does not match any eigenvalue cluster (nearest {nearest:.12e}, relative distance {rel_dist:.3e}, tolerance {tol:.1e})")]
    ResonanceMismatch {
        target: f64,
        nearest: f64,
        rel_dist: f64,
        tol: f64,
    },

    #[error("eigenvalue index k = {k} out of range (1..={max})")]
    ClusterIndexOutOfRange { k: usize, max: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("backward semigroup requested at t = {t:.3e} for a state with X_+ component {plus_norm:.3e} (group extension exists only on X_0 + X_-)")]
    GroupExtensionViolation { t: f64, plus_norm: f64 },

    #[error("trajectory diverged at t = {t:.6}: |u|_alpha = {norm:.3e} exceeds guard {guard:.3e}")]
    Divergence { t: f64, norm: f64, guard: f64 },

    #[error("nonlinearity returned a non-finite value at t = {t:.6}, node {node}")]
    NonFiniteNonlinearity { t: f64, node: usize },

    #[error("degree undefined: |g| = {min_boundary:.3e} on the boundary is below the floor {floor:.1e}")]
    DegreeUndefined { min_boundary: f64, floor: f64 },

    #[error("winding resolution too coarse: angle jump {max_jump:.3} rad exceeds pi/2 between adjacent boundary samples")]
    WindingUnresolved { max_jump: f64 },

    #[error("degree computation supports kernel dimension 1 or 2, got {dim}")]
    KernelDimension { dim: usize },

    #[error("nonlinearity family {family:?} does not declare the asymptotics required by this check")]
    MissingAsymptotics { family: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
