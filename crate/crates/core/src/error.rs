use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("line coefficients (a, b) are both zero")]
    DegenerateLine,
    #[error("circle radius must be strictly positive, got {0}")]
    NonPositiveRadius(f64),
    #[error("polytope is empty")]
    EmptySet,
    #[error("set must contain the origin")]
    OriginNotContained,
    #[error("matrix is not Schur stable (spectral radius {spectral_radius:.6})")]
    NotHurwitz { spectral_radius: f64 },
    #[error("mRPI iteration cap {cap} reached (alpha = {alpha:.3e}, bound = {bound:.3e})")]
    MrpiIterationCap { cap: usize, alpha: f64, bound: f64 },
    #[error("representation conversion not supported: {0}")]
    Unsupported(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("nominal velocity must be strictly positive, got {0}")]
    NonPositiveVelocity(f64),
    #[error("parameter `{name}` must be strictly positive, got {value}")]
    InvalidParam { name: &'static str, value: f64 },
    #[error("velocity range [{lo}, {hi}] is empty or not positive")]
    InvalidRange { lo: f64, hi: f64 },
    #[error("sampling time must be strictly positive, got {0}")]
    NonPositiveSampleTime(f64),
    #[error("augmentation requires a discrete model")]
    NotDiscrete,
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PathError {
    #[error("curvature profile is non-finite at s = {s}")]
    NonFiniteCurvature { s: f64 },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("point ({x:.3}, {y:.3}) lies {offset:.3} m from the centreline, outside the projection corridor")]
    Projection { x: f64, y: f64, offset: f64 },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConstraintError {
    #[error("boundary construction failed: {0}")]
    Boundary(String),
    #[error("collision constraint points coincide")]
    DegenerateCollisionLine,
    #[error("invalid safety envelope: {0}")]
    Envelope(String),
    #[error(transparent)]
    Path(#[from] PathError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QpError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("weight `{name}` is not positive semidefinite (min eigenvalue {min_eig:.3e})")]
    NotPsd { name: &'static str, min_eig: f64 },
    #[error("horizon must be at least {min}, got {got}")]
    Horizon { min: usize, got: usize },
    #[error("non-finite problem data in {0}")]
    NonFinite(&'static str),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MpcError {
    #[error("ancillary gain does not stabilise every vertex (spectral radii {radii:?})")]
    GainDesign { radii: Vec<f64> },
    #[error("Riccati iteration did not converge")]
    Riccati,
    #[error("tightened {0} set is empty: robust MPC cannot be posed")]
    EmptyTightenedSet(&'static str),
    #[error("QP infeasible even with softened constraints")]
    Infeasible,
    #[error("QP solver failed: {0}")]
    Solver(String),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Qp(#[from] QpError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlantError {
    #[error("plant state became non-finite at t = {t:.3} s")]
    Divergence { t: f64 },
    #[error("invalid plant parameter: {0}")]
    Param(String),
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Path(#[from] PathError),
    #[error(transparent)]
    Constraint(#[from] ConstraintError),
    #[error(transparent)]
    Qp(#[from] QpError),
    #[error(transparent)]
    Mpc(#[from] MpcError),
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error("invalid scenario: {0}")]
    Scenario(String),
    #[error("integration window [{t_in}, {t_fin}] is empty")]
    EmptyWindow { t_in: f64, t_fin: f64 },
}
