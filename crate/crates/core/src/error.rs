use thiserror::Error;

/// Errors raised by the planner math.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("point ({x}, {y}) lies outside the grid extent")]
    OutOfRange { x: f64, y: f64 },
    #[error("cell ({col}, {row}) lies outside the grid")]
    CellOutOfRange { col: usize, row: usize },
    #[error("resolution mismatch: {0} vs {1}")]
    ResolutionMismatch(f64, f64),
    #[error("occupancy grid footprint is not contained in (or not aligned with) the map")]
    NotContained,
    #[error("invalid uncertainty band [{lo}, {hi}]")]
    InvalidBand { lo: f64, hi: f64 },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("steering angle {0} rad is at or beyond the tan singularity")]
    SteeringSingularity(f64),
    #[error("time step must be positive, got {0}")]
    InvalidTimeStep(f64),
    #[error("vehicle position coincides with an obstacle center")]
    CoincidentObstacle,
    #[error("every sampled rollout has a non-finite cost")]
    NonFiniteCost,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("malformed grid dump: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
