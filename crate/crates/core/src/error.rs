use thiserror::Error;

/// Errors raised by the numerical operations of this crate.
///
/// Bound violations that are findings (flowbox bounds, domination margins)
/// are reported through report structs, not through this type.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum FlowError {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("orbit escaped the domain at t = {time}")]
    Escape { time: f64 },

    #[error("step size underflow at t = {time} (stiff or singular dynamics)")]
    Stiffness { time: f64 },

    #[error("singular point encountered at t = {time} (speed {speed:e})")]
    Singularity { time: f64, speed: f64 },

    #[error("argument outside the flowbox: {0}")]
    BoxBounds(String),

    #[error("point is not in the flowbox image: {0}")]
    NotInBox(String),

    #[error("normal vector of rescaled size {rescaled:e} exceeds the section radius {radius:e}")]
    Radius { rescaled: f64, radius: f64 },

    #[error("crossing construction failed at k = {k}: {reason}")]
    Crossing { k: i64, reason: String },

    #[error("no monotone lattice path avoids the singular samples")]
    NoPath,

    #[error("shadowing hypothesis violated: measured rescaled sup {measured:e} > delta {delta:e}")]
    Hypothesis { measured: f64, delta: f64 },

    #[error("no dominated splitting detected (singular value ratio {ratio:.6} < 1.05)")]
    NoDomination { ratio: f64 },

    #[error("flow direction not contained in F at node {node} (distance {distance:e})")]
    FlowDirection { node: usize, distance: f64 },

    #[error("projection of E into the normal space degenerates at node {node}")]
    DegenerateProjection { node: usize },

    #[error("tangential boundary crossing near t = {time}")]
    CrossingDetection { time: f64 },

    #[error("rebalancing infeasible at block {index}: {reason}")]
    RebalanceInfeasible { index: i64, reason: String },

    #[error("contraction constant {kappa} >= 1, no certificate")]
    NoCertificate { kappa: f64 },

    #[error("fixed-point iteration diverged at iteration {iteration}")]
    Divergence { iteration: usize },

    #[error("horizon error: {0}")]
    Horizon(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("invalid input: {0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, FlowError>;
