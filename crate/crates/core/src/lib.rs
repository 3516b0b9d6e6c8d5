//! Numerical laboratory for rescaled expansiveness and multisingular
//! hyperbolicity of flows on Euclidean boxes.

pub mod error;
pub mod expansiveness;
pub mod field;
pub mod flowbox;
pub mod hyperbolicity;
pub mod integrate;
pub mod linalg;
pub mod poincare;
pub mod reparam;
pub mod sequence;

pub use error::{FlowError, Result};
pub use field::{Domain, FieldKind, VectorFieldSpec};
pub use integrate::{flow, flow_point, OrbitSegment, Trajectory};
