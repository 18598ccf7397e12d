//! Transformer-guided sampling-based motion planning.
//!
//! The crate is generic over the floating point type (see [`Real`]); the
//! aliases at the root fix it to `f64`, which is what the planners, the
//! training loop and the command-line tool use.

pub mod bench;
pub mod eise;
pub mod error;
pub mod metrics;
pub mod model;
pub mod mpt;
pub mod nn;
pub mod pipeline;
pub mod scalar;
pub mod sbmp;
pub mod temp;
pub mod world;

pub use error::{Error, Result};
pub use metrics::{MetricsRecord, TracePoint};
pub use scalar::Real;

pub type State64 = world::State<f64>;
pub type Workspace64 = world::Workspace<f64>;
pub type PlanningTask64 = world::PlanningTask<f64>;
pub type Path64 = sbmp::Path<f64>;
pub type PlanningTree64 = sbmp::PlanningTree<f64>;

pub type State32 = world::State<f32>;
pub type Workspace32 = world::Workspace<f32>;
pub type PlanningTask32 = world::PlanningTask<f32>;
