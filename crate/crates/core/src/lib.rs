//! Caputo-fractional SEIRD simulation and physics-informed parameter
//! identification.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod data;
pub mod error;
pub mod exec;
pub mod fracops;
pub mod fracsolver;
pub mod loss;
pub mod model;
pub mod net;
pub mod specfun;
pub mod trainer;

pub use error::{Error, ErrorKind, Result};
pub use exec::Execution;
pub use fracops::TimeGrid;
pub use fracsolver::{simulate, SolverConfig, Trajectory};
pub use loss::{LossBreakdown, LossWeights, ObservationSet};
pub use model::{EpidemicParams, ParamBounds, RawParams, SimplexState};
pub use net::Network;
pub use trainer::{fit, FitResult, TrainConfig};
