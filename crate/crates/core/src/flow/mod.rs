//! Normalizing flows for per-burst transition densities.

pub mod checkpoint;
pub mod coupling;
pub mod dense;
pub mod model;
pub mod spline;
pub mod train;

pub use checkpoint::Checkpoint;
pub use coupling::{Coupling, CouplingTape, Orientation};
pub use dense::{DenseNet, Tape};
pub use model::{standard_normal_log_density, Architecture, FlowModel, Standardization};
pub use spline::{KnotGrad, RqSpline, RqSplineParams, SplineParametrization};
pub use train::{train_flow, EpochStats, Schedule, Selection, TrainConfig, TrainReport};
