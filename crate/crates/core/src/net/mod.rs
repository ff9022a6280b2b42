//! Toy-scale dual-stream network, its parameters and training loop.

pub mod config;
pub mod layers;
pub mod model;
pub mod params;
pub mod train;

pub use config::{FrdfMode, NetConfig};
pub use model::{frdf_refine, Outputs, Prediction, PrlNet, ShapeChain};
pub use params::{Bound, ParamStore};
pub use train::{rectangle_scene, train, Adam, AdamConfig, StepLosses, TrainLog, TrainSample, Trainer};
