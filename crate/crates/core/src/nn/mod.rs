//! Differentiable layers, the pre-activation bottleneck block and the
//! slice-classifier network.

pub mod block;
pub mod checkpoint;
pub mod layers;
pub mod model;
pub mod ops;

pub use block::{Bottleneck, Shortcut};
pub use checkpoint::Checkpoint;
pub use layers::{Param, Visitor};
pub use model::{LayerDesc, Model, ModelSpec, StageSpec, StemSpec};
pub use ops::{bce_loss, BatchNormConfig, Mode, PoolConfig};
