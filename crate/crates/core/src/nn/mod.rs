//! Reverse-mode autodiff, MLPs with distribution heads, Adam and checkpoints.

pub mod checkpoint;
pub mod graph;
pub mod mlp;
pub mod optim;
pub mod train;

pub use checkpoint::Checkpoint;
pub use graph::{Graph, Var};
pub use mlp::{head_from_raw, head_vars, Activation, HeadKind, HeadOutput, HeadVars, Mlp, MlpConfig};
pub use optim::{adam_step, AdamConfig, AdamState};
pub use train::{train, TrainConfig};
