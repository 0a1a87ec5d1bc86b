//! Dense matrices, a reverse-mode tape, layers, and the Adam optimizer.

pub mod gradcheck;
mod layers;
mod matrix;
mod param;
mod tape;

pub use layers::{
    kaiming_uniform, BatchNorm, Dense, DenseNet, Dropout, NetSpec, ResidualBlock, TrainCtx, BN_EPS,
};
pub use matrix::Matrix;
pub use param::{adam_step, AdamConfig, Gradients, ParamEntry, ParamStore};
pub use tape::{Tape, Var};
