//! Losses and the adversarial training loop.

mod config;
mod losses;
mod record;
mod trainer;

pub use config::TrainConfig;
pub use losses::{
    lsgan_d_loss_tape, lsgan_g_loss_tape, lsgan_losses, masked_sse, masked_xy_sse,
    ninety_degree_loss, ninety_degree_terms, reprojection_loss, should_flip_labels,
    total_generator_loss, LossWeights,
};
pub use record::{EpochRecord, RunRecord};
pub use trainer::{streams, train, TrainArtifacts};
