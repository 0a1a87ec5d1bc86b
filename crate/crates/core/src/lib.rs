//! Unsupervised adversarial 2D-to-3D human pose lifting.
//!
//! The crate trains small fully connected lifting networks that predict a
//! per-keypoint depth ordinate from a root-centered, max-normalized 2D pose.
//! Training is adversarial (least-squares GAN over reprojected 2D poses) and
//! self-supervised through a random-rotation reprojection cycle plus algebraic
//! 90-degree rotation constraints. Five wirings of the lifting networks over
//! keypoint segments are supported, from a single full-pose network to fully
//! independent per-limb networks with matched parameter budgets.
//!
//! Module map:
//! - [`numerics`]: dense matrices, a reverse-mode tape, layers, Adam.
//! - [`skeleton`]: keypoint schema, pose containers, normalization, segments.
//! - [`geometry`]: rotation sampling, orthographic projection, consistency cycle.
//! - [`models`]: the five lifter topologies and the 2D pose discriminator.
//! - [`training`]: losses and the adversarial training loop.
//! - [`evaluation`]: rigid alignment, MPJPE, PCK3D/AUC.
//! - [`studies`]: keypoint-correlation probe and multi-seed stability harness.
//! - [`data`]: dataset records, the synthetic pose generator, preparation.
//! - [`checkpoint`]: versioned binary snapshots of models and optimizer state.

pub mod checkpoint;
pub mod data;
pub mod error;
pub mod evaluation;
pub mod geometry;
pub mod models;
pub mod numerics;
pub mod provenance;
pub mod skeleton;
pub mod studies;
pub mod training;

pub use error::{Error, Result};
pub use geometry::RotationMatrix;
pub use models::{Discriminator, LifterModel, ModelConfig, Representation};
pub use numerics::{Gradients, Matrix, ParamStore, Tape};
pub use skeleton::{KeypointSchema, Pose2D, Pose3D};
pub use training::{LossWeights, RunRecord, TrainConfig};
