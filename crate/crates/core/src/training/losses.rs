//! Loss terms: reprojection consistency, the three 90-degree rotation
//! constraints, and the least-squares adversarial objectives.
//!
//! Each loss exists in two forms: a plain value form over single poses (the
//! documented contract, used by tests and tooling) and a tape form over
//! batched coordinate blocks (used by the trainer). Batched losses are
//! squared errors summed per pose and averaged over the batch, so a batch of
//! one reproduces the single-pose value exactly.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::DepthLifter;
use crate::numerics::{Matrix, Tape, Var};
use crate::skeleton::{Pose2D, NUM_KEYPOINTS};

/// Relative weights of the generator loss terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub adversarial: f64,
    pub reprojection: f64,
    pub ninety_degree: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            adversarial: 1.0,
            reprojection: 1.0,
            ninety_degree: 1.0,
        }
    }
}

impl LossWeights {
    pub fn new(adversarial: f64, reprojection: f64, ninety_degree: f64) -> Result<Self> {
        let w = LossWeights {
            adversarial,
            reprojection,
            ninety_degree,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("adversarial", self.adversarial),
            ("reprojection", self.reprojection),
            ("ninety_degree", self.ninety_degree),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!(
                    "loss weight {name} must be finite and non-negative, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Weighted sum of the three generator loss components.
pub fn total_generator_loss(adv: f64, l2d: f64, l90: f64, weights: &LossWeights) -> Result<f64> {
    weights.validate()?;
    if !(adv.is_finite() && l2d.is_finite() && l90.is_finite()) {
        return Err(Error::Contract("loss components must be finite".into()));
    }
    Ok(weights.adversarial * adv + weights.reprojection * l2d + weights.ninety_degree * l90)
}

/// Squared Frobenius norm of the masked difference between the original pose
/// and its round-tripped reprojection.
pub fn reprojection_loss(y: &Pose2D, y_back: &Pose2D, mask: &[usize]) -> Result<f64> {
    if mask.is_empty() {
        return Err(Error::Contract("reprojection loss requires a non-empty keypoint mask".into()));
    }
    let mut total = 0.0;
    for &k in mask {
        let dx = y.x(k) - y_back.x(k);
        let dy = y.y(k) - y_back.y(k);
        total += dx * dx + dy * dy;
    }
    Ok(total)
}

/// The three 90-degree consistency terms for one pose, masked to the
/// keypoints a given network predicts:
/// clockwise `||G(z,y)+x||^2`, anticlockwise `||G(-z,y)-x||^2`, and the
/// half turn `||G(x,y)+G(-x,y)||^2`, with `z` the depths the lifter produced
/// for this pose in the same step (so `G(x,y)` is `z` itself).
pub fn ninety_degree_terms(
    lifter: &mut dyn DepthLifter,
    pose: &Pose2D,
    depths: &[f64],
    mask: &[usize],
) -> Result<(f64, f64, f64)> {
    if mask.is_empty() {
        return Err(Error::Contract("90-degree loss requires a non-empty keypoint mask".into()));
    }
    if depths.len() != NUM_KEYPOINTS {
        return Err(Error::Dimension {
            op: "ninety_degree_terms",
            detail: format!("expected {NUM_KEYPOINTS} depths, got {}", depths.len()),
        });
    }
    let view = |first: &dyn Fn(usize) -> f64| -> Result<Pose2D> {
        let mut coords = Matrix::zeros(NUM_KEYPOINTS, 2);
        for k in 0..NUM_KEYPOINTS {
            coords[(k, 0)] = first(k);
            coords[(k, 1)] = pose.y(k);
        }
        Pose2D::from_parts(coords, pose.scale())
    };
    let g_zy = lifter.lift_depths(&view(&|k| depths[k])?)?;
    let g_negzy = lifter.lift_depths(&view(&|k| -depths[k])?)?;
    let g_negxy = lifter.lift_depths(&view(&|k| -pose.x(k))?)?;
    let (mut cw, mut ccw, mut half) = (0.0, 0.0, 0.0);
    for &k in mask {
        cw += (g_zy[k] + pose.x(k)).powi(2);
        ccw += (g_negzy[k] - pose.x(k)).powi(2);
        half += (depths[k] + g_negxy[k]).powi(2);
    }
    Ok((cw, ccw, half))
}

/// Sum of the three 90-degree constraint terms.
pub fn ninety_degree_loss(
    lifter: &mut dyn DepthLifter,
    pose: &Pose2D,
    depths: &[f64],
    mask: &[usize],
) -> Result<f64> {
    let (cw, ccw, half) = ninety_degree_terms(lifter, pose, depths, mask)?;
    Ok(cw + ccw + half)
}

/// Least-squares adversarial losses over score batches.
///
/// `flipped` swaps the real/fake targets of the discriminator objective
/// (label flipping); the generator objective is unaffected.
pub fn lsgan_losses(d_real: &[f64], d_fake: &[f64], flipped: bool) -> Result<(f64, f64)> {
    if d_real.is_empty() || d_fake.is_empty() {
        return Err(Error::Contract("adversarial loss requires non-empty batches".into()));
    }
    let (t_real, t_fake) = if flipped { (0.0, 1.0) } else { (1.0, 0.0) };
    let mean_sq = |xs: &[f64], t: f64| xs.iter().map(|v| (v - t) * (v - t)).sum::<f64>() / xs.len() as f64;
    let d_loss = 0.5 * mean_sq(d_real, t_real) + 0.5 * mean_sq(d_fake, t_fake);
    let g_loss = 0.5 * mean_sq(d_fake, 1.0);
    Ok((d_loss, g_loss))
}

/// One Bernoulli draw per discriminator update.
pub fn should_flip_labels(rng: &mut ChaCha8Rng, prob: f64) -> bool {
    rng.gen::<f64>() < prob
}

// --- tape forms over batched coordinate blocks ---

/// Per-pose squared error over masked keypoint columns of paired x/y
/// difference blocks, averaged over the batch.
pub fn masked_xy_sse(tape: &mut Tape, dx: Var, dy: Var, mask: &[usize]) -> Var {
    let batch = tape.value(dx).rows();
    let gx = tape.gather_cols(dx, mask);
    let gy = tape.gather_cols(dy, mask);
    let sx = tape.sum_squares(gx);
    let sy = tape.sum_squares(gy);
    let total = tape.add(sx, sy);
    tape.scale(total, 1.0 / batch as f64)
}

/// Per-pose squared error over masked keypoint columns of one block,
/// averaged over the batch.
pub fn masked_sse(tape: &mut Tape, d: Var, mask: &[usize]) -> Var {
    let batch = tape.value(d).rows();
    let g = tape.gather_cols(d, mask);
    let s = tape.sum_squares(g);
    tape.scale(s, 1.0 / batch as f64)
}

/// Discriminator least-squares loss on the tape.
pub fn lsgan_d_loss_tape(tape: &mut Tape, d_real: Var, d_fake: Var, flipped: bool) -> Var {
    let (t_real, t_fake) = if flipped { (0.0, 1.0) } else { (1.0, 0.0) };
    let r = tape.add_scalar(d_real, -t_real);
    let r2 = tape.mul(r, r);
    let mr = tape.mean(r2);
    let f = tape.add_scalar(d_fake, -t_fake);
    let f2 = tape.mul(f, f);
    let mf = tape.mean(f2);
    let sum = tape.add(mr, mf);
    tape.scale(sum, 0.5)
}

/// Generator least-squares loss on the tape.
pub fn lsgan_g_loss_tape(tape: &mut Tape, d_fake: Var) -> Var {
    let f = tape.add_scalar(d_fake, -1.0);
    let f2 = tape.mul(f, f);
    let m = tape.mean(f2);
    tape.scale(m, 0.5)
}
