//! The adversarial training loop.
//!
//! Per batch: one generator graph computes the reprojection cycle and the
//! 90-degree constraint terms; the discriminator takes one least-squares
//! update on real poses versus the (detached) reprojected fakes, with label
//! flipping; then the generator graph is extended through the freshly updated
//! discriminator and every lifter sub-network takes an Adam step.
//!
//! A run is a single logical sequence driven entirely by named ChaCha
//! streams derived from the config seed, so identical configs reproduce
//! identical records bit for bit.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::evaluation::{evaluate_model, EvalSet};
use crate::geometry::sample_rotation;
use crate::models::{Discriminator, LifterModel};
use crate::numerics::{adam_step, AdamConfig, Matrix, Tape};
use crate::provenance::{config_hash_bytes, config_hash_hex};
use crate::skeleton::{KeypointSchema, Pose2D, NUM_KEYPOINTS};
use crate::training::losses::{
    lsgan_d_loss_tape, lsgan_g_loss_tape, masked_sse, masked_xy_sse, should_flip_labels,
};
use crate::training::{EpochRecord, RunRecord, TrainConfig};

/// Named RNG streams of one run; all derive from the config seed.
pub mod streams {
    pub const LIFTER_INIT: u64 = 1;
    pub const DISC_INIT: u64 = 2;
    pub const SHUFFLE: u64 = 3;
    pub const ROTATION: u64 = 4;
    pub const LIFTER_DROPOUT: u64 = 5;
    pub const DISC_DROPOUT: u64 = 6;
    pub const LABEL_FLIP: u64 = 7;
}

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Everything a finished run hands back.
pub struct TrainArtifacts {
    pub record: RunRecord,
    pub model: LifterModel,
    pub discriminator: Discriminator,
    pub final_checkpoint: Option<PathBuf>,
}

struct Rngs {
    shuffle: ChaCha8Rng,
    rotation: ChaCha8Rng,
    lifter_dropout: ChaCha8Rng,
    disc_dropout: ChaCha8Rng,
    label_flip: ChaCha8Rng,
}

/// Train a lifter adversarially on normalized poses.
///
/// When `out_dir` is given, the run record streams to `run.jsonl` and
/// checkpoints are written there; a non-finite loss aborts with the last
/// good checkpoint named in the error.
pub fn train(
    poses: &[Pose2D],
    eval: Option<&EvalSet>,
    cfg: &TrainConfig,
    schema: &KeypointSchema,
    out_dir: Option<&Path>,
) -> Result<TrainArtifacts> {
    cfg.validate()?;
    if poses.is_empty() {
        return Err(Error::Contract("training requires a non-empty dataset".into()));
    }
    if let Some(dir) = out_dir {
        std::fs::create_dir_all(dir)?;
    }
    let config_hash = config_hash_hex(cfg);
    let hash_bytes = config_hash_bytes(cfg);

    let mut model = LifterModel::new(
        cfg.representation,
        cfg.model.clone(),
        schema,
        &mut stream_rng(cfg.seed, streams::LIFTER_INIT),
    )?;
    let mut disc = Discriminator::new(&cfg.model, &mut stream_rng(cfg.seed, streams::DISC_INIT));
    let mut rngs = Rngs {
        shuffle: stream_rng(cfg.seed, streams::SHUFFLE),
        rotation: stream_rng(cfg.seed, streams::ROTATION),
        lifter_dropout: stream_rng(cfg.seed, streams::LIFTER_DROPOUT),
        disc_dropout: stream_rng(cfg.seed, streams::DISC_DROPOUT),
        label_flip: stream_rng(cfg.seed, streams::LABEL_FLIP),
    };
    let adam = AdamConfig::with_lr(cfg.learning_rate);
    let units = model.loss_masks();
    let adv_weights = adversarial_weights(cfg, units.len())?;
    let uniform_adv = adv_weights.windows(2).all(|w| w[0] == w[1]);

    let mut record = RunRecord {
        seed: cfg.seed,
        config_hash: config_hash.clone(),
        config: cfg.clone(),
        epochs: Vec::with_capacity(cfg.epochs),
        checkpoints: Vec::new(),
    };
    let mut last_checkpoint: Option<PathBuf> = None;

    let mut order: Vec<usize> = (0..poses.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rngs.shuffle);
        let mut d_loss_sum = 0.0;
        let mut g_adv_sum = 0.0;
        let mut unit_sums = vec![0.0f64; units.len()];
        let mut steps = 0usize;

        for chunk in order.chunks(cfg.batch_size) {
            // Batch statistics need at least two poses.
            if chunk.len() < 2 {
                continue;
            }
            let step = step_batch(
                &mut model,
                &mut disc,
                poses,
                chunk,
                cfg,
                &units,
                &adv_weights,
                uniform_adv,
                &adam,
                &mut rngs,
            )?;
            if !step.d_loss.is_finite() || !step.g_adv.is_finite() || step.unit_losses.iter().any(|v| !v.is_finite()) {
                if let Some(dir) = out_dir {
                    let _ = write_record(&record, dir);
                }
                return Err(Error::NanLoss {
                    epoch,
                    step: steps,
                    last_checkpoint: last_checkpoint.clone(),
                });
            }
            d_loss_sum += step.d_loss;
            g_adv_sum += step.g_adv;
            for (acc, v) in unit_sums.iter_mut().zip(&step.unit_losses) {
                *acc += v;
            }
            steps += 1;
        }
        if steps == 0 {
            return Err(Error::Contract(format!(
                "no viable batches: dataset of {} poses with batch_size {}",
                poses.len(),
                cfg.batch_size
            )));
        }

        let eval_mpjpe = match eval {
            Some(set) if epoch % cfg.eval_every == 0 => {
                Some(evaluate_model(&model, set, true)?.aggregate_mpjpe)
            }
            _ => None,
        };
        record.epochs.push(EpochRecord {
            epoch,
            d_loss: d_loss_sum / steps as f64,
            g_adv: g_adv_sum / steps as f64,
            g_losses: units
                .iter()
                .zip(&unit_sums)
                .map(|((name, _), sum)| (name.clone(), sum / steps as f64))
                .collect(),
            eval_mpjpe,
        });

        if let Some(dir) = out_dir {
            if cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0 {
                let name = format!("checkpoint_epoch{epoch:05}.bin");
                save_checkpoint(&model, &disc, cfg, epoch as u32, hash_bytes, &rngs, &dir.join(&name))?;
                record.checkpoints.push(name.clone());
                last_checkpoint = Some(dir.join(name));
            }
        }
    }

    let final_checkpoint = if let Some(dir) = out_dir {
        let name = "checkpoint.bin";
        save_checkpoint(
            &model,
            &disc,
            cfg,
            cfg.epochs as u32,
            hash_bytes,
            &rngs,
            &dir.join(name),
        )?;
        record.checkpoints.push(name.to_string());
        write_record(&record, dir)?;
        Some(dir.join(name))
    } else {
        None
    };

    Ok(TrainArtifacts {
        record,
        model,
        discriminator: disc,
        final_checkpoint,
    })
}

fn adversarial_weights(cfg: &TrainConfig, n_units: usize) -> Result<Vec<f64>> {
    match &cfg.adversarial_subnet_weights {
        None => Ok(vec![cfg.weights.adversarial; n_units]),
        Some(ws) => {
            if ws.len() != n_units {
                return Err(Error::Config(format!(
                    "adversarial_subnet_weights has {} entries but the representation has {n_units} predictor units",
                    ws.len()
                )));
            }
            Ok(ws.clone())
        }
    }
}

struct StepOutcome {
    d_loss: f64,
    g_adv: f64,
    /// Total loss per predictor unit.
    unit_losses: Vec<f64>,
}

#[allow(clippy::too_many_arguments)]
fn step_batch(
    model: &mut LifterModel,
    disc: &mut Discriminator,
    poses: &[Pose2D],
    chunk: &[usize],
    cfg: &TrainConfig,
    units: &[(String, Vec<usize>)],
    adv_weights: &[f64],
    uniform_adv: bool,
    adam: &AdamConfig,
    rngs: &mut Rngs,
) -> Result<StepOutcome> {
    let b = chunk.len();
    let mut x_data = Matrix::zeros(b, NUM_KEYPOINTS);
    let mut y_data = Matrix::zeros(b, NUM_KEYPOINTS);
    for (r, &idx) in chunk.iter().enumerate() {
        let p = &poses[idx];
        for k in 0..NUM_KEYPOINTS {
            x_data[(r, k)] = p.x(k);
            y_data[(r, k)] = p.y(k);
        }
    }
    // Fresh rotation per pose in the batch.
    let mut rots = Vec::with_capacity(b);
    let mut rots_inv = Vec::with_capacity(b);
    for _ in 0..b {
        let r = sample_rotation(&mut rngs.rotation);
        rots.push(*r.entries());
        rots_inv.push(*r.inverse().entries());
    }
    let rots = Arc::new(rots);
    let rots_inv = Arc::new(rots_inv);

    // Generator graph: cycle + 90-degree constraint forwards.
    let mut tape = Tape::new();
    let x = tape.constant(x_data.clone());
    let y = tape.constant(y_data.clone());
    let z_hat = model.lift_train(&mut tape, x, y, &mut rngs.lifter_dropout)?;
    let (x_rot, y_rot, _) = tape.rotate_rows(x, y, z_hat, Arc::clone(&rots));
    let (x_rot, y_rot) = if cfg.renormalize_reprojection {
        let schema = model.schema().clone();
        renormalize_blocks(&mut tape, x_rot, y_rot, &schema)
    } else {
        (x_rot, y_rot)
    };
    let z_tilde = model.lift_train(&mut tape, x_rot, y_rot, &mut rngs.lifter_dropout)?;
    let (x_back, y_back, _) = tape.rotate_rows(x_rot, y_rot, z_tilde, Arc::clone(&rots_inv));
    let dx = tape.sub(x_back, x);
    let dy = tape.sub(y_back, y);

    let z_of_zy = model.lift_train(&mut tape, z_hat, y, &mut rngs.lifter_dropout)?;
    let neg_z = tape.neg(z_hat);
    let z_of_negzy = model.lift_train(&mut tape, neg_z, y, &mut rngs.lifter_dropout)?;
    let neg_x = tape.neg(x);
    let z_of_negxy = model.lift_train(&mut tape, neg_x, y, &mut rngs.lifter_dropout)?;
    let term_cw = tape.add(z_of_zy, x);
    let term_ccw = tape.sub(z_of_negzy, x);
    let term_half = tape.add(z_hat, z_of_negxy);

    let mut unit_l2d = Vec::with_capacity(units.len());
    let mut unit_l90 = Vec::with_capacity(units.len());
    for (_, mask) in units {
        unit_l2d.push(masked_xy_sse(&mut tape, dx, dy, mask));
        let cw = masked_sse(&mut tape, term_cw, mask);
        let ccw = masked_sse(&mut tape, term_ccw, mask);
        let half = masked_sse(&mut tape, term_half, mask);
        let partial = tape.add(cw, ccw);
        unit_l90.push(tape.add(partial, half));
    }

    // Discriminator update on real poses vs detached fakes.
    let fake_x = tape.value(x_rot).clone();
    let fake_y = tape.value(y_rot).clone();
    let d_loss = {
        let mut d_tape = Tape::new();
        let real = d_tape.constant(Matrix::concat_cols(&[&x_data, &y_data]));
        let fake = d_tape.constant(Matrix::concat_cols(&[&fake_x, &fake_y]));
        let d_real = disc.score_train(&mut d_tape, real, 0, &mut rngs.disc_dropout)?;
        let d_fake = disc.score_train(&mut d_tape, fake, 0, &mut rngs.disc_dropout)?;
        let flipped = should_flip_labels(&mut rngs.label_flip, cfg.label_flip_prob);
        let loss = lsgan_d_loss_tape(&mut d_tape, d_real, d_fake, flipped);
        let value = d_tape.scalar(loss);
        if value.is_finite() {
            let grads = d_tape.backward(loss, &[&disc.params])?;
            adam_step(&mut disc.params, &grads[0], adam)?;
        }
        value
    };

    // Generator adversarial term through the updated discriminator.
    let n_subnets = model.subnets().len();
    let xy_fake = tape.concat_cols(&[x_rot, y_rot]);
    let d_fake_g = disc.score_train(&mut tape, xy_fake, n_subnets, &mut rngs.disc_dropout)?;
    let g_adv = lsgan_g_loss_tape(&mut tape, d_fake_g);
    let g_adv_value = tape.scalar(g_adv);

    let mut unit_losses = Vec::with_capacity(units.len());
    for i in 0..units.len() {
        let l2d = tape.scale(unit_l2d[i], cfg.weights.reprojection);
        let l90 = tape.scale(unit_l90[i], cfg.weights.ninety_degree);
        let adv = tape.scale(g_adv, adv_weights[i]);
        let sum = tape.add(l2d, l90);
        unit_losses.push(tape.add(sum, adv));
    }
    let unit_values: Vec<f64> = unit_losses.iter().map(|&v| tape.scalar(v)).collect();
    if unit_values.iter().any(|v| !v.is_finite()) || !g_adv_value.is_finite() {
        return Ok(StepOutcome {
            d_loss,
            g_adv: g_adv_value,
            unit_losses: unit_values,
        });
    }

    let subnet_grads = {
        let mut stores: Vec<&crate::numerics::ParamStore> = model.stores();
        stores.push(&disc.params);
        if uniform_adv || units.len() == 1 {
            // All units share the adversarial weight: one backward over the
            // sum. Masks partition the keypoints, so each sub-network still
            // only sees its own consistency error.
            let mut total = unit_losses[0];
            for &u in &unit_losses[1..] {
                total = tape.add(total, u);
            }
            // The shared adversarial term must enter the total exactly once.
            let overcount = adv_weights.iter().sum::<f64>() - adv_weights[0];
            let total = if units.len() > 1 && overcount != 0.0 {
                let correction = tape.scale(g_adv, -overcount);
                tape.add(total, correction)
            } else {
                total
            };
            let mut grads = tape.backward(total, &stores)?;
            grads.truncate(model.subnets().len());
            grads
        } else {
            // Per-unit adversarial weights: each independent sub-network
            // takes its gradient from its own total.
            let mut grads = Vec::with_capacity(units.len());
            for (i, &unit_loss) in unit_losses.iter().enumerate() {
                let all = tape.backward(unit_loss, &stores)?;
                grads.push(all.into_iter().nth(i).expect("sub-network store present"));
            }
            grads
        }
    };
    for (sub, grads) in model.subnets_mut().iter_mut().zip(&subnet_grads) {
        adam_step(&mut sub.params, grads, adam)?;
    }

    Ok(StepOutcome {
        d_loss,
        g_adv: g_adv_value,
        unit_losses: unit_values,
    })
}

/// Re-center reprojected poses on the hip midpoint and divide by the per-row
/// max-abs coordinate. Optional: rescaling breaks the direct comparison of
/// the recovered pose against the original, so it is off by default.
fn renormalize_blocks(
    tape: &mut Tape,
    x: crate::numerics::Var,
    y: crate::numerics::Var,
    schema: &KeypointSchema,
) -> (crate::numerics::Var, crate::numerics::Var) {
    let hips = [schema.left_hip(), schema.right_hip()];
    let center = |tape: &mut Tape, block: crate::numerics::Var| {
        let lh = tape.gather_cols(block, &hips[..1]);
        let rh = tape.gather_cols(block, &hips[1..]);
        let sum = tape.add(lh, rh);
        let mid = tape.scale(sum, 0.5);
        tape.sub_col(block, mid)
    };
    let xc = center(tape, x);
    let yc = center(tape, y);
    let scale = tape.row_max_abs(&[xc, yc]);
    let inv = tape.recip(scale);
    (tape.mul_col(xc, inv), tape.mul_col(yc, inv))
}

fn save_checkpoint(
    model: &LifterModel,
    disc: &Discriminator,
    cfg: &TrainConfig,
    epoch: u32,
    config_hash: [u8; 32],
    rngs: &Rngs,
    path: &Path,
) -> Result<()> {
    let rng_states = vec![
        ("shuffle", &rngs.shuffle),
        ("rotation", &rngs.rotation),
        ("lifter_dropout", &rngs.lifter_dropout),
        ("disc_dropout", &rngs.disc_dropout),
        ("label_flip", &rngs.label_flip),
    ];
    Checkpoint::capture(model, disc, cfg.seed, epoch, config_hash, &rng_states).save(path)
}

fn write_record(record: &RunRecord, dir: &Path) -> Result<()> {
    record.save_jsonl(dir.join("run.jsonl"))
}
