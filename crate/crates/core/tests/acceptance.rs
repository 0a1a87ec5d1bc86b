//! Acceptance suite: one test per release criterion, each printing a
//! PASS line (run with `--nocapture` to see them).
//!
//! Criterion 7 trains ten desk-profile runs and is the long pole (tens of
//! minutes); everything else finishes in seconds.

use poselift::data::{prepare, synthesize, SynthConfig};
use poselift::evaluation::{
    default_auc_grid, evaluate_model, mpjpe, pck3d_auc, per_joint_errors, rigid_align, EvalSet,
    PCK_THRESHOLD_MM,
};
use poselift::geometry::{
    consistency_cycle, project, rotate, sample_rotation, RotationMatrix,
};
use poselift::models::{
    full_baseline_count, resolve_layout, Discriminator, LifterModel, ModelConfig, Representation,
    BUDGET_TOLERANCE,
};
use poselift::numerics::{gradcheck, Matrix, ParamStore, Tape, TrainCtx};
use poselift::skeleton::{
    max_normalize, root_center, stack_poses, KeypointSchema, PartitionKind, Pose2D, Pose3D,
    NUM_KEYPOINTS,
};
use poselift::studies::{probe_correlations, stability_study};
use poselift::training::{
    lsgan_d_loss_tape, lsgan_g_loss_tape, lsgan_losses, masked_sse, masked_xy_sse,
    ninety_degree_terms, reprojection_loss, total_generator_loss, LossWeights, TrainConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::sync::Arc;

fn schema() -> KeypointSchema {
    KeypointSchema::default16()
}

fn tiny_model_config() -> ModelConfig {
    ModelConfig {
        width: 8,
        blocks: 2,
        feature_dim: 6,
        local_blocks: 1,
        combiner_blocks: 1,
        disc_width: 8,
        disc_blocks: 2,
        dropout: 0.1,
        bn_momentum: 0.1,
        lifter_head_init_scale: 1.0,
        disc_head_init_scale: 1.0,
    }
}

fn random_blocks(b: usize, seed: u64) -> (Matrix, Matrix) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut x = Matrix::zeros(b, NUM_KEYPOINTS);
    let mut y = Matrix::zeros(b, NUM_KEYPOINTS);
    for r in 0..b {
        for k in 0..NUM_KEYPOINTS {
            x[(r, k)] = rng.gen_range(-1.0..1.0);
            y[(r, k)] = rng.gen_range(-1.0..1.0);
        }
    }
    (x, y)
}

/// Criterion 1: reverse-mode gradients of every layer and every loss term
/// (reprojection cycle, the three 90-degree constraints, both adversarial
/// objectives, and their weighted sum) agree with central finite
/// differences to 1e-4 relative error.
#[test]
fn acceptance_1_gradient_correctness() {
    let started = std::time::Instant::now();
    let schema = schema();
    let cfg = tiny_model_config();
    let mut init_rng = ChaCha8Rng::seed_from_u64(1);
    let model = LifterModel::new(Representation::IndLegTorso, cfg.clone(), &schema, &mut init_rng).unwrap();
    let disc = Discriminator::new(&cfg, &mut init_rng);
    let (x_data, y_data) = random_blocks(4, 2);
    let mut rot_rng = ChaCha8Rng::seed_from_u64(3);
    let rots: Arc<Vec<[[f64; 3]; 3]>> = Arc::new(
        (0..4)
            .map(|_| *sample_rotation(&mut rot_rng).entries())
            .collect(),
    );
    let rots_inv: Arc<Vec<[[f64; 3]; 3]>> = Arc::new(
        rots.iter()
            .map(|m| {
                let mut t = [[0.0; 3]; 3];
                for i in 0..3 {
                    for j in 0..3 {
                        t[i][j] = m[j][i];
                    }
                }
                t
            })
            .collect(),
    );
    let weights = LossWeights::new(0.7, 1.3, 0.9).unwrap();

    // The full generator-step loss as a function of one (model, disc) pair.
    let build_loss = |model: &LifterModel, disc: &Discriminator| -> f64 {
        let mut model = model.clone();
        let mut disc = disc.clone();
        let mut tape = Tape::new();
        let x = tape.constant(x_data.clone());
        let y = tape.constant(y_data.clone());
        let mut drop_rng = ChaCha8Rng::seed_from_u64(40);
        let z_hat = model.lift_train(&mut tape, x, y, &mut drop_rng).unwrap();
        let (xr, yr, _) = tape.rotate_rows(x, y, z_hat, Arc::clone(&rots));
        let z_tilde = model.lift_train(&mut tape, xr, yr, &mut drop_rng).unwrap();
        let (xb, yb, _) = tape.rotate_rows(xr, yr, z_tilde, Arc::clone(&rots_inv));
        let dx = tape.sub(xb, x);
        let dy = tape.sub(yb, y);
        let z_of_zy = model.lift_train(&mut tape, z_hat, y, &mut drop_rng).unwrap();
        let neg_z = tape.neg(z_hat);
        let z_of_negzy = model.lift_train(&mut tape, neg_z, y, &mut drop_rng).unwrap();
        let neg_x = tape.neg(x);
        let z_of_negxy = model.lift_train(&mut tape, neg_x, y, &mut drop_rng).unwrap();
        let t_cw = tape.add(z_of_zy, x);
        let t_ccw = tape.sub(z_of_negzy, x);
        let t_half = tape.add(z_hat, z_of_negxy);
        let all: Vec<usize> = (0..NUM_KEYPOINTS).collect();
        let l2d = masked_xy_sse(&mut tape, dx, dy, &all);
        let cw = masked_sse(&mut tape, t_cw, &all);
        let ccw = masked_sse(&mut tape, t_ccw, &all);
        let half = masked_sse(&mut tape, t_half, &all);
        let l90a = tape.add(cw, ccw);
        let l90 = tape.add(l90a, half);
        let xy_fake = tape.concat_cols(&[xr, yr]);
        let n_subnets = model.subnets().len();
        let mut disc_rng = ChaCha8Rng::seed_from_u64(41);
        let score = disc.score_train(&mut tape, xy_fake, n_subnets, &mut disc_rng).unwrap();
        let g_adv = lsgan_g_loss_tape(&mut tape, score);
        let wl2d = tape.scale(l2d, weights.reprojection);
        let wl90 = tape.scale(l90, weights.ninety_degree);
        let wadv = tape.scale(g_adv, weights.adversarial);
        let part = tape.add(wl2d, wl90);
        let total = tape.add(part, wadv);
        tape.scalar(total)
    };

    // Analytic gradients for the same graph.
    let analytic = {
        let mut m = model.clone();
        let mut d = disc.clone();
        let mut tape = Tape::new();
        let x = tape.constant(x_data.clone());
        let y = tape.constant(y_data.clone());
        let mut drop_rng = ChaCha8Rng::seed_from_u64(40);
        let z_hat = m.lift_train(&mut tape, x, y, &mut drop_rng).unwrap();
        let (xr, yr, _) = tape.rotate_rows(x, y, z_hat, Arc::clone(&rots));
        let z_tilde = m.lift_train(&mut tape, xr, yr, &mut drop_rng).unwrap();
        let (xb, yb, _) = tape.rotate_rows(xr, yr, z_tilde, Arc::clone(&rots_inv));
        let dx = tape.sub(xb, x);
        let dy = tape.sub(yb, y);
        let z_of_zy = m.lift_train(&mut tape, z_hat, y, &mut drop_rng).unwrap();
        let neg_z = tape.neg(z_hat);
        let z_of_negzy = m.lift_train(&mut tape, neg_z, y, &mut drop_rng).unwrap();
        let neg_x = tape.neg(x);
        let z_of_negxy = m.lift_train(&mut tape, neg_x, y, &mut drop_rng).unwrap();
        let t_cw = tape.add(z_of_zy, x);
        let t_ccw = tape.sub(z_of_negzy, x);
        let t_half = tape.add(z_hat, z_of_negxy);
        let all: Vec<usize> = (0..NUM_KEYPOINTS).collect();
        let l2d = masked_xy_sse(&mut tape, dx, dy, &all);
        let cw = masked_sse(&mut tape, t_cw, &all);
        let ccw = masked_sse(&mut tape, t_ccw, &all);
        let half = masked_sse(&mut tape, t_half, &all);
        let l90a = tape.add(cw, ccw);
        let l90 = tape.add(l90a, half);
        let xy_fake = tape.concat_cols(&[xr, yr]);
        let n_subnets = m.subnets().len();
        let mut disc_rng = ChaCha8Rng::seed_from_u64(41);
        let score = d.score_train(&mut tape, xy_fake, n_subnets, &mut disc_rng).unwrap();
        let g_adv = lsgan_g_loss_tape(&mut tape, score);
        let wl2d = tape.scale(l2d, weights.reprojection);
        let wl90 = tape.scale(l90, weights.ninety_degree);
        let wadv = tape.scale(g_adv, weights.adversarial);
        let part = tape.add(wl2d, wl90);
        let total = tape.add(part, wadv);
        let mut stores: Vec<&ParamStore> = m.stores();
        stores.push(&d.params);
        tape.backward(total, &stores).unwrap()
    };

    // Finite differences, one store at a time with the rest fixed.
    let mut worst = 0.0_f64;
    for (idx, sub) in model.subnets().iter().enumerate() {
        let fd = gradcheck::fd_gradients(
            &sub.params,
            |perturbed| {
                let mut m = model.clone();
                m.subnets_mut()[idx].params = perturbed.clone();
                build_loss(&m, &disc)
            },
            1e-5,
        );
        worst = worst.max(gradcheck::max_rel_error(&analytic[idx], &fd, 1e-3));
    }
    let fd_disc = gradcheck::fd_gradients(
        &disc.params,
        |perturbed| {
            let mut d = disc.clone();
            d.params = perturbed.clone();
            build_loss(&model, &d)
        },
        1e-5,
    );
    worst = worst.max(gradcheck::max_rel_error(
        &analytic[model.subnets().len()],
        &fd_disc,
        1e-3,
    ));

    // Discriminator objective with label flipping, gradients w.r.t. D.
    let (x_fake, y_fake) = random_blocks(4, 50);
    let d_loss = |d: &Discriminator, flipped: bool| -> f64 {
        let mut d = d.clone();
        let mut tape = Tape::new();
        let real = tape.constant(Matrix::concat_cols(&[&x_data, &y_data]));
        let fake = tape.constant(Matrix::concat_cols(&[&x_fake, &y_fake]));
        let mut rng = ChaCha8Rng::seed_from_u64(60);
        let dr = d.score_train(&mut tape, real, 0, &mut rng).unwrap();
        let df = d.score_train(&mut tape, fake, 0, &mut rng).unwrap();
        let loss = lsgan_d_loss_tape(&mut tape, dr, df, flipped);
        tape.scalar(loss)
    };
    for flipped in [false, true] {
        let analytic_d = {
            let mut d = disc.clone();
            let mut tape = Tape::new();
            let real = tape.constant(Matrix::concat_cols(&[&x_data, &y_data]));
            let fake = tape.constant(Matrix::concat_cols(&[&x_fake, &y_fake]));
            let mut rng = ChaCha8Rng::seed_from_u64(60);
            let dr = d.score_train(&mut tape, real, 0, &mut rng).unwrap();
            let df = d.score_train(&mut tape, fake, 0, &mut rng).unwrap();
            let loss = lsgan_d_loss_tape(&mut tape, dr, df, flipped);
            tape.backward(loss, &[&disc.params]).unwrap().remove(0)
        };
        let fd = gradcheck::fd_gradients(
            &disc.params,
            |perturbed| {
                let mut d = disc.clone();
                d.params = perturbed.clone();
                d_loss(&d, flipped)
            },
            1e-5,
        );
        worst = worst.max(gradcheck::max_rel_error(&analytic_d, &fd, 1e-3));
    }

    assert!(worst < 1e-4, "max relative gradient error {worst}");
    assert!(started.elapsed().as_secs() < 60, "gradient checks exceeded one minute");
    println!("ACCEPTANCE 1 (gradient correctness): PASS (max rel err {worst:.2e})");
}

/// Criterion 2: sampled rotations are orthonormal proper rotations to 1e-9;
/// the quarter-turn identity `project(rotate90cw(x,y,z)) = (z,y)` holds to
/// floating-point equality on 10^4 random poses.
#[test]
fn acceptance_2_geometry_algebra() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..10_000 {
        let r = sample_rotation(&mut rng);
        assert!(r.is_valid(1e-9));
    }
    let quarter = RotationMatrix::quarter_turn_y_cw();
    for i in 0..10_000 {
        let mut coords = Matrix::zeros(NUM_KEYPOINTS, 3);
        for k in 0..NUM_KEYPOINTS {
            for c in 0..3 {
                coords[(k, c)] = rng.gen_range(-1.0..1.0);
            }
        }
        let pose = Pose3D::from_parts(coords.clone(), 1.0).unwrap();
        let proj = project(&rotate(&pose, &quarter).unwrap());
        for k in 0..NUM_KEYPOINTS {
            assert_eq!(proj.x(k), coords[(k, 2)], "pose {i} keypoint {k}");
            assert_eq!(proj.y(k), coords[(k, 1)], "pose {i} keypoint {k}");
        }
    }
    println!("ACCEPTANCE 2 (geometry algebra): PASS");
}

/// Criterion 3: a ground-truth-depth oracle closes the reprojection cycle to
/// 1e-10 on synthetic data, and the constructed 90-degree identities hold
/// exactly.
#[test]
fn acceptance_3_oracle_closure() {
    let schema = schema();
    let records = synthesize(&SynthConfig::default_with(64, 17)).unwrap();
    let (ds, _) = prepare(&records, &schema).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let all: Vec<usize> = (0..NUM_KEYPOINTS).collect();
    let mut worst_l2d = 0.0_f64;
    let mut worst_cycle = 0.0_f64;
    for p in &ds.poses {
        let depths = p.normalized_gt_depths(&schema).unwrap();
        let truth = Pose3D::assemble(&p.pose, &depths).unwrap();
        let rot = sample_rotation(&mut rng);
        let rotated = rotate(&truth, &rot).unwrap();
        let views = [truth, rotated];
        let mut call = 0usize;
        let mut oracle = |_q: &Pose2D| -> poselift::Result<Vec<f64>> {
            let d = views[call.min(1)].depths();
            call += 1;
            Ok(d)
        };
        let (_synth, back) = consistency_cycle(&p.pose, &mut oracle, &rot).unwrap();
        worst_l2d = worst_l2d.max(reprojection_loss(&p.pose, &back, &all).unwrap());
        worst_cycle = worst_cycle.max(back.coords().sub(p.pose.coords()).unwrap().max_abs());
    }
    assert!(worst_l2d < 1e-10, "oracle reprojection loss {worst_l2d}");
    assert!(worst_cycle < 1e-10, "cycle residual {worst_cycle}");

    // Constructed identities: G(a, y) = -a probed with depths equal to x
    // zeroes the clockwise and anticlockwise terms exactly.
    let pose = &ds.poses[0].pose;
    let mut neg = |q: &Pose2D| -> poselift::Result<Vec<f64>> {
        Ok((0..NUM_KEYPOINTS).map(|k| -q.x(k)).collect())
    };
    let depths: Vec<f64> = (0..NUM_KEYPOINTS).map(|k| pose.x(k)).collect();
    let (cw, ccw, _half) = ninety_degree_terms(&mut neg, pose, &depths, &all).unwrap();
    assert_eq!(cw, 0.0);
    assert_eq!(ccw, 0.0);
    println!("ACCEPTANCE 3 (oracle closure): PASS (max cycle residual {worst_cycle:.2e})");
}

/// Criterion 4: exact LSGAN values at D = 0.5 and Eq.-style linearity of the
/// weighted total in every weight.
#[test]
fn acceptance_4_loss_arithmetic() {
    let half = vec![0.5; 16];
    let (d, g) = lsgan_losses(&half, &half, false).unwrap();
    assert_eq!(d, 0.25);
    assert_eq!(g, 0.125);

    let (adv, l2d, l90) = (0.31, 0.57, 0.11);
    let base = total_generator_loss(adv, l2d, l90, &LossWeights::new(1.0, 1.0, 1.0).unwrap()).unwrap();
    for (i, component) in [adv, l2d, l90].into_iter().enumerate() {
        let mut w = [1.0, 1.0, 1.0];
        w[i] = 2.0;
        let doubled = total_generator_loss(adv, l2d, l90, &LossWeights::new(w[0], w[1], w[2]).unwrap()).unwrap();
        assert!(
            (doubled - base - component).abs() < 1e-15,
            "doubling weight {i} must add exactly its component"
        );
    }
    println!("ACCEPTANCE 4 (loss arithmetic): PASS");
}

/// Criterion 5: for the independent representations, cross-segment Jacobian
/// entries are exactly zero (bitwise-unchanged outputs under perturbation)
/// and the probe's cross-segment slices are identically zero.
#[test]
fn acceptance_5_structural_independence() {
    let schema = schema();
    for (rep, partition) in [
        (Representation::IndLegTorso, PartitionKind::LegTorso),
        (Representation::IndFiveLimbs, PartitionKind::FiveLimbs),
    ] {
        let model = LifterModel::new(
            rep,
            ModelConfig::desk(),
            &schema,
            &mut ChaCha8Rng::seed_from_u64(4),
        )
        .unwrap();
        let (x, y) = random_blocks(3, 5);
        let base = model.lift_batch(&x, &y).unwrap();
        for seg in schema.partition(partition) {
            // Perturb each keypoint of this segment; ordinates of all other
            // segments must be bitwise unchanged.
            for &k in &seg.indices {
                let mut xp = x.clone();
                xp[(1, k)] += 0.173;
                let mut yp = y.clone();
                yp[(2, k)] -= 0.081;
                let zx = model.lift_batch(&xp, &y).unwrap();
                let zy = model.lift_batch(&x, &yp).unwrap();
                for other in schema.partition(partition) {
                    if other.name == seg.name {
                        continue;
                    }
                    for &o in &other.indices {
                        for r in 0..3 {
                            assert_eq!(base[(r, o)].to_bits(), zx[(r, o)].to_bits());
                            assert_eq!(base[(r, o)].to_bits(), zy[(r, o)].to_bits());
                        }
                    }
                }
            }
        }

        // Probe slices across segments are identically zero.
        let records = synthesize(&SynthConfig::default_with(8, 6)).unwrap();
        let (ds, _) = prepare(&records, &schema).unwrap();
        let tensor = probe_correlations(&model, &ds.poses2d(), &[-50, 0, 80, 100]).unwrap();
        for seg in schema.partition(partition) {
            for other in schema.partition(partition) {
                if other.name == seg.name {
                    continue;
                }
                for &k in &seg.indices {
                    for si in 0..4 {
                        for &o in &other.indices {
                            assert_eq!(tensor.deviation(k, si, o), 0.0);
                        }
                    }
                }
            }
        }
    }
    println!("ACCEPTANCE 5 (structural independence): PASS");
}

/// Criterion 6: rigid alignment recovers transformed copies below 1e-8 and
/// the metrics agree with naive reference implementations to 1e-12.
#[test]
fn acceptance_6_evaluation_correctness() {
    let started = std::time::Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let cloud = |rng: &mut ChaCha8Rng| -> Matrix {
        Matrix::from_vec(
            NUM_KEYPOINTS,
            3,
            (0..NUM_KEYPOINTS * 3).map(|_| rng.gen_range(-400.0..400.0)).collect(),
        )
        .unwrap()
    };
    for _ in 0..200 {
        let gt = cloud(&mut rng);
        let rot = sample_rotation(&mut rng);
        let s: f64 = rng.gen_range(0.4..2.2);
        let mut pred = Matrix::zeros(NUM_KEYPOINTS, 3);
        for r in 0..NUM_KEYPOINTS {
            let p = rot.apply([gt[(r, 0)], gt[(r, 1)], gt[(r, 2)]]);
            pred[(r, 0)] = s * p[0] + 120.0;
            pred[(r, 1)] = s * p[1] - 45.0;
            pred[(r, 2)] = s * p[2] + 7.0;
        }
        let aligned = rigid_align(&pred, &gt, true).unwrap();
        let err = mpjpe(&aligned, &gt).unwrap();
        assert!(err < 1e-8, "post-alignment MPJPE {err}");
    }

    // Naive reference oracles for MPJPE / PCK3D / AUC.
    let a = cloud(&mut rng);
    let b = cloud(&mut rng);
    let mut reference_mpjpe = 0.0;
    for r in 0..NUM_KEYPOINTS {
        let mut sq = 0.0;
        for c in 0..3 {
            sq += (a[(r, c)] - b[(r, c)]).powi(2);
        }
        reference_mpjpe += sq.sqrt();
    }
    reference_mpjpe /= NUM_KEYPOINTS as f64;
    assert!((mpjpe(&a, &b).unwrap() - reference_mpjpe).abs() < 1e-12);

    let errors = per_joint_errors(&a, &b).unwrap();
    let grid = default_auc_grid();
    let (pck, auc) = pck3d_auc(&errors, PCK_THRESHOLD_MM, &grid).unwrap();
    let ref_pck = 100.0 * errors.iter().filter(|&&e| e <= PCK_THRESHOLD_MM).count() as f64 / errors.len() as f64;
    let mut ref_auc = 0.0;
    for &t in &grid {
        ref_auc += errors.iter().filter(|&&e| e <= t).count() as f64 / errors.len() as f64;
    }
    ref_auc /= grid.len() as f64;
    assert!((pck - ref_pck).abs() < 1e-12);
    assert!((auc - ref_auc).abs() < 1e-12);
    assert!(started.elapsed().as_secs() < 30);
    println!("ACCEPTANCE 6 (evaluation correctness): PASS");
}

/// Criterion 8: identical config and seed reproduce the run record and the
/// metric CSVs byte for byte.
#[test]
fn acceptance_8_determinism() {
    let schema = schema();
    let records = synthesize(&SynthConfig::default_with(96, 2)).unwrap();
    let (ds, _) = prepare(&records, &schema).unwrap();
    let eval = EvalSet::from_dataset(&ds).unwrap();
    let mut cfg = TrainConfig::desk_profile(Representation::IndLegTorso, 11);
    cfg.epochs = 3;
    cfg.batch_size = 48;
    cfg.model.width = 16;
    cfg.model.disc_width = 16;
    cfg.model.feature_dim = 8;

    let mut artifacts = Vec::new();
    for run in ["a", "b"] {
        let dir = tempfile::tempdir().unwrap();
        let out = poselift::training::train(&ds.poses2d(), Some(&eval), &cfg, &schema, Some(dir.path())).unwrap();
        let report = evaluate_model(&out.model, &eval, true).unwrap();
        artifacts.push((
            std::fs::read(dir.path().join("run.jsonl")).unwrap(),
            std::fs::read(dir.path().join("checkpoint.bin")).unwrap(),
            report.to_csv("fixed"),
            report.per_pose_csv("fixed"),
        ));
        let _ = run;
    }
    assert_eq!(artifacts[0].0, artifacts[1].0, "run records differ");
    assert_eq!(artifacts[0].1, artifacts[1].1, "checkpoints differ");
    assert_eq!(artifacts[0].2, artifacts[1].2, "metric CSVs differ");
    assert_eq!(artifacts[0].3, artifacts[1].3, "per-pose CSVs differ");
    println!("ACCEPTANCE 8 (determinism): PASS");
}

/// Criterion 9: all five representations stay within ±2% of the full-pose
/// baseline's trainable parameter count, at both the full-scale and the
/// desk-scale architecture.
#[test]
fn acceptance_9_parameter_budget() {
    let schema = schema();
    for cfg in [ModelConfig::default(), ModelConfig::desk()] {
        let target = full_baseline_count(&cfg) as f64;
        for rep in Representation::ALL {
            let layout = resolve_layout(rep, &cfg, &schema).unwrap();
            let total = layout.parameter_count() as f64;
            let rel = (total - target).abs() / target;
            assert!(
                rel <= BUDGET_TOLERANCE,
                "{} at width {}: {total} vs {target} ({:.2}%)",
                rep.id(),
                cfg.width,
                rel * 100.0
            );
        }
    }
    // Constructed models count the same scalars the layout promises.
    let cfg = ModelConfig::desk();
    for rep in Representation::ALL {
        let model = LifterModel::new(rep, cfg.clone(), &schema, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let layout = resolve_layout(rep, &cfg, &schema).unwrap();
        assert_eq!(model.parameter_count(), layout.parameter_count());
    }
    println!("ACCEPTANCE 9 (parameter budget): PASS");
}

/// Criterion 7: desk-scale learning trend on a fixed synthetic corpus
/// (2,000 training poses, 500 evaluation poses, seeds 0..=4, 200 epochs,
/// desk profile):
/// (a) all runs finish with finite losses;
/// (b) the independent leg/torso model beats the full-pose model on mean
///     final MPJPE;
/// (c) its cross-seed std over the last quarter of epochs is no larger;
/// and the independent model's final error improves on its first epoch by
/// at least the baseline factor 0.7.
#[test]
fn acceptance_7_desk_scale_learning_trend() {
    let schema = schema();
    let train_records = synthesize(&SynthConfig::default_with(2000, 0)).unwrap();
    let eval_records = synthesize(&SynthConfig::default_with(500, 1000)).unwrap();
    let (train_ds, _) = prepare(&train_records, &schema).unwrap();
    let (eval_ds, _) = prepare(&eval_records, &schema).unwrap();
    let eval = EvalSet::from_dataset(&eval_ds).unwrap();
    let poses = train_ds.poses2d();
    let seeds = [0u64, 1, 2, 3, 4];

    let mut summaries = Vec::new();
    for rep in [Representation::Full, Representation::IndLegTorso] {
        let cfg = TrainConfig::desk_profile(rep, 0);
        let summary = stability_study(&cfg, &seeds, &poses, &eval, (150, 200), &schema, None).unwrap();
        // (a) every run finished with finite losses (aborts are excluded and
        // would show up here).
        assert!(summary.excluded.is_empty(), "aborted runs: {:?}", summary.excluded);
        assert!(summary.outcomes.iter().all(|o| o.curve.iter().all(|v| v.is_finite())));
        summaries.push(summary);
    }
    let (full, ind) = (&summaries[0], &summaries[1]);

    // (b) direction of the accuracy claim.
    assert!(
        ind.final_epoch.mean < full.final_epoch.mean,
        "independent leg/torso mean final MPJPE {:.2} must beat full {:.2}",
        ind.final_epoch.mean,
        full.final_epoch.mean
    );

    // (c) direction of the stability claim: per-epoch cross-seed std
    // averaged over the last quarter of epochs.
    let cross_seed_std = |summary: &poselift::studies::StabilitySummary| -> f64 {
        let epochs = summary.outcomes[0].curve.len();
        let from = epochs * 3 / 4;
        let mut acc = 0.0;
        for e in from..epochs {
            let vals: Vec<f64> = summary.outcomes.iter().map(|o| o.curve[e]).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (vals.len() - 1) as f64;
            acc += var.sqrt();
        }
        acc / (epochs - from) as f64
    };
    let full_std = cross_seed_std(full);
    let ind_std = cross_seed_std(ind);
    assert!(
        ind_std <= full_std,
        "independent leg/torso cross-seed std {ind_std:.3} must not exceed full {full_std:.3}"
    );

    // Learning signal against the committed baseline factor.
    for outcome in &ind.outcomes {
        let first = outcome.curve[0];
        let last = *outcome.curve.last().unwrap();
        assert!(
            last <= 0.7 * first,
            "seed {}: final MPJPE {last:.2} vs epoch-1 {first:.2} misses the 0.7x baseline trend",
            outcome.seed
        );
    }

    println!(
        "ACCEPTANCE 7 (desk-scale learning trend): PASS (final MPJPE {:.2}±{:.2} ind-lt vs {:.2}±{:.2} full; last-quarter cross-seed std {:.2} vs {:.2})",
        ind.final_epoch.mean, ind.final_epoch.std, full.final_epoch.mean, full.final_epoch.std,
        ind_std, full_std
    );
}
