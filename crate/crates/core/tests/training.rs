//! Trainer integration: smoke, determinism, gradient routing, and the
//! NaN-abort path.

use poselift::data::{prepare, synthesize, SynthConfig};
use poselift::evaluation::EvalSet;
use poselift::models::{ModelConfig, Representation};
use poselift::skeleton::KeypointSchema;
use poselift::training::{train, TrainConfig};

fn tiny_config(rep: Representation, seed: u64) -> TrainConfig {
    let mut cfg = TrainConfig::desk_profile(rep, seed);
    cfg.epochs = 2;
    cfg.batch_size = 32;
    cfg.model = ModelConfig {
        width: 16,
        blocks: 2,
        feature_dim: 8,
        local_blocks: 1,
        combiner_blocks: 1,
        disc_width: 16,
        disc_blocks: 2,
        dropout: 0.1,
        bn_momentum: 0.1,
        lifter_head_init_scale: 0.01,
        disc_head_init_scale: 0.01,
    };
    cfg
}

fn small_dataset(n: usize, seed: u64) -> (Vec<poselift::Pose2D>, EvalSet) {
    let schema = KeypointSchema::default16();
    let records = synthesize(&SynthConfig::default_with(n, seed)).unwrap();
    let (ds, _) = prepare(&records, &schema).unwrap();
    let eval = EvalSet::from_dataset(&ds).unwrap();
    (ds.poses2d(), eval)
}

#[test]
fn two_epoch_smoke_run_finishes_with_finite_losses() {
    let schema = KeypointSchema::default16();
    let (poses, eval) = small_dataset(64, 3);
    for rep in Representation::ALL {
        let cfg = tiny_config(rep, 0);
        let artifacts = train(&poses, Some(&eval), &cfg, &schema, None).unwrap();
        assert_eq!(artifacts.record.epochs.len(), 2);
        for e in &artifacts.record.epochs {
            assert!(e.d_loss.is_finite());
            assert!(e.g_adv.is_finite());
            assert!(e.g_losses.values().all(|v| v.is_finite()));
            assert!(e.eval_mpjpe.unwrap().is_finite());
        }
    }
}

#[test]
fn identical_seeds_reproduce_identical_records() {
    let schema = KeypointSchema::default16();
    let (poses, eval) = small_dataset(64, 5);
    let cfg = tiny_config(Representation::IndLegTorso, 7);
    let a = train(&poses, Some(&eval), &cfg, &schema, None).unwrap();
    let b = train(&poses, Some(&eval), &cfg, &schema, None).unwrap();
    assert_eq!(a.record, b.record);
    // Bit-for-bit identical loss curves.
    for (ea, eb) in a.record.epochs.iter().zip(&b.record.epochs) {
        assert_eq!(ea.d_loss.to_bits(), eb.d_loss.to_bits());
        assert_eq!(ea.eval_mpjpe.unwrap().to_bits(), eb.eval_mpjpe.unwrap().to_bits());
    }
    // A different seed diverges.
    let mut other = cfg.clone();
    other.seed = 8;
    let c = train(&poses, Some(&eval), &other, &schema, None).unwrap();
    assert_ne!(a.record.epochs, c.record.epochs);
}

#[test]
fn run_artifacts_are_written_and_valid() {
    let schema = KeypointSchema::default16();
    let (poses, eval) = small_dataset(48, 9);
    let mut cfg = tiny_config(Representation::Full, 1);
    cfg.checkpoint_every = 1;
    let dir = tempfile::tempdir().unwrap();
    let artifacts = train(&poses, Some(&eval), &cfg, &schema, Some(dir.path())).unwrap();
    let record = poselift::training::RunRecord::load_jsonl(dir.path().join("run.jsonl")).unwrap();
    assert_eq!(record, artifacts.record);
    record.validate(Some(dir.path())).unwrap();
    assert!(artifacts.final_checkpoint.unwrap().exists());
    // Intermediate checkpoints for every epoch plus the final one.
    assert_eq!(record.checkpoints.len(), cfg.epochs + 1);
}

#[test]
fn leg_network_gradients_ignore_torso_errors() {
    // Masked-loss partition: backward of a torso-masked loss leaves every
    // leg-network gradient at exactly zero.
    use poselift::numerics::{Matrix, Tape};
    use poselift::skeleton::{PartitionKind, NUM_KEYPOINTS};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    let schema = KeypointSchema::default16();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut model = poselift::models::LifterModel::new(
        Representation::IndLegTorso,
        tiny_config(Representation::IndLegTorso, 0).model,
        &schema,
        &mut rng,
    )
    .unwrap();

    let b = 4;
    let mut x = Matrix::zeros(b, NUM_KEYPOINTS);
    let mut y = Matrix::zeros(b, NUM_KEYPOINTS);
    let mut data_rng = ChaCha8Rng::seed_from_u64(3);
    for r in 0..b {
        for k in 0..NUM_KEYPOINTS {
            x[(r, k)] = data_rng.gen_range(-1.0..1.0);
            y[(r, k)] = data_rng.gen_range(-1.0..1.0);
        }
    }
    let mut tape = Tape::new();
    let xv = tape.constant(x);
    let yv = tape.constant(y);
    let mut drop_rng = ChaCha8Rng::seed_from_u64(4);
    let z = model.lift_train(&mut tape, xv, yv, &mut drop_rng).unwrap();
    let torso_mask = &schema.segment(PartitionKind::LegTorso, "torso").unwrap().indices;
    let loss = poselift::training::masked_sse(&mut tape, z, torso_mask);
    let stores = model.stores();
    let grads = tape.backward(loss, &stores).unwrap();
    // Sub-net 0 is "legs" (layout order); every gradient entry must be zero.
    let legs_idx = model
        .subnets()
        .iter()
        .position(|s| s.def.name == "legs")
        .unwrap();
    assert_eq!(grads[legs_idx].max_abs(), 0.0);
    // And the torso store did receive gradient.
    let torso_idx = model
        .subnets()
        .iter()
        .position(|s| s.def.name == "torso")
        .unwrap();
    assert!(grads[torso_idx].max_abs() > 0.0);
}

#[test]
fn per_subnet_adversarial_weights_are_validated() {
    let schema = KeypointSchema::default16();
    let (poses, _) = small_dataset(32, 11);
    let mut cfg = tiny_config(Representation::IndLegTorso, 0);
    cfg.adversarial_subnet_weights = Some(vec![1.0]);
    // Two predictor units (legs, torso) but one weight.
    assert!(train(&poses, None, &cfg, &schema, None).is_err());

    cfg.adversarial_subnet_weights = Some(vec![0.5, 2.0]);
    let artifacts = train(&poses, None, &cfg, &schema, None).unwrap();
    assert_eq!(artifacts.record.epochs.len(), 2);
}

#[test]
fn zero_adversarial_weight_matches_detached_discriminator() {
    // Gradient routing: with w_adv = 0 the generator gradient is bitwise the
    // consistency-only gradient, as if the discriminator were detached.
    use poselift::numerics::{Matrix, Tape};
    use poselift::skeleton::NUM_KEYPOINTS;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    let schema = KeypointSchema::default16();
    let cfg = tiny_config(Representation::Full, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut model =
        poselift::models::LifterModel::new(Representation::Full, cfg.model.clone(), &schema, &mut rng).unwrap();
    let mut disc = poselift::models::Discriminator::new(&cfg.model, &mut rng);

    let b = 4;
    let mut x = Matrix::zeros(b, NUM_KEYPOINTS);
    let mut y = Matrix::zeros(b, NUM_KEYPOINTS);
    let mut data_rng = ChaCha8Rng::seed_from_u64(21);
    for r in 0..b {
        for k in 0..NUM_KEYPOINTS {
            x[(r, k)] = data_rng.gen_range(-1.0..1.0);
            y[(r, k)] = data_rng.gen_range(-1.0..1.0);
        }
    }
    let mut tape = Tape::new();
    let xv = tape.constant(x);
    let yv = tape.constant(y);
    let mut drop_rng = ChaCha8Rng::seed_from_u64(22);
    let z = model.lift_train(&mut tape, xv, yv, &mut drop_rng).unwrap();
    let consistency = poselift::training::masked_sse(&mut tape, z, &(0..NUM_KEYPOINTS).collect::<Vec<_>>());
    let xy = tape.concat_cols(&[xv, yv]);
    let n_subnets = model.subnets().len();
    let mut disc_rng = ChaCha8Rng::seed_from_u64(23);
    let score = disc.score_train(&mut tape, xy, n_subnets, &mut disc_rng).unwrap();
    let g_adv = poselift::training::lsgan_g_loss_tape(&mut tape, score);
    let weighted_adv = tape.scale(g_adv, 0.0);
    let total = tape.add(consistency, weighted_adv);

    let mut stores = model.stores();
    stores.push(&disc.params);
    let with_zero_adv = tape.backward(total, &stores).unwrap();
    let consistency_only = tape.backward(consistency, &stores).unwrap();
    for (a, b) in with_zero_adv[0].iter().zip(consistency_only[0].iter()) {
        assert_eq!(a.0, b.0);
        for (ga, gb) in a.1.as_slice().iter().zip(b.1.as_slice()) {
            assert_eq!(ga.to_bits(), gb.to_bits());
        }
    }
}
