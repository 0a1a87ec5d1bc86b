//! The five lifter topologies and the 2D pose discriminator.
//!
//! Every representation is built from the same residual dense trunk; sub-net
//! widths are solved so all five representations land within ±2% of the
//! full-pose baseline's trainable parameter count, and no forward path is
//! deeper than [`MAX_BLOCKS`] residual blocks.

use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{DenseNet, Matrix, NetSpec, ParamStore, Tape, TrainCtx, Var};
use crate::skeleton::{KeypointSchema, PartitionKind, Pose2D, Pose3D, NUM_KEYPOINTS};

/// Hard cap on residual-block depth along any forward path.
pub const MAX_BLOCKS: usize = 6;

/// Relative parameter-budget tolerance against the full-pose baseline.
pub const BUDGET_TOLERANCE: f64 = 0.02;

/// How the 2D pose is presented to the lifting networks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Representation {
    /// One network sees the whole pose.
    #[serde(rename = "full")]
    Full,
    /// Leg and torso local nets emit features, a combiner predicts all depths.
    #[serde(rename = "sr-lt")]
    SrLegTorso,
    /// Fully independent leg and torso networks, no shared values.
    #[serde(rename = "ind-lt")]
    IndLegTorso,
    /// Five per-limb local nets plus a combiner.
    #[serde(rename = "sr-5")]
    SrFiveLimbs,
    /// Five fully independent per-limb networks.
    #[serde(rename = "ind-5")]
    IndFiveLimbs,
}

impl Representation {
    pub const ALL: [Representation; 5] = [
        Representation::Full,
        Representation::SrLegTorso,
        Representation::IndLegTorso,
        Representation::SrFiveLimbs,
        Representation::IndFiveLimbs,
    ];

    pub fn id(&self) -> &'static str {
        match self {
            Representation::Full => "full",
            Representation::SrLegTorso => "sr-lt",
            Representation::IndLegTorso => "ind-lt",
            Representation::SrFiveLimbs => "sr-5",
            Representation::IndFiveLimbs => "ind-5",
        }
    }

    pub fn from_id(id: &str) -> Result<Self> {
        Representation::ALL
            .into_iter()
            .find(|r| r.id() == id)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown representation '{id}' (expected one of full, sr-lt, ind-lt, sr-5, ind-5)"
                ))
            })
    }

    pub fn code(&self) -> u8 {
        match self {
            Representation::Full => 0,
            Representation::SrLegTorso => 1,
            Representation::IndLegTorso => 2,
            Representation::SrFiveLimbs => 3,
            Representation::IndFiveLimbs => 4,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        Representation::ALL
            .into_iter()
            .find(|r| r.code() == code)
            .ok_or_else(|| Error::Checkpoint(format!("unknown representation code {code}")))
    }

    pub fn partition(&self) -> Option<PartitionKind> {
        match self {
            Representation::Full => None,
            Representation::SrLegTorso | Representation::IndLegTorso => Some(PartitionKind::LegTorso),
            Representation::SrFiveLimbs | Representation::IndFiveLimbs => Some(PartitionKind::FiveLimbs),
        }
    }

    fn is_split_recombine(&self) -> bool {
        matches!(self, Representation::SrLegTorso | Representation::SrFiveLimbs)
    }

    fn is_independent(&self) -> bool {
        matches!(self, Representation::IndLegTorso | Representation::IndFiveLimbs)
    }
}

/// Architecture hyperparameters shared by all representations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Width of the full-pose baseline trunk; sub-net widths are solved
    /// against the baseline's parameter count.
    pub width: usize,
    /// Residual blocks per lifter trunk (full and independent variants).
    pub blocks: usize,
    /// Feature vector length emitted by split-recombine local nets.
    pub feature_dim: usize,
    /// Residual blocks in each split-recombine local net.
    pub local_blocks: usize,
    /// Residual blocks in the split-recombine combiner.
    pub combiner_blocks: usize,
    pub disc_width: usize,
    pub disc_blocks: usize,
    pub dropout: f64,
    pub bn_momentum: f64,
    /// Initial scale of lifter output heads. Starting depth predictions near
    /// zero lets the discriminator fix the depth sign before the (sign-blind)
    /// consistency terms dig in; at short schedules a Kaiming-sized head can
    /// lock individual sub-networks into mirrored solutions.
    #[serde(default = "default_head_scale")]
    pub lifter_head_init_scale: f64,
    /// Initial scale of the discriminator's scalar head. Scores that start
    /// near zero let the least-squares objective shape the decision boundary
    /// immediately instead of first shrinking the output scale.
    #[serde(default = "default_head_scale")]
    pub disc_head_init_scale: f64,
}

fn default_head_scale() -> f64 {
    1.0
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            width: 1024,
            blocks: 6,
            feature_dim: 256,
            local_blocks: 2,
            combiner_blocks: 2,
            disc_width: 1024,
            disc_blocks: 3,
            dropout: 0.1,
            bn_momentum: 0.1,
            lifter_head_init_scale: 1.0,
            disc_head_init_scale: 1.0,
        }
    }
}

impl ModelConfig {
    /// Scaled-down dimensions for laptop-sized experiments.
    pub fn desk() -> Self {
        ModelConfig {
            width: 64,
            blocks: 6,
            feature_dim: 32,
            local_blocks: 2,
            combiner_blocks: 2,
            disc_width: 64,
            disc_blocks: 3,
            dropout: 0.1,
            bn_momentum: 0.1,
            lifter_head_init_scale: 0.01,
            disc_head_init_scale: 0.01,
        }
    }
}

/// One sub-network of a lifter: which keypoints it reads, which depth
/// ordinates it predicts (empty for feature-emitting locals), and its trunk
/// shape.
#[derive(Debug, Clone, PartialEq)]
pub struct SubNetDef {
    pub name: String,
    /// Keypoint indices whose (x, y) appear in this net's input; empty for a
    /// combiner, which consumes the concatenated local features instead.
    pub input_keypoints: Vec<usize>,
    /// Keypoint indices whose depth this net predicts; empty for locals.
    pub output_keypoints: Vec<usize>,
    pub spec: NetSpec,
}

/// Resolved wiring for one representation.
#[derive(Debug, Clone, PartialEq)]
pub struct LifterLayout {
    pub representation: Representation,
    pub subnets: Vec<SubNetDef>,
}

impl LifterLayout {
    pub fn parameter_count(&self) -> usize {
        self.subnets.iter().map(|s| s.spec.parameter_count()).sum()
    }
}

fn all_keypoints() -> Vec<usize> {
    (0..NUM_KEYPOINTS).collect()
}

/// Trainable scalars of the full-pose baseline for `cfg`.
pub fn full_baseline_count(cfg: &ModelConfig) -> usize {
    NetSpec {
        input_dim: 2 * NUM_KEYPOINTS,
        width: cfg.width,
        blocks: cfg.blocks,
        output_dim: NUM_KEYPOINTS,
        dropout: cfg.dropout,
        bn_momentum: cfg.bn_momentum,
        head_init_scale: cfg.lifter_head_init_scale,
    }
    .parameter_count()
}

/// Find the shared sub-net width whose total parameter count comes closest
/// to the full baseline. Counts grow monotonically in the width.
fn solve_shared_width(target: usize, max_width: usize, count_at: impl Fn(usize) -> usize) -> usize {
    let (mut lo, mut hi) = (1usize, max_width);
    while lo < hi {
        let mid = (lo + hi) / 2;
        if count_at(mid) < target {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    let above = lo;
    let below = lo.saturating_sub(1).max(1);
    let d_above = count_at(above).abs_diff(target);
    let d_below = count_at(below).abs_diff(target);
    if d_below <= d_above {
        below
    } else {
        above
    }
}

/// Refine per-sub-net widths toward the target count. A single shared width
/// quantizes too coarsely at small scales, so a window of per-net offsets
/// around the shared solution is searched exhaustively. Among candidates
/// inside the budget tolerance the most balanced one wins (smallest width
/// spread, then smallest count error); otherwise the closest count wins.
fn refine_widths(target: usize, widths: &mut [usize], count_with: &dyn Fn(&[usize]) -> usize) {
    const WINDOW: isize = 4;
    let n = widths.len();
    let base = widths.to_vec();
    let tolerance = (target as f64 * BUDGET_TOLERANCE) as usize;
    let mut best = base.clone();
    // (out-of-tolerance excess, width spread, count error)
    let mut best_key = (usize::MAX, usize::MAX, usize::MAX);
    let mut offsets = vec![-WINDOW; n];
    loop {
        let candidate: Vec<usize> = base
            .iter()
            .zip(&offsets)
            .map(|(&w, &d)| ((w as isize + d).max(1)) as usize)
            .collect();
        let diff = count_with(&candidate).abs_diff(target);
        let spread = candidate.iter().max().unwrap() - candidate.iter().min().unwrap();
        let key = (diff.saturating_sub(tolerance), spread, diff);
        if key < best_key {
            best_key = key;
            best = candidate;
        }
        // Advance the offset odometer.
        let mut i = 0;
        loop {
            if i == n {
                widths.copy_from_slice(&best);
                return;
            }
            offsets[i] += 1;
            if offsets[i] <= WINDOW {
                break;
            }
            offsets[i] = -WINDOW;
            i += 1;
        }
    }
}

/// Resolve sub-net widths and wiring for a representation.
///
/// Fails if any path exceeds [`MAX_BLOCKS`] or if the solved layout cannot
/// meet the ±2% budget against the full baseline.
pub fn resolve_layout(
    representation: Representation,
    cfg: &ModelConfig,
    schema: &KeypointSchema,
) -> Result<LifterLayout> {
    if cfg.blocks > MAX_BLOCKS {
        return Err(Error::Config(format!(
            "lifter depth {} exceeds the {MAX_BLOCKS}-block cap",
            cfg.blocks
        )));
    }
    if representation.is_split_recombine() && cfg.local_blocks + cfg.combiner_blocks > MAX_BLOCKS {
        return Err(Error::Config(format!(
            "split-recombine path depth {} exceeds the {MAX_BLOCKS}-block cap",
            cfg.local_blocks + cfg.combiner_blocks
        )));
    }
    let target = full_baseline_count(cfg);
    let spec = |input_dim: usize, width: usize, blocks: usize, output_dim: usize| NetSpec {
        input_dim,
        width,
        blocks,
        output_dim,
        dropout: cfg.dropout,
        bn_momentum: cfg.bn_momentum,
        head_init_scale: cfg.lifter_head_init_scale,
    };

    let subnets = match representation {
        Representation::Full => vec![SubNetDef {
            name: "full".into(),
            input_keypoints: all_keypoints(),
            output_keypoints: all_keypoints(),
            spec: spec(2 * NUM_KEYPOINTS, cfg.width, cfg.blocks, NUM_KEYPOINTS),
        }],
        Representation::IndLegTorso | Representation::IndFiveLimbs => {
            let partition = representation.partition().expect("independent reps have a partition");
            let segments = schema.partition(partition);
            let count_with = |ws: &[usize]| -> usize {
                segments
                    .iter()
                    .zip(ws)
                    .map(|(seg, &w)| {
                        spec(2 * seg.indices.len(), w, cfg.blocks, seg.indices.len()).parameter_count()
                    })
                    .sum()
            };
            // Shared-budget starting point: width / sqrt(k), since block
            // parameters scale with the squared width.
            let shared = solve_shared_width(target, 4 * cfg.width, |w| {
                count_with(&vec![w; segments.len()])
            });
            let mut widths = vec![shared; segments.len()];
            refine_widths(target, &mut widths, &count_with);
            segments
                .iter()
                .zip(&widths)
                .map(|(seg, &w)| SubNetDef {
                    name: seg.name.clone(),
                    input_keypoints: seg.indices.clone(),
                    output_keypoints: seg.indices.clone(),
                    spec: spec(2 * seg.indices.len(), w, cfg.blocks, seg.indices.len()),
                })
                .collect()
        }
        Representation::SrLegTorso | Representation::SrFiveLimbs => {
            let partition = representation.partition().expect("split-recombine reps have a partition");
            let segments = schema.partition(partition);
            let combined_features = cfg.feature_dim * segments.len();
            // Last width belongs to the combiner.
            let count_with = |ws: &[usize]| -> usize {
                let locals: usize = segments
                    .iter()
                    .zip(ws)
                    .map(|(seg, &w)| {
                        spec(2 * seg.indices.len(), w, cfg.local_blocks, cfg.feature_dim).parameter_count()
                    })
                    .sum();
                locals
                    + spec(
                        combined_features,
                        ws[segments.len()],
                        cfg.combiner_blocks,
                        NUM_KEYPOINTS,
                    )
                    .parameter_count()
            };
            let shared = solve_shared_width(target, 4 * cfg.width, |w| {
                count_with(&vec![w; segments.len() + 1])
            });
            let mut widths = vec![shared; segments.len() + 1];
            refine_widths(target, &mut widths, &count_with);
            let mut subnets: Vec<SubNetDef> = segments
                .iter()
                .zip(&widths)
                .map(|(seg, &w)| SubNetDef {
                    name: seg.name.clone(),
                    input_keypoints: seg.indices.clone(),
                    output_keypoints: vec![],
                    spec: spec(2 * seg.indices.len(), w, cfg.local_blocks, cfg.feature_dim),
                })
                .collect();
            subnets.push(SubNetDef {
                name: "combiner".into(),
                input_keypoints: vec![],
                output_keypoints: all_keypoints(),
                spec: spec(
                    combined_features,
                    widths[segments.len()],
                    cfg.combiner_blocks,
                    NUM_KEYPOINTS,
                ),
            });
            subnets
        }
    };

    let layout = LifterLayout {
        representation,
        subnets,
    };
    let total = layout.parameter_count();
    let rel = (total as f64 - target as f64).abs() / target as f64;
    if rel > BUDGET_TOLERANCE {
        return Err(Error::Config(format!(
            "{} layout misses the parameter budget: {total} vs baseline {target} ({:.2}%)",
            representation.id(),
            rel * 100.0
        )));
    }
    Ok(layout)
}

/// One sub-network with its own parameters.
#[derive(Debug, Clone)]
pub struct SubNet {
    pub def: SubNetDef,
    pub net: DenseNet,
    pub params: ParamStore,
}

/// A lifting model: one of the five representation topologies.
#[derive(Debug, Clone)]
pub struct LifterModel {
    representation: Representation,
    config: ModelConfig,
    schema: KeypointSchema,
    subnets: Vec<SubNet>,
}

impl LifterModel {
    pub fn new(
        representation: Representation,
        config: ModelConfig,
        schema: &KeypointSchema,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let layout = resolve_layout(representation, &config, schema)?;
        let subnets = layout
            .subnets
            .into_iter()
            .map(|def| {
                let net = DenseNet::new(def.spec);
                let mut params = ParamStore::new();
                net.init(&mut params, rng);
                SubNet { def, net, params }
            })
            .collect();
        Ok(LifterModel {
            representation,
            config,
            schema: schema.clone(),
            subnets,
        })
    }

    /// Rebuild a model from restored parameter stores (checkpoint path).
    /// Stores must arrive in layout order with matching shapes.
    pub fn from_stores(
        representation: Representation,
        config: ModelConfig,
        schema: &KeypointSchema,
        stores: Vec<ParamStore>,
    ) -> Result<Self> {
        let layout = resolve_layout(representation, &config, schema)?;
        if stores.len() != layout.subnets.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} parameter stores, got {}",
                layout.subnets.len(),
                stores.len()
            )));
        }
        let subnets = layout
            .subnets
            .into_iter()
            .zip(stores)
            .map(|(def, params)| {
                let net = DenseNet::new(def.spec);
                let mut reference = ParamStore::new();
                net.init(&mut reference, &mut ChaCha8Rng::seed_from_u64(0));
                for (name, entry) in reference.iter() {
                    match params.entry(name) {
                        Some(e) if e.value.shape() == entry.value.shape() => {}
                        Some(e) => {
                            return Err(Error::Checkpoint(format!(
                                "parameter '{name}' of '{}' has shape {:?}, expected {:?}",
                                def.name,
                                e.value.shape(),
                                entry.value.shape()
                            )))
                        }
                        None => {
                            return Err(Error::Checkpoint(format!(
                                "store for '{}' is missing parameter '{name}'",
                                def.name
                            )))
                        }
                    }
                }
                Ok(SubNet { def, net, params })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(LifterModel {
            representation,
            config,
            schema: schema.clone(),
            subnets,
        })
    }

    pub fn representation(&self) -> Representation {
        self.representation
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn schema(&self) -> &KeypointSchema {
        &self.schema
    }

    pub fn subnets(&self) -> &[SubNet] {
        &self.subnets
    }

    pub fn subnets_mut(&mut self) -> &mut [SubNet] {
        &mut self.subnets
    }

    pub fn parameter_count(&self) -> usize {
        self.subnets.iter().map(|s| s.params.parameter_count()).sum()
    }

    /// Read-only parameter stores in sub-net order; the store index used on a
    /// tape is the position in this list.
    pub fn stores(&self) -> Vec<&ParamStore> {
        self.subnets.iter().map(|s| &s.params).collect()
    }

    /// Per predictor-unit masks for loss routing: for independent
    /// representations each sub-network owns the keypoints it predicts; the
    /// full and split-recombine variants act as a single predictor over the
    /// whole pose.
    pub fn loss_masks(&self) -> Vec<(String, Vec<usize>)> {
        if self.representation.is_independent() {
            self.subnets
                .iter()
                .map(|s| (s.def.name.clone(), s.def.output_keypoints.clone()))
                .collect()
        } else {
            vec![(self.representation.id().to_string(), all_keypoints())]
        }
    }

    /// Inference-mode lift of a batch given as per-coordinate blocks (BxN
    /// each). Returns the BxN depth ordinates in schema order.
    pub fn lift_batch(&self, x: &Matrix, y: &Matrix) -> Result<Matrix> {
        if x.cols() != NUM_KEYPOINTS || y.cols() != NUM_KEYPOINTS || x.rows() != y.rows() {
            return Err(Error::Dimension {
                op: "lift_batch",
                detail: format!("x {:?} y {:?}", x.shape(), y.shape()),
            });
        }
        let b = x.rows();
        let mut out = Matrix::zeros(b, NUM_KEYPOINTS);
        if self.representation.is_split_recombine() {
            let mut features = Vec::new();
            for sub in self.subnets.iter().filter(|s| !s.def.input_keypoints.is_empty()) {
                let xi = x.gather_cols(&sub.def.input_keypoints);
                let yi = y.gather_cols(&sub.def.input_keypoints);
                features.push(sub.net.infer(&Matrix::concat_cols(&[&xi, &yi]), &sub.params));
            }
            let combiner = self
                .subnets
                .iter()
                .find(|s| s.def.input_keypoints.is_empty())
                .expect("split-recombine layout has a combiner");
            let refs: Vec<&Matrix> = features.iter().collect();
            out = combiner.net.infer(&Matrix::concat_cols(&refs), &combiner.params);
        } else {
            for sub in &self.subnets {
                let xi = x.gather_cols(&sub.def.input_keypoints);
                let yi = y.gather_cols(&sub.def.input_keypoints);
                let zi = sub.net.infer(&Matrix::concat_cols(&[&xi, &yi]), &sub.params);
                for r in 0..b {
                    for (j, &k) in sub.def.output_keypoints.iter().enumerate() {
                        out[(r, k)] = zi[(r, j)];
                    }
                }
            }
        }
        Ok(out)
    }

    /// Inference-mode lift of one pose.
    pub fn lift(&self, pose: &Pose2D) -> Result<Vec<f64>> {
        let mut x = Matrix::zeros(1, NUM_KEYPOINTS);
        let mut y = Matrix::zeros(1, NUM_KEYPOINTS);
        for k in 0..NUM_KEYPOINTS {
            x[(0, k)] = pose.x(k);
            y[(0, k)] = pose.y(k);
        }
        let z = self.lift_batch(&x, &y)?;
        Ok(z.row(0).to_vec())
    }

    /// Training-mode lift on a tape. `x` and `y` are BxN coordinate-block
    /// vars; the result is the BxN depth var in schema order. Sub-net `i`
    /// binds its parameters under store index `i`.
    pub fn lift_train(&mut self, tape: &mut Tape, x: Var, y: Var, rng: &mut ChaCha8Rng) -> Result<Var> {
        if self.representation.is_split_recombine() {
            let mut features = Vec::new();
            let mut combiner_idx = None;
            for i in 0..self.subnets.len() {
                if self.subnets[i].def.input_keypoints.is_empty() {
                    combiner_idx = Some(i);
                    continue;
                }
                let sub = &mut self.subnets[i];
                let xi = tape.gather_cols(x, &sub.def.input_keypoints);
                let yi = tape.gather_cols(y, &sub.def.input_keypoints);
                let xy = tape.concat_cols(&[xi, yi]);
                let mut ctx = TrainCtx {
                    store_idx: i,
                    store: &mut sub.params,
                    rng,
                };
                features.push(sub.net.forward_train(tape, xy, &mut ctx)?);
            }
            let i = combiner_idx.expect("split-recombine layout has a combiner");
            let sub = &mut self.subnets[i];
            let cat = tape.concat_cols(&features);
            let mut ctx = TrainCtx {
                store_idx: i,
                store: &mut sub.params,
                rng,
            };
            sub.net.forward_train(tape, cat, &mut ctx)
        } else {
            let mut scattered = Vec::new();
            for i in 0..self.subnets.len() {
                let sub = &mut self.subnets[i];
                let xi = tape.gather_cols(x, &sub.def.input_keypoints);
                let yi = tape.gather_cols(y, &sub.def.input_keypoints);
                let xy = tape.concat_cols(&[xi, yi]);
                let mut ctx = TrainCtx {
                    store_idx: i,
                    store: &mut sub.params,
                    rng,
                };
                let zi = sub.net.forward_train(tape, xy, &mut ctx)?;
                scattered.push(tape.scatter_cols(zi, &sub.def.output_keypoints, NUM_KEYPOINTS));
            }
            let mut acc = scattered[0];
            for &s in &scattered[1..] {
                acc = tape.add(acc, s);
            }
            Ok(acc)
        }
    }
}

/// `[x | y | z_hat]` in normalized units; the scale carries over.
pub fn assemble3d(pose: &Pose2D, depths: &[f64]) -> Result<Pose3D> {
    Pose3D::assemble(pose, depths)
}

/// Whole-pose 2D plausibility scorer: residual trunk ending in a linear head.
#[derive(Debug, Clone)]
pub struct Discriminator {
    pub net: DenseNet,
    pub params: ParamStore,
}

impl Discriminator {
    fn spec(cfg: &ModelConfig) -> NetSpec {
        NetSpec {
            input_dim: 2 * NUM_KEYPOINTS,
            width: cfg.disc_width,
            blocks: cfg.disc_blocks,
            output_dim: 1,
            dropout: cfg.dropout,
            bn_momentum: cfg.bn_momentum,
            head_init_scale: cfg.disc_head_init_scale,
        }
    }

    pub fn new(cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Self {
        let net = DenseNet::new(Self::spec(cfg));
        let mut params = ParamStore::new();
        net.init(&mut params, rng);
        Discriminator { net, params }
    }

    /// Rebuild from a restored store (checkpoint path).
    pub fn from_store(cfg: &ModelConfig, params: ParamStore) -> Result<Self> {
        let net = DenseNet::new(Self::spec(cfg));
        let mut reference = ParamStore::new();
        net.init(&mut reference, &mut ChaCha8Rng::seed_from_u64(0));
        for (name, entry) in reference.iter() {
            match params.entry(name) {
                Some(e) if e.value.shape() == entry.value.shape() => {}
                _ => {
                    return Err(Error::Checkpoint(format!(
                        "discriminator store is missing or mis-shapes parameter '{name}'"
                    )))
                }
            }
        }
        Ok(Discriminator { net, params })
    }

    /// Scores for a batch of flattened `[x-block | y-block]` poses. A partial
    /// pose (wrong input width) is rejected.
    pub fn score_batch(&self, xy: &Matrix) -> Result<Matrix> {
        if xy.cols() != 2 * NUM_KEYPOINTS {
            return Err(Error::Dimension {
                op: "score_batch",
                detail: format!(
                    "discriminator sees full poses only: expected {} columns, got {}",
                    2 * NUM_KEYPOINTS,
                    xy.cols()
                ),
            });
        }
        Ok(self.net.infer(xy, &self.params))
    }

    /// Plausibility score of a single full pose (unbounded real; the
    /// least-squares objective needs no squashing).
    pub fn discriminate(&self, pose: &Pose2D) -> f64 {
        let mut xy = Matrix::zeros(1, 2 * NUM_KEYPOINTS);
        for k in 0..NUM_KEYPOINTS {
            xy[(0, k)] = pose.x(k);
            xy[(0, NUM_KEYPOINTS + k)] = pose.y(k);
        }
        self.score_batch(&xy).expect("full pose")[(0, 0)]
    }

    pub fn score_train(
        &mut self,
        tape: &mut Tape,
        xy: Var,
        store_idx: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Var> {
        if tape.value(xy).cols() != 2 * NUM_KEYPOINTS {
            return Err(Error::Dimension {
                op: "score_train",
                detail: "discriminator sees full poses only".into(),
            });
        }
        let mut ctx = TrainCtx {
            store_idx,
            store: &mut self.params,
            rng,
        };
        self.net.forward_train(tape, xy, &mut ctx)
    }

    pub fn parameter_count(&self) -> usize {
        self.params.parameter_count()
    }
}
