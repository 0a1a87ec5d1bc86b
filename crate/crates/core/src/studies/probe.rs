//! Keypoint-correlation probe.
//!
//! Scales one 2D keypoint at a time through a percentage grid (its
//! root-relative coordinates are multiplied by the factor; the root stays at
//! the origin), lifts the perturbed poses, and records how far each predicted
//! depth ordinate moves. Deviations are means of absolute deviation over the
//! probe dataset. Cross-segment slices of independent representations are
//! exactly zero; a full-pose model shows the long-range correlations this
//! probe exists to expose.

use crate::error::{Error, Result};
use crate::models::LifterModel;
use crate::skeleton::{stack_poses, Pose2D, NUM_KEYPOINTS};

/// -95% to +105% in 1% steps: 201 grid points including the unperturbed 100%.
pub fn default_scale_grid() -> Vec<i32> {
    (-95..=105).collect()
}

/// Deviations indexed `[perturbed keypoint][scale step][output ordinate]`.
#[derive(Debug, Clone)]
pub struct SensitivityTensor {
    pub joints: Vec<String>,
    pub scale_percents: Vec<i32>,
    data: Vec<f64>,
}

impl SensitivityTensor {
    pub fn deviation(&self, keypoint: usize, scale_idx: usize, ordinate: usize) -> f64 {
        let s = self.scale_percents.len();
        self.data[(keypoint * s + scale_idx) * NUM_KEYPOINTS + ordinate]
    }

    /// Long-format CSV: keypoint, scale_percent, ordinate, deviation.
    pub fn to_long_csv(&self, config_hash: &str) -> String {
        let mut out = String::new();
        out.push_str(&format!("# config_hash={config_hash}\n"));
        out.push_str("keypoint,scale_percent,ordinate,deviation\n");
        for (k, kname) in self.joints.iter().enumerate() {
            for (si, pct) in self.scale_percents.iter().enumerate() {
                for (o, oname) in self.joints.iter().enumerate() {
                    out.push_str(&format!("{kname},{pct},{oname},{}\n", self.deviation(k, si, o)));
                }
            }
        }
        out
    }

    /// One perturbed-keypoint/ordinate pair as a plottable curve.
    pub fn pair_curve_csv(&self, keypoint: usize, ordinate: usize, config_hash: &str) -> String {
        let mut out = String::new();
        out.push_str(&format!("# config_hash={config_hash}\n"));
        out.push_str(&format!(
            "# perturbed={} ordinate={}\n",
            self.joints[keypoint], self.joints[ordinate]
        ));
        out.push_str("scale_percent,deviation\n");
        for (si, pct) in self.scale_percents.iter().enumerate() {
            out.push_str(&format!("{pct},{}\n", self.deviation(keypoint, si, ordinate)));
        }
        out
    }
}

/// Run the probe over a dataset of normalized poses.
pub fn probe_correlations(
    model: &LifterModel,
    poses: &[Pose2D],
    grid: &[i32],
) -> Result<SensitivityTensor> {
    if poses.is_empty() {
        return Err(Error::Contract("probe requires a non-empty dataset".into()));
    }
    if grid.is_empty() {
        return Err(Error::Contract("probe requires a non-empty scale grid".into()));
    }
    let (x, y, _) = stack_poses(poses);
    let base = model.lift_batch(&x, &y)?;
    let b = poses.len() as f64;
    let s = grid.len();
    let mut data = vec![0.0; NUM_KEYPOINTS * s * NUM_KEYPOINTS];
    for k in 0..NUM_KEYPOINTS {
        for (si, &pct) in grid.iter().enumerate() {
            let factor = pct as f64 / 100.0;
            let mut xp = x.clone();
            let mut yp = y.clone();
            for r in 0..poses.len() {
                xp[(r, k)] *= factor;
                yp[(r, k)] *= factor;
            }
            let lifted = model.lift_batch(&xp, &yp)?;
            for o in 0..NUM_KEYPOINTS {
                let mut acc = 0.0;
                for r in 0..poses.len() {
                    acc += (lifted[(r, o)] - base[(r, o)]).abs();
                }
                data[(k * s + si) * NUM_KEYPOINTS + o] = acc / b;
            }
        }
    }
    Ok(SensitivityTensor {
        joints: model.schema().joints().to_vec(),
        scale_percents: grid.to_vec(),
        data,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{ModelConfig, Representation};
    use crate::skeleton::{KeypointSchema, PartitionKind};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn probe_poses(n: usize, seed: u64) -> Vec<Pose2D> {
        use crate::data::{prepare, synthesize, SynthConfig};
        let schema = KeypointSchema::default16();
        let records = synthesize(&SynthConfig::default_with(n, seed)).unwrap();
        let (ds, _) = prepare(&records, &schema).unwrap();
        ds.poses2d()
    }

    #[test]
    fn unperturbed_step_has_zero_deviation() {
        let schema = KeypointSchema::default16();
        let model = LifterModel::new(
            Representation::Full,
            ModelConfig::desk(),
            &schema,
            &mut ChaCha8Rng::seed_from_u64(1),
        )
        .unwrap();
        let poses = probe_poses(6, 3);
        let tensor = probe_correlations(&model, &poses, &[90, 100, 110]).unwrap();
        for k in 0..NUM_KEYPOINTS {
            for o in 0..NUM_KEYPOINTS {
                assert_eq!(tensor.deviation(k, 1, o), 0.0);
            }
        }
    }

    #[test]
    fn independent_model_has_exactly_zero_cross_segment_slices() {
        let schema = KeypointSchema::default16();
        let model = LifterModel::new(
            Representation::IndLegTorso,
            ModelConfig::desk(),
            &schema,
            &mut ChaCha8Rng::seed_from_u64(2),
        )
        .unwrap();
        let poses = probe_poses(5, 7);
        let grid = vec![-50, 0, 50, 100];
        let tensor = probe_correlations(&model, &poses, &grid).unwrap();
        let legs = &schema.segment(PartitionKind::LegTorso, "legs").unwrap().indices;
        let torso = &schema.segment(PartitionKind::LegTorso, "torso").unwrap().indices;
        for &k in legs {
            for si in 0..grid.len() {
                for &o in torso {
                    assert_eq!(tensor.deviation(k, si, o), 0.0);
                }
            }
        }
        for &k in torso {
            for si in 0..grid.len() {
                for &o in legs {
                    assert_eq!(tensor.deviation(k, si, o), 0.0);
                }
            }
        }
    }

    #[test]
    fn full_model_has_cross_segment_sensitivity() {
        let schema = KeypointSchema::default16();
        let model = LifterModel::new(
            Representation::Full,
            ModelConfig::desk(),
            &schema,
            &mut ChaCha8Rng::seed_from_u64(3),
        )
        .unwrap();
        let poses = probe_poses(5, 9);
        let tensor = probe_correlations(&model, &poses, &[50]).unwrap();
        let legs = &schema.segment(PartitionKind::LegTorso, "legs").unwrap().indices;
        let torso = &schema.segment(PartitionKind::LegTorso, "torso").unwrap().indices;
        let mut any = 0.0;
        for &k in legs {
            for &o in torso {
                any += tensor.deviation(k, 0, o);
            }
        }
        assert!(any > 0.0, "a full-pose model correlates across segments even untrained");
    }

    #[test]
    fn default_grid_has_201_steps() {
        let g = default_scale_grid();
        assert_eq!(g.len(), 201);
        assert_eq!(g[0], -95);
        assert_eq!(*g.last().unwrap(), 105);
        assert!(g.contains(&100));
    }
}
