//! Dataset ingestion, the synthetic pose generator, and preparation.

mod records;
mod synth;

pub use records::{emit, ingest, PoseRecord};
pub use synth::{synthesize, AngleRanges, BoneTable, CameraRanges, SynthConfig};

use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::skeleton::{max_normalize, root_center, KeypointSchema, Pose2D, NUM_KEYPOINTS};

/// One normalized pose with its provenance and optional 3D ground truth
/// (kept in the record's original units).
#[derive(Debug, Clone)]
pub struct PreparedPose {
    pub id: String,
    pub action: Option<String>,
    pub pose: Pose2D,
    pub gt3d: Option<Matrix>,
}

impl PreparedPose {
    /// Ground-truth depth ordinates in the pose's normalized frame:
    /// root-relative z divided by the retained 2D scale factor.
    pub fn normalized_gt_depths(&self, schema: &KeypointSchema) -> Option<Vec<f64>> {
        let gt = self.gt3d.as_ref()?;
        let z_root = (gt[(schema.left_hip(), 2)] + gt[(schema.right_hip(), 2)]) / 2.0;
        let s = self.pose.scale();
        Some((0..NUM_KEYPOINTS).map(|k| (gt[(k, 2)] - z_root) / s).collect())
    }
}

/// A prepared dataset: normalized poses plus retained unit metadata.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub poses: Vec<PreparedPose>,
    pub units: String,
}

impl Dataset {
    pub fn poses2d(&self) -> Vec<Pose2D> {
        self.poses.iter().map(|p| p.pose.clone()).collect()
    }

    pub fn has_ground_truth(&self) -> bool {
        self.poses.iter().all(|p| p.gt3d.is_some())
    }
}

/// Root-center and max-normalize every record; degenerate poses are skipped
/// and reported in the returned warnings.
pub fn prepare(records: &[PoseRecord], schema: &KeypointSchema) -> Result<(Dataset, Vec<String>)> {
    let mut poses = Vec::with_capacity(records.len());
    let mut warnings = Vec::new();
    let mut units: Option<String> = None;
    for rec in records {
        match &units {
            None => units = Some(rec.units.clone()),
            Some(u) if *u != rec.units => {
                return Err(Error::Contract(format!(
                    "unit mismatch within dataset: '{}' vs '{}' (record '{}')",
                    u, rec.units, rec.id
                )))
            }
            _ => {}
        }
        let raw = rec.coords2d(schema)?;
        let centered = root_center(&raw, schema)?;
        let pose = match max_normalize(&centered) {
            Ok(p) => p,
            Err(e) => {
                warnings.push(format!("skipping degenerate pose '{}': {e}", rec.id));
                continue;
            }
        };
        let gt3d = rec.coords3d(schema)?;
        poses.push(PreparedPose {
            id: rec.id.clone(),
            action: rec.action.clone(),
            pose,
            gt3d,
        });
    }
    let units = units.unwrap_or_else(|| "unitless".to_string());
    Ok((Dataset { poses, units }, warnings))
}
