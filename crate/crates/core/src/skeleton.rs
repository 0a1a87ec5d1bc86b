//! Keypoint schema, pose containers, normalization, and segment partitions.
//!
//! Poses are root-centered at the hip midpoint and max-normalized so every
//! coordinate lies in [-1, 1]; the normalizing factor is retained so predicted
//! 3D poses can be upscaled back to original units.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

pub const NUM_KEYPOINTS: usize = 16;

/// The two ways this crate partitions a pose into segments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionKind {
    LegTorso,
    FiveLimbs,
}

impl PartitionKind {
    pub fn key(&self) -> &'static str {
        match self {
            PartitionKind::LegTorso => "leg_torso",
            PartitionKind::FiveLimbs => "five_limbs",
        }
    }
}

/// A named group of keypoint indices within a partition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Segment {
    pub name: String,
    pub indices: Vec<usize>,
}

/// Ordered joint names, hip indices, and the two segment partitions.
#[derive(Debug, Clone)]
pub struct KeypointSchema {
    version: u32,
    joints: Vec<String>,
    index: BTreeMap<String, usize>,
    left_hip: usize,
    right_hip: usize,
    leg_torso: Vec<Segment>,
    five_limbs: Vec<Segment>,
}

#[derive(Deserialize)]
struct SchemaFile {
    version: u32,
    joints: Vec<String>,
    left_hip: String,
    right_hip: String,
    partitions: SchemaPartitions,
}

#[derive(Deserialize)]
struct SchemaPartitions {
    leg_torso: BTreeMap<String, Vec<String>>,
    five_limbs: BTreeMap<String, Vec<String>>,
}

impl KeypointSchema {
    /// Built-in 16-joint schema: hips/knees/ankles for the legs, a
    /// spine-thorax-neck-head column, and shoulder/elbow/wrist arms.
    pub fn default16() -> Self {
        let toml_text = DEFAULT_SCHEMA_TOML;
        Self::from_toml_str(toml_text).expect("built-in schema is valid")
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let file: SchemaFile = toml::from_str(text)?;
        let joints = file.joints;
        let n = joints.len();
        if n != NUM_KEYPOINTS {
            return Err(Error::Schema(format!(
                "schema must list exactly {NUM_KEYPOINTS} joints, got {n}"
            )));
        }
        let mut index = BTreeMap::new();
        for (i, j) in joints.iter().enumerate() {
            if index.insert(j.clone(), i).is_some() {
                return Err(Error::Schema(format!("duplicate joint name '{j}'")));
            }
        }
        let left_hip = *index
            .get(&file.left_hip)
            .ok_or_else(|| Error::Schema(format!("left hip joint '{}' not in joint list", file.left_hip)))?;
        let right_hip = *index
            .get(&file.right_hip)
            .ok_or_else(|| Error::Schema(format!("right hip joint '{}' not in joint list", file.right_hip)))?;

        let resolve = |groups: &BTreeMap<String, Vec<String>>| -> Result<Vec<Segment>> {
            let mut segments = Vec::new();
            for (name, members) in groups {
                let mut indices = Vec::with_capacity(members.len());
                for m in members {
                    let idx = index
                        .get(m)
                        .ok_or_else(|| Error::Schema(format!("segment '{name}' references unknown joint '{m}'")))?;
                    indices.push(*idx);
                }
                segments.push(Segment {
                    name: name.clone(),
                    indices,
                });
            }
            Ok(segments)
        };

        let leg_torso = resolve(&file.partitions.leg_torso)?;
        let five_limbs = resolve(&file.partitions.five_limbs)?;

        let schema = KeypointSchema {
            version: file.version,
            joints,
            index,
            left_hip,
            right_hip,
            leg_torso,
            five_limbs,
        };
        schema.validate()?;
        Ok(schema)
    }

    /// Partition checks run at load time: disjoint segments covering all 16
    /// indices, and five-limb groups of 3 or 4 keypoints.
    fn validate(&self) -> Result<()> {
        for (kind, segments) in [
            (PartitionKind::LegTorso, &self.leg_torso),
            (PartitionKind::FiveLimbs, &self.five_limbs),
        ] {
            let mut seen = vec![false; NUM_KEYPOINTS];
            for seg in segments {
                for &i in &seg.indices {
                    if seen[i] {
                        return Err(Error::Schema(format!(
                            "partition {} assigns joint '{}' to more than one segment",
                            kind.key(),
                            self.joints[i]
                        )));
                    }
                    seen[i] = true;
                }
            }
            if !seen.iter().all(|&s| s) {
                return Err(Error::Schema(format!(
                    "partition {} does not cover all {NUM_KEYPOINTS} joints",
                    kind.key()
                )));
            }
        }
        let expected_lt: Vec<&str> = vec!["legs", "torso"];
        let got_lt: Vec<&str> = self.leg_torso.iter().map(|s| s.name.as_str()).collect();
        if got_lt != expected_lt {
            return Err(Error::Schema(format!(
                "leg_torso partition must define segments {expected_lt:?}, got {got_lt:?}"
            )));
        }
        let expected_5: Vec<&str> = vec!["left_arm", "left_leg", "right_arm", "right_leg", "torso"];
        let got_5: Vec<&str> = self.five_limbs.iter().map(|s| s.name.as_str()).collect();
        if got_5 != expected_5 {
            return Err(Error::Schema(format!(
                "five_limbs partition must define segments {expected_5:?}, got {got_5:?}"
            )));
        }
        for seg in &self.five_limbs {
            if !(seg.indices.len() == 3 || seg.indices.len() == 4) {
                return Err(Error::Schema(format!(
                    "five_limbs segment '{}' must have 3 or 4 keypoints, has {}",
                    seg.name,
                    seg.indices.len()
                )));
            }
        }
        Ok(())
    }

    pub fn version(&self) -> u32 {
        self.version
    }

    pub fn joints(&self) -> &[String] {
        &self.joints
    }

    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn left_hip(&self) -> usize {
        self.left_hip
    }

    pub fn right_hip(&self) -> usize {
        self.right_hip
    }

    pub fn partition(&self, kind: PartitionKind) -> &[Segment] {
        match kind {
            PartitionKind::LegTorso => &self.leg_torso,
            PartitionKind::FiveLimbs => &self.five_limbs,
        }
    }

    pub fn segment(&self, kind: PartitionKind, name: &str) -> Result<&Segment> {
        self.partition(kind)
            .iter()
            .find(|s| s.name == name)
            .ok_or_else(|| Error::Schema(format!("unknown segment '{name}' in partition {}", kind.key())))
    }
}

pub const DEFAULT_SCHEMA_TOML: &str = r#"version = 1
joints = [
  "right_hip", "right_knee", "right_ankle",
  "left_hip", "left_knee", "left_ankle",
  "spine", "thorax", "neck", "head",
  "left_shoulder", "left_elbow", "left_wrist",
  "right_shoulder", "right_elbow", "right_wrist",
]
left_hip = "left_hip"
right_hip = "right_hip"

[partitions.leg_torso]
legs = ["right_hip", "right_knee", "right_ankle", "left_hip", "left_knee", "left_ankle"]
torso = [
  "spine", "thorax", "neck", "head",
  "left_shoulder", "left_elbow", "left_wrist",
  "right_shoulder", "right_elbow", "right_wrist",
]

[partitions.five_limbs]
left_arm = ["left_shoulder", "left_elbow", "left_wrist"]
right_arm = ["right_shoulder", "right_elbow", "right_wrist"]
left_leg = ["left_hip", "left_knee", "left_ankle"]
right_leg = ["right_hip", "right_knee", "right_ankle"]
torso = ["spine", "thorax", "neck", "head"]
"#;

/// Root-centered, max-normalized 2D pose with its retained scale factor.
#[derive(Debug, Clone, PartialEq)]
pub struct Pose2D {
    coords: Matrix,
    scale: f64,
}

impl Pose2D {
    /// Wrap coordinates that are already root-centered and normalized.
    ///
    /// Reprojected poses produced by the consistency cycle may exceed the
    /// [-1, 1] range; range is therefore not enforced here, only shape,
    /// finiteness, and a positive scale.
    pub fn from_parts(coords: Matrix, scale: f64) -> Result<Self> {
        if coords.cols() != 2 || coords.rows() != NUM_KEYPOINTS {
            return Err(Error::Dimension {
                op: "Pose2D::from_parts",
                detail: format!("expected {NUM_KEYPOINTS}x2, got {:?}", coords.shape()),
            });
        }
        if !coords.is_finite() {
            return Err(Error::Normalization("non-finite 2D coordinates".into()));
        }
        if !(scale > 0.0) {
            return Err(Error::Normalization(format!("scale must be positive, got {scale}")));
        }
        Ok(Pose2D { coords, scale })
    }

    pub fn coords(&self) -> &Matrix {
        &self.coords
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn x(&self, kp: usize) -> f64 {
        self.coords[(kp, 0)]
    }

    pub fn y(&self, kp: usize) -> f64 {
        self.coords[(kp, 1)]
    }

    /// Coordinates multiplied back by the stored scale factor.
    pub fn denormalize(&self) -> Matrix {
        self.coords.scale(self.scale)
    }
}

/// 3D pose in normalized units; scale inherited from the source [`Pose2D`].
#[derive(Debug, Clone, PartialEq)]
pub struct Pose3D {
    coords: Matrix,
    scale: f64,
}

impl Pose3D {
    pub fn from_parts(coords: Matrix, scale: f64) -> Result<Self> {
        if coords.cols() != 3 || coords.rows() != NUM_KEYPOINTS {
            return Err(Error::Dimension {
                op: "Pose3D::from_parts",
                detail: format!("expected {NUM_KEYPOINTS}x3, got {:?}", coords.shape()),
            });
        }
        if !coords.is_finite() {
            return Err(Error::Normalization("non-finite 3D coordinates".into()));
        }
        Ok(Pose3D { coords, scale })
    }

    /// `[x | y | z]` from a 2D pose and per-keypoint depth ordinates.
    pub fn assemble(pose: &Pose2D, depths: &[f64]) -> Result<Self> {
        if depths.len() != NUM_KEYPOINTS {
            return Err(Error::Dimension {
                op: "Pose3D::assemble",
                detail: format!("expected {NUM_KEYPOINTS} depths, got {}", depths.len()),
            });
        }
        let mut coords = Matrix::zeros(NUM_KEYPOINTS, 3);
        for k in 0..NUM_KEYPOINTS {
            coords[(k, 0)] = pose.x(k);
            coords[(k, 1)] = pose.y(k);
            coords[(k, 2)] = depths[k];
        }
        Pose3D::from_parts(coords, pose.scale())
    }

    pub fn coords(&self) -> &Matrix {
        &self.coords
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn depths(&self) -> Vec<f64> {
        (0..NUM_KEYPOINTS).map(|k| self.coords[(k, 2)]).collect()
    }
}

/// Translate so the hip midpoint lands exactly on the origin.
pub fn root_center(raw: &Matrix, schema: &KeypointSchema) -> Result<Matrix> {
    if raw.cols() != 2 || raw.rows() != NUM_KEYPOINTS {
        return Err(Error::Dimension {
            op: "root_center",
            detail: format!("expected {NUM_KEYPOINTS}x2, got {:?}", raw.shape()),
        });
    }
    let (lh, rh) = (schema.left_hip(), schema.right_hip());
    let mx = (raw[(lh, 0)] + raw[(rh, 0)]) / 2.0;
    let my = (raw[(lh, 1)] + raw[(rh, 1)]) / 2.0;
    let mut out = raw.clone();
    for k in 0..NUM_KEYPOINTS {
        out[(k, 0)] -= mx;
        out[(k, 1)] -= my;
    }
    Ok(out)
}

/// Divide a centered pose by its maximum absolute coordinate.
///
/// The divisor is retained as the pose's scale so 3D predictions can be
/// upscaled back to the original units.
pub fn max_normalize(centered: &Matrix) -> Result<Pose2D> {
    let s = centered.max_abs();
    if !(s > 1e-12) {
        return Err(Error::Normalization(
            "degenerate pose: all coordinates are zero after centering".into(),
        ));
    }
    let coords = centered.scale(1.0 / s);
    Pose2D::from_parts(coords, s)
}

/// Rows of `coords` restricted to a segment, order preserved.
pub fn select_segment(coords: &Matrix, schema: &KeypointSchema, kind: PartitionKind, name: &str) -> Result<Matrix> {
    let seg = schema.segment(kind, name)?;
    Ok(coords.gather_rows(&seg.indices))
}

/// Exact inverse of [`select_segment`]: write segment rows back in place.
pub fn scatter_segment(
    target: &mut Matrix,
    sub: &Matrix,
    schema: &KeypointSchema,
    kind: PartitionKind,
    name: &str,
) -> Result<()> {
    let seg = schema.segment(kind, name)?;
    if sub.rows() != seg.indices.len() || sub.cols() != target.cols() {
        return Err(Error::Dimension {
            op: "scatter_segment",
            detail: format!("sub-pose {:?} vs segment of {}", sub.shape(), seg.indices.len()),
        });
    }
    for (i, &idx) in seg.indices.iter().enumerate() {
        for c in 0..target.cols() {
            target[(idx, c)] = sub[(i, c)];
        }
    }
    Ok(())
}

/// Stack poses into per-coordinate blocks: `(X, Y)` each of shape BxN, plus
/// the per-pose scales. This is the batch layout the networks consume.
pub fn stack_poses(poses: &[Pose2D]) -> (Matrix, Matrix, Vec<f64>) {
    let b = poses.len();
    let mut x = Matrix::zeros(b, NUM_KEYPOINTS);
    let mut y = Matrix::zeros(b, NUM_KEYPOINTS);
    let mut scales = Vec::with_capacity(b);
    for (r, p) in poses.iter().enumerate() {
        for k in 0..NUM_KEYPOINTS {
            x[(r, k)] = p.x(k);
            y[(r, k)] = p.y(k);
        }
        scales.push(p.scale());
    }
    (x, y, scales)
}
