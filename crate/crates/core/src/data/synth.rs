//! Forward-kinematics synthetic pose generator.
//!
//! Poses are sampled from per-joint angle ranges over a fixed bone-length
//! table, so every generated skeleton satisfies the table exactly. Hinge
//! joints are one-sided (knees bend backward, elbows forward), which keeps
//! the pose distribution chiral: a depth-mirrored skeleton is distinguishable
//! from a real one, exactly the prior the discriminator is meant to learn.
//!
//! The subject stands at the origin facing +z with y up; a per-pose camera
//! rotation produces the observed view, and the orthographic (x, y) of the
//! camera frame becomes the 2D pose. Ground-truth 3D is stored in the camera
//! frame so the depth the lifters must predict is the stored z.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_chacha::rand_core::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::data::PoseRecord;
use crate::error::{Error, Result};
use crate::geometry::RotationMatrix;

/// Bone lengths in millimeters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoneTable {
    pub hip_half_width: f64,
    pub thigh: f64,
    pub shank: f64,
    pub pelvis_to_spine: f64,
    pub spine_to_thorax: f64,
    pub thorax_to_neck: f64,
    pub neck_to_head: f64,
    pub shoulder_half_width: f64,
    pub upper_arm: f64,
    pub forearm: f64,
}

impl Default for BoneTable {
    fn default() -> Self {
        // Rounded adult averages.
        BoneTable {
            hip_half_width: 130.0,
            thigh: 450.0,
            shank: 440.0,
            pelvis_to_spine: 230.0,
            spine_to_thorax: 250.0,
            thorax_to_neck: 120.0,
            neck_to_head: 115.0,
            shoulder_half_width: 170.0,
            upper_arm: 280.0,
            forearm: 250.0,
        }
    }
}

impl BoneTable {
    fn validate(&self) -> Result<()> {
        let lengths = [
            self.hip_half_width,
            self.thigh,
            self.shank,
            self.pelvis_to_spine,
            self.spine_to_thorax,
            self.thorax_to_neck,
            self.neck_to_head,
            self.shoulder_half_width,
            self.upper_arm,
            self.forearm,
        ];
        if lengths.iter().any(|&l| !(l > 0.0)) {
            return Err(Error::Config("bone lengths must be positive".into()));
        }
        Ok(())
    }
}

/// Sampling ranges for one limb: root-joint flexion (forward +z) and
/// abduction, plus the one-sided hinge (knee or elbow).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimbRanges {
    pub flex: [f64; 2],
    pub abduct: [f64; 2],
    pub hinge: [f64; 2],
}

/// Uniform sampling ranges, radians. Limb ranges are per side and
/// deliberately asymmetric by default: like real bodies (handedness), the
/// sides behave differently, which keeps the labeled pose distribution
/// distinguishable from its mirror image. Without that asymmetry the
/// depth-mirrored solution projects onto 2D statistics nearly identical to
/// the real ones and adversarial training cannot resolve the depth sign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleRanges {
    pub torso_lean: [f64; 2],
    pub torso_twist: [f64; 2],
    pub torso_side: [f64; 2],
    pub neck_nod: [f64; 2],
    pub right_leg: LimbRanges,
    pub left_leg: LimbRanges,
    pub right_arm: LimbRanges,
    pub left_arm: LimbRanges,
}

impl Default for AngleRanges {
    fn default() -> Self {
        AngleRanges {
            torso_lean: [-0.25, 0.45],
            torso_twist: [-0.5, 0.5],
            torso_side: [-0.2, 0.2],
            neck_nod: [-0.3, 0.3],
            right_leg: LimbRanges {
                flex: [-0.3, 1.2],
                abduct: [-0.1, 0.5],
                hinge: [0.2, 1.9],
            },
            left_leg: LimbRanges {
                flex: [-0.6, 0.6],
                abduct: [-0.1, 0.25],
                hinge: [0.0, 1.0],
            },
            right_arm: LimbRanges {
                flex: [-0.7, 1.6],
                abduct: [-0.1, 1.3],
                hinge: [0.4, 2.3],
            },
            left_arm: LimbRanges {
                flex: [-0.4, 0.7],
                abduct: [-0.15, 0.5],
                hinge: [0.0, 1.2],
            },
        }
    }
}

impl AngleRanges {
    fn validate(&self) -> Result<()> {
        let torso = [
            ("torso_lean", self.torso_lean),
            ("torso_twist", self.torso_twist),
            ("torso_side", self.torso_side),
            ("neck_nod", self.neck_nod),
        ];
        let limbs = [
            ("right_leg", &self.right_leg),
            ("left_leg", &self.left_leg),
            ("right_arm", &self.right_arm),
            ("left_arm", &self.left_arm),
        ];
        let check = |name: &str, [lo, hi]: [f64; 2]| -> Result<()> {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::Config(format!("invalid angle range for {name}: [{lo}, {hi}]")));
            }
            if lo < -std::f64::consts::PI || hi > std::f64::consts::PI {
                return Err(Error::Config(format!("{name} range exceeds [-pi, pi]")));
            }
            Ok(())
        };
        for (name, range) in torso {
            check(name, range)?;
        }
        for (name, limb) in limbs {
            check(&format!("{name}.flex"), limb.flex)?;
            check(&format!("{name}.abduct"), limb.abduct)?;
            check(&format!("{name}.hinge"), limb.hinge)?;
            // Hinge joints only bend one way.
            if limb.hinge[0] < 0.0 {
                return Err(Error::Config(format!(
                    "{name}.hinge must be non-negative (one-sided hinge)"
                )));
            }
        }
        Ok(())
    }
}

/// Camera rotation sampling ranges, radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraRanges {
    pub azimuth: [f64; 2],
    pub elevation: [f64; 2],
}

impl Default for CameraRanges {
    fn default() -> Self {
        CameraRanges {
            azimuth: [-std::f64::consts::PI, std::f64::consts::PI],
            elevation: [-0.18, 0.18],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub pose_count: usize,
    pub seed: u64,
    #[serde(default = "default_units")]
    pub units: String,
    #[serde(default)]
    pub bones: BoneTable,
    #[serde(default)]
    pub angles: AngleRanges,
    #[serde(default)]
    pub camera: CameraRanges,
}

fn default_units() -> String {
    "mm".to_string()
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            pose_count: 2000,
            seed: 0,
            units: default_units(),
            bones: BoneTable::default(),
            angles: AngleRanges::default(),
            camera: CameraRanges::default(),
        }
    }
}

impl SynthConfig {
    pub fn default_with(pose_count: usize, seed: u64) -> Self {
        SynthConfig {
            pose_count,
            seed,
            ..Default::default()
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: SynthConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.bones.validate()?;
        self.angles.validate()?;
        for (name, [lo, hi]) in [("azimuth", self.camera.azimuth), ("elevation", self.camera.elevation)] {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::Config(format!("invalid camera {name} range [{lo}, {hi}]")));
            }
        }
        Ok(())
    }
}

fn sample(rng: &mut ChaCha8Rng, range: [f64; 2]) -> f64 {
    if range[0] == range[1] {
        range[0]
    } else {
        rng.gen_range(range[0]..=range[1])
    }
}

fn add(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[0] + b[0], a[1] + b[1], a[2] + b[2]]
}

/// World-frame skeleton (pelvis at origin, facing +z, y up), keyed by joint
/// name.
fn sample_skeleton(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> BTreeMap<&'static str, [f64; 3]> {
    let b = &cfg.bones;
    let a = &cfg.angles;
    let mut joints = BTreeMap::new();

    let lean = sample(rng, a.torso_lean);
    let twist = sample(rng, a.torso_twist);
    let side = sample(rng, a.torso_side);
    let nod = sample(rng, a.neck_nod);

    joints.insert("right_hip", [-b.hip_half_width, 0.0, 0.0]);
    joints.insert("left_hip", [b.hip_half_width, 0.0, 0.0]);

    let torso = RotationMatrix::about_y(twist)
        .compose(&RotationMatrix::about_x(lean))
        .compose(&RotationMatrix::about_z(side));
    let spine = torso.apply([0.0, b.pelvis_to_spine, 0.0]);
    let thorax = add(spine, torso.apply([0.0, b.spine_to_thorax, 0.0]));
    let neck_frame = torso.compose(&RotationMatrix::about_x(nod));
    let neck = add(thorax, neck_frame.apply([0.0, b.thorax_to_neck, 0.0]));
    let head = add(neck, neck_frame.apply([0.0, b.neck_to_head, 0.0]));
    joints.insert("spine", spine);
    joints.insert("thorax", thorax);
    joints.insert("neck", neck);
    joints.insert("head", head);

    // Legs: hip flexion forward (+z), knee hinge backward (-z).
    for (name_hip, name_knee, name_ankle, sign, ranges) in [
        ("right_hip", "right_knee", "right_ankle", -1.0, &a.right_leg),
        ("left_hip", "left_knee", "left_ankle", 1.0, &a.left_leg),
    ] {
        let flex = sample(rng, ranges.flex);
        let abduct = sample(rng, ranges.abduct);
        let knee_flex = sample(rng, ranges.hinge);
        let hip_frame = RotationMatrix::about_x(-flex).compose(&RotationMatrix::about_z(sign * abduct));
        let hip = joints[name_hip];
        let knee = add(hip, hip_frame.apply([0.0, -b.thigh, 0.0]));
        let knee_frame = hip_frame.compose(&RotationMatrix::about_x(knee_flex));
        let ankle = add(knee, knee_frame.apply([0.0, -b.shank, 0.0]));
        joints.insert(name_knee, knee);
        joints.insert(name_ankle, ankle);
    }

    // Arms hang from the thorax; elbow hinge bends forward (+z).
    for (name_shoulder, name_elbow, name_wrist, sign, ranges) in [
        ("right_shoulder", "right_elbow", "right_wrist", -1.0, &a.right_arm),
        ("left_shoulder", "left_elbow", "left_wrist", 1.0, &a.left_arm),
    ] {
        let flex = sample(rng, ranges.flex);
        let abduct = sample(rng, ranges.abduct);
        let elbow_flex = sample(rng, ranges.hinge);
        let shoulder = add(thorax, torso.apply([sign * b.shoulder_half_width, 0.0, 0.0]));
        let arm_frame = torso
            .compose(&RotationMatrix::about_x(-flex))
            .compose(&RotationMatrix::about_z(sign * abduct));
        let elbow = add(shoulder, arm_frame.apply([0.0, -b.upper_arm, 0.0]));
        let forearm_frame = arm_frame.compose(&RotationMatrix::about_x(-elbow_flex));
        let wrist = add(elbow, forearm_frame.apply([0.0, -b.forearm, 0.0]));
        joints.insert(name_shoulder, shoulder);
        joints.insert(name_elbow, elbow);
        joints.insert(name_wrist, wrist);
    }

    joints
}

/// Deterministic forward-kinematics sampling of `pose_count` records with 3D
/// ground truth. 2D is the orthographic projection after the sampled camera
/// rotation; 3D is stored in the camera frame, same units.
pub fn synthesize(cfg: &SynthConfig) -> Result<Vec<PoseRecord>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut records = Vec::with_capacity(cfg.pose_count);
    for i in 0..cfg.pose_count {
        let world = sample_skeleton(cfg, &mut rng);
        let az = sample(&mut rng, cfg.camera.azimuth);
        let el = sample(&mut rng, cfg.camera.elevation);
        let cam = RotationMatrix::from_azimuth_elevation(az, el);
        let mut joints2d = BTreeMap::new();
        let mut joints3d = BTreeMap::new();
        for (name, p) in &world {
            let q = cam.apply(*p);
            joints2d.insert(name.to_string(), [q[0], q[1]]);
            joints3d.insert(name.to_string(), q);
        }
        records.push(PoseRecord {
            id: format!("synth-{i:06}"),
            action: None,
            units: cfg.units.clone(),
            joints2d,
            joints3d: Some(joints3d),
            camera: None,
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::KeypointSchema;

    fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
    }

    #[test]
    fn bone_lengths_hold_exactly() {
        let cfg = SynthConfig::default_with(32, 9);
        let records = synthesize(&cfg).unwrap();
        let b = &cfg.bones;
        let edges: &[(&str, &str, f64)] = &[
            ("right_hip", "right_knee", b.thigh),
            ("right_knee", "right_ankle", b.shank),
            ("left_hip", "left_knee", b.thigh),
            ("left_knee", "left_ankle", b.shank),
            ("left_hip", "right_hip", 2.0 * b.hip_half_width),
            ("spine", "thorax", b.spine_to_thorax),
            ("thorax", "neck", b.thorax_to_neck),
            ("neck", "head", b.neck_to_head),
            ("right_shoulder", "right_elbow", b.upper_arm),
            ("right_elbow", "right_wrist", b.forearm),
            ("left_shoulder", "left_elbow", b.upper_arm),
            ("left_elbow", "left_wrist", b.forearm),
        ];
        for rec in &records {
            let j = rec.joints3d.as_ref().unwrap();
            for (a, c, len) in edges {
                let d = dist(j[*a], j[*c]);
                assert!((d - len).abs() / len < 1e-9, "{a}-{c}: {d} vs {len}");
            }
        }
    }

    fn zero_angles() -> AngleRanges {
        let still = LimbRanges {
            flex: [0.0, 0.0],
            abduct: [0.0, 0.0],
            hinge: [0.0, 0.0],
        };
        AngleRanges {
            torso_lean: [0.0, 0.0],
            torso_twist: [0.0, 0.0],
            torso_side: [0.0, 0.0],
            neck_nod: [0.0, 0.0],
            right_leg: still,
            left_leg: still,
            right_arm: still,
            left_arm: still,
        }
    }

    #[test]
    fn zero_angle_and_camera_ranges_give_identical_rest_poses() {
        let mut cfg = SynthConfig::default_with(5, 3);
        cfg.angles = zero_angles();
        cfg.camera = CameraRanges {
            azimuth: [0.0, 0.0],
            elevation: [0.0, 0.0],
        };
        let records = synthesize(&cfg).unwrap();
        for rec in &records[1..] {
            assert_eq!(rec.joints2d, records[0].joints2d);
            assert_eq!(rec.joints3d, records[0].joints3d);
        }
        // Rest pose: ankles straight below hips.
        let j = records[0].joints3d.as_ref().unwrap();
        assert!((j["right_ankle"][0] - j["right_hip"][0]).abs() < 1e-9);
        assert!((j["right_ankle"][2] - j["right_hip"][2]).abs() < 1e-9);
    }

    #[test]
    fn generator_is_deterministic_per_seed() {
        let cfg = SynthConfig::default_with(20, 123);
        let a = synthesize(&cfg).unwrap();
        let b = synthesize(&cfg).unwrap();
        assert_eq!(a, b);
        let c = synthesize(&SynthConfig::default_with(20, 124)).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn records_cover_the_default_schema() {
        let schema = KeypointSchema::default16();
        let records = synthesize(&SynthConfig::default_with(3, 0)).unwrap();
        for rec in &records {
            rec.coords2d(&schema).unwrap();
            assert!(rec.coords3d(&schema).unwrap().is_some());
        }
    }

    fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
        [
            a[1] * b[2] - a[2] * b[1],
            a[2] * b[0] - a[0] * b[2],
            a[0] * b[1] - a[1] * b[0],
        ]
    }

    fn sub3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
        [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
    }

    #[test]
    fn hinges_are_chiral() {
        // With torso and camera fixed, the hinge sense is visible in the
        // x-component of (parent bone) x (child bone): non-negative at every
        // knee, non-positive at every elbow. A depth-mirrored skeleton flips
        // both signs, so mirrored fakes sit outside the data distribution.
        let mut cfg = SynthConfig::default_with(300, 11);
        cfg.angles.torso_lean = [0.0, 0.0];
        cfg.angles.torso_twist = [0.0, 0.0];
        cfg.angles.torso_side = [0.0, 0.0];
        cfg.camera = CameraRanges {
            azimuth: [0.0, 0.0],
            elevation: [0.0, 0.0],
        };
        let records = synthesize(&cfg).unwrap();
        for rec in &records {
            let j = rec.joints3d.as_ref().unwrap();
            for side in ["right", "left"] {
                let hip = j[format!("{side}_hip").as_str()];
                let knee = j[format!("{side}_knee").as_str()];
                let ankle = j[format!("{side}_ankle").as_str()];
                let knee_bend = cross(sub3(knee, hip), sub3(ankle, knee))[0];
                assert!(knee_bend >= -1e-9, "knee bends forward: {knee_bend}");

                let shoulder = j[format!("{side}_shoulder").as_str()];
                let elbow = j[format!("{side}_elbow").as_str()];
                let wrist = j[format!("{side}_wrist").as_str()];
                let elbow_bend = cross(sub3(elbow, shoulder), sub3(wrist, elbow))[0];
                assert!(elbow_bend <= 1e-9, "elbow bends backward: {elbow_bend}");
            }
        }
    }
}
