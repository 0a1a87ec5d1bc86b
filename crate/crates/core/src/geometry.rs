//! Rotation sampling, orthographic projection, and the reprojection cycle.
//!
//! Rotations act on points stored as rows: `p' = p * R^T`. The projection is
//! orthographic: it drops the depth column and keeps `(x, y)`. Reprojected
//! poses are deliberately not re-centered or re-normalized so they remain
//! comparable to the originals; their scale metadata is carried through.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::skeleton::{Pose2D, Pose3D, NUM_KEYPOINTS};

/// Azimuth sampling range about the y axis.
pub const AZIMUTH_RANGE: (f64, f64) = (-8.0 * std::f64::consts::PI / 9.0, 8.0 * std::f64::consts::PI / 9.0);
/// Elevation sampling range about the x axis.
pub const ELEVATION_RANGE: (f64, f64) = (-std::f64::consts::PI / 18.0, std::f64::consts::PI / 18.0);

/// Proper rotation matrix (orthonormal, determinant +1).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RotationMatrix {
    m: [[f64; 3]; 3],
}

impl RotationMatrix {
    pub fn identity() -> Self {
        RotationMatrix {
            m: [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]],
        }
    }

    /// Rotation about the y axis; positive angle carries +z toward +x.
    pub fn about_y(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        RotationMatrix {
            m: [[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]],
        }
    }

    /// Rotation about the x axis.
    pub fn about_x(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        RotationMatrix {
            m: [[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]],
        }
    }

    /// Rotation about the z axis.
    pub fn about_z(theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        RotationMatrix {
            m: [[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]],
        }
    }

    /// Exact quarter turn about y: `(x, y, z) -> (z, y, -x)`.
    ///
    /// Entries are exact 0/±1 so the 90-degree identities hold to floating
    /// point equality rather than to trig round-off.
    pub fn quarter_turn_y_cw() -> Self {
        RotationMatrix {
            m: [[0.0, 0.0, 1.0], [0.0, 1.0, 0.0], [-1.0, 0.0, 0.0]],
        }
    }

    /// Exact quarter turn about y in the opposite sense: `(x, y, z) -> (-z, y, x)`.
    pub fn quarter_turn_y_ccw() -> Self {
        RotationMatrix {
            m: [[0.0, 0.0, -1.0], [0.0, 1.0, 0.0], [1.0, 0.0, 0.0]],
        }
    }

    /// Exact half turn about y: `(x, y, z) -> (-x, y, -z)`.
    pub fn half_turn_y() -> Self {
        RotationMatrix {
            m: [[-1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, -1.0]],
        }
    }

    /// `R_y(azimuth) * R_x(elevation)`.
    pub fn from_azimuth_elevation(azimuth: f64, elevation: f64) -> Self {
        Self::about_y(azimuth).compose(&Self::about_x(elevation))
    }

    /// `self * other`.
    pub fn compose(&self, other: &RotationMatrix) -> RotationMatrix {
        let mut out = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                for (k, row) in other.m.iter().enumerate() {
                    out[i][j] += self.m[i][k] * row[j];
                }
            }
        }
        RotationMatrix { m: out }
    }

    pub fn transpose(&self) -> RotationMatrix {
        let mut out = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                out[i][j] = self.m[j][i];
            }
        }
        RotationMatrix { m: out }
    }

    /// For a proper rotation the transpose is the inverse.
    pub fn inverse(&self) -> RotationMatrix {
        self.transpose()
    }

    pub fn entries(&self) -> &[[f64; 3]; 3] {
        &self.m
    }

    pub fn apply(&self, p: [f64; 3]) -> [f64; 3] {
        let m = &self.m;
        [
            m[0][0] * p[0] + m[0][1] * p[1] + m[0][2] * p[2],
            m[1][0] * p[0] + m[1][1] * p[1] + m[1][2] * p[2],
            m[2][0] * p[0] + m[2][1] * p[1] + m[2][2] * p[2],
        ]
    }

    pub fn det(&self) -> f64 {
        let m = &self.m;
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    }

    /// Orthonormality (`R R^T = I`) and determinant +1, both within `tol`.
    pub fn is_valid(&self, tol: f64) -> bool {
        let rt = self.transpose();
        let prod = self.compose(&rt);
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                if (prod.m[i][j] - expect).abs() > tol {
                    return false;
                }
            }
        }
        (self.det() - 1.0).abs() <= tol
    }
}

/// Uniform azimuth/elevation angles in the training sampling ranges.
pub fn sample_angles(rng: &mut ChaCha8Rng) -> (f64, f64) {
    let azimuth = rng.gen_range(AZIMUTH_RANGE.0..=AZIMUTH_RANGE.1);
    let elevation = rng.gen_range(ELEVATION_RANGE.0..=ELEVATION_RANGE.1);
    (azimuth, elevation)
}

/// Random rotation for the reprojection cycle.
pub fn sample_rotation(rng: &mut ChaCha8Rng) -> RotationMatrix {
    let (azimuth, elevation) = sample_angles(rng);
    RotationMatrix::from_azimuth_elevation(azimuth, elevation)
}

/// Rotate a pose: rows transform as `p' = p * R^T`.
pub fn rotate(pose: &Pose3D, rot: &RotationMatrix) -> Result<Pose3D> {
    if !rot.is_valid(1e-9) {
        return Err(Error::Contract("rotate requires an orthonormal rotation with det +1".into()));
    }
    let coords = pose.coords();
    let mut out = Matrix::zeros(NUM_KEYPOINTS, 3);
    for k in 0..NUM_KEYPOINTS {
        let p = rot.apply([coords[(k, 0)], coords[(k, 1)], coords[(k, 2)]]);
        out[(k, 0)] = p[0];
        out[(k, 1)] = p[1];
        out[(k, 2)] = p[2];
    }
    Pose3D::from_parts(out, pose.scale())
}

/// Orthographic projection: drop the depth column, inherit the scale.
///
/// The result is not re-centered or re-normalized, so coordinates of rotated
/// poses may leave [-1, 1].
pub fn project(pose: &Pose3D) -> Pose2D {
    let coords = pose.coords();
    let mut out = Matrix::zeros(NUM_KEYPOINTS, 2);
    for k in 0..NUM_KEYPOINTS {
        out[(k, 0)] = coords[(k, 0)];
        out[(k, 1)] = coords[(k, 1)];
    }
    Pose2D::from_parts(out, pose.scale()).expect("projection preserves finiteness and scale")
}

/// Anything that can predict per-keypoint depth ordinates from a 2D pose.
///
/// Implemented by trained lifter models and, in tests, by ground-truth
/// oracles.
pub trait DepthLifter {
    fn lift_depths(&mut self, pose: &Pose2D) -> Result<Vec<f64>>;
}

impl<F> DepthLifter for F
where
    F: FnMut(&Pose2D) -> Result<Vec<f64>>,
{
    fn lift_depths(&mut self, pose: &Pose2D) -> Result<Vec<f64>> {
        self(pose)
    }
}

/// One full reprojection cycle.
///
/// Lift `Y`, rotate by `R`, project to the synthetic view `Y~`, lift again,
/// rotate back by `R^-1`, and project once more. Returns `(Y~, Y_back)`; a
/// self-consistent lifter reproduces `Y` in `Y_back`.
pub fn consistency_cycle(
    pose: &Pose2D,
    lifter: &mut dyn DepthLifter,
    rot: &RotationMatrix,
) -> Result<(Pose2D, Pose2D)> {
    let depths = lifter.lift_depths(pose)?;
    let lifted = Pose3D::assemble(pose, &depths)?;
    let synthetic = project(&rotate(&lifted, rot)?);
    let depths_back = lifter.lift_depths(&synthetic)?;
    let lifted_back = Pose3D::assemble(&synthetic, &depths_back)?;
    let recovered = project(&rotate(&lifted_back, &rot.inverse())?);
    Ok((synthetic, recovered))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::skeleton::{max_normalize, root_center, KeypointSchema};
    use rand::SeedableRng;

    fn sample_pose() -> Pose2D {
        let schema = KeypointSchema::default16();
        let mut raw = Matrix::zeros(NUM_KEYPOINTS, 2);
        for k in 0..NUM_KEYPOINTS {
            raw[(k, 0)] = ((k * 7 + 3) % 11) as f64 * 20.0 - 100.0;
            raw[(k, 1)] = ((k * 5 + 1) % 13) as f64 * 25.0 - 140.0;
        }
        max_normalize(&root_center(&raw, &schema).unwrap()).unwrap()
    }

    fn sample_pose3d() -> Pose3D {
        let pose = sample_pose();
        let depths: Vec<f64> = (0..NUM_KEYPOINTS).map(|k| ((k % 5) as f64 - 2.0) * 0.2).collect();
        Pose3D::assemble(&pose, &depths).unwrap()
    }

    #[test]
    fn zero_angles_give_identity() {
        let r = RotationMatrix::from_azimuth_elevation(0.0, 0.0);
        assert_eq!(r, RotationMatrix::identity());
    }

    #[test]
    fn sampled_angles_stay_in_ranges_and_rotations_are_valid() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..100_000 {
            let (az, el) = sample_angles(&mut rng);
            assert!((AZIMUTH_RANGE.0..=AZIMUTH_RANGE.1).contains(&az));
            assert!((ELEVATION_RANGE.0..=ELEVATION_RANGE.1).contains(&el));
        }
        for _ in 0..1000 {
            let r = sample_rotation(&mut rng);
            assert!(r.is_valid(1e-9));
        }
    }

    #[test]
    fn identity_rotation_preserves_pose() {
        let p = sample_pose3d();
        let rotated = rotate(&p, &RotationMatrix::identity()).unwrap();
        assert_eq!(rotated.coords(), p.coords());
    }

    #[test]
    fn quarter_turn_cw_swaps_x_and_z() {
        // (x, y, z) -> (z, y, -x), exactly.
        let p = sample_pose3d();
        let rotated = rotate(&p, &RotationMatrix::quarter_turn_y_cw()).unwrap();
        for k in 0..NUM_KEYPOINTS {
            assert_eq!(rotated.coords()[(k, 0)], p.coords()[(k, 2)]);
            assert_eq!(rotated.coords()[(k, 1)], p.coords()[(k, 1)]);
            assert_eq!(rotated.coords()[(k, 2)], -p.coords()[(k, 0)]);
        }
        // Projection of the rotated pose is (z, y).
        let proj = project(&rotated);
        for k in 0..NUM_KEYPOINTS {
            assert_eq!(proj.x(k), p.coords()[(k, 2)]);
            assert_eq!(proj.y(k), p.coords()[(k, 1)]);
        }
    }

    #[test]
    fn quarter_turn_ccw_and_half_turn_identities() {
        let p = sample_pose3d();
        let ccw = rotate(&p, &RotationMatrix::quarter_turn_y_ccw()).unwrap();
        let half = rotate(&p, &RotationMatrix::half_turn_y()).unwrap();
        for k in 0..NUM_KEYPOINTS {
            assert_eq!(ccw.coords()[(k, 0)], -p.coords()[(k, 2)]);
            assert_eq!(ccw.coords()[(k, 1)], p.coords()[(k, 1)]);
            assert_eq!(half.coords()[(k, 0)], -p.coords()[(k, 0)]);
            assert_eq!(half.coords()[(k, 1)], p.coords()[(k, 1)]);
        }
    }

    #[test]
    fn rotation_preserves_point_norms() {
        let p = sample_pose3d();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let r = sample_rotation(&mut rng);
            let q = rotate(&p, &r).unwrap();
            for k in 0..NUM_KEYPOINTS {
                let n0: f64 = (0..3).map(|c| p.coords()[(k, c)].powi(2)).sum::<f64>().sqrt();
                let n1: f64 = (0..3).map(|c| q.coords()[(k, c)].powi(2)).sum::<f64>().sqrt();
                assert!((n0 - n1).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn rotate_then_inverse_recovers_pose() {
        let p = sample_pose3d();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let r = sample_rotation(&mut rng);
        let back = rotate(&rotate(&p, &r).unwrap(), &r.inverse()).unwrap();
        assert!(back.coords().sub(p.coords()).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn non_orthonormal_rotation_rejected() {
        let bad = RotationMatrix {
            m: [[1.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 1.0]],
        };
        assert!(rotate(&sample_pose3d(), &bad).is_err());
    }

    #[test]
    fn projection_of_assembly_recovers_pose_exactly() {
        let pose = sample_pose();
        let depths: Vec<f64> = (0..NUM_KEYPOINTS).map(|k| k as f64 * 0.03).collect();
        let p3 = Pose3D::assemble(&pose, &depths).unwrap();
        let back = project(&p3);
        assert_eq!(back.coords(), pose.coords());
        assert_eq!(back.scale(), pose.scale());
    }

    #[test]
    fn cycle_with_identity_rotation_keeps_xy() {
        let pose = sample_pose();
        // Arbitrary deterministic lifter.
        let mut lifter = |p: &Pose2D| -> crate::error::Result<Vec<f64>> {
            Ok((0..NUM_KEYPOINTS).map(|k| 0.1 * p.x(k) - 0.2 * p.y(k)).collect())
        };
        let (synthetic, _back) = consistency_cycle(&pose, &mut lifter, &RotationMatrix::identity()).unwrap();
        assert!(synthetic.coords().sub(pose.coords()).unwrap().max_abs() < 1e-15);
    }

    #[test]
    fn cycle_with_ground_truth_oracle_closes() {
        // The oracle returns the true depth of whichever view it is given,
        // reconstructed from the known 3D pose.
        let p3 = sample_pose3d();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let r = sample_rotation(&mut rng);
            let views = [p3.clone(), rotate(&p3, &r).unwrap()];
            let mut call = 0usize;
            let mut oracle = |_p: &Pose2D| -> crate::error::Result<Vec<f64>> {
                let depths = views[call.min(1)].depths();
                call += 1;
                Ok(depths)
            };
            let base = project(&p3);
            let (_synth, back) = consistency_cycle(&base, &mut oracle, &r).unwrap();
            let err = back.coords().sub(base.coords()).unwrap().max_abs();
            assert!(err < 1e-10, "cycle residual {err}");
        }
    }
}
