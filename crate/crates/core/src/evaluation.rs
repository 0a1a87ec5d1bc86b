//! Rigid-alignment MPJPE, PCK3D, AUC, and report emission.
//!
//! Predictions are upscaled by the retained 2D normalizing factor back to
//! original units, then aligned to ground truth with a closed-form
//! similarity transform (rotation, translation, and uniform scale by
//! default; pure rigid with `with_scale = false`) before the per-joint
//! Euclidean errors are taken.

use std::collections::BTreeMap;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::models::LifterModel;
use crate::numerics::Matrix;
use crate::skeleton::{Pose2D, Pose3D, NUM_KEYPOINTS};

/// Default PCK3D threshold, millimeters.
pub const PCK_THRESHOLD_MM: f64 = 150.0;

/// 31-point AUC grid: 0..=150 mm in 5 mm steps.
pub fn default_auc_grid() -> Vec<f64> {
    (0..=30).map(|i| i as f64 * 5.0).collect()
}

/// Multiply normalized coordinates back into original units.
pub fn upscale(pred: &Pose3D) -> Result<Pose3D> {
    if !(pred.scale() > 0.0) {
        return Err(Error::Normalization(format!(
            "upscale requires a positive stored scale, got {}",
            pred.scale()
        )));
    }
    Pose3D::from_parts(pred.coords().scale(pred.scale()), pred.scale())
}

/// Closed-form orthogonal-Procrustes alignment of `pred` onto `gt`
/// (Nx3 each): least-squares rotation + translation, plus uniform scale when
/// `with_scale` is set. Returns the transformed copy of `pred`.
pub fn rigid_align(pred: &Matrix, gt: &Matrix, with_scale: bool) -> Result<Matrix> {
    if pred.shape() != gt.shape() || pred.cols() != 3 {
        return Err(Error::Dimension {
            op: "rigid_align",
            detail: format!("{:?} vs {:?}", pred.shape(), gt.shape()),
        });
    }
    let n = pred.rows() as f64;
    let centroid = |m: &Matrix| -> [f64; 3] {
        let mut c = [0.0; 3];
        for r in 0..m.rows() {
            for (j, cj) in c.iter_mut().enumerate() {
                *cj += m[(r, j)];
            }
        }
        c.map(|v| v / n)
    };
    let cp = centroid(pred);
    let cg = centroid(gt);

    // Cross-covariance of the centered clouds and the pred spread.
    let mut h = Matrix3::<f64>::zeros();
    let mut pred_var = 0.0;
    for r in 0..pred.rows() {
        let p = Vector3::new(pred[(r, 0)] - cp[0], pred[(r, 1)] - cp[1], pred[(r, 2)] - cp[2]);
        let g = Vector3::new(gt[(r, 0)] - cg[0], gt[(r, 1)] - cg[1], gt[(r, 2)] - cg[2]);
        h += p * g.transpose();
        pred_var += p.norm_squared();
    }
    if pred_var < 1e-12 {
        return Err(Error::Alignment("degenerate prediction: zero spread".into()));
    }
    let svd = h.svd(true, true);
    let u = svd.u.ok_or_else(|| Error::Alignment("SVD failed".into()))?;
    let v_t = svd.v_t.ok_or_else(|| Error::Alignment("SVD failed".into()))?;
    let sv = svd.singular_values;
    if sv[1] < 1e-12 * sv[0].max(1e-300) {
        return Err(Error::Alignment("rank-deficient pose set: alignment is ill-posed".into()));
    }
    // Proper rotation only: flip the smallest axis if a reflection won.
    let d = (v_t.transpose() * u.transpose()).determinant().signum();
    let correction = Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d));
    let rot = v_t.transpose() * correction * u.transpose();
    let scale = if with_scale {
        (sv[0] + sv[1] + d * sv[2]) / pred_var
    } else {
        1.0
    };

    let mut out = Matrix::zeros(pred.rows(), 3);
    for r in 0..pred.rows() {
        let p = Vector3::new(pred[(r, 0)] - cp[0], pred[(r, 1)] - cp[1], pred[(r, 2)] - cp[2]);
        let q = rot * p * scale;
        out[(r, 0)] = q[0] + cg[0];
        out[(r, 1)] = q[1] + cg[1];
        out[(r, 2)] = q[2] + cg[2];
    }
    Ok(out)
}

/// Per-joint Euclidean distances between two Nx3 point sets.
pub fn per_joint_errors(pred: &Matrix, gt: &Matrix) -> Result<Vec<f64>> {
    if pred.shape() != gt.shape() || pred.cols() != 3 {
        return Err(Error::Dimension {
            op: "per_joint_errors",
            detail: format!("{:?} vs {:?}", pred.shape(), gt.shape()),
        });
    }
    Ok((0..pred.rows())
        .map(|r| {
            ((pred[(r, 0)] - gt[(r, 0)]).powi(2)
                + (pred[(r, 1)] - gt[(r, 1)]).powi(2)
                + (pred[(r, 2)] - gt[(r, 2)]).powi(2))
            .sqrt()
        })
        .collect())
}

/// Mean per-joint position error.
pub fn mpjpe(pred: &Matrix, gt: &Matrix) -> Result<f64> {
    let errors = per_joint_errors(pred, gt)?;
    Ok(errors.iter().sum::<f64>() / errors.len() as f64)
}

/// PCK3D (percent of joints within `threshold`) and AUC (mean PCK fraction
/// over the grid) from pooled per-joint errors.
pub fn pck3d_auc(errors: &[f64], threshold: f64, grid: &[f64]) -> Result<(f64, f64)> {
    if errors.is_empty() {
        return Err(Error::Contract("pck3d_auc requires a non-empty error set".into()));
    }
    if grid.is_empty() {
        return Err(Error::Contract("pck3d_auc requires a non-empty threshold grid".into()));
    }
    let frac_within = |t: f64| errors.iter().filter(|&&e| e <= t).count() as f64 / errors.len() as f64;
    let pck = 100.0 * frac_within(threshold);
    let auc = grid.iter().map(|&t| frac_within(t)).sum::<f64>() / grid.len() as f64;
    Ok((pck, auc))
}

/// Evaluation inputs: normalized poses with ground-truth 3D in original
/// units, plus optional action labels for the per-action breakdown.
#[derive(Debug, Clone)]
pub struct EvalSet {
    pub poses: Vec<Pose2D>,
    pub gt3d: Vec<Matrix>,
    pub actions: Vec<Option<String>>,
}

impl EvalSet {
    pub fn new(poses: Vec<Pose2D>, gt3d: Vec<Matrix>, actions: Vec<Option<String>>) -> Result<Self> {
        if poses.len() != gt3d.len() || poses.len() != actions.len() {
            return Err(Error::Contract("EvalSet field lengths must match".into()));
        }
        if poses.is_empty() {
            return Err(Error::Contract("EvalSet must be non-empty".into()));
        }
        Ok(EvalSet { poses, gt3d, actions })
    }

    pub fn from_dataset(ds: &crate::data::Dataset) -> Result<Self> {
        let mut poses = Vec::new();
        let mut gt3d = Vec::new();
        let mut actions = Vec::new();
        for p in &ds.poses {
            let gt = p.gt3d.clone().ok_or_else(|| {
                Error::Contract(format!("pose '{}' has no 3D ground truth; cannot evaluate", p.id))
            })?;
            poses.push(p.pose.clone());
            gt3d.push(gt);
            actions.push(p.action.clone());
        }
        EvalSet::new(poses, gt3d, actions)
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }
}

/// Aggregated evaluation results.
#[derive(Debug, Clone)]
pub struct MetricsReport {
    pub pose_count: usize,
    pub per_pose_mpjpe: Vec<f64>,
    pub aggregate_mpjpe: f64,
    pub per_action: BTreeMap<String, f64>,
    pub pck3d: f64,
    pub auc: f64,
}

impl MetricsReport {
    /// Machine-readable summary CSV. The first line embeds the producing
    /// config hash.
    pub fn to_csv(&self, config_hash: &str) -> String {
        let mut out = String::new();
        out.push_str(&format!("# config_hash={config_hash}\n"));
        out.push_str("metric,value\n");
        out.push_str(&format!("pose_count,{}\n", self.pose_count));
        out.push_str(&format!("mpjpe,{}\n", self.aggregate_mpjpe));
        out.push_str(&format!("pck3d,{}\n", self.pck3d));
        out.push_str(&format!("auc,{}\n", self.auc));
        for (action, v) in &self.per_action {
            out.push_str(&format!("mpjpe[{action}],{v}\n"));
        }
        out
    }

    /// Per-pose CSV (index and MPJPE).
    pub fn per_pose_csv(&self, config_hash: &str) -> String {
        let mut out = String::new();
        out.push_str(&format!("# config_hash={config_hash}\n"));
        out.push_str("pose,mpjpe\n");
        for (i, v) in self.per_pose_mpjpe.iter().enumerate() {
            out.push_str(&format!("{i},{v}\n"));
        }
        out
    }

    /// Human-readable table.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("{:<16} {:>12}\n", "metric", "value"));
        out.push_str(&format!("{:<16} {:>12}\n", "poses", self.pose_count));
        out.push_str(&format!("{:<16} {:>12.3}\n", "MPJPE", self.aggregate_mpjpe));
        out.push_str(&format!("{:<16} {:>12.2}\n", "PCK3D", self.pck3d));
        out.push_str(&format!("{:<16} {:>12.4}\n", "AUC", self.auc));
        for (action, v) in &self.per_action {
            out.push_str(&format!("{:<16} {:>12.3}\n", format!("MPJPE[{action}]"), v));
        }
        out
    }
}

/// Lift, assemble, upscale, align, and score a whole evaluation set.
pub fn evaluate_model(model: &LifterModel, eval: &EvalSet, with_scale: bool) -> Result<MetricsReport> {
    let (x, y, _) = crate::skeleton::stack_poses(&eval.poses);
    let z = model.lift_batch(&x, &y)?;
    let mut per_pose = Vec::with_capacity(eval.len());
    let mut pooled_errors = Vec::with_capacity(eval.len() * NUM_KEYPOINTS);
    let mut action_sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for (i, pose) in eval.poses.iter().enumerate() {
        let depths: Vec<f64> = (0..NUM_KEYPOINTS).map(|k| z[(i, k)]).collect();
        let pred = upscale(&Pose3D::assemble(pose, &depths)?)?;
        let aligned = rigid_align(pred.coords(), &eval.gt3d[i], with_scale)?;
        let errors = per_joint_errors(&aligned, &eval.gt3d[i])?;
        let pose_mpjpe = errors.iter().sum::<f64>() / errors.len() as f64;
        per_pose.push(pose_mpjpe);
        pooled_errors.extend(errors);
        if let Some(action) = &eval.actions[i] {
            let entry = action_sums.entry(action.clone()).or_insert((0.0, 0));
            entry.0 += pose_mpjpe;
            entry.1 += 1;
        }
    }
    let aggregate = per_pose.iter().sum::<f64>() / per_pose.len() as f64;
    let (pck3d, auc) = pck3d_auc(&pooled_errors, PCK_THRESHOLD_MM, &default_auc_grid())?;
    let per_action = action_sums
        .into_iter()
        .map(|(k, (sum, n))| (k, sum / n as f64))
        .collect();
    Ok(MetricsReport {
        pose_count: per_pose.len(),
        per_pose_mpjpe: per_pose,
        aggregate_mpjpe: aggregate,
        per_action,
        pck3d,
        auc,
    })
}
