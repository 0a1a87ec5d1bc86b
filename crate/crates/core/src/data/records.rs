//! Line-delimited pose records.
//!
//! One JSON object per line with named joints, documented in
//! `docs/dataset_format.md`. An optional leading header object
//! (`"kind": "header"`) carries provenance such as the producing config hash
//! and is skipped during ingestion.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;
use crate::skeleton::{KeypointSchema, NUM_KEYPOINTS};

/// One pose observation: named 2D keypoints in original units, optional 3D
/// ground truth, optional action label and camera id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PoseRecord {
    pub id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub action: Option<String>,
    pub units: String,
    pub joints2d: BTreeMap<String, [f64; 2]>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub joints3d: Option<BTreeMap<String, [f64; 3]>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub camera: Option<String>,
}

impl PoseRecord {
    /// 2D coordinates as an Nx2 matrix in schema joint order.
    pub fn coords2d(&self, schema: &KeypointSchema) -> Result<Matrix> {
        let mut m = Matrix::zeros(NUM_KEYPOINTS, 2);
        for (k, joint) in schema.joints().iter().enumerate() {
            let xy = self.joints2d.get(joint).ok_or_else(|| {
                Error::Schema(format!("record '{}' is missing joint '{joint}'", self.id))
            })?;
            m[(k, 0)] = xy[0];
            m[(k, 1)] = xy[1];
        }
        if !m.is_finite() {
            return Err(Error::Schema(format!("record '{}' has non-finite coordinates", self.id)));
        }
        Ok(m)
    }

    /// 3D ground truth as an Nx3 matrix in schema joint order, if present.
    pub fn coords3d(&self, schema: &KeypointSchema) -> Result<Option<Matrix>> {
        let joints3d = match &self.joints3d {
            Some(j) => j,
            None => return Ok(None),
        };
        let mut m = Matrix::zeros(NUM_KEYPOINTS, 3);
        for (k, joint) in schema.joints().iter().enumerate() {
            let xyz = joints3d.get(joint).ok_or_else(|| {
                Error::Schema(format!("record '{}' is missing 3D joint '{joint}'", self.id))
            })?;
            m[(k, 0)] = xyz[0];
            m[(k, 1)] = xyz[1];
            m[(k, 2)] = xyz[2];
        }
        if !m.is_finite() {
            return Err(Error::Schema(format!("record '{}' has non-finite 3D coordinates", self.id)));
        }
        Ok(Some(m))
    }

    fn validate(&self, schema: &KeypointSchema, line: usize) -> Result<()> {
        for joint in schema.joints() {
            if !self.joints2d.contains_key(joint) {
                return Err(Error::Ingest {
                    line,
                    detail: format!("record '{}' is missing joint '{joint}'", self.id),
                });
            }
        }
        for name in self.joints2d.keys() {
            if schema.joint_index(name).is_none() {
                return Err(Error::Ingest {
                    line,
                    detail: format!("record '{}' has unknown joint '{name}'", self.id),
                });
            }
        }
        if let Some(j3) = &self.joints3d {
            for joint in schema.joints() {
                if !j3.contains_key(joint) {
                    return Err(Error::Ingest {
                        line,
                        detail: format!("record '{}' is missing 3D joint '{joint}'", self.id),
                    });
                }
            }
        }
        let finite2d = self.joints2d.values().all(|v| v.iter().all(|c| c.is_finite()));
        let finite3d = self
            .joints3d
            .as_ref()
            .map_or(true, |j| j.values().all(|v| v.iter().all(|c| c.is_finite())));
        if !finite2d || !finite3d {
            return Err(Error::Ingest {
                line,
                detail: format!("record '{}' has non-finite coordinates", self.id),
            });
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct FileHeader {
    kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    config_hash: Option<String>,
}

/// Read and validate a line-delimited record file. Joint presence, joint
/// names, finiteness, and per-file unit consistency are all checked; errors
/// carry the offending line number.
pub fn ingest(path: impl AsRef<Path>, schema: &KeypointSchema) -> Result<Vec<PoseRecord>> {
    let file = std::fs::File::open(path.as_ref())?;
    let reader = BufReader::new(file);
    let mut records = Vec::new();
    let mut units: Option<String> = None;
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        if let Ok(header) = serde_json::from_str::<FileHeader>(&line) {
            if header.kind == "header" {
                continue;
            }
        }
        let rec: PoseRecord = serde_json::from_str(&line).map_err(|e| Error::Ingest {
            line: line_no,
            detail: format!("malformed record: {e}"),
        })?;
        rec.validate(schema, line_no)?;
        match &units {
            None => units = Some(rec.units.clone()),
            Some(u) if *u != rec.units => {
                return Err(Error::Ingest {
                    line: line_no,
                    detail: format!("unit mismatch: file uses '{u}', record '{}' uses '{}'", rec.id, rec.units),
                })
            }
            _ => {}
        }
        records.push(rec);
    }
    Ok(records)
}

/// Write records as one JSON object per line, optionally preceded by a
/// header object carrying the producing config hash.
pub fn emit(path: impl AsRef<Path>, records: &[PoseRecord], config_hash: Option<&str>) -> Result<()> {
    let mut file = std::fs::File::create(path.as_ref())?;
    if let Some(hash) = config_hash {
        let header = FileHeader {
            kind: "header".into(),
            config_hash: Some(hash.to_string()),
        };
        writeln!(file, "{}", serde_json::to_string(&header)?)?;
    }
    for rec in records {
        writeln!(file, "{}", serde_json::to_string(rec)?)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample_record(schema: &KeypointSchema, id: &str) -> PoseRecord {
        let mut joints2d = BTreeMap::new();
        let mut joints3d = BTreeMap::new();
        for (k, j) in schema.joints().iter().enumerate() {
            joints2d.insert(j.clone(), [k as f64 * 10.1, k as f64 * -3.3 + 50.0]);
            joints3d.insert(j.clone(), [k as f64 * 10.1, k as f64 * -3.3 + 50.0, k as f64 * 7.7]);
        }
        PoseRecord {
            id: id.into(),
            action: Some("walk".into()),
            units: "mm".into(),
            joints2d,
            joints3d: Some(joints3d),
            camera: None,
        }
    }

    #[test]
    fn write_then_ingest_roundtrip_is_bit_exact() {
        let schema = KeypointSchema::default16();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("poses.jsonl");
        let records: Vec<PoseRecord> = (0..10).map(|i| sample_record(&schema, &format!("p{i}"))).collect();
        emit(&path, &records, Some("deadbeef")).unwrap();
        let back = ingest(&path, &schema).unwrap();
        assert_eq!(back.len(), 10);
        assert_eq!(back, records);
    }

    #[test]
    fn missing_joint_is_reported_with_line_number() {
        let schema = KeypointSchema::default16();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("poses.jsonl");
        let mut rec = sample_record(&schema, "broken");
        rec.joints2d.remove("left_wrist");
        emit(&path, &[sample_record(&schema, "ok"), rec], None).unwrap();
        let err = ingest(&path, &schema).unwrap_err();
        match err {
            Error::Ingest { line, detail } => {
                assert_eq!(line, 2);
                assert!(detail.contains("left_wrist"), "{detail}");
            }
            other => panic!("expected ingest error, got {other}"),
        }
    }

    #[test]
    fn malformed_line_is_reported() {
        let schema = KeypointSchema::default16();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("poses.jsonl");
        std::fs::write(&path, "{not json\n").unwrap();
        let err = ingest(&path, &schema).unwrap_err();
        assert!(matches!(err, Error::Ingest { line: 1, .. }));
    }

    #[test]
    fn unit_mismatch_rejected() {
        let schema = KeypointSchema::default16();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("poses.jsonl");
        let a = sample_record(&schema, "a");
        let mut b = sample_record(&schema, "b");
        b.units = "px".into();
        emit(&path, &[a, b], None).unwrap();
        let err = ingest(&path, &schema).unwrap_err();
        assert!(matches!(err, Error::Ingest { line: 2, .. }));
    }
}
