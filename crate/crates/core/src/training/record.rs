//! Per-run training records, serialized as line-delimited JSON.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::training::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub d_loss: f64,
    pub g_adv: f64,
    /// Total generator loss per predictor unit (sub-network for independent
    /// representations, the whole lifter otherwise).
    pub g_losses: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval_mpjpe: Option<f64>,
}

/// Everything one training run produced: config snapshot, per-epoch losses,
/// and the checkpoints it wrote.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub seed: u64,
    pub config_hash: String,
    pub config: TrainConfig,
    pub epochs: Vec<EpochRecord>,
    pub checkpoints: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum RecordLine {
    Header {
        seed: u64,
        config_hash: String,
        config: TrainConfig,
    },
    Epoch {
        #[serde(flatten)]
        record: EpochRecord,
    },
    Footer {
        checkpoints: Vec<String>,
    },
}

impl RunRecord {
    pub fn validate(&self, checkpoint_dir: Option<&Path>) -> Result<()> {
        for pair in self.epochs.windows(2) {
            if pair[1].epoch <= pair[0].epoch {
                return Err(Error::Contract(format!(
                    "epochs must be strictly increasing: {} then {}",
                    pair[0].epoch, pair[1].epoch
                )));
            }
        }
        if let Some(dir) = checkpoint_dir {
            for ckpt in &self.checkpoints {
                if !dir.join(ckpt).exists() {
                    return Err(Error::Contract(format!("referenced checkpoint '{ckpt}' does not exist")));
                }
            }
        }
        Ok(())
    }

    pub fn save_jsonl(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut file = std::fs::File::create(path.as_ref())?;
        writeln!(
            file,
            "{}",
            serde_json::to_string(&RecordLine::Header {
                seed: self.seed,
                config_hash: self.config_hash.clone(),
                config: self.config.clone(),
            })?
        )?;
        for rec in &self.epochs {
            writeln!(file, "{}", serde_json::to_string(&RecordLine::Epoch { record: rec.clone() })?)?;
        }
        writeln!(
            file,
            "{}",
            serde_json::to_string(&RecordLine::Footer {
                checkpoints: self.checkpoints.clone(),
            })?
        )?;
        Ok(())
    }

    pub fn load_jsonl(path: impl AsRef<Path>) -> Result<Self> {
        let file = std::fs::File::open(path.as_ref())?;
        let reader = BufReader::new(file);
        let mut header: Option<(u64, String, TrainConfig)> = None;
        let mut epochs = Vec::new();
        let mut checkpoints = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let parsed: RecordLine = serde_json::from_str(&line).map_err(|e| Error::Ingest {
                line: i + 1,
                detail: format!("malformed run record line: {e}"),
            })?;
            match parsed {
                RecordLine::Header {
                    seed,
                    config_hash,
                    config,
                } => header = Some((seed, config_hash, config)),
                RecordLine::Epoch { record } => epochs.push(record),
                RecordLine::Footer { checkpoints: c } => checkpoints = c,
            }
        }
        let (seed, config_hash, config) =
            header.ok_or_else(|| Error::Contract("run record has no header line".into()))?;
        let record = RunRecord {
            seed,
            config_hash,
            config,
            epochs,
            checkpoints,
        };
        record.validate(None)?;
        Ok(record)
    }

    /// Per-epoch evaluation curve, when an evaluation set was supplied.
    pub fn eval_curve(&self) -> Option<Vec<f64>> {
        let curve: Option<Vec<f64>> = self.epochs.iter().map(|e| e.eval_mpjpe).collect();
        curve
    }
}
