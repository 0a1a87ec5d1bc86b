//! Multi-seed stability harness.
//!
//! Trains one run per seed (in parallel; each run is an isolated RNG world),
//! collects the per-epoch evaluation curves, and reports three cross-seed
//! statistics: final-epoch mean±std, mean±std of per-seed averages over a
//! configured epoch window, and mean±std of per-seed minima. Aborted runs are
//! flagged, excluded from the statistics, and reported.

use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::evaluation::EvalSet;
use crate::skeleton::{KeypointSchema, Pose2D};
use crate::training::{train, TrainConfig};

#[derive(Debug, Clone)]
pub struct SeedOutcome {
    pub seed: u64,
    /// Per-epoch evaluation MPJPE.
    pub curve: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityStats {
    pub mean: f64,
    pub std: f64,
}

fn stats(values: &[f64]) -> StabilityStats {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let std = if values.len() < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    StabilityStats { mean, std }
}

#[derive(Debug, Clone)]
pub struct StabilitySummary {
    pub outcomes: Vec<SeedOutcome>,
    /// Seeds whose runs aborted, with the error text.
    pub excluded: Vec<(u64, String)>,
    /// Inclusive 1-based epoch window for the windowed statistic.
    pub window: (usize, usize),
    pub final_epoch: StabilityStats,
    pub windowed: StabilityStats,
    pub min_epoch: StabilityStats,
}

impl StabilitySummary {
    pub fn curves_csv(&self, config_hash: &str) -> String {
        let mut out = String::new();
        out.push_str(&format!("# config_hash={config_hash}\n"));
        out.push_str("epoch,seed,mpjpe\n");
        for outcome in &self.outcomes {
            for (i, v) in outcome.curve.iter().enumerate() {
                out.push_str(&format!("{},{},{v}\n", i + 1, outcome.seed));
            }
        }
        out
    }

    pub fn summary_csv(&self, config_hash: &str) -> String {
        let mut out = String::new();
        out.push_str(&format!("# config_hash={config_hash}\n"));
        out.push_str("statistic,mean,std\n");
        out.push_str(&format!("final_epoch,{},{}\n", self.final_epoch.mean, self.final_epoch.std));
        out.push_str(&format!(
            "window_{}_{},{},{}\n",
            self.window.0, self.window.1, self.windowed.mean, self.windowed.std
        ));
        out.push_str(&format!("min_epoch,{},{}\n", self.min_epoch.mean, self.min_epoch.std));
        for (seed, err) in &self.excluded {
            out.push_str(&format!("excluded_seed_{seed},,{err}\n"));
        }
        out
    }

    pub fn render_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("{:<24} {:>10} {:>10}\n", "statistic", "mean", "std"));
        out.push_str(&format!(
            "{:<24} {:>10.3} {:>10.3}\n",
            "final epoch", self.final_epoch.mean, self.final_epoch.std
        ));
        out.push_str(&format!(
            "{:<24} {:>10.3} {:>10.3}\n",
            format!("epochs {}..={}", self.window.0, self.window.1),
            self.windowed.mean,
            self.windowed.std
        ));
        out.push_str(&format!(
            "{:<24} {:>10.3} {:>10.3}\n",
            "best epoch", self.min_epoch.mean, self.min_epoch.std
        ));
        for (seed, _) in &self.excluded {
            out.push_str(&format!("seed {seed}: aborted, excluded\n"));
        }
        out
    }
}

/// Train one run per seed and summarize the evaluation curves.
///
/// `out_dir`, when given, receives one `seed<N>/` run directory per seed.
pub fn stability_study(
    base: &TrainConfig,
    seeds: &[u64],
    poses: &[Pose2D],
    eval: &EvalSet,
    window: (usize, usize),
    schema: &KeypointSchema,
    out_dir: Option<&Path>,
) -> Result<StabilitySummary> {
    if seeds.len() < 2 {
        return Err(Error::Config("stability study requires at least 2 seeds".into()));
    }
    if window.0 < 1 || window.1 > base.epochs || window.0 > window.1 {
        return Err(Error::Config(format!(
            "window {:?} must lie within 1..={}",
            window, base.epochs
        )));
    }
    let mut cfg = base.clone();
    // Curves need a value at every epoch.
    cfg.eval_every = 1;

    let results: Vec<(u64, std::result::Result<Vec<f64>, String>)> = seeds
        .par_iter()
        .map(|&seed| {
            let mut run_cfg = cfg.clone();
            run_cfg.seed = seed;
            let run_dir = out_dir.map(|d| d.join(format!("seed{seed}")));
            let outcome = train(poses, Some(eval), &run_cfg, schema, run_dir.as_deref())
                .map_err(|e| e.to_string())
                .and_then(|artifacts| {
                    artifacts
                        .record
                        .eval_curve()
                        .ok_or_else(|| "run produced no evaluation curve".to_string())
                });
            (seed, outcome)
        })
        .collect();

    let mut outcomes = Vec::new();
    let mut excluded = Vec::new();
    for (seed, res) in results {
        match res {
            Ok(curve) => outcomes.push(SeedOutcome { seed, curve }),
            Err(err) => excluded.push((seed, err)),
        }
    }
    if outcomes.is_empty() {
        return Err(Error::Contract("every stability run aborted".into()));
    }

    let finals: Vec<f64> = outcomes.iter().map(|o| *o.curve.last().expect("non-empty curve")).collect();
    let windowed: Vec<f64> = outcomes
        .iter()
        .map(|o| {
            let slice = &o.curve[window.0 - 1..window.1];
            slice.iter().sum::<f64>() / slice.len() as f64
        })
        .collect();
    let minima: Vec<f64> = outcomes
        .iter()
        .map(|o| o.curve.iter().copied().fold(f64::INFINITY, f64::min))
        .collect();

    Ok(StabilitySummary {
        outcomes,
        excluded,
        window,
        final_epoch: stats(&finals),
        windowed: stats(&windowed),
        min_epoch: stats(&minima),
    })
}
