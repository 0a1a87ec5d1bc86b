//! Command-line surface: synthesize data, train, evaluate, probe
//! correlations, and run the multi-seed stability study.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use poselift::checkpoint::Checkpoint;
use poselift::data::{emit, ingest, prepare, synthesize, SynthConfig};
use poselift::error::Error;
use poselift::evaluation::{evaluate_model, EvalSet};
use poselift::models::Representation;
use poselift::provenance::config_hash_hex;
use poselift::skeleton::KeypointSchema;
use poselift::studies::{default_scale_grid, probe_correlations, stability_study};
use poselift::training::{train, LossWeights, TrainConfig};

/// Output directory override; when set, relative output paths are resolved
/// beneath it.
const OUT_DIR_ENV: &str = "POSELIFT_OUT_DIR";

#[derive(Parser)]
#[command(name = "poselift", version, about = "Unsupervised adversarial 2D-to-3D pose lifting")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct SchemaArg {
    /// Keypoint schema file; the built-in 16-joint schema when omitted.
    #[arg(long, global = true)]
    schema: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with 3D ground truth.
    Synth {
        /// Generator config (TOML); defaults when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output record file (one JSON object per line).
        #[arg(long)]
        out: PathBuf,
        /// Override the configured pose count.
        #[arg(long)]
        count: Option<usize>,
        /// Override the configured seed.
        #[arg(long)]
        seed: Option<u64>,
        #[command(flatten)]
        schema: SchemaArg,
    },
    /// Train a lifter adversarially.
    Train {
        /// Training poses (record file).
        #[arg(long)]
        data: PathBuf,
        /// Held-out poses with 3D ground truth for per-epoch evaluation.
        #[arg(long)]
        eval_data: Option<PathBuf>,
        /// Pose representation: full, sr-lt, ind-lt, sr-5, ind-5.
        #[arg(long)]
        rep: Option<String>,
        /// Full config file (TOML); flags below override its fields.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Named profile when no config file is given: desk or paper.
        #[arg(long, default_value = "desk")]
        profile: String,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        batch: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Loss weights as `w_adv,w_reproj,w_90`.
        #[arg(long)]
        weights: Option<String>,
        /// Write an intermediate checkpoint every N epochs.
        #[arg(long)]
        checkpoint_every: Option<usize>,
        /// Run directory (run.jsonl, checkpoint.bin).
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        schema: SchemaArg,
    },
    /// Evaluate a checkpoint against ground truth.
    Eval {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Report directory (report.csv, per_pose.csv).
        #[arg(long)]
        report: PathBuf,
        /// Align with rotation+translation only (no uniform scale).
        #[arg(long)]
        no_scale: bool,
        #[command(flatten)]
        schema: SchemaArg,
    },
    /// Keypoint-correlation probe over a trained checkpoint.
    Probe {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Output directory (sensitivity.csv and pair curves).
        #[arg(long)]
        out: PathBuf,
        /// Probe at most this many poses (a deterministic prefix).
        #[arg(long)]
        limit: Option<usize>,
        /// Pair curves to emit, e.g. `left_elbow:right_ankle,left_ankle:left_ankle`.
        #[arg(long)]
        pairs: Option<String>,
        #[command(flatten)]
        schema: SchemaArg,
    },
    /// Multi-seed stability study.
    Stability {
        /// Study config (TOML): data paths, window, and the training config.
        #[arg(long)]
        config: PathBuf,
        /// Comma-separated seed list overriding the config.
        #[arg(long)]
        seeds: Option<String>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        schema: SchemaArg,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

fn resolve_out(path: PathBuf) -> PathBuf {
    match std::env::var_os(OUT_DIR_ENV) {
        Some(base) if path.is_relative() => Path::new(&base).join(path),
        _ => path,
    }
}

fn load_schema(arg: &SchemaArg) -> poselift::Result<KeypointSchema> {
    match &arg.schema {
        Some(path) => KeypointSchema::from_path(path),
        None => Ok(KeypointSchema::default16()),
    }
}

fn parse_weights(text: &str) -> poselift::Result<LossWeights> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 3 {
        return Err(Error::Config(format!("--weights expects w1,w2,w3, got '{text}'")));
    }
    let parse = |s: &str| -> poselift::Result<f64> {
        s.trim()
            .parse::<f64>()
            .map_err(|_| Error::Config(format!("invalid weight '{s}'")))
    };
    LossWeights::new(parse(parts[0])?, parse(parts[1])?, parse(parts[2])?)
}

fn parse_seeds(text: &str) -> poselift::Result<Vec<u64>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<u64>()
                .map_err(|_| Error::Config(format!("invalid seed '{s}'")))
        })
        .collect()
}

fn load_eval_set(path: &Path, schema: &KeypointSchema) -> poselift::Result<EvalSet> {
    let records = ingest(path, schema)?;
    let (ds, warnings) = prepare(&records, schema)?;
    for w in warnings {
        eprintln!("warning: {w}");
    }
    EvalSet::from_dataset(&ds)
}

#[derive(serde::Deserialize)]
struct StabilityFileConfig {
    data: PathBuf,
    eval_data: PathBuf,
    seeds: Vec<u64>,
    window: [usize; 2],
    train: TrainConfig,
}

fn run(cli: Cli) -> poselift::Result<()> {
    match cli.command {
        Command::Synth {
            config,
            out,
            count,
            seed,
            schema,
        } => {
            let mut cfg = match config {
                Some(path) => SynthConfig::from_toml_str(&std::fs::read_to_string(path)?)?,
                None => SynthConfig::default(),
            };
            if let Some(c) = count {
                cfg.pose_count = c;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            cfg.validate()?;
            let schema = load_schema(&schema)?;
            let records = synthesize(&cfg)?;
            // Validate the generated records against the schema before writing.
            for rec in &records {
                rec.coords2d(&schema)?;
            }
            let out = resolve_out(out);
            if let Some(parent) = out.parent() {
                std::fs::create_dir_all(parent)?;
            }
            emit(&out, &records, Some(&config_hash_hex(&cfg)))?;
            println!("wrote {} records to {}", records.len(), out.display());
            Ok(())
        }
        Command::Train {
            data,
            eval_data,
            rep,
            config,
            profile,
            epochs,
            batch,
            lr,
            seed,
            weights,
            checkpoint_every,
            out,
            schema,
        } => {
            let schema = load_schema(&schema)?;
            let mut cfg = match (&config, profile.as_str()) {
                (Some(path), _) => TrainConfig::from_toml_str(&std::fs::read_to_string(path)?)?,
                (None, "desk") => TrainConfig::desk_profile(Representation::Full, 0),
                (None, "paper") => TrainConfig::paper_profile(Representation::Full, 0),
                (None, other) => {
                    return Err(Error::Config(format!(
                        "unknown profile '{other}' (expected desk or paper)"
                    )))
                }
            };
            if let Some(r) = rep {
                cfg.representation = Representation::from_id(&r)?;
            }
            if let Some(e) = epochs {
                cfg.epochs = e;
            }
            if let Some(b) = batch {
                cfg.batch_size = b;
            }
            if let Some(l) = lr {
                cfg.learning_rate = l;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(w) = weights {
                cfg.weights = parse_weights(&w)?;
            }
            if let Some(c) = checkpoint_every {
                cfg.checkpoint_every = c;
            }
            cfg.validate()?;

            let records = ingest(&data, &schema)?;
            let (ds, warnings) = prepare(&records, &schema)?;
            for w in warnings {
                eprintln!("warning: {w}");
            }
            let eval = match &eval_data {
                Some(path) => Some(load_eval_set(path, &schema)?),
                None => None,
            };
            let out = resolve_out(out);
            let artifacts = train(&ds.poses2d(), eval.as_ref(), &cfg, &schema, Some(&out))?;
            let last = artifacts.record.epochs.last().expect("at least one epoch");
            println!(
                "trained {} for {} epochs (seed {}): d_loss {:.6}, g_adv {:.6}{}",
                cfg.representation.id(),
                cfg.epochs,
                cfg.seed,
                last.d_loss,
                last.g_adv,
                match last.eval_mpjpe {
                    Some(m) => format!(", eval MPJPE {m:.3}"),
                    None => String::new(),
                }
            );
            println!("run record: {}", out.join("run.jsonl").display());
            Ok(())
        }
        Command::Eval {
            ckpt,
            data,
            report,
            no_scale,
            schema,
        } => {
            let schema = load_schema(&schema)?;
            let checkpoint = Checkpoint::load(&ckpt)?;
            let model = checkpoint.restore_lifter(&schema)?;
            let eval = load_eval_set(&data, &schema)?;
            let metrics = evaluate_model(&model, &eval, !no_scale)?;
            let hash = hex32(&checkpoint.config_hash);
            let report = resolve_out(report);
            std::fs::create_dir_all(&report)?;
            std::fs::write(report.join("report.csv"), metrics.to_csv(&hash))?;
            std::fs::write(report.join("per_pose.csv"), metrics.per_pose_csv(&hash))?;
            print!("{}", metrics.render_table());
            println!("report: {}", report.join("report.csv").display());
            Ok(())
        }
        Command::Probe {
            ckpt,
            data,
            out,
            limit,
            pairs,
            schema,
        } => {
            let schema = load_schema(&schema)?;
            let checkpoint = Checkpoint::load(&ckpt)?;
            let model = checkpoint.restore_lifter(&schema)?;
            let records = ingest(&data, &schema)?;
            let (ds, _) = prepare(&records, &schema)?;
            let mut poses = ds.poses2d();
            if let Some(n) = limit {
                poses.truncate(n);
            }
            let grid = default_scale_grid();
            let tensor = probe_correlations(&model, &poses, &grid)?;
            let hash = hex32(&checkpoint.config_hash);
            let out = resolve_out(out);
            std::fs::create_dir_all(&out)?;
            std::fs::write(out.join("sensitivity.csv"), tensor.to_long_csv(&hash))?;
            if let Some(pair_list) = pairs {
                for pair in pair_list.split(',') {
                    let (a, b) = pair
                        .split_once(':')
                        .ok_or_else(|| Error::Config(format!("pair '{pair}' must be keypoint:ordinate")))?;
                    let ka = schema
                        .joint_index(a.trim())
                        .ok_or_else(|| Error::Config(format!("unknown joint '{a}'")))?;
                    let kb = schema
                        .joint_index(b.trim())
                        .ok_or_else(|| Error::Config(format!("unknown joint '{b}'")))?;
                    let name = format!("curve_{}_{}.csv", a.trim(), b.trim());
                    std::fs::write(out.join(name), tensor.pair_curve_csv(ka, kb, &hash))?;
                }
            }
            println!("probe over {} poses: {}", poses.len(), out.join("sensitivity.csv").display());
            Ok(())
        }
        Command::Stability {
            config,
            seeds,
            out,
            schema,
        } => {
            let schema = load_schema(&schema)?;
            let file: StabilityFileConfig = toml::from_str(&std::fs::read_to_string(&config)?)
                .map_err(|e| Error::Toml(e.to_string()))?;
            let seed_list = match seeds {
                Some(s) => parse_seeds(&s)?,
                None => file.seeds.clone(),
            };
            file.train.validate()?;
            let records = ingest(&file.data, &schema)?;
            let (ds, _) = prepare(&records, &schema)?;
            let eval = load_eval_set(&file.eval_data, &schema)?;
            let out = resolve_out(out);
            std::fs::create_dir_all(&out)?;
            let summary = stability_study(
                &file.train,
                &seed_list,
                &ds.poses2d(),
                &eval,
                (file.window[0], file.window[1]),
                &schema,
                Some(&out),
            )?;
            let hash = config_hash_hex(&file.train);
            std::fs::write(out.join("curves.csv"), summary.curves_csv(&hash))?;
            std::fs::write(out.join("summary.csv"), summary.summary_csv(&hash))?;
            print!("{}", summary.render_table());
            println!("summary: {}", out.join("summary.csv").display());
            Ok(())
        }
    }
}

fn hex32(bytes: &[u8; 32]) -> String {
    let mut out = String::with_capacity(64);
    for b in bytes {
        out.push_str(&format!("{b:02x}"));
    }
    out
}
