use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use anyhow::{bail, Context, Result};
use avil_core::demos::{generate_demos, load_dataset, record_episode, validate_dataset, write_dataset, write_episode, DemoConfig, DEFAULT_K, DEFAULT_M};
use avil_core::eval::{mpc_execute, run_matrix, summary_markdown, write_report, MatrixConfig, NetPolicy};
use avil_core::net::{load_checkpoint, save_checkpoint, NetConfig};
use avil_core::sim::{make_scene, BowlKind, Camera, FoodKind, SceneConfig};
use avil_core::train::{train_attention, train_policy, TrainConfig, TrainLog};
use avil_service::ServiceConfig;
use clap::{Args, Parser, Subcommand};
use serde_json::json;
use tracing::info;

#[derive(Parser)]
#[command(name = "avil", version, about = "Visual imitation learning for spoon scooping")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Record scripted demonstrations into a dataset directory.
    GenDemos {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 100)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "64x64", value_parser = parse_hw)]
        hw: (usize, usize),
        #[arg(long, default_value = "TG")]
        bowl: BowlKind,
        #[arg(long, default_value = "granular")]
        food: FoodKind,
        #[arg(long, default_value_t = DEFAULT_K)]
        k: usize,
        #[arg(long, default_value_t = DEFAULT_M)]
        m: usize,
        /// Leave distractors out of every episode.
        #[arg(long)]
        no_distractors: bool,
    },
    /// Check a dataset's manifest, checksums and sample count.
    Validate {
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Phase 1: fit the attention module to the bowl masks.
    TrainAttention {
        #[command(flatten)]
        train: TrainArgs,
    },
    /// Phase 2: behaviour cloning with the attention module frozen.
    TrainPolicy {
        #[command(flatten)]
        train: TrainArgs,
        #[arg(long)]
        attention: PathBuf,
    },
    /// Run one closed-loop trial and print the result as JSON.
    Rollout {
        #[arg(long)]
        ckpt: PathBuf,
        /// Scene as inline JSON or a path to a JSON file.
        #[arg(long)]
        scene: String,
        /// Overrides the scene's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Write the trial as an episode directory.
        #[arg(long)]
        record: Option<PathBuf>,
        #[arg(long, default_value_t = MatrixConfig::default().max_steps)]
        max_steps: usize,
    },
    /// Both methods over the full evaluation matrix.
    EvalMatrix {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long, default_value_t = 5)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// WebSocket service for teleoperation.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        #[arg(long)]
        demo_dir: PathBuf,
        #[arg(long, default_value = "64x64", value_parser = parse_hw)]
        hw: (usize, usize),
        /// Seconds without a request before a session is closed.
        #[arg(long, default_value_t = 600)]
        idle_timeout: u64,
    },
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 200)]
    epochs: usize,
    #[arg(long, default_value_t = 1e-4)]
    lr: f64,
    #[arg(long, default_value_t = 8)]
    batch: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.1)]
    holdout: f64,
    /// Masked frames per episode for phase 1, or "all".
    #[arg(long, default_value = "4", value_parser = parse_mask_frames)]
    mask_frames: MaskFrames,
}

#[derive(Clone, Copy)]
struct MaskFrames(Option<usize>);

impl TrainArgs {
    fn config(&self) -> TrainConfig {
        TrainConfig {
            epochs: self.epochs,
            lr: self.lr,
            batch_size: self.batch,
            seed: self.seed,
            holdout_fraction: self.holdout,
            mask_frames: self.mask_frames.0,
        }
    }
}

fn parse_hw(s: &str) -> Result<(usize, usize), String> {
    let (h, w) = s.split_once('x').ok_or_else(|| format!("expected HxW, got {s:?}"))?;
    let parse = |v: &str| v.parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
    Ok((parse(h)?, parse(w)?))
}

fn parse_mask_frames(s: &str) -> Result<MaskFrames, String> {
    if s == "all" {
        return Ok(MaskFrames(None));
    }
    s.parse().map(|n| MaskFrames(Some(n))).map_err(|e| format!("{s:?}: {e}"))
}

/// `<out>.log.jsonl` and `<out>.summary.json` beside the checkpoint directory.
fn log_paths(out: &Path) -> (PathBuf, PathBuf) {
    let name = out.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_else(|| "ckpt".into());
    let parent = out.parent().unwrap_or(Path::new("."));
    (parent.join(format!("{name}.log.jsonl")), parent.join(format!("{name}.summary.json")))
}

fn write_log(out: &Path, log: &TrainLog) -> Result<()> {
    let (jsonl, summary) = log_paths(out);
    fs::write(&jsonl, log.to_jsonl()).with_context(|| jsonl.display().to_string())?;
    let s = json!({
        "phase": log.phase,
        "epochs": log.epochs.len(),
        "train_samples": log.train_samples,
        "holdout_samples": log.holdout_samples,
        "holdout_episodes": log.holdout_episodes,
        "final_metric_name": log.final_metric_name,
        "final_metric": log.final_metric,
        "final_train_loss": log.epochs.last().map(|e| e.train_loss),
        "final_holdout_loss": log.epochs.last().map(|e| e.holdout_loss),
        "wall_time_s": log.wall_time_s,
    });
    fs::write(&summary, serde_json::to_string_pretty(&s)?).with_context(|| summary.display().to_string())?;
    Ok(())
}

fn load_scene(arg: &str) -> Result<SceneConfig> {
    let text = if arg.trim_start().starts_with('{') {
        arg.to_string()
    } else {
        fs::read_to_string(arg).with_context(|| format!("reading scene {arg}"))?
    };
    serde_json::from_str(&text).context("parsing scene")
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenDemos { out, episodes, seed, hw, bowl, food, k, m, no_distractors } => {
            let cfg = DemoConfig {
                episodes,
                seed,
                bowl,
                food,
                height: hw.0,
                width: hw.1,
                hold: k,
                distractors: !no_distractors,
                ..DemoConfig::default()
            };
            let eps = generate_demos(&cfg)?;
            let manifest = write_dataset(&out, &eps, k, m)?;
            info!(episodes = manifest.episodes.len(), dir = %out.display(), "wrote dataset");
        }
        Command::Validate { dataset } => {
            let report = validate_dataset(&dataset);
            println!("{}", serde_json::to_string_pretty(&report)?);
            if !report.passed() {
                bail!("{} violation(s)", report.violations.len());
            }
        }
        Command::TrainAttention { train } => {
            let ds = load_dataset(&train.dataset)?;
            let (height, width) = ds.episodes.first().map(|e| (e.meta.height, e.meta.width)).context("empty dataset")?;
            let net = NetConfig { k: ds.k, m: ds.m, height, width, ..NetConfig::default() };
            let (params, log) = train_attention(&ds, net, &train.config(), |e| {
                info!(epoch = e.epoch, train = e.train_loss, holdout = e.holdout_loss, lr = e.lr, "attention");
            })?;
            save_checkpoint(&params, &train.out)?;
            write_log(&train.out, &log)?;
            info!(iou = log.final_metric, secs = log.wall_time_s, "attention done");
        }
        Command::TrainPolicy { train, attention } => {
            let ds = load_dataset(&train.dataset)?;
            let att = load_checkpoint(&attention)?;
            let (params, log) = train_policy(&att, &ds, &train.config(), |e| {
                info!(epoch = e.epoch, train = e.train_loss, holdout = e.holdout_loss, lr = e.lr, "policy");
            })?;
            save_checkpoint(&params, &train.out)?;
            write_log(&train.out, &log)?;
            info!(mse = log.final_metric, secs = log.wall_time_s, "policy done");
        }
        Command::Rollout { ckpt, scene, seed, record, max_steps } => {
            let params = load_checkpoint(&ckpt)?;
            let mut scene = load_scene(&scene)?;
            if let Some(s) = seed {
                scene.seed = s;
            }
            let cam = Camera::new(params.config.height, params.config.width)?;
            let mut world = make_scene(&scene)?;
            let mut policy = NetPolicy { params };
            let trace = mpc_execute(&mut policy, &mut world, cam, max_steps);
            if let Some(dir) = record {
                // the simulator is deterministic, so replaying the commands reproduces the trial
                let commands: Vec<_> = trace.steps.iter().map(|s| s.commanded).collect();
                let mut replay = make_scene(&scene)?;
                let mut ep = record_episode(&mut replay, &commands, cam)?;
                ep.meta.source = "rollout".into();
                write_episode(&ep, &dir)?;
            }
            let out = json!({
                "scene": scene,
                "score": trace.score,
                "steps": trace.step_count,
                "termination": trace.termination,
            });
            println!("{}", serde_json::to_string_pretty(&out)?);
        }
        Command::EvalMatrix { ckpt, trials, seed, out } => {
            let params = load_checkpoint(&ckpt)?;
            let cfg = MatrixConfig {
                trials,
                seed,
                height: params.config.height,
                width: params.config.width,
                ..MatrixConfig::default()
            };
            let result = run_matrix(&params, &cfg, |c| {
                info!(method = %c.method, bowl = %c.bowl, food = %c.food, position = %c.position, scene = %c.scene, trial = c.trial, score = c.score, "cell");
            });
            let summary = write_report(&result, &out)?;
            println!("{}", summary_markdown(&summary));
        }
        Command::Serve { addr, demo_dir, hw, idle_timeout } => {
            let config = ServiceConfig {
                height: hw.0,
                width: hw.1,
                idle_timeout: Duration::from_secs(idle_timeout),
                ..ServiceConfig::new(demo_dir)
            };
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async move {
                let listener = tokio::net::TcpListener::bind(&addr).await.with_context(|| format!("binding {addr}"))?;
                info!(addr = %listener.local_addr()?, "listening");
                avil_service::serve(listener, config, async {
                    let _ = tokio::signal::ctrl_c().await;
                })
                .await?;
                anyhow::Ok(())
            })?;
        }
    }
    Ok(())
}

fn main() -> Result<()> {
    let filter = tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into());
    tracing_subscriber::fmt().with_env_filter(filter).with_writer(std::io::stderr).with_target(false).init();
    run(Cli::parse())
}
