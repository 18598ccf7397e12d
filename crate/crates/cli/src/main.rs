//! `temp`: data generation, training, planning, benchmarking and attention
//! export for the transformer-guided planner.

mod config;

use std::fs::{self, File};
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use temp_core::bench::{self, BenchOutputs, PlannerKind};
use temp_core::model::ModelBundle;
use temp_core::mpt::{normalize_attention, write_attention_csv};
use temp_core::pipeline::{self, DatasetManifest, SceneEntry, Split, TrainingExample};
use temp_core::sbmp::{plan_with, InformedSampler, StopRule, UniformSampler};
use temp_core::temp::{temp_ap, temp_full};
use temp_core::world::{PlanningTask, Workspace};

use config::{config_err, CliConfig, ConfigError};

#[derive(Parser)]
#[command(name = "temp", version, about = "Transformer-guided sampling-based motion planning")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML or JSON configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Comma-separated planners: temp, rrt*, irrt*.
    #[arg(long, global = true)]
    planner: Option<String>,
    #[arg(long, global = true)]
    dim: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate scenes, harvest expert paths and write the training dataset.
    GenData,
    /// Train the encoder and transformer on a dataset.
    Train {
        /// Defaults to `<out-dir>/dataset.ndjson`.
        #[arg(long)]
        dataset: Option<PathBuf>,
    },
    /// Plan a single task and print the outcome as JSON.
    Plan {
        #[arg(long)]
        task: PathBuf,
        /// Defaults to `<out-dir>/model.ckpt`.
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Run the matched-cost benchmark on freshly generated held-out tasks.
    Bench {
        #[arg(long)]
        model: Option<PathBuf>,
        /// Scenes the held-out suite must not repeat (as written by gen-data).
        #[arg(long)]
        exclude: Option<PathBuf>,
    },
    /// Export per-node attention weights of one guided planning run.
    Attn {
        #[arg(long)]
        task: PathBuf,
        #[arg(long)]
        model: Option<PathBuf>,
    },
}

/// One scene in `workspaces.json`.
#[derive(Serialize, Deserialize)]
struct SceneRecord {
    id: String,
    split: Split,
    workspace: serde_json::Value,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            let config = e.downcast_ref::<ConfigError>().is_some()
                || matches!(e.downcast_ref::<temp_core::Error>(), Some(temp_core::Error::Config(_)));
            ExitCode::from(if config { 2 } else { 1 })
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let c = &cli.common;
    let mut cfg = match &c.config {
        Some(p) => CliConfig::load(p)?,
        None => CliConfig::default(),
    };
    cfg.apply_overrides(c.seed, c.dim);
    cfg.validate()?;
    let planners = c.planner.as_deref().map(parse_planners).transpose()?;
    fs::create_dir_all(&c.out_dir).with_context(|| format!("creating {}", c.out_dir.display()))?;
    match &cli.command {
        Command::GenData => gen_data(&cfg, &c.out_dir),
        Command::Train { dataset } => {
            let dataset = dataset.clone().unwrap_or_else(|| c.out_dir.join("dataset.ndjson"));
            train(&cfg, &dataset, &c.out_dir)
        }
        Command::Plan { task, model } => {
            let kind = match planners.as_deref() {
                None => PlannerKind::Temp,
                Some([one]) => *one,
                Some(_) => return Err(config_err("plan takes exactly one planner")),
            };
            plan(&cfg, kind, task, &model_path(model, &c.out_dir))
        }
        Command::Bench { model, exclude } => bench(&cfg, planners, &model_path(model, &c.out_dir), exclude.as_deref(), &c.out_dir),
        Command::Attn { task, model } => attn(&cfg, task, &model_path(model, &c.out_dir), &c.out_dir),
    }
}

fn parse_planners(s: &str) -> anyhow::Result<Vec<PlannerKind>> {
    s.split(',')
        .map(|p| PlannerKind::parse(p.trim()).ok_or_else(|| config_err(format!("unknown planner {p:?}"))))
        .collect()
}

fn model_path(given: &Option<PathBuf>, out_dir: &Path) -> PathBuf {
    given.clone().unwrap_or_else(|| out_dir.join("model.ckpt"))
}

fn load_model(path: &Path, dim: usize) -> anyhow::Result<ModelBundle<f64>> {
    let m = ModelBundle::<f64>::load(path).with_context(|| format!("loading model {}", path.display()))?;
    if m.config.dim != dim {
        return Err(config_err(format!("model at {} is for dimension {}, expected {dim}", path.display(), m.config.dim)));
    }
    Ok(m)
}

fn load_task(path: &Path) -> anyhow::Result<PlanningTask<f64>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    PlanningTask::from_json_str(&text).with_context(|| format!("parsing task {}", path.display()))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    serde_json::to_writer_pretty(BufWriter::new(f), value)?;
    Ok(())
}

fn gen_data(cfg: &CliConfig, out: &Path) -> anyhow::Result<ExitCode> {
    let total = cfg.train_workspaces + cfg.val_workspaces;
    let scene = &cfg.harvest.scene;
    let workspaces = pipeline::generate_workspaces::<f64>(scene, total, cfg.seed)?;
    let entries: Vec<SceneEntry<f64>> = workspaces
        .into_iter()
        .enumerate()
        .map(|(i, ws)| SceneEntry {
            id: format!("ws{i:03}"),
            split: if i < cfg.train_workspaces { Split::Train } else { Split::Validation },
            workspace: Arc::new(ws),
        })
        .collect();
    let harvest = pipeline::HarvestConfig {
        seed: cfg.seed,
        ..cfg.harvest.clone()
    };
    let report = pipeline::harvest_expert_paths(&entries, &harvest)?;
    log::info!(
        "harvested {} expert paths, dropped {}, low solve rate in {} workspaces",
        report.paths.len(),
        report.dropped.len(),
        report.low_solve_rate.len()
    );
    let examples = pipeline::explode_examples(&report.paths, cfg.train.model.max_obstacles)?;
    let ids = |s: Split| entries.iter().filter(|e| e.split == s).map(|e| e.id.clone()).collect();
    let manifest = DatasetManifest {
        train_workspaces: ids(Split::Train),
        validation_workspaces: ids(Split::Validation),
        pairs_per_workspace: harvest.pairs_per_workspace,
        expert: harvest.expert.clone(),
        refine_iters: harvest.refine_iters,
        scene: scene.clone(),
        max_obstacles: cfg.train.model.max_obstacles,
        seed: cfg.seed,
    };
    manifest.validate()?;
    let path = out.join("dataset.ndjson");
    let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    pipeline::write_dataset(BufWriter::new(f), &manifest, &examples)?;
    let scenes: Vec<SceneRecord> = entries
        .iter()
        .map(|e| {
            Ok(SceneRecord {
                id: e.id.clone(),
                split: e.split,
                workspace: serde_json::from_str(&e.workspace.to_json_string())?,
            })
        })
        .collect::<anyhow::Result<_>>()?;
    write_json(&out.join("workspaces.json"), &scenes)?;
    println!("{}", serde_json::json!({
        "dataset": path,
        "examples": examples.len(),
        "expert_paths": report.paths.len(),
        "dropped": report.dropped.len(),
    }));
    Ok(ExitCode::SUCCESS)
}

fn train(cfg: &CliConfig, dataset: &Path, out: &Path) -> anyhow::Result<ExitCode> {
    let f = File::open(dataset).with_context(|| format!("opening {}", dataset.display()))?;
    let (manifest, examples): (_, Vec<TrainingExample<f64>>) = pipeline::read_dataset(BufReader::new(f))?;
    if manifest.max_obstacles != cfg.train.model.max_obstacles {
        return Err(config_err(format!(
            "dataset encodes {} obstacle slots, model config has {}",
            manifest.max_obstacles, cfg.train.model.max_obstacles
        )));
    }
    let (tr, va): (Vec<_>, Vec<_>) = examples.into_iter().partition(|e| e.split == Split::Train);
    let tcfg = pipeline::TrainConfig {
        seed: cfg.seed,
        ..cfg.train.clone()
    };
    let outcome = pipeline::train_observed(&tr, &va, &tcfg, |e| {
        log::info!("epoch {} train {:.6} val {:.6} lr {}", e.epoch, e.train_loss, e.val_loss, e.lr)
    })?;
    let model = out.join("model.ckpt");
    outcome.best.save(&model)?;
    let log_path = out.join("train_log.csv");
    let f = File::create(&log_path).with_context(|| format!("creating {}", log_path.display()))?;
    pipeline::write_log_csv(BufWriter::new(f), &outcome.log)?;
    println!("{}", serde_json::json!({
        "model": model,
        "log": log_path,
        "best_epoch": outcome.best_epoch,
        "best_val_loss": outcome.best_val_loss,
    }));
    Ok(ExitCode::SUCCESS)
}

fn plan(cfg: &CliConfig, kind: PlannerKind, task: &Path, model: &Path) -> anyhow::Result<ExitCode> {
    let task = load_task(task)?;
    let (summary, solved) = match kind {
        PlannerKind::Temp => {
            let m = load_model(model, task.workspace.dim())?;
            let tcfg = cfg.temp.with_seed(cfg.seed);
            let o = if tcfg.cp_iters > 0 { temp_full(&task, &tcfg, &m)? } else { temp_ap(&task, &tcfg, &m)? };
            (serde_json::to_value(o.summary(None))?, o.path.is_some())
        }
        other => {
            let pcfg = cfg.baseline.with_seed(cfg.seed);
            let stop = StopRule::default();
            let r = match other {
                PlannerKind::RrtStar => plan_with(&task, &pcfg, &mut UniformSampler { goal_bias: pcfg.goal_bias }, &stop, other.label())?,
                _ => plan_with(&task, &pcfg, &mut InformedSampler::new(pcfg.goal_bias), &stop, other.label())?,
            };
            let path = r.path.as_ref().map(|p| p.states.iter().map(|s| s.to_f64()).collect::<Vec<_>>());
            let v = serde_json::json!({
                "task_id": r.metrics.task_id,
                "planner": r.metrics.planner,
                "cost": r.metrics.cost,
                "time_s": r.metrics.time_s,
                "nodes": r.metrics.nodes,
                "sampling_failures": r.metrics.sampling_failures,
                "path": path,
            });
            (v, r.path.is_some())
        }
    };
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(if solved { ExitCode::SUCCESS } else { ExitCode::from(1) })
}

fn read_excluded(path: &Path) -> anyhow::Result<Vec<Workspace<f64>>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let scenes: Vec<SceneRecord> = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    scenes
        .into_iter()
        .map(|s| Ok(Workspace::from_json_str(&s.workspace.to_string())?))
        .collect()
}

fn bench(
    cfg: &CliConfig,
    planners: Option<Vec<PlannerKind>>,
    model: &Path,
    exclude: Option<&Path>,
    out: &Path,
) -> anyhow::Result<ExitCode> {
    let bcfg = cfg.bench_config(planners);
    bcfg.validate()?;
    let model = if bcfg.planners.contains(&PlannerKind::Temp) {
        Some(load_model(model, cfg.harvest.scene.dim)?)
    } else {
        None
    };
    // Held-out scenes use a seed stream distinct from gen-data's.
    let seed = pipeline::derive_seed(cfg.seed, &[0xbe4c]);
    let scenes = pipeline::generate_workspaces::<f64>(&cfg.harvest.scene, cfg.bench.workspaces, seed)?;
    if let Some(path) = exclude {
        let train = read_excluded(path)?;
        if scenes.iter().any(|s| train.contains(s)) {
            bail!("a held-out scene repeats a training scene");
        }
    }
    let entries = bench::scene_entries(scenes, "bench");
    let harvest = pipeline::HarvestConfig {
        pairs_per_workspace: cfg.bench.pairs_per_workspace,
        seed,
        ..cfg.harvest.clone()
    };
    let suite = bench::build_suite(&entries, &harvest)?;
    if suite.is_empty() {
        bail!("no benchmark task could be solved by the expert");
    }
    let runs = bench::run_suite(&suite, &bcfg, model.as_ref())?;
    let outputs = BenchOutputs::from_runs(runs);
    let files = bench::emit_outputs(out, &outputs)?;
    let all_failed = outputs.runs.iter().all(|r| !r.metrics.success);
    println!("{}", serde_json::json!({ "tasks": suite.len(), "runs": outputs.runs.len(), "files": files }));
    Ok(if all_failed { ExitCode::from(1) } else { ExitCode::SUCCESS })
}

fn attn(cfg: &CliConfig, task: &Path, model: &Path, out: &Path) -> anyhow::Result<ExitCode> {
    let task = load_task(task)?;
    let m = load_model(model, task.workspace.dim())?;
    let o = temp_ap(&task, &cfg.temp.with_seed(cfg.seed), &m)?;
    let rows = normalize_attention(&o.attention);
    let csv = out.join("attention.csv");
    let f = File::create(&csv).with_context(|| format!("creating {}", csv.display()))?;
    write_attention_csv(BufWriter::new(f), &rows)?;
    let svg = out.join("attention.svg");
    fs::write(&svg, bench::attention_svg(&rows)).with_context(|| format!("writing {}", svg.display()))?;
    let summary = o.summary(Some(csv.display().to_string()));
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(if o.path.is_some() { ExitCode::SUCCESS } else { ExitCode::from(1) })
}
