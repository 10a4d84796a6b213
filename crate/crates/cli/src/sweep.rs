use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use dendrite::connectivity::ArchitectureSpec;
use dendrite::data::{resolve_data_dir, split_train_validation, DataSplit, DatasetName};
use dendrite::network::save_checkpoint;
use dendrite::optim::{train, Task, TrainConfig, TrainReport};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{task_tag, ExperimentConfig, RunSeeds};
use crate::error::{CliError, IoContext, Result};
use crate::summary::{aggregate, matched_models, write_summary_csv, Aggregate};

pub const REPORT_FILE: &str = "report.json";
pub const CURVES_FILE: &str = "curves.csv";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const RUN_CONFIG_FILE: &str = "run.toml";
pub const FAILURE_FILE: &str = "error.txt";

/// Everything that determines one run, copied into its directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub dataset: DatasetName,
    pub task: Task,
    pub seeds: RunSeeds,
    pub split_seed: u64,
    pub noise_seed: u64,
    pub spec: ArchitectureSpec,
    pub train: TrainConfig,
}

pub fn runs_root(out_dir: &Path, task: &Task) -> PathBuf {
    out_dir.join("runs").join(task_tag(task))
}

pub fn run_dir(out_dir: &Path, task: &Task, label: &str, seed: u64) -> PathBuf {
    runs_root(out_dir, task).join(label).join(format!("seed-{seed}"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub label: String,
    pub seed: u64,
    pub message: String,
}

/// Outcome of one task within a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub task: String,
    /// Per-invocation counts, kept out of the written file so re-runs
    /// reproduce it byte for byte.
    #[serde(skip)]
    pub trained: usize,
    #[serde(skip)]
    pub skipped: usize,
    pub failures: Vec<RunFailure>,
    pub configs: Vec<Aggregate>,
}

enum RunStatus {
    Trained(Box<TrainReport>),
    Skipped(Box<TrainReport>),
    Failed(RunFailure),
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).at(&tmp)?;
    fs::rename(&tmp, path).at(path)
}

fn execute(manifest: &RunManifest, split: &DataSplit, dir: &Path) -> Result<RunStatus> {
    let report_path = dir.join(REPORT_FILE);
    if report_path.exists() {
        return Ok(RunStatus::Skipped(Box::new(TrainReport::load_json(&report_path)?)));
    }
    fs::create_dir_all(dir).at(dir)?;
    let manifest_text = toml::to_string(manifest).map_err(|e| CliError::Runtime(e.to_string()))?;
    fs::write(dir.join(RUN_CONFIG_FILE), manifest_text).at(dir.join(RUN_CONFIG_FILE))?;
    let started = Instant::now();
    let outcome = match train(split, &manifest.spec, &manifest.train) {
        Ok(o) => o,
        Err(e) => {
            let message = e.to_string();
            fs::write(dir.join(FAILURE_FILE), &message).at(dir.join(FAILURE_FILE))?;
            log::error!("{} seed {}: {message}", manifest.spec.label(), manifest.seeds.seed);
            return Ok(RunStatus::Failed(RunFailure {
                label: manifest.spec.label(),
                seed: manifest.seeds.seed,
                message,
            }));
        }
    };
    let report = outcome.report;
    save_checkpoint(
        &dir.join(CHECKPOINT_FILE),
        &outcome.params,
        &manifest.spec,
        manifest.train.init_seed,
        manifest.train.epochs,
    )?;
    write_atomic(&dir.join(CURVES_FILE), report.curves_csv().as_bytes())?;
    write_atomic(&report_path, serde_json::to_string_pretty(&report)?.as_bytes())?;
    let _ = fs::remove_file(dir.join(FAILURE_FILE));
    log::info!(
        "{} seed {}: test acc {:.2}% loss {:.4} ({:.0}s)",
        report.label,
        manifest.seeds.seed,
        100.0 * report.test_accuracy,
        report.test_loss,
        started.elapsed().as_secs_f64()
    );
    Ok(RunStatus::Trained(Box::new(report)))
}

/// Loads the dataset named by `cfg` and splits off validation data.
pub fn load_split(cfg: &ExperimentConfig) -> Result<DataSplit> {
    let root = resolve_data_dir(cfg.data_dir.as_deref());
    let missing = cfg.dataset.missing_files(&root);
    if !missing.is_empty() {
        return Err(CliError::MissingData(missing));
    }
    let (train, test) = cfg.dataset.load(&root)?;
    Ok(split_train_validation(&train, test, cfg.split_seed)?)
}

/// Architectures a config asks for: the matched set from a previous sweep
/// when `select` is given, the grid otherwise.
pub fn resolve_specs(cfg: &ExperimentConfig) -> Result<Vec<ArchitectureSpec>> {
    match &cfg.select {
        None => Ok(cfg.grid.specs(cfg.dataset)),
        Some(sel) => {
            let reports = collect_reports(&runs_root(&sel.from_sweep, &Task::Standard))?;
            if reports.is_empty() {
                return Err(CliError::Runtime(format!(
                    "no finished standard runs under {}",
                    sel.from_sweep.display()
                )));
            }
            matched_models(&aggregate("standard", &reports)?)
        }
    }
}

/// Every `report.json` below `root`, in path order.
pub fn collect_reports(root: &Path) -> Result<Vec<TrainReport>> {
    let mut paths = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        let Ok(entries) = fs::read_dir(&dir) else { continue };
        for entry in entries {
            let path = entry.at(&dir)?.path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().is_some_and(|n| n == REPORT_FILE) {
                paths.push(path);
            }
        }
    }
    paths.sort();
    paths.iter().map(|p| Ok(TrainReport::load_json(p)?)).collect()
}

/// Trains every (architecture, seed) pair for each task of `cfg`, skipping
/// runs already on disk, then aggregates and writes summaries.
pub fn run_sweep(cfg: &ExperimentConfig) -> Result<Vec<SweepReport>> {
    cfg.validate()?;
    let specs = resolve_specs(cfg)?;
    let split = load_split(cfg)?;
    fs::create_dir_all(&cfg.out_dir).at(&cfg.out_dir)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))?;

    let mut out = Vec::new();
    for task in cfg.tasks() {
        let tag = task_tag(&task);
        let prepared = task.prepare(&split, cfg.noise_seed)?;
        let manifests: Vec<RunManifest> = specs
            .iter()
            .flat_map(|spec| {
                cfg.seeds.iter().map(move |&seed| {
                    let seeds = RunSeeds::derive(seed);
                    let train = TrainConfig::new(cfg.epochs(), seeds.init_seed, seeds.shuffle_seed)
                        .with_task(task)
                        .with_batch_size(cfg.batch_size)
                        .with_storage(cfg.storage);
                    RunManifest {
                        dataset: cfg.dataset,
                        task,
                        seeds,
                        split_seed: cfg.split_seed,
                        noise_seed: cfg.noise_seed,
                        spec: spec.clone().with_mask_seed(seeds.mask_seed),
                        train,
                    }
                })
            })
            .collect();
        log::info!("{tag}: {} runs", manifests.len());
        let statuses: Vec<Result<RunStatus>> = pool.install(|| {
            manifests
                .par_iter()
                .map(|m| {
                    execute(
                        m,
                        &prepared,
                        &run_dir(&cfg.out_dir, &task, &m.spec.label(), m.seeds.seed),
                    )
                })
                .collect()
        });
        let (mut reports, mut failures) = (Vec::new(), Vec::new());
        let (mut trained, mut skipped) = (0, 0);
        for status in statuses {
            match status? {
                RunStatus::Trained(r) => {
                    trained += 1;
                    reports.push(*r);
                }
                RunStatus::Skipped(r) => {
                    skipped += 1;
                    reports.push(*r);
                }
                RunStatus::Failed(f) => failures.push(f),
            }
        }
        let configs = aggregate(&tag, &reports)?;
        write_summary_csv(&cfg.out_dir.join(format!("summary_{tag}.csv")), &configs)?;
        let report = SweepReport {
            task: tag.clone(),
            trained,
            skipped,
            failures,
            configs,
        };
        let json = cfg.out_dir.join(format!("sweep_{tag}.json"));
        fs::write(&json, serde_json::to_string_pretty(&report)?).at(&json)?;
        out.push(report);
    }
    let resolved = cfg.out_dir.join("config.toml");
    fs::write(&resolved, cfg.to_toml()).at(&resolved)?;
    Ok(out)
}
