use std::path::{Path, PathBuf};

use dendrite::connectivity::{ArchitectureKind, ArchitectureSpec};
use dendrite::data::DatasetName;
use dendrite::network::Storage;
use dendrite::optim::Task;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, IoContext, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    #[default]
    Standard,
    Noisy,
    Sequential,
}

/// Architecture grid: every dendritic kind × soma count × dendrites per
/// soma, plus the listed dense hidden-size pairs (`vann = []` for none).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "default_kinds")]
    pub kinds: Vec<ArchitectureKind>,
    #[serde(default = "default_somas")]
    pub somas: Vec<usize>,
    #[serde(default = "default_dendrites")]
    pub dendrites_per_soma: Vec<usize>,
    #[serde(default = "default_vann")]
    pub vann: Vec<(usize, usize)>,
    #[serde(default = "default_synapses")]
    pub synapses_per_dendrite: usize,
    #[serde(default = "default_spread")]
    pub grf_spread: usize,
}

fn default_kinds() -> Vec<ArchitectureKind> {
    vec![
        ArchitectureKind::DannR,
        ArchitectureKind::DannLrf,
        ArchitectureKind::DannGrf,
    ]
}

fn default_somas() -> Vec<usize> {
    vec![64, 128, 256, 512]
}

fn default_dendrites() -> Vec<usize> {
    vec![1, 2, 4, 8, 16, 32]
}

fn default_vann() -> Vec<(usize, usize)> {
    vec![(64, 32), (128, 64), (256, 128), (512, 256), (1024, 512), (2048, 512)]
}

fn default_synapses() -> usize {
    16
}

fn default_spread() -> usize {
    4
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            kinds: default_kinds(),
            somas: default_somas(),
            dendrites_per_soma: default_dendrites(),
            vann: default_vann(),
            synapses_per_dendrite: default_synapses(),
            grf_spread: default_spread(),
        }
    }
}

impl GridConfig {
    pub fn specs(&self, dataset: DatasetName) -> Vec<ArchitectureSpec> {
        let (grid, classes) = (dataset.grid(), dataset.n_classes());
        let mut out = Vec::new();
        for &kind in self.kinds.iter().filter(|k| k.is_dendritic()) {
            for &s in &self.somas {
                for &d in &self.dendrites_per_soma {
                    out.push(
                        ArchitectureSpec::dendritic(kind, grid, classes, s, d)
                            .with_synapses(self.synapses_per_dendrite)
                            .with_grf_spread(self.grf_spread),
                    );
                }
            }
        }
        out.extend(
            self.vann
                .iter()
                .map(|&(h1, h2)| ArchitectureSpec::vanilla(grid, classes, h1, h2)),
        );
        out
    }
}

/// Chooses models from a finished standard sweep instead of the grid: the
/// most accurate dense model and, per dendritic kind, the smallest
/// configuration matching its accuracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SelectConfig {
    pub from_sweep: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    #[serde(default = "default_subset")]
    pub subset: usize,
    #[serde(default)]
    pub subset_seed: u64,
    #[serde(default = "default_perplexity")]
    pub perplexity: f64,
    #[serde(default = "default_iters")]
    pub tsne_iters: usize,
    #[serde(default = "default_k")]
    pub k: usize,
    #[serde(default = "default_fraction")]
    pub selectivity_fraction: f64,
    #[serde(default = "default_bins")]
    pub bins: usize,
}

fn default_subset() -> usize {
    2000
}
fn default_perplexity() -> f64 {
    50.0
}
fn default_iters() -> usize {
    1000
}
fn default_k() -> usize {
    11
}
fn default_fraction() -> f64 {
    0.4
}
fn default_bins() -> usize {
    20
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            subset: default_subset(),
            subset_seed: 0,
            perplexity: default_perplexity(),
            tsne_iters: default_iters(),
            k: default_k(),
            selectivity_fraction: default_fraction(),
            bins: default_bins(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetName,
    #[serde(default)]
    pub task: TaskKind,
    #[serde(default)]
    pub noise_sigmas: Vec<f64>,
    /// Defaults to the dataset's epoch count (50 for the sequential task).
    pub epochs: Option<usize>,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub split_seed: u64,
    #[serde(default = "default_noise_seed")]
    pub noise_seed: u64,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    pub data_dir: Option<PathBuf>,
    #[serde(default = "default_threads")]
    pub threads: usize,
    #[serde(default)]
    pub storage: Storage,
    #[serde(default)]
    pub grid: GridConfig,
    pub select: Option<SelectConfig>,
    #[serde(default)]
    pub analysis: AnalysisConfig,
}

fn default_batch() -> usize {
    128
}
fn default_seeds() -> Vec<u64> {
    (0..5).collect()
}
fn default_noise_seed() -> u64 {
    7
}
fn default_out() -> PathBuf {
    PathBuf::from("results")
}
fn default_threads() -> usize {
    1
}

pub const DEFAULT_NOISE_SIGMAS: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

impl ExperimentConfig {
    pub fn new(dataset: DatasetName) -> Self {
        toml::from_str(&format!("dataset = \"{dataset}\"")).expect("defaults parse")
    }

    pub fn from_toml(text: &str, path: &Path) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|source| CliError::Toml {
            path: path.to_path_buf(),
            source,
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).at(path)?;
        Self::from_toml(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.seeds.is_empty() {
            return bad("seed list is empty".into());
        }
        let mut uniq = self.seeds.clone();
        uniq.sort_unstable();
        uniq.dedup();
        if uniq.len() != self.seeds.len() {
            return bad("seed list has duplicates".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be ≥ 1".into());
        }
        if self.threads == 0 {
            return bad("threads must be ≥ 1".into());
        }
        if self.epochs == Some(0) {
            return bad("epochs must be ≥ 1".into());
        }
        if self.select.is_none() && self.grid.specs(self.dataset).is_empty() {
            return bad("architecture grid is empty".into());
        }
        if self.noise_sigmas.iter().any(|s| !(s.is_finite() && *s >= 0.0)) {
            return bad(format!("noise sigmas must be ≥ 0, got {:?}", self.noise_sigmas));
        }
        if self.task != TaskKind::Noisy && !self.noise_sigmas.is_empty() {
            return bad("noise_sigmas given but task is not \"noisy\"".into());
        }
        for spec in self.grid.specs(self.dataset) {
            spec.validate()?;
        }
        Ok(())
    }

    pub fn epochs(&self) -> usize {
        self.epochs.unwrap_or(match self.task {
            TaskKind::Sequential => 50,
            _ => self.dataset.default_epochs(),
        })
    }

    /// The concrete training tasks this config expands to.
    pub fn tasks(&self) -> Vec<Task> {
        match self.task {
            TaskKind::Standard => vec![Task::Standard],
            TaskKind::Sequential => vec![Task::Sequential],
            TaskKind::Noisy => {
                let sigmas: &[f64] = if self.noise_sigmas.is_empty() {
                    &DEFAULT_NOISE_SIGMAS
                } else {
                    &self.noise_sigmas
                };
                sigmas.iter().map(|&sigma| Task::Noisy { sigma }).collect()
            }
        }
    }
}

/// Directory-safe name of a task.
pub fn task_tag(task: &Task) -> String {
    match task {
        Task::Standard => "standard".into(),
        Task::Sequential => "sequential".into(),
        Task::Noisy { sigma } => format!("noise-{sigma:.2}"),
    }
}

/// Per-run seeds derived from one experiment seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunSeeds {
    pub seed: u64,
    pub mask_seed: u64,
    pub init_seed: u64,
    pub shuffle_seed: u64,
}

impl RunSeeds {
    pub fn derive(seed: u64) -> Self {
        Self {
            seed,
            mask_seed: seed,
            init_seed: seed + 1000,
            shuffle_seed: seed + 2000,
        }
    }
}
