use std::ops::Range;
use std::path::Path;
use std::time::Instant;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use crate::connectivity::ArchitectureSpec;
use crate::data::{add_gaussian_noise, sequential_batches, DataSplit, LabeledDataset, SplitSummary};
use crate::error::{Error, IoContext, Result};
use crate::network::{backward, forward, loss_and_accuracy, ForwardTrace, NetworkParams, Storage};
use crate::rng;

/// How training batches are formed and how the data is perturbed.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum Task {
    #[default]
    Standard,
    /// Gaussian pixel noise on every split.
    Noisy { sigma: f64 },
    /// Class-blocked batches in ascending label order.
    Sequential,
}

impl Task {
    /// Applies the task's data perturbation. Each part gets its own noise stream.
    pub fn prepare(&self, split: &DataSplit, noise_seed: u64) -> Result<DataSplit> {
        match *self {
            Task::Noisy { sigma } => {
                let mut part = 0u64;
                let mut err = None;
                let out = split.map(|ds| {
                    part += 1;
                    add_gaussian_noise(ds, sigma, rng::mix(noise_seed, part)).unwrap_or_else(|e| {
                        err = Some(e);
                        ds.clone()
                    })
                });
                match err {
                    Some(e) => Err(e),
                    None => Ok(out),
                }
            }
            _ => Ok(split.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    pub init_seed: u64,
    pub shuffle_seed: u64,
    #[serde(default)]
    pub task: Task,
    #[serde(default)]
    pub storage: Storage,
    #[serde(default)]
    pub adam: AdamConfig,
    /// Samples per forward pass during evaluation.
    #[serde(default = "default_eval_chunk")]
    pub eval_chunk: usize,
}

fn default_batch() -> usize {
    128
}

fn default_eval_chunk() -> usize {
    1000
}

impl TrainConfig {
    pub fn new(epochs: usize, init_seed: u64, shuffle_seed: u64) -> Self {
        Self {
            epochs,
            batch_size: default_batch(),
            init_seed,
            shuffle_seed,
            task: Task::Standard,
            storage: Storage::Sparse,
            adam: AdamConfig::default(),
            eval_chunk: default_eval_chunk(),
        }
    }

    pub fn with_task(mut self, task: Task) -> Self {
        self.task = task;
        self
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size;
        self
    }

    pub fn with_storage(mut self, storage: Storage) -> Self {
        self.storage = storage;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be ≥ 1".into()));
        }
        if self.eval_chunk == 0 {
            return Err(Error::Config("eval_chunk must be ≥ 1".into()));
        }
        let a = &self.adam;
        if !(a.lr > 0.0 && (0.0..1.0).contains(&a.beta1) && (0.0..1.0).contains(&a.beta2) && a.eps > 0.0) {
            return Err(Error::Config(format!("invalid Adam settings {a:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val_accuracy: f64,
}

/// Everything needed to reproduce and summarize one training run.
/// Accuracies are fractions in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub label: String,
    pub dataset: String,
    pub spec: ArchitectureSpec,
    pub config: TrainConfig,
    pub n_parameters: usize,
    pub split: SplitSummary,
    pub history: Vec<EpochMetrics>,
    /// Nonzero weights found at false mask positions after each epoch.
    pub mask_violations: Vec<usize>,
    pub test_loss: f64,
    pub test_accuracy: f64,
}

impl TrainReport {
    pub fn min_val_loss(&self) -> Option<f64> {
        self.history.iter().map(|m| m.val_loss).reduce(f64::min)
    }

    pub fn curves_csv(&self) -> String {
        let mut s = String::from("epoch,train_loss,train_acc,val_loss,val_acc\n");
        for m in &self.history {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                m.epoch, m.train_loss, m.train_accuracy, m.val_loss, m.val_accuracy
            ));
        }
        s
    }

    pub fn save_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).with_path(path)
    }

    pub fn load_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_path(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub report: TrainReport,
    pub params: NetworkParams<f32>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub loss: f64,
    pub accuracy: f64,
}

fn gather(ds: &LabeledDataset, idx: &[usize]) -> Array2<f32> {
    ds.features.select(Axis(0), idx)
}

/// Runs the network over `ds` in chunks and hands each trace to `visit`
/// together with the sample range it covers.
pub fn for_each_chunk(
    params: &NetworkParams<f32>,
    ds: &LabeledDataset,
    chunk: usize,
    mut visit: impl FnMut(&ForwardTrace<f32>, Range<usize>) -> Result<()>,
) -> Result<()> {
    let chunk = chunk.max(1);
    let n = ds.len();
    let mut start = 0;
    while start < n {
        let end = (start + chunk).min(n);
        let batch = ds.features.slice(ndarray::s![start..end, ..]);
        let trace = forward(params, batch)?;
        visit(&trace, start..end)?;
        start = end;
    }
    Ok(())
}

/// Mean loss and accuracy over a full pass.
pub fn evaluate(params: &NetworkParams<f32>, ds: &LabeledDataset, chunk: usize) -> Result<Evaluation> {
    if ds.is_empty() {
        return Err(Error::Domain(format!("cannot evaluate on empty dataset {}", ds.name)));
    }
    let (mut loss, mut correct) = (0.0, 0.0);
    for_each_chunk(params, ds, chunk, |trace, range| {
        let n = range.len() as f64;
        let (l, a) = loss_and_accuracy(trace.probs(), &ds.labels[range])?;
        loss += l * n;
        correct += a * n;
        Ok(())
    })?;
    let n = ds.len() as f64;
    Ok(Evaluation {
        loss: loss / n,
        accuracy: correct / n,
    })
}

/// Sample-major activations of every hidden layer over `ds`.
pub fn hidden_activations(params: &NetworkParams<f32>, ds: &LabeledDataset, chunk: usize) -> Result<Vec<Array2<f32>>> {
    let n_hidden = params.layers.len() - 1;
    let mut out: Vec<Array2<f32>> = params.layers[..n_hidden]
        .iter()
        .map(|l| Array2::zeros((ds.len(), l.n_out())))
        .collect();
    for_each_chunk(params, ds, chunk, |trace, range| {
        for (k, acts) in out.iter_mut().enumerate() {
            acts.slice_mut(ndarray::s![range.clone(), ..])
                .assign(&trace.activations(k));
        }
        Ok(())
    })?;
    Ok(out)
}

fn epoch_batches(train: &LabeledDataset, cfg: &TrainConfig, epoch: usize) -> Result<Vec<Vec<usize>>> {
    match cfg.task {
        Task::Sequential => sequential_batches(train, cfg.batch_size, rng::mix(cfg.shuffle_seed, epoch as u64)),
        _ => {
            let mut order: Vec<usize> = (0..train.len()).collect();
            order.shuffle(&mut rng::stream(cfg.shuffle_seed, epoch as u64));
            Ok(order.chunks(cfg.batch_size).map(<[usize]>::to_vec).collect())
        }
    }
}

fn check_compatible(split: &DataSplit, spec: &ArchitectureSpec) -> Result<()> {
    spec.validate()?;
    for ds in [&split.train, &split.validation, &split.test] {
        if ds.n_features() != spec.n_inputs() {
            return Err(Error::Consistency(format!(
                "{} has {} features, architecture expects {}",
                ds.name,
                ds.n_features(),
                spec.n_inputs()
            )));
        }
        if ds.labels.iter().any(|&l| l >= spec.n_classes) {
            return Err(Error::Consistency(format!(
                "{} has labels outside 0..{}",
                ds.name, spec.n_classes
            )));
        }
    }
    if split.train.is_empty() {
        return Err(Error::Domain("empty training set".into()));
    }
    Ok(())
}

pub fn train(split: &DataSplit, spec: &ArchitectureSpec, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_observed(split, spec, cfg, |_, _| Ok(()))
}

/// Like [`train`], calling `observer(epoch, params)` after every epoch.
pub fn train_observed(
    split: &DataSplit,
    spec: &ArchitectureSpec,
    cfg: &TrainConfig,
    mut observer: impl FnMut(usize, &NetworkParams<f32>) -> Result<()>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    check_compatible(split, spec)?;
    let mut params = NetworkParams::<f32>::from_spec(spec, cfg.init_seed, cfg.storage)?;
    let mut adam = AdamState::new(&params, cfg.adam);
    let mut history = Vec::with_capacity(cfg.epochs);
    let mut mask_violations = Vec::with_capacity(cfg.epochs);
    let label = spec.label();

    for epoch in 1..=cfg.epochs {
        let started = Instant::now();
        let batches = epoch_batches(&split.train, cfg, epoch)?;
        let (mut loss_sum, mut correct, mut seen) = (0.0, 0.0, 0usize);
        for (b, idx) in batches.iter().enumerate() {
            let wrap = |source: Error| Error::Training {
                epoch,
                batch: b,
                source: Box::new(source),
            };
            let x = gather(&split.train, idx);
            let labels: Vec<usize> = idx.iter().map(|&i| split.train.labels[i]).collect();
            let trace = forward(&params, x.view()).map_err(wrap)?;
            let (l, a) = loss_and_accuracy(trace.probs(), &labels).map_err(wrap)?;
            let grads = backward(&params, &trace, &labels).map_err(wrap)?;
            adam_step(&mut params, &grads, &mut adam).map_err(wrap)?;
            let n = idx.len();
            loss_sum += l * n as f64;
            correct += a * n as f64;
            seen += n;
        }
        let val = evaluate(&params, &split.validation, cfg.eval_chunk)?;
        let m = EpochMetrics {
            epoch,
            train_loss: loss_sum / seen as f64,
            train_accuracy: correct / seen as f64,
            val_loss: val.loss,
            val_accuracy: val.accuracy,
        };
        log::info!(
            "{label} epoch {epoch}/{}: train {:.4}/{:.4} val {:.4}/{:.4} ({:.1}s)",
            cfg.epochs,
            m.train_loss,
            m.train_accuracy,
            m.val_loss,
            m.val_accuracy,
            started.elapsed().as_secs_f64()
        );
        history.push(m);
        mask_violations.push(params.mask_violations());
        observer(epoch, &params)?;
    }

    let test = evaluate(&params, &split.test, cfg.eval_chunk)?;
    let report = TrainReport {
        label,
        dataset: split.train.name.clone(),
        spec: spec.clone(),
        config: cfg.clone(),
        n_parameters: params.trainable_parameters(),
        split: split.summary(),
        history,
        mask_violations,
        test_loss: test.loss,
        test_accuracy: test.accuracy,
    };
    Ok(TrainOutcome { report, params })
}
