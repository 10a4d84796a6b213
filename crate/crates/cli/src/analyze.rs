use std::fs;
use std::path::{Path, PathBuf};

use dendrite::analysis::{
    histogram, node_entropy, selectivity_index, weight_stats, welch_t_test, HitMatrix, TTest, WeightStats,
};
use dendrite::connectivity::ArchitectureKind;
use dendrite::data::LabeledDataset;
use dendrite::embed::{neighborhood_hit, sample_test_subset, silhouette, trustworthiness, tsne, TsneConfig};
use dendrite::network::{load_checkpoint, NetworkParams, Storage};
use dendrite::optim::{for_each_chunk, Task};
use dendrite::rng;
use ndarray::{Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{AnalysisConfig, ExperimentConfig};
use crate::error::{CliError, IoContext, Result};
use crate::summary::{aggregate, best_of, Aggregate};
use crate::sweep::{collect_reports, load_split, run_dir, runs_root, CHECKPOINT_FILE};

pub const ANALYSIS_DIR: &str = "analysis";
pub const SUMMARY_FILE: &str = "summary.json";
pub const ENTROPY_FILE: &str = "entropy.csv";
pub const SELECTIVITY_FILE: &str = "selectivity.csv";
pub const WEIGHTS_FILE: &str = "weight_stats.csv";
pub const METRICS_FILE: &str = "embedding_metrics.csv";
pub const HISTOGRAM_FILE: &str = "histograms.csv";
pub const EMBEDDING_DIR: &str = "embeddings";

/// Representation quality of one hidden layer of one trained network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingMetrics {
    pub label: String,
    pub seed: u64,
    pub layer: usize,
    pub silhouette: f64,
    pub neighborhood_hit: f64,
    pub trustworthiness: f64,
    pub kl: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerSummary {
    pub layer: usize,
    pub n_nodes: usize,
    /// Nodes that never fired on the test set, pooled over seeds.
    pub silent_fraction: f64,
    /// Over nodes that fired at least once; absent when all were silent.
    pub mean_entropy: Option<f64>,
    /// Median over nodes that clear the threshold for at least one class.
    pub median_selectivity: Option<f64>,
    pub silhouette_mean: f64,
    pub neighborhood_hit_mean: f64,
    pub trustworthiness_mean: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelAnalysis {
    pub kind: ArchitectureKind,
    pub label: String,
    pub seeds: Vec<u64>,
    pub accuracy_mean: f64,
    pub layers: Vec<LayerSummary>,
    /// One entry per weight layer, output layer last.
    pub weights: Vec<WeightStats>,
    pub embeddings: Vec<EmbeddingMetrics>,
}

/// Pairwise test between two model kinds on one metric of one layer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub metric: String,
    pub layer: usize,
    pub a: ArchitectureKind,
    pub b: ArchitectureKind,
    pub test: Option<TTest>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisSummary {
    pub dataset: String,
    pub subset: usize,
    pub perplexity: f64,
    pub k: usize,
    pub models: Vec<ModelAnalysis>,
    pub comparisons: Vec<Comparison>,
}

impl AnalysisSummary {
    pub fn model(&self, kind: ArchitectureKind) -> Option<&ModelAnalysis> {
        self.models.iter().find(|m| m.kind == kind)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).at(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// Everything extracted from a single checkpoint.
struct RunAnalysis {
    hits: Vec<HitMatrix>,
    weights: Vec<Vec<f64>>,
    embeddings: Vec<(Array2<f64>, EmbeddingMetrics)>,
}

/// Streams the test set through the network once, accumulating hit counts
/// for every hidden layer and keeping the activations of `subset` rows.
fn probe(
    params: &NetworkParams<f32>,
    test: &LabeledDataset,
    subset: &[usize],
) -> Result<(Vec<HitMatrix>, Vec<Array2<f32>>)> {
    let n_hidden = params.layers.len() - 1;
    let widths: Vec<usize> = params.layers[..n_hidden].iter().map(|l| l.n_out()).collect();
    let mut hits: Vec<HitMatrix> = widths.iter().map(|&w| HitMatrix::new(test.n_classes, w)).collect();
    let mut kept: Vec<Array2<f32>> = widths.iter().map(|&w| Array2::zeros((subset.len(), w))).collect();
    let mut next = 0;
    for_each_chunk(params, test, 1000, |trace, range| {
        for (k, hm) in hits.iter_mut().enumerate() {
            hm.accumulate(trace.activations(k), &test.labels[range.clone()])?;
        }
        while next < subset.len() && subset[next] < range.end {
            let row = subset[next] - range.start;
            for (k, acts) in kept.iter_mut().enumerate() {
                acts.row_mut(next).assign(&trace.activations(k).row(row));
            }
            next += 1;
        }
        Ok(())
    })?;
    Ok((hits, kept))
}

fn analyze_run(
    label: &str,
    seed: u64,
    path: &Path,
    test: &LabeledDataset,
    subset: &[usize],
    cfg: &AnalysisConfig,
) -> Result<RunAnalysis> {
    let (params, _) = load_checkpoint(path, Storage::Sparse)?;
    let (hits, kept) = probe(&params, test, subset)?;
    let weights = params
        .layers
        .iter()
        .map(|l| l.kept_weights().into_iter().map(f64::from).collect())
        .collect();
    let labels: Vec<usize> = subset.iter().map(|&i| test.labels[i]).collect();
    let mut embeddings = Vec::new();
    for (layer, high) in kept.iter().enumerate() {
        let tsne_cfg = TsneConfig {
            perplexity: cfg.perplexity,
            iterations: cfg.tsne_iters,
            seed: rng::mix(cfg.subset_seed, seed),
            ..TsneConfig::default()
        };
        let out = tsne(high.view(), &tsne_cfg)?;
        let low = out.embedding;
        let metrics = EmbeddingMetrics {
            label: label.to_string(),
            seed,
            layer: layer + 1,
            silhouette: silhouette(low.view(), &labels)?,
            neighborhood_hit: neighborhood_hit(low.view(), &labels, cfg.k)?,
            trustworthiness: trustworthiness(high.view(), low.view(), cfg.k)?,
            kl: out.kl,
        };
        log::info!(
            "{label} seed {seed} layer {}: silhouette {:.3} NH {:.3} T {:.3}",
            layer + 1,
            metrics.silhouette,
            metrics.neighborhood_hit,
            metrics.trustworthiness
        );
        embeddings.push((low, metrics));
    }
    Ok(RunAnalysis {
        hits,
        weights,
        embeddings,
    })
}

fn mean(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

fn median(mut values: Vec<f64>) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let mid = values.len() / 2;
    Some(if values.len().is_multiple_of(2) {
        (values[mid - 1] + values[mid]) / 2.0
    } else {
        values[mid]
    })
}

/// Per-node tables and histograms written alongside the summary.
#[derive(Default)]
struct Tables {
    entropy: Vec<(String, u64, usize, usize, f64)>,
    selectivity: Vec<(String, u64, usize, usize, usize, bool)>,
    histograms: Vec<(String, usize, &'static str, f64, f64, usize)>,
}

impl Tables {
    fn push_histogram(
        &mut self,
        label: &str,
        layer: usize,
        quantity: &'static str,
        values: &[f64],
        bins: usize,
        range: Option<(f64, f64)>,
    ) -> Result<()> {
        if values.is_empty() {
            return Ok(());
        }
        let h = histogram(values, bins, range)?;
        for (b, &count) in h.counts.iter().enumerate() {
            self.histograms
                .push((label.to_string(), layer, quantity, h.edges[b], h.edges[b + 1], count));
        }
        Ok(())
    }
}

fn summarize(
    agg: &Aggregate,
    runs: Vec<(u64, RunAnalysis)>,
    cfg: &AnalysisConfig,
    n_classes: usize,
    tables: &mut Tables,
) -> Result<ModelAnalysis> {
    let label = agg.summary.label.clone();
    let n_hidden = runs[0].1.hits.len();
    let mut layers = Vec::new();
    for layer in 0..n_hidden {
        let (mut silent, mut total) = (0usize, 0usize);
        let (mut entropies, mut selective) = (Vec::new(), Vec::new());
        for (seed, run) in &runs {
            let hm = &run.hits[layer];
            let ent = node_entropy(hm);
            let sel = selectivity_index(hm, cfg.selectivity_fraction)?;
            for (node, (&bits, &is_silent)) in ent.bits.iter().zip(&ent.silent).enumerate() {
                total += 1;
                if is_silent {
                    silent += 1;
                } else {
                    entropies.push(bits);
                    tables.entropy.push((label.clone(), *seed, layer + 1, node, bits));
                }
                tables
                    .selectivity
                    .push((label.clone(), *seed, layer + 1, node, sel[node], is_silent));
                if sel[node] > 0 {
                    selective.push(sel[node] as f64);
                }
            }
        }
        let max_bits = ((n_classes + 1) as f64).log2();
        tables.push_histogram(
            &label,
            layer + 1,
            "entropy",
            &entropies,
            cfg.bins,
            Some((0.0, max_bits)),
        )?;
        let top = n_classes as f64 + 0.5;
        tables.push_histogram(
            &label,
            layer + 1,
            "selectivity",
            &selective,
            n_classes,
            Some((0.5, top)),
        )?;
        let metrics = || {
            runs.iter()
                .flat_map(|(_, r)| &r.embeddings)
                .map(|(_, m)| m)
                .filter(|m| m.layer == layer + 1)
        };
        layers.push(LayerSummary {
            layer: layer + 1,
            n_nodes: runs[0].1.hits[layer].n_nodes(),
            silent_fraction: silent as f64 / total as f64,
            mean_entropy: mean(entropies.iter().copied()),
            median_selectivity: median(selective),
            silhouette_mean: mean(metrics().map(|m| m.silhouette)).expect(EMBEDDED),
            neighborhood_hit_mean: mean(metrics().map(|m| m.neighborhood_hit)).expect(EMBEDDED),
            trustworthiness_mean: mean(metrics().map(|m| m.trustworthiness)).expect(EMBEDDED),
        });
    }
    let n_weight_layers = runs[0].1.weights.len();
    let mut weights = Vec::new();
    for layer in 0..n_weight_layers {
        let pooled: Vec<f64> = runs
            .iter()
            .flat_map(|(_, r)| r.weights[layer].iter().copied())
            .collect();
        tables.push_histogram(&label, layer + 1, "weight", &pooled, cfg.bins, None)?;
        weights.push(weight_stats(&pooled)?);
    }
    Ok(ModelAnalysis {
        kind: agg.spec.kind,
        label,
        seeds: runs.iter().map(|(s, _)| *s).collect(),
        accuracy_mean: agg.summary.accuracy_mean,
        layers,
        weights,
        embeddings: runs
            .into_iter()
            .flat_map(|(_, r)| r.embeddings.into_iter().map(|(_, m)| m))
            .collect(),
    })
}

const EMBEDDED: &str = "every run embeds every hidden layer";

type MetricFn = fn(&EmbeddingMetrics) -> f64;

const METRICS: [(&str, MetricFn); 3] = [
    ("silhouette", |m| m.silhouette),
    ("neighborhood_hit", |m| m.neighborhood_hit),
    ("trustworthiness", |m| m.trustworthiness),
];

/// Welch tests between every pair of models, per metric and layer, with the
/// Bonferroni factor set to the number of pairs.
pub fn compare_models(models: &[ModelAnalysis]) -> Vec<Comparison> {
    let pairs: Vec<(usize, usize)> = (0..models.len())
        .flat_map(|i| (i + 1..models.len()).map(move |j| (i, j)))
        .collect();
    let layers: Vec<usize> = models
        .first()
        .map(|m| m.layers.iter().map(|l| l.layer).collect())
        .unwrap_or_default();
    let mut out = Vec::new();
    for (name, get) in METRICS {
        for &layer in &layers {
            for &(i, j) in &pairs {
                let values = |m: &ModelAnalysis| -> Vec<f64> {
                    m.embeddings.iter().filter(|e| e.layer == layer).map(get).collect()
                };
                let (test, note) = match welch_t_test(&values(&models[i]), &values(&models[j]), pairs.len()) {
                    Ok(t) => (Some(t), None),
                    Err(e) => (None, Some(e.to_string())),
                };
                out.push(Comparison {
                    metric: name.to_string(),
                    layer,
                    a: models[i].kind,
                    b: models[j].kind,
                    test,
                    note,
                });
            }
        }
    }
    out
}

fn write_csv<R: Serialize>(path: &Path, header: &[&str], rows: impl IntoIterator<Item = R>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush().at(path)
}

pub fn embedding_path(dir: &Path, label: &str, layer: usize) -> PathBuf {
    dir.join(EMBEDDING_DIR).join(format!("{label}_layer{layer}.csv"))
}

/// Analyzes the most accurate configuration of each kind found in the
/// standard-task runs of `cfg.out_dir`, writing tables under `analysis/`.
pub fn run_analysis(cfg: &ExperimentConfig) -> Result<AnalysisSummary> {
    cfg.validate()?;
    let task = Task::Standard;
    let reports = collect_reports(&runs_root(&cfg.out_dir, &task))?;
    if reports.is_empty() {
        return Err(CliError::Runtime(format!(
            "no finished standard runs under {}",
            cfg.out_dir.display()
        )));
    }
    let aggs = aggregate("standard", &reports)?;
    let best: Vec<&Aggregate> = ArchitectureKind::ALL
        .iter()
        .filter_map(|&k| best_of(&aggs, k))
        .collect();

    let mut missing = Vec::new();
    let mut jobs = Vec::new();
    for (m, agg) in best.iter().enumerate() {
        for &seed in &agg.seeds {
            let path = run_dir(&cfg.out_dir, &task, &agg.summary.label, seed).join(CHECKPOINT_FILE);
            if path.exists() {
                jobs.push((m, seed, path));
            } else {
                missing.push(path);
            }
        }
    }
    if !missing.is_empty() {
        let list: Vec<String> = missing.iter().map(|p| format!("  {}", p.display())).collect();
        return Err(CliError::Runtime(format!("missing checkpoints:\n{}", list.join("\n"))));
    }

    let split = load_split(cfg)?;
    let test = &split.test;
    let subset = sample_test_subset(test, cfg.analysis.subset, cfg.analysis.subset_seed)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.threads)
        .build()
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    log::info!("analyzing {} checkpoints of {} models", jobs.len(), best.len());
    let results: Vec<Result<RunAnalysis>> = pool.install(|| {
        jobs.par_iter()
            .map(|(m, seed, path)| analyze_run(&best[*m].summary.label, *seed, path, test, &subset, &cfg.analysis))
            .collect()
    });

    let dir = cfg.out_dir.join(ANALYSIS_DIR);
    fs::create_dir_all(dir.join(EMBEDDING_DIR)).at(&dir)?;
    let subset_labels: Vec<usize> = subset.iter().map(|&i| test.labels[i]).collect();
    let mut grouped: Vec<Vec<(u64, RunAnalysis)>> = best.iter().map(|_| Vec::new()).collect();
    for ((m, seed, _), result) in jobs.iter().zip(results) {
        let run = result?;
        if grouped[*m].is_empty() {
            // coordinates of the first seed stand in for the model
            for (low, metrics) in &run.embeddings {
                let rows = low
                    .axis_iter(Axis(0))
                    .zip(&subset_labels)
                    .map(|(p, &l)| (p[0], p[1], l));
                write_csv(
                    &embedding_path(&dir, &metrics.label, metrics.layer),
                    &["x", "y", "label"],
                    rows,
                )?;
            }
        }
        grouped[*m].push((*seed, run));
    }

    let mut tables = Tables::default();
    let mut models = Vec::new();
    for (agg, runs) in best.iter().zip(grouped) {
        models.push(summarize(agg, runs, &cfg.analysis, test.n_classes, &mut tables)?);
    }
    let comparisons = compare_models(&models);

    write_csv(
        &dir.join(ENTROPY_FILE),
        &["model", "seed", "layer", "node", "entropy_bits"],
        &tables.entropy,
    )?;
    write_csv(
        &dir.join(SELECTIVITY_FILE),
        &["model", "seed", "layer", "node", "selectivity", "silent"],
        &tables.selectivity,
    )?;
    write_csv(
        &dir.join(HISTOGRAM_FILE),
        &["model", "layer", "quantity", "lo", "hi", "count"],
        &tables.histograms,
    )?;
    let weight_rows = models.iter().flat_map(|m| {
        m.weights.iter().enumerate().map(move |(l, w)| {
            (
                &m.label,
                l + 1,
                w.n,
                w.mean,
                w.std,
                w.skewness,
                w.excess_kurtosis,
                w.range,
            )
        })
    });
    write_csv(
        &dir.join(WEIGHTS_FILE),
        &[
            "model",
            "layer",
            "n",
            "mean",
            "std",
            "skewness",
            "excess_kurtosis",
            "range",
        ],
        weight_rows,
    )?;
    let metric_rows = models.iter().flat_map(|m| &m.embeddings);
    write_csv(
        &dir.join(METRICS_FILE),
        &[
            "model",
            "seed",
            "layer",
            "silhouette",
            "neighborhood_hit",
            "trustworthiness",
            "kl",
        ],
        metric_rows,
    )?;

    let summary = AnalysisSummary {
        dataset: cfg.dataset.as_str().to_string(),
        subset: subset.len(),
        perplexity: cfg.analysis.perplexity,
        k: cfg.analysis.k,
        models,
        comparisons,
    };
    let path = dir.join(SUMMARY_FILE);
    fs::write(&path, serde_json::to_string_pretty(&summary)?).at(&path)?;
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model(kind: ArchitectureKind, sil: &[f64]) -> ModelAnalysis {
        ModelAnalysis {
            kind,
            label: kind.to_string(),
            seeds: (0..sil.len() as u64).collect(),
            accuracy_mean: 0.0,
            layers: vec![],
            weights: vec![],
            embeddings: sil
                .iter()
                .enumerate()
                .map(|(s, &v)| EmbeddingMetrics {
                    label: kind.to_string(),
                    seed: s as u64,
                    layer: 1,
                    silhouette: v,
                    neighborhood_hit: v,
                    trustworthiness: v,
                    kl: 0.0,
                })
                .collect(),
        }
    }

    #[test]
    fn median_of_even_and_odd() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(vec![]), None);
    }

    #[test]
    fn comparisons_cover_every_pair() {
        let mut models = vec![
            model(ArchitectureKind::DannR, &[0.1, 0.2, 0.15]),
            model(ArchitectureKind::DannLrf, &[0.5, 0.55, 0.6]),
            model(ArchitectureKind::Vann, &[0.3, 0.3, 0.3]),
        ];
        for m in &mut models {
            m.layers.push(LayerSummary {
                layer: 1,
                n_nodes: 1,
                silent_fraction: 0.0,
                mean_entropy: None,
                median_selectivity: None,
                silhouette_mean: 0.0,
                neighborhood_hit_mean: 0.0,
                trustworthiness_mean: 0.0,
            });
        }
        let c = compare_models(&models);
        assert_eq!(c.len(), 3 * 3);
        let t = c[0].test.as_ref().unwrap();
        assert!((t.alpha - 0.05 / 3.0).abs() < 1e-15);
        assert!(t.t < 0.0);
    }
}
