use std::collections::BTreeMap;
use std::path::Path;

use dendrite::analysis::{efficiency_scores, ModelSummary};
use dendrite::connectivity::{ArchitectureKind, ArchitectureSpec};
use dendrite::optim::TrainReport;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, IoContext, Result};

/// Mean ± sample std over the seeds of one configuration. Accuracies in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigSummary {
    pub task: String,
    pub label: String,
    pub kind: ArchitectureKind,
    pub n_somas: usize,
    pub dendrites_per_soma: usize,
    pub hidden1: usize,
    pub hidden2: usize,
    pub n_parameters: usize,
    pub n_runs: usize,
    pub accuracy_mean: f64,
    pub accuracy_std: Option<f64>,
    pub loss_mean: f64,
    pub loss_std: Option<f64>,
    pub aes: f64,
    pub les: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub spec: ArchitectureSpec,
    pub seeds: Vec<u64>,
    pub summary: ConfigSummary,
}

/// Mean and sample standard deviation (`None` below two values).
pub fn mean_std(values: &[f64]) -> (f64, Option<f64>) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, None);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, Some(var.sqrt()))
}

/// Groups reports by configuration and scores every group against the
/// smallest one. Groups come out ordered by kind, then parameter count.
pub fn aggregate(task: &str, reports: &[TrainReport]) -> Result<Vec<Aggregate>> {
    let mut groups: BTreeMap<(ArchitectureKind, usize, String), Vec<&TrainReport>> = BTreeMap::new();
    for r in reports {
        groups
            .entry((r.spec.kind, r.n_parameters, r.label.clone()))
            .or_default()
            .push(r);
    }
    let mut out: Vec<Aggregate> = groups
        .into_values()
        .map(|runs| {
            let first = runs[0];
            let acc: Vec<f64> = runs.iter().map(|r| 100.0 * r.test_accuracy).collect();
            let loss: Vec<f64> = runs.iter().map(|r| r.test_loss).collect();
            let (accuracy_mean, accuracy_std) = mean_std(&acc);
            let (loss_mean, loss_std) = mean_std(&loss);
            let s = &first.spec;
            Aggregate {
                spec: s.clone().with_mask_seed(0),
                seeds: runs.iter().map(|r| r.spec.mask_seed).collect(),
                summary: ConfigSummary {
                    task: task.to_string(),
                    label: first.label.clone(),
                    kind: s.kind,
                    n_somas: s.n_somas,
                    dendrites_per_soma: s.dendrites_per_soma,
                    hidden1: s.hidden1,
                    hidden2: s.hidden2,
                    n_parameters: first.n_parameters,
                    n_runs: runs.len(),
                    accuracy_mean,
                    accuracy_std,
                    loss_mean,
                    loss_std,
                    aes: f64::NAN,
                    les: f64::NAN,
                },
            }
        })
        .collect();
    if out.is_empty() {
        return Ok(out);
    }
    let models: Vec<ModelSummary> = out
        .iter()
        .map(|a| ModelSummary {
            id: a.summary.label.clone(),
            n_parameters: a.summary.n_parameters,
            accuracy: a.summary.accuracy_mean,
            loss: a.summary.loss_mean,
        })
        .collect();
    for (a, e) in out.iter_mut().zip(efficiency_scores(&models)?) {
        a.summary.aes = e.aes;
        a.summary.les = e.les;
    }
    Ok(out)
}

/// Most accurate configuration of `kind` by mean test accuracy; ties go to
/// the smaller model.
pub fn best_of(aggs: &[Aggregate], kind: ArchitectureKind) -> Option<&Aggregate> {
    aggs.iter().filter(|a| a.summary.kind == kind).max_by(|a, b| {
        a.summary
            .accuracy_mean
            .total_cmp(&b.summary.accuracy_mean)
            .then(b.summary.n_parameters.cmp(&a.summary.n_parameters))
    })
}

/// The best dense model plus, for each dendritic kind, the smallest
/// configuration whose mean accuracy reaches the dense model's (the kind's
/// best configuration if none does).
pub fn matched_models(aggs: &[Aggregate]) -> Result<Vec<ArchitectureSpec>> {
    let dense = best_of(aggs, ArchitectureKind::Vann)
        .ok_or_else(|| CliError::Runtime("sweep has no vANN results to match against".into()))?;
    let target = dense.summary.accuracy_mean;
    let mut out = Vec::new();
    for kind in ArchitectureKind::ALL.into_iter().filter(ArchitectureKind::is_dendritic) {
        let matched = aggs
            .iter()
            .filter(|a| a.summary.kind == kind && a.summary.accuracy_mean >= target)
            .min_by_key(|a| a.summary.n_parameters)
            .or_else(|| best_of(aggs, kind));
        if let Some(a) = matched {
            out.push(a.spec.clone());
        }
    }
    out.push(dense.spec.clone());
    Ok(out)
}

pub fn write_summary_csv(path: &Path, aggs: &[Aggregate]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for a in aggs {
        w.serialize(&a.summary)?;
    }
    w.flush().at(path)?;
    Ok(())
}

pub fn read_summary_csv(path: &Path) -> Result<Vec<ConfigSummary>> {
    let mut r = csv::Reader::from_path(path)?;
    r.deserialize().map(|row| row.map_err(CliError::from)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sample_std() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s.unwrap() - 1.2909944487358056).abs() < 1e-12);
        assert_eq!(mean_std(&[5.0]), (5.0, None));
    }

    fn agg(kind: ArchitectureKind, somas: usize, acc: f64) -> Aggregate {
        let grid = dendrite::Grid::new(28, 28, 1);
        let spec = match kind {
            ArchitectureKind::Vann => ArchitectureSpec::vanilla(grid, 10, somas * 2, somas),
            k => ArchitectureSpec::dendritic(k, grid, 10, somas, 4),
        };
        let n_parameters = dendrite::connectivity::count_parameters(&spec);
        let (h1, h2) = spec.hidden_sizes();
        Aggregate {
            summary: ConfigSummary {
                task: "standard".into(),
                label: spec.label(),
                kind,
                n_somas: somas,
                dendrites_per_soma: 4,
                hidden1: h1,
                hidden2: h2,
                n_parameters,
                n_runs: 5,
                accuracy_mean: acc,
                accuracy_std: Some(0.1),
                loss_mean: 0.3,
                loss_std: Some(0.01),
                aes: acc,
                les: 0.3,
            },
            spec,
            seeds: (0..5).collect(),
        }
    }

    #[test]
    fn best_prefers_accuracy_then_size() {
        use ArchitectureKind::*;
        let aggs = vec![
            agg(DannR, 64, 88.0),
            agg(DannR, 256, 89.0),
            agg(DannR, 128, 89.0),
            agg(Vann, 32, 80.0),
        ];
        assert_eq!(best_of(&aggs, DannR).unwrap().summary.n_somas, 128);
        assert_eq!(best_of(&aggs, Vann).unwrap().summary.n_somas, 32);
        assert!(best_of(&aggs, DannGrf).is_none());
    }

    #[test]
    fn matching_picks_smallest_config_reaching_dense() {
        use ArchitectureKind::*;
        let aggs = vec![
            agg(Vann, 256, 88.5),
            agg(Vann, 64, 87.0),
            agg(DannLrf, 64, 88.0),
            agg(DannLrf, 128, 88.6),
            agg(DannLrf, 512, 89.9),
            agg(DannR, 64, 87.5),
            agg(DannR, 128, 88.1),
        ];
        let specs = matched_models(&aggs).unwrap();
        let somas: Vec<(ArchitectureKind, usize)> = specs.iter().map(|s| (s.kind, s.hidden_sizes().1)).collect();
        // dANN-R never reaches the dense model, so its best stands in
        assert_eq!(somas, vec![(DannR, 128), (DannLrf, 128), (Vann, 256)]);
        assert!(matched_models(&aggs[2..]).is_err());
    }
}
