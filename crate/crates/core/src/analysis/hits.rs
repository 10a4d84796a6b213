use ndarray::{Array2, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::Real;

/// Per-node activity counts. Row `i < n_classes` counts the class-`i`
/// samples for which the node's activation was positive; the last row counts
/// samples where it was not.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HitMatrix {
    /// `[(n_classes + 1) × n_nodes]`.
    pub counts: Array2<usize>,
    pub class_sizes: Vec<usize>,
}

impl HitMatrix {
    pub fn new(n_classes: usize, n_nodes: usize) -> Self {
        Self {
            counts: Array2::zeros((n_classes + 1, n_nodes)),
            class_sizes: vec![0; n_classes],
        }
    }

    pub fn n_classes(&self) -> usize {
        self.class_sizes.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.counts.ncols()
    }

    pub fn n_samples(&self) -> usize {
        self.class_sizes.iter().sum()
    }

    /// Adds a chunk of sample-major activations.
    pub fn accumulate<F: Real>(&mut self, activations: ArrayView2<'_, F>, labels: &[usize]) -> Result<()> {
        let n_classes = self.n_classes();
        if activations.nrows() != labels.len() || activations.ncols() != self.n_nodes() {
            return Err(Error::Consistency(format!(
                "activations {:?} do not match {} labels × {} nodes",
                activations.dim(),
                labels.len(),
                self.n_nodes()
            )));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::Consistency(format!("label {l} ≥ {n_classes} classes")));
        }
        for (row, &label) in activations.rows().into_iter().zip(labels) {
            self.class_sizes[label] += 1;
            for (d, &a) in row.iter().enumerate() {
                let r = if a > F::zero() { label } else { n_classes };
                self.counts[[r, d]] += 1;
            }
        }
        Ok(())
    }

    /// True for nodes never active on any sample.
    pub fn silent(&self) -> Vec<bool> {
        let n = self.n_classes();
        self.counts
            .columns()
            .into_iter()
            .map(|c| c.iter().take(n).all(|&v| v == 0))
            .collect()
    }
}

pub fn hit_matrix<F: Real>(activations: ArrayView2<'_, F>, labels: &[usize], n_classes: usize) -> Result<HitMatrix> {
    let mut hm = HitMatrix::new(n_classes, activations.ncols());
    hm.accumulate(activations, labels)?;
    Ok(hm)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeEntropy {
    /// Entropy in bits over the class-activation and inactive outcomes.
    pub bits: Vec<f64>,
    pub silent: Vec<bool>,
}

impl NodeEntropy {
    /// Entropies of the nodes that fired at least once.
    pub fn active(&self) -> impl Iterator<Item = f64> + '_ {
        self.bits.iter().zip(&self.silent).filter(|(_, &s)| !s).map(|(&h, _)| h)
    }
}

pub fn node_entropy(hm: &HitMatrix) -> NodeEntropy {
    let total = hm.n_samples() as f64;
    let bits = hm
        .counts
        .columns()
        .into_iter()
        .map(|c| {
            c.iter()
                .filter(|&&v| v > 0)
                .map(|&v| {
                    let p = v as f64 / total;
                    -p * p.log2()
                })
                .sum::<f64>()
        })
        .collect();
    NodeEntropy {
        bits,
        silent: hm.silent(),
    }
}

/// Number of classes for which each node fires on more than
/// `threshold_fraction` of that class's samples.
pub fn selectivity_index(hm: &HitMatrix, threshold_fraction: f64) -> Result<Vec<usize>> {
    if !(threshold_fraction > 0.0 && threshold_fraction <= 1.0) {
        return Err(Error::Domain(format!(
            "threshold fraction must be in (0, 1], got {threshold_fraction}"
        )));
    }
    let thresholds: Vec<f64> = hm.class_sizes.iter().map(|&n| threshold_fraction * n as f64).collect();
    Ok(hm
        .counts
        .columns()
        .into_iter()
        .map(|c| c.iter().zip(&thresholds).filter(|(&v, &t)| v as f64 > t).count())
        .collect())
}
