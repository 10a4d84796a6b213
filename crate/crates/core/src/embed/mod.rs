//! 2-D embeddings of hidden activations and how well they separate classes.

mod metrics;
mod tsne;

use ndarray::{Array2, ArrayView2};
use rand::seq::index;

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::network::Real;
use crate::rng;

pub use metrics::{neighborhood_hit, silhouette, trustworthiness};
pub use tsne::{tsne, Tsne, TsneConfig};

/// Activations of a subset of samples together with their layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub high: Array2<f64>,
    pub low: Array2<f64>,
    pub labels: Vec<usize>,
    pub perplexity: f64,
    pub subset_seed: u64,
}

/// Squared Euclidean distances between all rows, accumulated in `f64`
/// one column block at a time.
pub fn pairwise_sq_dists<F: Real>(x: ArrayView2<'_, F>) -> Array2<f64> {
    const BLOCK: usize = 256;
    let (n, d) = x.dim();
    let mut gram = Array2::<f64>::zeros((n, n));
    let mut start = 0;
    while start < d {
        let end = (start + BLOCK).min(d);
        let block = x.slice(ndarray::s![.., start..end]).mapv(|v| v.as_f64());
        ndarray::linalg::general_mat_mul(1.0, &block, &block.t(), 1.0, &mut gram);
        start = end;
    }
    let norms: Vec<f64> = gram.diag().to_vec();
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..i {
            // exact for the low-dimensional case; Gram form only when it pays off
            let v = if d <= 8 {
                x.row(i)
                    .iter()
                    .zip(x.row(j))
                    .map(|(a, b)| (a.as_f64() - b.as_f64()).powi(2))
                    .sum()
            } else {
                (norms[i] + norms[j] - 2.0 * gram[[i, j]]).max(0.0)
            };
            out[[i, j]] = v;
            out[[j, i]] = v;
        }
    }
    out
}

/// Indices of the other points ordered by distance, ties by index.
pub(crate) fn neighbor_order(sq: &Array2<f64>, i: usize) -> Vec<usize> {
    let row = sq.row(i);
    let mut order: Vec<usize> = (0..sq.nrows()).filter(|&j| j != i).collect();
    order.sort_by(|&a, &b| row[a].total_cmp(&row[b]).then(a.cmp(&b)));
    order
}

/// The `k` nearest other points, ties by index.
pub(crate) fn nearest(sq: &Array2<f64>, i: usize, k: usize) -> Vec<usize> {
    let row = sq.row(i);
    let mut order: Vec<usize> = (0..sq.nrows()).filter(|&j| j != i).collect();
    let cmp = |a: &usize, b: &usize| row[*a].total_cmp(&row[*b]).then(a.cmp(b));
    if k < order.len() {
        order.select_nth_unstable_by(k, cmp);
        order.truncate(k);
    }
    order.sort_by(cmp);
    order
}

/// `n` distinct sample indices drawn uniformly without replacement, ascending.
pub fn sample_test_subset(ds: &LabeledDataset, n: usize, seed: u64) -> Result<Vec<usize>> {
    if n > ds.len() {
        return Err(Error::Domain(format!(
            "cannot draw {n} samples from {} in {}",
            ds.len(),
            ds.name
        )));
    }
    let mut idx = index::sample(&mut rng::seeded(seed), ds.len(), n).into_vec();
    idx.sort_unstable();
    Ok(idx)
}
