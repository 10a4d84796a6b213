use std::collections::HashSet;

use ndarray::ArrayView2;

use super::{nearest, neighbor_order, pairwise_sq_dists};
use crate::error::{Error, Result};
use crate::network::Real;

fn check_labels<F>(points: &ArrayView2<'_, F>, labels: &[usize]) -> Result<()> {
    if points.nrows() != labels.len() {
        return Err(Error::Consistency(format!(
            "{} points but {} labels",
            points.nrows(),
            labels.len()
        )));
    }
    Ok(())
}

/// Mean silhouette coefficient over all points. Points whose class has no
/// other member score 0.
pub fn silhouette<F: Real>(points: ArrayView2<'_, F>, labels: &[usize]) -> Result<f64> {
    check_labels(&points, labels)?;
    let n_classes = labels.iter().max().map_or(0, |&m| m + 1);
    let mut sizes = vec![0usize; n_classes];
    for &l in labels {
        sizes[l] += 1;
    }
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return Err(Error::Domain("silhouette needs at least two classes".into()));
    }
    let sq = pairwise_sq_dists(points);
    let n = labels.len();
    let mut total = 0.0;
    let mut sums = vec![0.0; n_classes];
    for i in 0..n {
        let own = labels[i];
        if sizes[own] < 2 {
            continue;
        }
        sums.iter_mut().for_each(|s| *s = 0.0);
        for j in 0..n {
            if j != i {
                sums[labels[j]] += sq[[i, j]].sqrt();
            }
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..n_classes)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom > 0.0 {
            total += (b - a) / denom;
        }
    }
    Ok(total / n as f64)
}

/// Mean fraction of each point's `k` nearest neighbours (self excluded,
/// ties by index) that share its label.
pub fn neighborhood_hit<F: Real>(points: ArrayView2<'_, F>, labels: &[usize], k: usize) -> Result<f64> {
    check_labels(&points, labels)?;
    let n = labels.len();
    if k == 0 || k >= n {
        return Err(Error::Domain(format!("need 1 ≤ k < n, got k={k}, n={n}")));
    }
    let sq = pairwise_sq_dists(points);
    let hits: usize = (0..n)
        .map(|i| nearest(&sq, i, k).iter().filter(|&&j| labels[j] == labels[i]).count())
        .sum();
    Ok(hits as f64 / (n * k) as f64)
}

/// How few false neighbours the low-dimensional layout introduces; 1 when
/// every point's `k` nearest neighbours are the same in both spaces.
pub fn trustworthiness<F: Real, G: Real>(high: ArrayView2<'_, F>, low: ArrayView2<'_, G>, k: usize) -> Result<f64> {
    let n = high.nrows();
    if low.nrows() != n {
        return Err(Error::Consistency(format!(
            "{n} high-dimensional points but {} low-dimensional",
            low.nrows()
        )));
    }
    if k == 0 || 2 * k >= n {
        return Err(Error::Domain(format!("need 1 ≤ k < n/2, got k={k}, n={n}")));
    }
    let sq_high = pairwise_sq_dists(high);
    let sq_low = pairwise_sq_dists(low);
    let mut rank = vec![0usize; n];
    let mut penalty = 0usize;
    for i in 0..n {
        for (r, j) in neighbor_order(&sq_high, i).into_iter().enumerate() {
            rank[j] = r + 1;
        }
        let high_nn: HashSet<usize> = nearest(&sq_high, i, k).into_iter().collect();
        penalty += nearest(&sq_low, i, k)
            .into_iter()
            .filter(|j| !high_nn.contains(j))
            .map(|j| rank[j] - k)
            .sum::<usize>();
    }
    let (nf, kf) = (n as f64, k as f64);
    Ok(1.0 - 2.0 / (nf * kf * (2.0 * nf - 3.0 * kf - 1.0)) * penalty as f64)
}
