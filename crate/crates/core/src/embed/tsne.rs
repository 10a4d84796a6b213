use ndarray::{Array2, ArrayView2};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{nearest, pairwise_sq_dists};
use crate::error::{Error, Result};
use crate::network::Real;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub learning_rate: f64,
    pub early_exaggeration: f64,
    /// Iterations run with exaggerated affinities and the initial momentum.
    pub exaggeration_iters: usize,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    pub seed: u64,
    /// Record the KL divergence after every iteration (costs one extra pass).
    pub track_kl: bool,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 50.0,
            iterations: 1000,
            learning_rate: 200.0,
            early_exaggeration: 12.0,
            exaggeration_iters: 250,
            initial_momentum: 0.5,
            final_momentum: 0.8,
            seed: 0,
            track_kl: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tsne {
    /// `[n × 2]`.
    pub embedding: Array2<f64>,
    /// KL(P‖Q) of the final layout.
    pub kl: f64,
    pub kl_history: Vec<f64>,
}

const ENTROPY_TOL: f64 = 1e-5;
const MAX_BISECTIONS: usize = 50;
const MIN_GAIN: f64 = 0.01;
const P_FLOOR: f64 = 1e-12;

/// Conditional affinities of point `i` at precision `beta`, returning the
/// Shannon entropy (nats). `row` is overwritten.
fn conditional_row(dists: &[f64], i: usize, beta: f64, row: &mut [f64]) -> f64 {
    let d_min = dists
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, &d)| d)
        .fold(f64::INFINITY, f64::min);
    let mut sum = 0.0;
    for (j, (p, &d)) in row.iter_mut().zip(dists).enumerate() {
        *p = if j == i { 0.0 } else { (-(d - d_min) * beta).exp() };
        sum += *p;
    }
    let mut weighted = 0.0;
    for (p, &d) in row.iter_mut().zip(dists) {
        *p /= sum;
        weighted += *p * (d - d_min);
    }
    // H = log Σ exp(−β d') + β Σ p d'
    sum.ln() + beta * weighted
}

/// Bisects the precision of point `i` until the row's entropy is within
/// tolerance of `ln(perplexity)`. Leaves the final affinities in `row` and
/// returns their entropy.
fn search_row(dists: &[f64], i: usize, perplexity: f64, row: &mut [f64]) -> f64 {
    let target = perplexity.ln();
    let (mut beta, mut lo, mut hi) = (1.0, 0.0, f64::INFINITY);
    let mut h = conditional_row(dists, i, beta, row);
    for _ in 0..MAX_BISECTIONS {
        let diff = h - target;
        if diff.abs() < ENTROPY_TOL {
            break;
        }
        if diff > 0.0 {
            lo = beta;
            beta = if hi.is_infinite() {
                beta * 2.0
            } else {
                (beta + hi) / 2.0
            };
        } else {
            hi = beta;
            beta = (beta + lo) / 2.0;
        }
        h = conditional_row(dists, i, beta, row);
    }
    h
}

/// Per-point bandwidths found by bisection on the entropy, then symmetrized.
fn joint_affinities(sq: &Array2<f64>, perplexity: f64) -> Array2<f64> {
    let n = sq.nrows();
    let mut p = Array2::<f64>::zeros((n, n));
    let mut row = vec![0.0; n];
    for i in 0..n {
        let dists = sq.row(i).to_vec();
        let degenerate = dists.iter().enumerate().all(|(j, &d)| j == i || d == 0.0);
        if degenerate {
            // all neighbours coincide: uniform over the nearest ones
            let k = ((3.0 * perplexity) as usize).clamp(1, n - 1);
            for j in nearest(sq, i, k) {
                p[[i, j]] = 1.0 / k as f64;
            }
            continue;
        }
        search_row(&dists, i, perplexity, &mut row);
        p.row_mut(i).assign(&ndarray::ArrayView1::from(&row[..]));
    }
    let sym = (&p + &p.t()) / (2.0 * n as f64);
    sym.mapv(|v| v.max(P_FLOOR))
}

/// Layout split into coordinate columns for the pairwise loops.
fn columns(y: &Array2<f64>) -> (Vec<f64>, Vec<f64>) {
    (y.column(0).to_vec(), y.column(1).to_vec())
}

/// KL gradient with respect to the layout, one visit per unordered pair
/// (the joint affinities are symmetric). Attraction and repulsion are
/// accumulated separately so the kernel normalizer can be applied once known.
fn gradient(p: &Array2<f64>, exaggeration: f64, y: &Array2<f64>, grad: &mut Array2<f64>) {
    let n = y.nrows();
    let (xs, ys) = columns(y);
    let ps = p.as_slice().expect("standard layout");
    let (mut ax, mut ay) = (vec![0.0; n], vec![0.0; n]);
    let (mut rx, mut ry) = (vec![0.0; n], vec![0.0; n]);
    let mut z = 0.0;
    for i in 0..n {
        let (xi, yi) = (xs[i], ys[i]);
        let prow = &ps[i * n + i + 1..(i + 1) * n];
        let (mut sax, mut say, mut srx, mut sry, mut zi) = (0.0, 0.0, 0.0, 0.0, 0.0);
        let tail = i + 1..n;
        let (axj, ayj) = (&mut ax[tail.clone()], &mut ay[tail.clone()]);
        let (rxj, ryj) = (&mut rx[tail.clone()], &mut ry[tail.clone()]);
        for (t, &pij) in prow.iter().enumerate() {
            let j = i + 1 + t;
            let dx = xi - xs[j];
            let dy = yi - ys[j];
            let w = 1.0 / (1.0 + dx * dx + dy * dy);
            let (pw, ww) = (pij * w, w * w);
            sax += pw * dx;
            say += pw * dy;
            srx += ww * dx;
            sry += ww * dy;
            axj[t] -= pw * dx;
            ayj[t] -= pw * dy;
            rxj[t] -= ww * dx;
            ryj[t] -= ww * dy;
            zi += w;
        }
        ax[i] += sax;
        ay[i] += say;
        rx[i] += srx;
        ry[i] += sry;
        z += 2.0 * zi;
    }
    for i in 0..n {
        grad[[i, 0]] = 4.0 * (exaggeration * ax[i] - rx[i] / z);
        grad[[i, 1]] = 4.0 * (exaggeration * ay[i] - ry[i] / z);
    }
}

fn kl_divergence(p: &Array2<f64>, y: &Array2<f64>) -> f64 {
    let n = y.nrows();
    let (xs, ys) = columns(y);
    let w = |i: usize, j: usize| {
        let dx = xs[i] - xs[j];
        let dy = ys[i] - ys[j];
        1.0 / (1.0 + dx * dx + dy * dy)
    };
    let z: f64 = (0..n)
        .map(|i| (0..n).filter(|&j| j != i).map(|j| w(i, j)).sum::<f64>())
        .sum();
    let mut kl = 0.0;
    for ((i, j), &pij) in p.indexed_iter() {
        if i != j {
            let q = (w(i, j) / z).max(P_FLOOR);
            kl += pij * (pij / q).ln();
        }
    }
    kl
}

/// Exact t-SNE into two dimensions.
pub fn tsne<F: Real>(high: ArrayView2<'_, F>, cfg: &TsneConfig) -> Result<Tsne> {
    let n = high.nrows();
    if cfg.perplexity.is_nan() || cfg.perplexity <= 1.0 {
        return Err(Error::Domain(format!(
            "perplexity must exceed 1, got {}",
            cfg.perplexity
        )));
    }
    if (n as f64) < 3.0 * cfg.perplexity {
        return Err(Error::Domain(format!(
            "t-SNE needs at least 3·perplexity = {} points, got {n}",
            3.0 * cfg.perplexity
        )));
    }
    if high.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite input to t-SNE".into()));
    }
    let p = joint_affinities(&pairwise_sq_dists(high), cfg.perplexity);

    let normal = Normal::new(0.0, 1e-2).expect("valid std");
    let mut r = rng::seeded(cfg.seed);
    let mut y = Array2::from_shape_simple_fn((n, 2), || normal.sample(&mut r));
    let mut update = Array2::<f64>::zeros((n, 2));
    let mut gains = Array2::<f64>::ones((n, 2));
    let mut grad = Array2::<f64>::zeros((n, 2));
    let mut kl_history = Vec::new();

    for iter in 0..cfg.iterations {
        let early = iter < cfg.exaggeration_iters;
        let exaggeration = if early { cfg.early_exaggeration } else { 1.0 };
        let momentum = if early {
            cfg.initial_momentum
        } else {
            cfg.final_momentum
        };
        gradient(&p, exaggeration, &y, &mut grad);
        for ((g, u), gain) in grad.iter().zip(update.iter_mut()).zip(gains.iter_mut()) {
            *gain = if (*g > 0.0) != (*u > 0.0) {
                *gain + 0.2
            } else {
                *gain * 0.8
            };
            *gain = gain.max(MIN_GAIN);
            *u = momentum * *u - cfg.learning_rate * *gain * *g;
        }
        y += &update;
        // keep the layout centred
        for mut col in y.columns_mut() {
            let mean = col.mean().unwrap_or(0.0);
            col.mapv_inplace(|v| v - mean);
        }
        if cfg.track_kl {
            kl_history.push(kl_divergence(&p, &y));
        }
    }
    let kl = kl_divergence(&p, &y);
    if !kl.is_finite() || y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("t-SNE diverged".into()));
    }
    Ok(Tsne {
        embedding: y,
        kl,
        kl_history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::neighborhood_hit;
    use rand_distr::StandardNormal;

    fn clusters(n_each: usize, dim: usize, sep: f64, seed: u64) -> (Array2<f64>, Vec<usize>) {
        let mut r = rng::seeded(seed);
        let x = Array2::from_shape_fn((2 * n_each, dim), |(i, j)| {
            let z: f64 = StandardNormal.sample(&mut r);
            z + if i >= n_each && j == 0 { sep } else { 0.0 }
        });
        let labels = (0..2 * n_each).map(|i| usize::from(i >= n_each)).collect();
        (x, labels)
    }

    #[test]
    fn bandwidths_hit_the_perplexity() {
        let (x, _) = clusters(40, 5, 3.0, 1);
        let sq = pairwise_sq_dists(x.view());
        let mut row = vec![0.0; 80];
        let h = search_row(&sq.row(7).to_vec(), 7, 10.0, &mut row);
        let direct: f64 = -row.iter().filter(|&&p| p > 0.0).map(|&p| p * p.ln()).sum::<f64>();
        assert!((h - direct).abs() < 1e-9);
        assert!((direct - 10f64.ln()).abs() < 1e-4);
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn joint_affinities_are_a_distribution() {
        let (x, _) = clusters(30, 4, 2.0, 2);
        let p = joint_affinities(&pairwise_sq_dists(x.view()), 10.0);
        let total: f64 = p.indexed_iter().filter(|((i, j), _)| i != j).map(|(_, v)| v).sum();
        assert!((total - 1.0).abs() < 1e-6);
        assert_eq!(p, p.t());
    }

    #[test]
    fn duplicate_points_fall_back_to_uniform() {
        let x = Array2::<f64>::zeros((40, 3));
        let p = joint_affinities(&pairwise_sq_dists(x.view()), 5.0);
        assert!(p.iter().all(|v| v.is_finite()));
        let out = tsne(
            x.view(),
            &TsneConfig {
                perplexity: 5.0,
                iterations: 50,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(out.embedding.dim(), (40, 2));
    }

    #[test]
    fn separated_clusters_stay_separated() {
        let (x, labels) = clusters(100, 50, 20.0, 3);
        let cfg = TsneConfig {
            perplexity: 30.0,
            track_kl: true,
            ..Default::default()
        };
        let out = tsne(x.view(), &cfg).unwrap();
        assert_eq!(out.embedding.dim(), (200, 2));
        assert!(neighborhood_hit(out.embedding.view(), &labels, 11).unwrap() > 0.99);
        let tail = &out.kl_history[out.kl_history.len() - 100..];
        for w in tail.windows(2) {
            assert!(w[1] <= w[0] + 1e-3, "{} → {}", w[0], w[1]);
        }
        assert!((out.kl - out.kl_history.last().unwrap()).abs() < 1e-12);
    }

    #[test]
    fn deterministic_per_seed() {
        let (x, _) = clusters(30, 5, 5.0, 4);
        let cfg = TsneConfig {
            perplexity: 10.0,
            iterations: 100,
            seed: 11,
            ..Default::default()
        };
        let a = tsne(x.view(), &cfg).unwrap();
        let b = tsne(x.view(), &cfg).unwrap();
        assert_eq!(a.embedding, b.embedding);
        let c = tsne(x.view(), &TsneConfig { seed: 12, ..cfg }).unwrap();
        assert_ne!(a.embedding, c.embedding);
    }

    #[test]
    fn preconditions() {
        let x = Array2::<f64>::zeros((20, 3));
        assert!(tsne(
            x.view(),
            &TsneConfig {
                perplexity: 10.0,
                ..Default::default()
            }
        )
        .is_err());
        assert!(tsne(
            x.view(),
            &TsneConfig {
                perplexity: 1.0,
                ..Default::default()
            }
        )
        .is_err());
    }
}
