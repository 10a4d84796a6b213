use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// Shape of a weight distribution, from population (biased) moments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeightStats {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub skewness: f64,
    pub excess_kurtosis: f64,
    pub range: f64,
}

pub fn weight_stats(values: &[f64]) -> Result<WeightStats> {
    let n = values.len();
    if n < 3 {
        return Err(Error::Domain(format!("need at least 3 values, got {n}")));
    }
    let nf = n as f64;
    let mean = values.iter().sum::<f64>() / nf;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for &v in values {
        let d = v - mean;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
        lo = lo.min(v);
        hi = hi.max(v);
    }
    m2 /= nf;
    m3 /= nf;
    m4 /= nf;
    if m2 == 0.0 || !m2.is_finite() {
        return Err(Error::Degenerate("weights have zero variance".into()));
    }
    Ok(WeightStats {
        n,
        mean,
        std: m2.sqrt(),
        skewness: m3 / m2.powf(1.5),
        excess_kurtosis: m4 / (m2 * m2) - 3.0,
        range: hi - lo,
    })
}

/// Result of an unequal-variance two-sample t-test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TTest {
    pub t: f64,
    pub dof: f64,
    /// Two-tailed.
    pub p_value: f64,
    /// `0.05 / n_comparisons`.
    pub alpha: f64,
    pub significant: bool,
}

fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}

/// Welch's t-test with Welch–Satterthwaite degrees of freedom, judged at
/// a Bonferroni-corrected level of 0.05.
pub fn welch_t_test(a: &[f64], b: &[f64], n_comparisons: usize) -> Result<TTest> {
    if a.len() < 2 || b.len() < 2 {
        return Err(Error::Domain(format!(
            "each sample needs at least 2 values, got {} and {}",
            a.len(),
            b.len()
        )));
    }
    if n_comparisons == 0 {
        return Err(Error::Domain("n_comparisons must be ≥ 1".into()));
    }
    let alpha = 0.05 / n_comparisons as f64;
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (sa, sb) = (va / na, vb / nb);
    let se2 = sa + sb;
    if se2 == 0.0 {
        if ma == mb {
            return Err(Error::Degenerate(
                "both samples are constant and equal; t is undefined".into(),
            ));
        }
        // constant but different samples: infinitely strong evidence
        return Ok(TTest {
            t: if ma > mb { f64::INFINITY } else { f64::NEG_INFINITY },
            dof: na + nb - 2.0,
            p_value: 0.0,
            alpha,
            significant: true,
        });
    }
    let t = (ma - mb) / se2.sqrt();
    let dof = se2 * se2 / (sa * sa / (na - 1.0) + sb * sb / (nb - 1.0));
    let dist = StudentsT::new(0.0, 1.0, dof).map_err(|e| Error::Numeric(e.to_string()))?;
    let p_value = (2.0 * dist.cdf(-t.abs())).min(1.0);
    Ok(TTest {
        t,
        dof,
        p_value,
        alpha,
        significant: p_value < alpha,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    /// `bins + 1` edges.
    pub edges: Vec<f64>,
    pub counts: Vec<usize>,
}

/// Equal-width histogram over `[lo, hi]` (the data range when `None`).
/// The last bin is closed; values outside the range are dropped.
pub fn histogram(values: &[f64], bins: usize, range: Option<(f64, f64)>) -> Result<Histogram> {
    if bins == 0 {
        return Err(Error::Domain("histogram needs at least one bin".into()));
    }
    let (lo, hi) = match range {
        Some(r) => r,
        None if values.is_empty() => (0.0, 1.0),
        None => values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v))),
    };
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(Error::Domain(format!("invalid histogram range [{lo}, {hi}]")));
    }
    let (lo, hi) = if lo == hi { (lo - 0.5, hi + 0.5) } else { (lo, hi) };
    let width = (hi - lo) / bins as f64;
    let edges = (0..=bins).map(|i| lo + width * i as f64).collect();
    let mut counts = vec![0; bins];
    for &v in values {
        if v < lo || v > hi || v.is_nan() {
            continue;
        }
        let i = (((v - lo) / width) as usize).min(bins - 1);
        counts[i] += 1;
    }
    Ok(Histogram { edges, counts })
}
