use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::LabeledDataset;
use crate::error::{Error, Result};
use crate::rng;

/// Train / validation / test triple. The index vectors record the
/// partition of the original training set.
#[derive(Debug, Clone)]
pub struct DataSplit {
    pub train: LabeledDataset,
    pub validation: LabeledDataset,
    pub test: LabeledDataset,
    pub split_seed: u64,
    pub train_indices: Vec<usize>,
    pub validation_indices: Vec<usize>,
}

/// Provenance of a split, small enough to live in reports.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub split_seed: u64,
    pub n_train: usize,
    pub n_validation: usize,
    pub n_test: usize,
}

impl DataSplit {
    pub fn summary(&self) -> SplitSummary {
        SplitSummary {
            split_seed: self.split_seed,
            n_train: self.train.len(),
            n_validation: self.validation.len(),
            n_test: self.test.len(),
        }
    }

    /// Applies `f` to all three parts.
    pub fn map(&self, mut f: impl FnMut(&LabeledDataset) -> LabeledDataset) -> Self {
        Self {
            train: f(&self.train),
            validation: f(&self.validation),
            test: f(&self.test),
            split_seed: self.split_seed,
            train_indices: self.train_indices.clone(),
            validation_indices: self.validation_indices.clone(),
        }
    }
}

/// Random 90/10 partition of `full_train`: `floor(0.9·n)` samples go to
/// training, the rest to validation.
pub fn split_train_validation(full_train: &LabeledDataset, test: LabeledDataset, seed: u64) -> Result<DataSplit> {
    let n = full_train.len();
    if n < 10 {
        return Err(Error::Domain(format!("need at least 10 samples to split, got {n}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::seeded(seed));
    let n_train = n * 9 / 10;
    let validation_indices = order.split_off(n_train);
    let train_indices = order;
    Ok(DataSplit {
        train: full_train.subset(&train_indices),
        validation: full_train.subset(&validation_indices),
        test,
        split_seed: seed,
        train_indices,
        validation_indices,
    })
}

/// Adds i.i.d. `N(0, sigma²)` noise to every feature. Values are not clipped.
pub fn add_gaussian_noise(ds: &LabeledDataset, sigma: f64, seed: u64) -> Result<LabeledDataset> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::Domain(format!("noise sigma must be ≥ 0, got {sigma}")));
    }
    let mut out = ds.clone();
    if sigma == 0.0 {
        return Ok(out);
    }
    let normal = Normal::new(0.0f64, sigma).expect("sigma validated");
    let mut rng = rng::seeded(seed);
    for x in out.features.iter_mut() {
        *x += normal.sample(&mut rng) as f32;
    }
    Ok(out)
}

/// Class-blocked minibatches: classes in ascending label order, samples of
/// each class shuffled by `epoch_seed` and chunked into `batch_size` pieces.
/// Every batch holds exactly one class.
pub fn sequential_batches(ds: &LabeledDataset, batch_size: usize, epoch_seed: u64) -> Result<Vec<Vec<usize>>> {
    if batch_size == 0 {
        return Err(Error::Config("batch_size must be ≥ 1".into()));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); ds.n_classes];
    for (i, &l) in ds.labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let mut rng = rng::seeded(epoch_seed);
    let mut batches = Vec::new();
    for mut members in by_class {
        members.shuffle(&mut rng);
        batches.extend(members.chunks(batch_size).map(<[usize]>::to_vec));
    }
    Ok(batches)
}
