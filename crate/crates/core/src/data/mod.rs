//! Benchmark datasets: loading, the 90/10 train/validation split, and the
//! noisy and class-sequential task variants.

mod cifar;
mod idx;
mod transform;

use std::path::{Path, PathBuf};

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use cifar::{load_cifar10, CIFAR10_RECORD_LEN};
pub use idx::{load_idx_dataset, read_idx_images, read_idx_labels, write_idx_images, write_idx_labels};
pub use transform::{add_gaussian_noise, sequential_batches, split_train_validation, DataSplit, SplitSummary};

/// Environment variable consulted for the dataset root when no flag is given.
pub const DATA_DIR_ENV: &str = "DENDRITE_DATA_DIR";

/// Original image layout of a flattened sample. Multichannel images are
/// flattened channel-major: all of channel 0 row by row, then channel 1, ...
#[derive(Debug, Clone, Copy, PartialEq, Hash, Eq, Serialize, Deserialize)]
pub struct Grid {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl Grid {
    pub const fn new(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
        }
    }

    pub const fn len(&self) -> usize {
        self.height * self.width * self.channels
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Flat feature index of pixel `(row, col)` in `channel`.
    #[inline]
    pub const fn index(&self, channel: usize, row: usize, col: usize) -> usize {
        (channel * self.height + row) * self.width + col
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub name: String,
    /// `[n_samples × n_features]`, row per sample.
    pub features: Array2<f32>,
    pub labels: Vec<usize>,
    pub n_classes: usize,
    pub grid: Grid,
}

impl LabeledDataset {
    pub fn new(
        name: impl Into<String>,
        features: Array2<f32>,
        labels: Vec<usize>,
        n_classes: usize,
        grid: Grid,
    ) -> Result<Self> {
        let ds = Self {
            name: name.into(),
            features,
            labels,
            n_classes,
            grid,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.features.ncols() != self.grid.len() {
            return Err(Error::Consistency(format!(
                "{} features per sample but grid {:?} holds {}",
                self.features.ncols(),
                self.grid,
                self.grid.len()
            )));
        }
        if self.features.nrows() != self.labels.len() {
            return Err(Error::Consistency(format!(
                "{} samples but {} labels",
                self.features.nrows(),
                self.labels.len()
            )));
        }
        if self.n_classes == 0 {
            return Err(Error::Consistency("n_classes must be positive".into()));
        }
        if let Some(&bad) = self.labels.iter().find(|&&l| l >= self.n_classes) {
            return Err(Error::Consistency(format!(
                "label {bad} out of range for {} classes",
                self.n_classes
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.features.ncols()
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            name: self.name.clone(),
            features: self.features.select(Axis(0), indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            n_classes: self.n_classes,
            grid: self.grid,
        }
    }

    pub fn with_n_classes(mut self, n_classes: usize) -> Result<Self> {
        self.n_classes = n_classes;
        self.validate()?;
        Ok(self)
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }
}

/// The five benchmark datasets and where their canonical files live under
/// a data root.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetName {
    Mnist,
    Fmnist,
    Kmnist,
    Emnist,
    Cifar10,
}

impl DatasetName {
    pub const ALL: [DatasetName; 5] = [
        DatasetName::Mnist,
        DatasetName::Fmnist,
        DatasetName::Kmnist,
        DatasetName::Emnist,
        DatasetName::Cifar10,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            DatasetName::Mnist => "mnist",
            DatasetName::Fmnist => "fmnist",
            DatasetName::Kmnist => "kmnist",
            DatasetName::Emnist => "emnist",
            DatasetName::Cifar10 => "cifar10",
        }
    }

    pub fn n_classes(&self) -> usize {
        match self {
            DatasetName::Emnist => 47,
            _ => 10,
        }
    }

    pub fn grid(&self) -> Grid {
        match self {
            DatasetName::Cifar10 => Grid::new(32, 32, 3),
            _ => Grid::new(28, 28, 1),
        }
    }

    /// Training epochs used for the standard task on this dataset.
    pub fn default_epochs(&self) -> usize {
        match self {
            DatasetName::Mnist => 15,
            DatasetName::Fmnist | DatasetName::Kmnist => 20,
            DatasetName::Emnist | DatasetName::Cifar10 => 50,
        }
    }

    /// `(train files, test files)` relative to the data root.
    pub fn files(&self, root: &Path) -> (Vec<PathBuf>, Vec<PathBuf>) {
        let dir = root.join(self.as_str());
        match self {
            DatasetName::Cifar10 => (
                (1..=5).map(|i| dir.join(format!("data_batch_{i}.bin"))).collect(),
                vec![dir.join("test_batch.bin")],
            ),
            DatasetName::Emnist => (
                vec![
                    dir.join("emnist-balanced-train-images-idx3-ubyte"),
                    dir.join("emnist-balanced-train-labels-idx1-ubyte"),
                ],
                vec![
                    dir.join("emnist-balanced-test-images-idx3-ubyte"),
                    dir.join("emnist-balanced-test-labels-idx1-ubyte"),
                ],
            ),
            _ => (
                vec![dir.join("train-images-idx3-ubyte"), dir.join("train-labels-idx1-ubyte")],
                vec![dir.join("t10k-images-idx3-ubyte"), dir.join("t10k-labels-idx1-ubyte")],
            ),
        }
    }

    pub fn missing_files(&self, root: &Path) -> Vec<PathBuf> {
        let (train, test) = self.files(root);
        train.into_iter().chain(test).filter(|p| !p.is_file()).collect()
    }

    /// Loads `(full training set, test set)`.
    pub fn load(&self, root: &Path) -> Result<(LabeledDataset, LabeledDataset)> {
        let (train, test) = self.files(root);
        let (mut train, mut test) = match self {
            DatasetName::Cifar10 => (load_cifar10(&train)?, load_cifar10(&test)?),
            _ => (
                load_idx_dataset(&train[0], &train[1])?,
                load_idx_dataset(&test[0], &test[1])?,
            ),
        };
        train = train.with_n_classes(self.n_classes())?;
        test = test.with_n_classes(self.n_classes())?;
        train.name = format!("{}-train", self.as_str());
        test.name = format!("{}-test", self.as_str());
        Ok((train, test))
    }
}

impl std::fmt::Display for DatasetName {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for DatasetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        DatasetName::ALL
            .into_iter()
            .find(|d| d.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown dataset {s:?}")))
    }
}

/// Data root: explicit flag, else `$DENDRITE_DATA_DIR`, else `./data`.
pub fn resolve_data_dir(flag: Option<&Path>) -> PathBuf {
    flag.map(Path::to_path_buf)
        .or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("data"))
}
