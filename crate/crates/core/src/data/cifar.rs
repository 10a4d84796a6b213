//! CIFAR-10 binary batches: records of one label byte followed by 3072
//! pixel bytes (1024 red, 1024 green, 1024 blue; each row-major 32×32).

use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use super::{Grid, LabeledDataset};
use crate::error::{Error, IoContext, Result};

pub const CIFAR10_RECORD_LEN: usize = 1 + 3072;

pub fn load_cifar10(batch_paths: &[PathBuf]) -> Result<LabeledDataset> {
    let mut labels = Vec::new();
    let mut pixels: Vec<f32> = Vec::new();
    for path in batch_paths {
        let bytes = fs::read(path).with_path(path)?;
        if bytes.is_empty() || bytes.len() % CIFAR10_RECORD_LEN != 0 {
            return Err(Error::Format {
                path: path.clone(),
                reason: format!(
                    "length {} is not a positive multiple of {CIFAR10_RECORD_LEN}",
                    bytes.len()
                ),
            });
        }
        for record in bytes.chunks_exact(CIFAR10_RECORD_LEN) {
            let label = usize::from(record[0]);
            if label >= 10 {
                return Err(Error::Format {
                    path: path.clone(),
                    reason: format!("label byte {label} outside 0..10"),
                });
            }
            labels.push(label);
            pixels.extend(record[1..].iter().map(|&b| f32::from(b) / 255.0));
        }
    }
    let n = labels.len();
    let features = Array2::from_shape_vec((n, 3072), pixels).expect("record layout");
    let name = batch_paths
        .first()
        .and_then(|p| p.parent())
        .map(Path::display)
        .map(|d| d.to_string())
        .unwrap_or_else(|| "cifar10".into());
    LabeledDataset::new(name, features, labels, 10, Grid::new(32, 32, 3))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_records_channel_major() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.bin");
        let mut rec = vec![9u8];
        rec.extend(std::iter::repeat_n(255u8, 1024)); // red
        rec.extend(std::iter::repeat_n(0u8, 1024)); // green
        rec.extend(std::iter::repeat_n(51u8, 1024)); // blue
        let mut bytes = rec.clone();
        rec[0] = 0;
        bytes.extend(&rec);
        fs::write(&path, bytes).unwrap();

        let ds = load_cifar10(&[path]).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.n_features(), 3072);
        assert_eq!(ds.grid, Grid::new(32, 32, 3));
        assert_eq!(ds.labels, vec![9, 0]);
        assert_eq!(ds.features[[0, ds.grid.index(0, 5, 5)]], 1.0);
        assert_eq!(ds.features[[0, ds.grid.index(1, 5, 5)]], 0.0);
        assert_eq!(ds.features[[0, ds.grid.index(2, 5, 5)]], 0.2);
    }

    #[test]
    fn concatenates_batches() {
        let dir = tempfile::tempdir().unwrap();
        let paths: Vec<PathBuf> = (0..3)
            .map(|i| {
                let p = dir.path().join(format!("b{i}.bin"));
                let mut rec = vec![i as u8];
                rec.resize(CIFAR10_RECORD_LEN, 0);
                fs::write(&p, rec.repeat(2)).unwrap();
                p
            })
            .collect();
        let ds = load_cifar10(&paths).unwrap();
        assert_eq!(ds.labels, vec![0, 0, 1, 1, 2, 2]);
    }

    #[test]
    fn bad_length_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.bin");
        fs::write(&path, vec![0u8; CIFAR10_RECORD_LEN + 1]).unwrap();
        assert!(matches!(load_cifar10(&[path]), Err(Error::Format { .. })));
    }
}
