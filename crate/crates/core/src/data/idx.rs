//! IDX container (MNIST family): big-endian header, then raw `u8` payload.

use std::fs;
use std::path::Path;

use ndarray::Array2;

use super::{Grid, LabeledDataset};
use crate::error::{Error, IoContext, Result};

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize) -> u32 {
    u32::from_be_bytes(bytes[at..at + 4].try_into().unwrap())
}

fn format_err(path: &Path, reason: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Raw image bytes `[n × (rows·cols)]` and `(rows, cols)`.
pub fn read_idx_images(path: &Path) -> Result<(Array2<u8>, usize, usize)> {
    let bytes = fs::read(path).with_path(path)?;
    if bytes.len() < 16 {
        return Err(format_err(path, "truncated header"));
    }
    let magic = be_u32(&bytes, 0);
    if magic != IMAGES_MAGIC {
        return Err(format_err(
            path,
            format!("bad image magic {magic:#010x}, expected {IMAGES_MAGIC:#010x}"),
        ));
    }
    let n = be_u32(&bytes, 4) as usize;
    let rows = be_u32(&bytes, 8) as usize;
    let cols = be_u32(&bytes, 12) as usize;
    let expected = 16 + n * rows * cols;
    if bytes.len() != expected {
        return Err(format_err(
            path,
            format!("expected {expected} bytes for {n}×{rows}×{cols}, found {}", bytes.len()),
        ));
    }
    let pixels = Array2::from_shape_vec((n, rows * cols), bytes[16..].to_vec()).expect("length checked above");
    Ok((pixels, rows, cols))
}

pub fn read_idx_labels(path: &Path) -> Result<Vec<u8>> {
    let bytes = fs::read(path).with_path(path)?;
    if bytes.len() < 8 {
        return Err(format_err(path, "truncated header"));
    }
    let magic = be_u32(&bytes, 0);
    if magic != LABELS_MAGIC {
        return Err(format_err(
            path,
            format!("bad label magic {magic:#010x}, expected {LABELS_MAGIC:#010x}"),
        ));
    }
    let n = be_u32(&bytes, 4) as usize;
    if bytes.len() != 8 + n {
        return Err(format_err(
            path,
            format!("expected {} bytes for {n} labels, found {}", 8 + n, bytes.len()),
        ));
    }
    Ok(bytes[8..].to_vec())
}

/// Loads an image/label IDX pair. Pixels are scaled to `[0, 1]` by `/255`;
/// `n_classes` is inferred as `max label + 1`.
pub fn load_idx_dataset(images_path: &Path, labels_path: &Path) -> Result<LabeledDataset> {
    let (pixels, rows, cols) = read_idx_images(images_path)?;
    let labels = read_idx_labels(labels_path)?;
    if pixels.nrows() != labels.len() {
        return Err(Error::Consistency(format!(
            "{} holds {} images but {} holds {} labels",
            images_path.display(),
            pixels.nrows(),
            labels_path.display(),
            labels.len()
        )));
    }
    let features = pixels.mapv(|b| f32::from(b) / 255.0);
    let labels: Vec<usize> = labels.into_iter().map(usize::from).collect();
    let n_classes = labels.iter().max().map_or(1, |&m| m + 1);
    let name = images_path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    LabeledDataset::new(name, features, labels, n_classes, Grid::new(rows, cols, 1))
}

/// Writes single-channel features back to IDX bytes (`round(x·255)`).
pub fn write_idx_images(path: &Path, ds: &LabeledDataset) -> Result<()> {
    if ds.grid.channels != 1 {
        return Err(Error::Config("IDX images must be single-channel".into()));
    }
    let mut out = Vec::with_capacity(16 + ds.features.len());
    out.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    out.extend_from_slice(&(ds.len() as u32).to_be_bytes());
    out.extend_from_slice(&(ds.grid.height as u32).to_be_bytes());
    out.extend_from_slice(&(ds.grid.width as u32).to_be_bytes());
    out.extend(ds.features.iter().map(|&x| (x * 255.0).round().clamp(0.0, 255.0) as u8));
    fs::write(path, out).with_path(path)
}

pub fn write_idx_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    for &l in labels {
        let b = u8::try_from(l).map_err(|_| Error::Config(format!("label {l} does not fit in a byte")))?;
        out.push(b);
    }
    fs::write(path, out).with_path(path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn raw_images(n: u32, rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
        let mut v = Vec::new();
        v.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
        v.extend_from_slice(&n.to_be_bytes());
        v.extend_from_slice(&rows.to_be_bytes());
        v.extend_from_slice(&cols.to_be_bytes());
        v.extend_from_slice(pixels);
        v
    }

    fn raw_labels(labels: &[u8]) -> Vec<u8> {
        let mut v = Vec::new();
        v.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
        v.extend_from_slice(&(labels.len() as u32).to_be_bytes());
        v.extend_from_slice(labels);
        v
    }

    #[test]
    fn normalizes_endpoints_and_reads_header() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("img");
        let lab = dir.path().join("lab");
        fs::write(&img, raw_images(2, 2, 3, &[0, 255, 128, 1, 2, 3, 255, 0, 0, 0, 0, 0])).unwrap();
        fs::write(&lab, raw_labels(&[7, 2])).unwrap();
        let ds = load_idx_dataset(&img, &lab).unwrap();
        assert_eq!(ds.grid, Grid::new(2, 3, 1));
        assert_eq!(ds.features[[0, 0]], 0.0);
        assert_eq!(ds.features[[0, 1]], 1.0);
        assert_eq!(ds.features[[1, 0]], 1.0);
        assert_eq!(ds.labels, vec![7, 2]);
        assert_eq!(ds.n_classes, 8);
    }

    #[test]
    fn bad_magic_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("img");
        let lab = dir.path().join("lab");
        let mut bytes = raw_images(1, 1, 1, &[0]);
        bytes[3] = 0x01;
        fs::write(&img, bytes).unwrap();
        fs::write(&lab, raw_labels(&[0])).unwrap();
        assert!(matches!(load_idx_dataset(&img, &lab), Err(Error::Format { .. })));
        // swapped files: the label file fails the image magic check
        assert!(matches!(load_idx_dataset(&lab, &lab), Err(Error::Format { .. })));
    }

    #[test]
    fn count_mismatch_is_consistency_error() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("img");
        let lab = dir.path().join("lab");
        fs::write(&img, raw_images(2, 1, 1, &[0, 1])).unwrap();
        fs::write(&lab, raw_labels(&[0, 1, 1])).unwrap();
        assert!(matches!(load_idx_dataset(&img, &lab), Err(Error::Consistency(_))));
    }

    #[test]
    fn truncated_payload_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("img");
        fs::write(&img, raw_images(2, 2, 2, &[0; 7])).unwrap();
        assert!(matches!(read_idx_images(&img), Err(Error::Format { .. })));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn write_then_read_reproduces_pixel_bytes(
            pixels in proptest::collection::vec(any::<u8>(), 4 * 3 * 5),
            labels in proptest::collection::vec(0u8..10, 4),
        ) {
            let dir = tempfile::tempdir().unwrap();
            let img = dir.path().join("img");
            let lab = dir.path().join("lab");
            fs::write(&img, raw_images(4, 3, 5, &pixels)).unwrap();
            fs::write(&lab, raw_labels(&labels)).unwrap();
            let ds = load_idx_dataset(&img, &lab).unwrap();
            let img2 = dir.path().join("img2");
            let lab2 = dir.path().join("lab2");
            write_idx_images(&img2, &ds).unwrap();
            write_idx_labels(&lab2, &ds.labels).unwrap();
            prop_assert_eq!(fs::read(&img).unwrap(), fs::read(&img2).unwrap());
            prop_assert_eq!(fs::read(&lab).unwrap(), fs::read(&lab2).unwrap());
        }
    }
}
