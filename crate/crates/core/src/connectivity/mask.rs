use std::fs;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};

use super::ArchitectureSpec;
use crate::error::{Error, IoContext, Result};

/// Boolean `n_out × n_in` matrix of the weights that exist in a layer.
/// Bits are packed row-major into `u64` words.
#[derive(Clone, PartialEq, Eq)]
pub struct ConnectivityMask {
    n_out: usize,
    n_in: usize,
    words: Vec<u64>,
}

impl std::fmt::Debug for ConnectivityMask {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ConnectivityMask")
            .field("n_out", &self.n_out)
            .field("n_in", &self.n_in)
            .field("popcount", &self.popcount())
            .finish()
    }
}

impl ConnectivityMask {
    pub fn empty(n_out: usize, n_in: usize) -> Self {
        Self {
            n_out,
            n_in,
            words: vec![0; (n_out * n_in).div_ceil(64)],
        }
    }

    pub fn full(n_out: usize, n_in: usize) -> Self {
        let mut m = Self::empty(n_out, n_in);
        for o in 0..n_out {
            for i in 0..n_in {
                m.set(o, i, true);
            }
        }
        m
    }

    /// Builds a mask from per-row lists of connected input indices.
    pub fn from_rows<R, I>(n_out: usize, n_in: usize, rows: R) -> Result<Self>
    where
        R: IntoIterator<Item = I>,
        I: IntoIterator<Item = usize>,
    {
        let mut m = Self::empty(n_out, n_in);
        let mut count = 0;
        for (o, row) in rows.into_iter().enumerate() {
            if o >= n_out {
                return Err(Error::Consistency(format!("more than {n_out} mask rows")));
            }
            for i in row {
                if i >= n_in {
                    return Err(Error::Consistency(format!(
                        "mask column {i} out of range for {n_in} inputs"
                    )));
                }
                m.set(o, i, true);
            }
            count += 1;
        }
        if count != n_out {
            return Err(Error::Consistency(format!("expected {n_out} mask rows, got {count}")));
        }
        Ok(m)
    }

    pub fn n_out(&self) -> usize {
        self.n_out
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    #[inline]
    pub fn get(&self, o: usize, i: usize) -> bool {
        debug_assert!(o < self.n_out && i < self.n_in);
        let bit = o * self.n_in + i;
        self.words[bit / 64] >> (bit % 64) & 1 == 1
    }

    #[inline]
    pub fn set(&mut self, o: usize, i: usize, value: bool) {
        let bit = o * self.n_in + i;
        if value {
            self.words[bit / 64] |= 1 << (bit % 64);
        } else {
            self.words[bit / 64] &= !(1 << (bit % 64));
        }
    }

    pub fn popcount(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Connected input indices of row `o`, ascending.
    pub fn row_indices(&self, o: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_in).filter(move |&i| self.get(o, i))
    }

    pub fn row_sums(&self) -> Vec<usize> {
        (0..self.n_out).map(|o| self.row_indices(o).count()).collect()
    }

    pub fn col_sums(&self) -> Vec<usize> {
        let mut sums = vec![0; self.n_in];
        for o in 0..self.n_out {
            for i in self.row_indices(o) {
                sums[i] += 1;
            }
        }
        sums
    }

    pub fn to_dense<F: Zero + One + Clone>(&self) -> Array2<F> {
        Array2::from_shape_fn((self.n_out, self.n_in), |(o, i)| {
            if self.get(o, i) {
                F::one()
            } else {
                F::zero()
            }
        })
    }

    /// Row-compressed index structure of the true bits.
    pub fn pattern(&self) -> SparsePattern {
        let mut row_ptr = Vec::with_capacity(self.n_out + 1);
        let mut col_idx = Vec::with_capacity(self.popcount());
        row_ptr.push(0);
        for o in 0..self.n_out {
            col_idx.extend(self.row_indices(o).map(|i| i as u32));
            row_ptr.push(col_idx.len());
        }
        SparsePattern {
            n_out: self.n_out,
            n_in: self.n_in,
            row_ptr,
            col_idx,
        }
    }

    /// Packed bytes, least-significant bit first, row-major bit order.
    pub fn to_bytes(&self) -> Vec<u8> {
        let n_bytes = (self.n_out * self.n_in).div_ceil(8);
        self.words.iter().flat_map(|w| w.to_le_bytes()).take(n_bytes).collect()
    }

    pub fn from_bytes(n_out: usize, n_in: usize, bytes: &[u8]) -> Result<Self> {
        let n_bits = n_out * n_in;
        if bytes.len() != n_bits.div_ceil(8) {
            return Err(Error::Consistency(format!(
                "{} mask bytes for a {n_out}×{n_in} mask",
                bytes.len()
            )));
        }
        let mut m = Self::empty(n_out, n_in);
        for (w, chunk) in m.words.iter_mut().zip(bytes.chunks(8)) {
            let mut buf = [0u8; 8];
            buf[..chunk.len()].copy_from_slice(chunk);
            *w = u64::from_le_bytes(buf);
        }
        if !n_bits.is_multiple_of(64) {
            if let Some(last) = m.words.last() {
                if last >> (n_bits % 64) != 0 {
                    return Err(Error::Consistency("padding bits set in mask payload".into()));
                }
            }
        }
        Ok(m)
    }

    /// Writes `<stem>.json` (header) and `<stem>.bin` (packed bits).
    pub fn save(&self, stem: &Path, spec: Option<&ArchitectureSpec>, layer: usize) -> Result<()> {
        let header = MaskHeader {
            n_out: self.n_out,
            n_in: self.n_in,
            popcount: self.popcount(),
            layer,
            encoding: MASK_ENCODING.into(),
            mask_seed: spec.map(|s| s.mask_seed),
            spec: spec.cloned(),
        };
        let (json, bin) = mask_paths(stem);
        fs::write(&json, serde_json::to_vec_pretty(&header)?).with_path(&json)?;
        fs::write(&bin, self.to_bytes()).with_path(&bin)
    }

    pub fn load(stem: &Path) -> Result<(Self, MaskHeader)> {
        let (json, bin) = mask_paths(stem);
        let header: MaskHeader = serde_json::from_slice(&fs::read(&json).with_path(&json)?)?;
        if header.encoding != MASK_ENCODING {
            return Err(Error::Format {
                path: json,
                reason: format!("unknown mask encoding {:?}", header.encoding),
            });
        }
        let mask = Self::from_bytes(header.n_out, header.n_in, &fs::read(&bin).with_path(&bin)?)?;
        if mask.popcount() != header.popcount {
            return Err(Error::Consistency(format!(
                "mask popcount {} does not match header {}",
                mask.popcount(),
                header.popcount
            )));
        }
        Ok((mask, header))
    }
}

const MASK_ENCODING: &str = "bitpacked-lsb0-rowmajor";

fn mask_paths(stem: &Path) -> (PathBuf, PathBuf) {
    (stem.with_extension("json"), stem.with_extension("bin"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaskHeader {
    pub n_out: usize,
    pub n_in: usize,
    pub popcount: usize,
    pub layer: usize,
    pub encoding: String,
    pub mask_seed: Option<u64>,
    pub spec: Option<ArchitectureSpec>,
}

/// CSR view of a mask: row `o` owns `col_idx[row_ptr[o]..row_ptr[o + 1]]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparsePattern {
    pub n_out: usize,
    pub n_in: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<u32>,
}

impl SparsePattern {
    pub fn nnz(&self) -> usize {
        self.col_idx.len()
    }

    #[inline]
    pub fn row(&self, o: usize) -> std::ops::Range<usize> {
        self.row_ptr[o]..self.row_ptr[o + 1]
    }
}
