use serde::{Deserialize, Serialize};

use crate::data::Grid;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ArchitectureKind {
    /// Dendrites sample inputs uniformly at random.
    #[serde(rename = "dANN-R")]
    DannR,
    /// Each dendrite samples a local square window.
    #[serde(rename = "dANN-LRF")]
    DannLrf,
    /// Dendrites of a soma sample windows scattered around a soma center.
    #[serde(rename = "dANN-GRF")]
    DannGrf,
    /// Fully connected baseline.
    #[serde(rename = "vANN")]
    Vann,
}

impl ArchitectureKind {
    pub const ALL: [ArchitectureKind; 4] = [
        ArchitectureKind::DannR,
        ArchitectureKind::DannLrf,
        ArchitectureKind::DannGrf,
        ArchitectureKind::Vann,
    ];

    pub fn is_dendritic(&self) -> bool {
        !matches!(self, ArchitectureKind::Vann)
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ArchitectureKind::DannR => "dANN-R",
            ArchitectureKind::DannLrf => "dANN-LRF",
            ArchitectureKind::DannGrf => "dANN-GRF",
            ArchitectureKind::Vann => "vANN",
        }
    }
}

impl std::fmt::Display for ArchitectureKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ArchitectureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ArchitectureKind::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown architecture kind {s:?}")))
    }
}

fn default_synapses() -> usize {
    16
}

fn default_grf_spread() -> usize {
    4
}

/// Everything needed to rebuild a network's masks and layer shapes.
///
/// Dendritic kinds use `n_somas`/`dendrites_per_soma` (hidden sizes are
/// `n_somas·dendrites_per_soma` and `n_somas`); the dense baseline uses
/// `hidden1`/`hidden2`. Unused fields are zero.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ArchitectureSpec {
    pub kind: ArchitectureKind,
    #[serde(default)]
    pub n_somas: usize,
    #[serde(default)]
    pub dendrites_per_soma: usize,
    #[serde(default = "default_synapses")]
    pub synapses_per_dendrite: usize,
    #[serde(default = "default_grf_spread")]
    pub grf_spread: usize,
    #[serde(default)]
    pub hidden1: usize,
    #[serde(default)]
    pub hidden2: usize,
    pub grid: Grid,
    pub n_classes: usize,
    #[serde(default)]
    pub mask_seed: u64,
}

impl ArchitectureSpec {
    pub fn dendritic(
        kind: ArchitectureKind,
        grid: Grid,
        n_classes: usize,
        n_somas: usize,
        dendrites_per_soma: usize,
    ) -> Self {
        Self {
            kind,
            n_somas,
            dendrites_per_soma,
            synapses_per_dendrite: default_synapses(),
            grf_spread: default_grf_spread(),
            hidden1: 0,
            hidden2: 0,
            grid,
            n_classes,
            mask_seed: 0,
        }
    }

    pub fn vanilla(grid: Grid, n_classes: usize, hidden1: usize, hidden2: usize) -> Self {
        Self {
            kind: ArchitectureKind::Vann,
            n_somas: 0,
            dendrites_per_soma: 0,
            synapses_per_dendrite: default_synapses(),
            grf_spread: default_grf_spread(),
            hidden1,
            hidden2,
            grid,
            n_classes,
            mask_seed: 0,
        }
    }

    pub fn with_mask_seed(mut self, seed: u64) -> Self {
        self.mask_seed = seed;
        self
    }

    pub fn with_synapses(mut self, k: usize) -> Self {
        self.synapses_per_dendrite = k;
        self
    }

    pub fn with_grf_spread(mut self, spread: usize) -> Self {
        self.grf_spread = spread;
        self
    }

    pub fn n_inputs(&self) -> usize {
        self.grid.len()
    }

    /// Sizes of the two hidden layers.
    pub fn hidden_sizes(&self) -> (usize, usize) {
        if self.kind.is_dendritic() {
            (self.n_somas * self.dendrites_per_soma, self.n_somas)
        } else {
            (self.hidden1, self.hidden2)
        }
    }

    /// `[n_inputs, hidden1, hidden2, n_classes]`.
    pub fn layer_sizes(&self) -> [usize; 4] {
        let (h1, h2) = self.hidden_sizes();
        [self.n_inputs(), h1, h2, self.n_classes]
    }

    /// Short identifier of the configuration (seed excluded).
    pub fn label(&self) -> String {
        if self.kind.is_dendritic() {
            format!("{}_s{}_d{}", self.kind, self.n_somas, self.dendrites_per_soma)
        } else {
            format!("{}_h{}-{}", self.kind, self.hidden1, self.hidden2)
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n_in = self.n_inputs();
        if n_in == 0 || self.n_classes == 0 {
            return Err(Error::Config("inputs and classes must be positive".into()));
        }
        let (h1, h2) = self.hidden_sizes();
        if h1 == 0 || h2 == 0 {
            return Err(Error::Config(format!(
                "{}: hidden layer sizes must be positive, got ({h1}, {h2})",
                self.kind
            )));
        }
        if self.kind.is_dendritic() {
            let k = self.synapses_per_dendrite;
            if k == 0 || k > n_in {
                return Err(Error::Config(format!(
                    "synapses_per_dendrite must be in 1..={n_in}, got {k}"
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_names_round_trip() {
        for k in ArchitectureKind::ALL {
            assert_eq!(k.as_str().parse::<ArchitectureKind>().unwrap(), k);
            let json = serde_json::to_string(&k).unwrap();
            assert_eq!(json, format!("\"{}\"", k.as_str()));
        }
    }

    #[test]
    fn hidden_sizes_derive_from_somas() {
        let s = ArchitectureSpec::dendritic(ArchitectureKind::DannR, Grid::new(28, 28, 1), 10, 256, 8);
        assert_eq!(s.layer_sizes(), [784, 2048, 256, 10]);
        let v = ArchitectureSpec::vanilla(Grid::new(28, 28, 1), 10, 512, 256);
        assert_eq!(v.layer_sizes(), [784, 512, 256, 10]);
        assert_eq!(v.label(), "vANN_h512-256");
        assert_eq!(s.label(), "dANN-R_s256_d8");
    }

    #[test]
    fn validate_rejects_too_many_synapses() {
        let s = ArchitectureSpec::dendritic(ArchitectureKind::DannR, Grid::new(2, 2, 1), 2, 1, 1);
        assert!(s.validate().is_err());
        assert!(s.clone().with_synapses(4).validate().is_ok());
    }
}
