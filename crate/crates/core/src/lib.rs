//! Dendritic artificial neural networks.
//!
//! Two-hidden-layer perceptrons whose first layer ("dendrites") samples a
//! small, structured subset of the input and whose second layer ("somas")
//! pools a private group of dendrites. The dense baseline shares the same
//! training machinery.

pub mod analysis;
pub mod connectivity;
pub mod data;
pub mod embed;
pub mod error;
pub mod network;
pub mod optim;
pub mod rng;

pub use connectivity::{ArchitectureKind, ArchitectureSpec, ConnectivityMask};
pub use data::{DataSplit, DatasetName, Grid, LabeledDataset};
pub use error::{Error, Result};
pub use network::{ForwardTrace, GradientSet, NetworkParams};
pub use optim::{AdamState, TrainConfig, TrainReport};
