//! The masked two-hidden-layer perceptron.
//!
//! Activations are stored feature-major (`[units × batch]`) so that a
//! sparse layer's inner loop is an axpy over a contiguous batch row.
//! Public accessors hand back sample-major views.
//!
//! A masked layer can be stored two ways:
//!
//! * [`Storage::Sparse`]: only the weights at true mask bits exist, held in
//!   CSR order. Masked-out weights and their gradients are absent, which is
//!   the same as being identically zero.
//! * [`Storage::DenseMasked`]: a full matrix multiplied by the mask after
//!   initialization and after every update, with gradients multiplied by the
//!   mask before the update. Slower; kept as the reference route.

mod backward;
mod checkpoint;
mod forward;
mod gradcheck;
mod loss;

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::sync::Arc;

use ndarray::{Array1, Array2, LinalgScalar, ScalarOperand};
use num_traits::Float;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::connectivity::{build_masks, ArchitectureSpec, ConnectivityMask, SparsePattern};
use crate::error::{Error, Result};
use crate::rng;

pub use backward::{backward, mask_gradient, GradientSet, LayerGradient};
pub use checkpoint::{load_checkpoint, save_checkpoint, CheckpointHeader};
pub use forward::{forward, leaky_relu, softmax_rows, ForwardTrace};
pub use gradcheck::{numeric_gradient, relative_error};
pub use loss::{loss_and_accuracy, LOG_CLAMP};

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.1;

/// Floating-point element type of a network (`f32` for training, `f64`
/// for gradient verification).
pub trait Real: Float + LinalgScalar + ScalarOperand + Sum + Default + Debug + Display + Send + Sync + 'static {
    fn from_f64(x: f64) -> Self;
    fn as_f64(self) -> f64;
}

impl Real for f32 {
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    fn as_f64(self) -> f64 {
        f64::from(self)
    }
}

impl Real for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }
    fn as_f64(self) -> f64 {
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Storage {
    #[default]
    Sparse,
    DenseMasked,
}

#[derive(Debug, Clone)]
pub enum Weights<F> {
    /// `[n_out × n_in]`, row-major.
    Dense(Array2<F>),
    /// One value per nonzero of `pattern`, in CSR order.
    Sparse {
        pattern: Arc<SparsePattern>,
        values: Vec<F>,
    },
}

#[derive(Debug, Clone)]
pub struct Layer<F> {
    pub weights: Weights<F>,
    pub bias: Array1<F>,
    pub mask: Option<Arc<ConnectivityMask>>,
}

impl<F: Real> Layer<F> {
    pub fn dense(weights: Array2<F>, bias: Array1<F>) -> Result<Self> {
        if weights.nrows() != bias.len() {
            return Err(Error::Consistency(format!(
                "{} weight rows but {} biases",
                weights.nrows(),
                bias.len()
            )));
        }
        Ok(Self {
            weights: Weights::Dense(weights.as_standard_layout().into_owned()),
            bias,
            mask: None,
        })
    }

    /// Applies `mask` to `weights` and stores the result in `storage` form.
    pub fn masked(weights: Array2<F>, bias: Array1<F>, mask: ConnectivityMask, storage: Storage) -> Result<Self> {
        if weights.dim() != (mask.n_out(), mask.n_in()) {
            return Err(Error::Consistency(format!(
                "weights {:?} do not match mask {}×{}",
                weights.dim(),
                mask.n_out(),
                mask.n_in()
            )));
        }
        let mut layer = Self::dense(weights, bias)?;
        layer.mask = Some(Arc::new(mask));
        layer.enforce_mask();
        if storage == Storage::Sparse {
            layer = layer.into_sparse();
        }
        Ok(layer)
    }

    fn into_sparse(self) -> Self {
        match (&self.weights, &self.mask) {
            (Weights::Dense(w), Some(mask)) => {
                let pattern = mask.pattern();
                let mut values = Vec::with_capacity(pattern.nnz());
                for o in 0..pattern.n_out {
                    for &c in &pattern.col_idx[pattern.row(o)] {
                        values.push(w[[o, c as usize]]);
                    }
                }
                Self {
                    weights: Weights::Sparse {
                        pattern: Arc::new(pattern),
                        values,
                    },
                    bias: self.bias,
                    mask: self.mask,
                }
            }
            _ => self,
        }
    }

    pub fn n_out(&self) -> usize {
        self.bias.len()
    }

    pub fn n_in(&self) -> usize {
        match &self.weights {
            Weights::Dense(w) => w.ncols(),
            Weights::Sparse { pattern, .. } => pattern.n_in,
        }
    }

    pub fn storage(&self) -> Storage {
        match (&self.weights, &self.mask) {
            (Weights::Sparse { .. }, _) => Storage::Sparse,
            (Weights::Dense(_), Some(_)) => Storage::DenseMasked,
            (Weights::Dense(_), None) => Storage::Sparse,
        }
    }

    /// Flat trainable weights: row-major for dense storage, CSR order for
    /// sparse storage.
    pub fn weight_values(&self) -> &[F] {
        match &self.weights {
            Weights::Dense(w) => w.as_slice().expect("standard layout"),
            Weights::Sparse { values, .. } => values,
        }
    }

    pub fn weight_values_mut(&mut self) -> &mut [F] {
        match &mut self.weights {
            Weights::Dense(w) => w.as_slice_mut().expect("standard layout"),
            Weights::Sparse { values, .. } => values,
        }
    }

    /// The full `[n_out × n_in]` matrix, zeros at masked-out positions.
    pub fn dense_weights(&self) -> Array2<F> {
        match &self.weights {
            Weights::Dense(w) => w.clone(),
            Weights::Sparse { pattern, values } => {
                let mut w = Array2::zeros((pattern.n_out, pattern.n_in));
                for o in 0..pattern.n_out {
                    for k in pattern.row(o) {
                        w[[o, pattern.col_idx[k] as usize]] = values[k];
                    }
                }
                w
            }
        }
    }

    /// Weights at true mask bits (all weights when unmasked).
    pub fn kept_weights(&self) -> Vec<F> {
        match (&self.weights, &self.mask) {
            (Weights::Dense(w), Some(mask)) => w
                .indexed_iter()
                .filter(|((o, i), _)| mask.get(*o, *i))
                .map(|(_, &v)| v)
                .collect(),
            _ => self.weight_values().to_vec(),
        }
    }

    /// Number of trainable weights plus biases.
    pub fn trainable_parameters(&self) -> usize {
        let weights = match (&self.weights, &self.mask) {
            (Weights::Dense(_), Some(mask)) => mask.popcount(),
            _ => self.weight_values().len(),
        };
        weights + self.bias.len()
    }

    /// Zeroes weights at false mask bits.
    pub fn enforce_mask(&mut self) {
        if let (Weights::Dense(w), Some(mask)) = (&mut self.weights, &self.mask) {
            for ((o, i), v) in w.indexed_iter_mut() {
                if !mask.get(o, i) {
                    *v = F::zero();
                }
            }
        }
    }

    /// Count of nonzero weights at false mask bits (0 for a healthy layer).
    pub fn mask_violations(&self) -> usize {
        let Some(mask) = &self.mask else { return 0 };
        self.dense_weights()
            .indexed_iter()
            .filter(|((o, i), v)| !mask.get(*o, *i) && **v != F::zero())
            .count()
    }

    fn cast<G: Real>(&self) -> Layer<G> {
        let conv = |x: &F| G::from_f64(x.as_f64());
        Layer {
            weights: match &self.weights {
                Weights::Dense(w) => Weights::Dense(w.map(conv)),
                Weights::Sparse { pattern, values } => Weights::Sparse {
                    pattern: Arc::clone(pattern),
                    values: values.iter().map(conv).collect(),
                },
            },
            bias: self.bias.map(conv),
            mask: self.mask.clone(),
        }
    }
}

/// Weight layers of a network plus the hidden-layer activation slope.
#[derive(Debug, Clone)]
pub struct NetworkParams<F = f32> {
    pub layers: Vec<Layer<F>>,
    pub leaky_slope: F,
}

impl<F: Real> NetworkParams<F> {
    pub fn from_layers(layers: Vec<Layer<F>>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Config("a network needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[1].n_in() != pair[0].n_out() {
                return Err(Error::Consistency(format!(
                    "layer with {} outputs feeds a layer with {} inputs",
                    pair[0].n_out(),
                    pair[1].n_in()
                )));
            }
        }
        Ok(Self {
            layers,
            leaky_slope: F::from_f64(DEFAULT_LEAKY_SLOPE),
        })
    }

    /// Glorot-uniform weights (limits from the dense layer shape), masked,
    /// with zero biases.
    pub fn initialize(
        spec: &ArchitectureSpec,
        masks: Vec<Option<ConnectivityMask>>,
        init_seed: u64,
        storage: Storage,
    ) -> Result<Self> {
        spec.validate()?;
        let sizes = spec.layer_sizes();
        if masks.len() != sizes.len() - 1 {
            return Err(Error::Config(format!(
                "expected {} masks, got {}",
                sizes.len() - 1,
                masks.len()
            )));
        }
        let mut layers = Vec::with_capacity(masks.len());
        for (l, mask) in masks.into_iter().enumerate() {
            let (n_in, n_out) = (sizes[l], sizes[l + 1]);
            if let Some(m) = &mask {
                if (m.n_out(), m.n_in()) != (n_out, n_in) {
                    return Err(Error::Config(format!(
                        "layer {l} mask is {}×{}, architecture needs {n_out}×{n_in}",
                        m.n_out(),
                        m.n_in()
                    )));
                }
            }
            let limit = (6.0 / (n_in + n_out) as f64).sqrt();
            let uniform = Uniform::new_inclusive(-limit, limit).expect("finite limits");
            let mut rng = rng::stream(init_seed, 100 + l as u64);
            let w = Array2::from_shape_simple_fn((n_out, n_in), || F::from_f64(uniform.sample(&mut rng)));
            let b = Array1::zeros(n_out);
            layers.push(match mask {
                Some(m) => Layer::masked(w, b, m, storage)?,
                None => Layer::dense(w, b)?,
            });
        }
        Self::from_layers(layers)
    }

    /// Builds masks from `spec` and initializes.
    pub fn from_spec(spec: &ArchitectureSpec, init_seed: u64, storage: Storage) -> Result<Self> {
        Self::initialize(spec, build_masks(spec)?, init_seed, storage)
    }

    pub fn n_inputs(&self) -> usize {
        self.layers[0].n_in()
    }

    pub fn n_outputs(&self) -> usize {
        self.layers.last().expect("nonempty").n_out()
    }

    pub fn trainable_parameters(&self) -> usize {
        self.layers.iter().map(Layer::trainable_parameters).sum()
    }

    pub fn mask_violations(&self) -> usize {
        self.layers.iter().map(Layer::mask_violations).sum()
    }

    pub fn enforce_masks(&mut self) {
        self.layers.iter_mut().for_each(Layer::enforce_mask);
    }

    /// Same network with every layer's precision converted.
    pub fn cast<G: Real>(&self) -> NetworkParams<G> {
        NetworkParams {
            layers: self.layers.iter().map(Layer::cast).collect(),
            leaky_slope: G::from_f64(self.leaky_slope.as_f64()),
        }
    }

    /// Same network with masked layers switched to `storage`.
    pub fn with_storage(&self, storage: Storage) -> Self {
        let layers = self
            .layers
            .iter()
            .map(|layer| match (&layer.mask, storage) {
                (Some(mask), _) => Layer::masked(layer.dense_weights(), layer.bias.clone(), (**mask).clone(), storage)
                    .expect("shapes unchanged"),
                (None, _) => layer.clone(),
            })
            .collect();
        Self {
            layers,
            leaky_slope: self.leaky_slope,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::connectivity::{count_parameters, ArchitectureKind};
    use crate::data::Grid;

    #[test]
    fn init_respects_masks_and_zero_bias() {
        for storage in [Storage::Sparse, Storage::DenseMasked] {
            let spec = ArchitectureSpec::dendritic(ArchitectureKind::DannLrf, Grid::new(28, 28, 1), 10, 32, 4);
            let net = NetworkParams::<f32>::from_spec(&spec, 3, storage).unwrap();
            assert_eq!(net.mask_violations(), 0);
            assert!(net.layers.iter().all(|l| l.bias.iter().all(|&b| b == 0.0)));
            assert_eq!(net.trainable_parameters(), count_parameters(&spec));
            let mask = net.layers[0].mask.as_ref().unwrap();
            let w = net.layers[0].dense_weights();
            for ((o, i), v) in w.indexed_iter() {
                if !mask.get(o, i) {
                    assert_eq!(*v, 0.0);
                }
            }
        }
    }

    #[test]
    fn both_storages_hold_identical_weights() {
        let spec = ArchitectureSpec::dendritic(ArchitectureKind::DannGrf, Grid::new(28, 28, 1), 10, 8, 4);
        let a = NetworkParams::<f32>::from_spec(&spec, 9, Storage::Sparse).unwrap();
        let b = NetworkParams::<f32>::from_spec(&spec, 9, Storage::DenseMasked).unwrap();
        for (la, lb) in a.layers.iter().zip(&b.layers) {
            assert_eq!(la.dense_weights(), lb.dense_weights());
        }
    }

    #[test]
    fn glorot_variance_uses_dense_shape() {
        // Kept weights of a 784 -> 2048 layer are uniform on ±sqrt(6/2832):
        // variance (2·limit)²/12.
        let spec = ArchitectureSpec::vanilla(Grid::new(28, 28, 1), 10, 2048, 16);
        let net = NetworkParams::<f32>::from_spec(&spec, 1, Storage::Sparse).unwrap();
        let w = net.layers[0].weight_values();
        let n = w.len() as f64;
        let mean = w.iter().map(|&x| f64::from(x)).sum::<f64>() / n;
        let var = w.iter().map(|&x| (f64::from(x) - mean).powi(2)).sum::<f64>() / n;
        let limit = (6.0f64 / (784.0 + 2048.0)).sqrt();
        let expected = (2.0 * limit).powi(2) / 12.0;
        assert!((var / expected - 1.0).abs() < 0.05, "{var} vs {expected}");
        assert!(w.iter().all(|&x| f64::from(x).abs() <= limit + 1e-7));
    }

    #[test]
    fn init_is_deterministic() {
        let spec = ArchitectureSpec::dendritic(ArchitectureKind::DannR, Grid::new(28, 28, 1), 10, 8, 2);
        let a = NetworkParams::<f32>::from_spec(&spec, 4, Storage::Sparse).unwrap();
        let b = NetworkParams::<f32>::from_spec(&spec, 4, Storage::Sparse).unwrap();
        let c = NetworkParams::<f32>::from_spec(&spec, 5, Storage::Sparse).unwrap();
        assert_eq!(a.layers[0].weight_values(), b.layers[0].weight_values());
        assert_ne!(a.layers[0].weight_values(), c.layers[0].weight_values());
    }

    #[test]
    fn init_rejects_mismatched_masks() {
        let spec = ArchitectureSpec::vanilla(Grid::new(2, 2, 1), 2, 3, 3);
        let bad = vec![Some(ConnectivityMask::full(3, 5)), None, None];
        assert!(matches!(
            NetworkParams::<f32>::initialize(&spec, bad, 0, Storage::Sparse),
            Err(Error::Config(_))
        ));
        assert!(NetworkParams::<f32>::initialize(&spec, vec![None, None], 0, Storage::Sparse).is_err());
    }

    #[test]
    fn layer_chain_is_checked() {
        let l1 = Layer::dense(Array2::<f64>::zeros((3, 2)), Array1::zeros(3)).unwrap();
        let l2 = Layer::dense(Array2::<f64>::zeros((1, 4)), Array1::zeros(1)).unwrap();
        assert!(NetworkParams::from_layers(vec![l1, l2]).is_err());
    }
}
