use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView2, Axis};

use super::forward::ForwardTrace;
use super::{Layer, NetworkParams, Real, Weights};
use crate::connectivity::ConnectivityMask;
use crate::error::{Error, Result};

/// Gradient of one layer, laid out like [`Layer::weight_values`].
#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient<F> {
    pub weights: Vec<F>,
    pub bias: Vec<F>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet<F> {
    pub layers: Vec<LayerGradient<F>>,
}

impl<F: Real> GradientSet<F> {
    pub fn zeros_like(params: &NetworkParams<F>) -> Self {
        Self {
            layers: params
                .layers
                .iter()
                .map(|l| LayerGradient {
                    weights: vec![F::zero(); l.weight_values().len()],
                    bias: vec![F::zero(); l.n_out()],
                })
                .collect(),
        }
    }

    /// Full `[n_out × n_in]` weight gradient of layer `k`.
    pub fn dense_weights(&self, params: &NetworkParams<F>, k: usize) -> Array2<F> {
        let layer = &params.layers[k];
        match &layer.weights {
            Weights::Dense(w) => Array2::from_shape_vec(w.dim(), self.layers[k].weights.clone()).expect("shape"),
            Weights::Sparse { pattern, .. } => {
                let mut g = Array2::zeros((pattern.n_out, pattern.n_in));
                for o in 0..pattern.n_out {
                    for i in pattern.row(o) {
                        g[[o, pattern.col_idx[i] as usize]] = self.layers[k].weights[i];
                    }
                }
                g
            }
        }
    }

    pub fn all_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|x| x.is_finite()))
    }
}

/// Zeroes gradient entries at false mask bits.
pub fn mask_gradient<F: Real>(grad: &mut Array2<F>, mask: &ConnectivityMask) {
    for ((o, i), g) in grad.indexed_iter_mut() {
        if !mask.get(o, i) {
            *g = F::zero();
        }
    }
}

/// Dot product with eight independent accumulators so it vectorizes.
#[inline]
fn dot<F: Real>(a: &[F], b: &[F]) -> F {
    let mut acc = [F::zero(); 8];
    let (ca, cb) = (a.chunks_exact(8), b.chunks_exact(8));
    let tail = ca
        .remainder()
        .iter()
        .zip(cb.remainder())
        .fold(F::zero(), |s, (&x, &y)| s + x * y);
    for (xa, xb) in ca.zip(cb) {
        for l in 0..8 {
            acc[l] = acc[l] + xa[l] * xb[l];
        }
    }
    acc.iter().fold(tail, |s, &v| s + v)
}

/// `dW = δ·xᵀ` restricted to the layer's stored weights.
fn weight_gradient<F: Real>(layer: &Layer<F>, delta: &Array2<F>, x: ArrayView2<'_, F>) -> Vec<F> {
    let batch = delta.ncols();
    match &layer.weights {
        Weights::Dense(w) => {
            let mut g = Array2::zeros(w.dim());
            general_mat_mul(F::one(), delta, &x.t(), F::zero(), &mut g);
            if let Some(mask) = &layer.mask {
                mask_gradient(&mut g, mask);
            }
            g.into_raw_vec_and_offset().0
        }
        Weights::Sparse { pattern, .. } => {
            let d = delta.as_slice().expect("contiguous delta");
            let x = x.as_slice().expect("contiguous activations");
            let mut g = vec![F::zero(); pattern.nnz()];
            for o in 0..pattern.n_out {
                let drow = &d[o * batch..(o + 1) * batch];
                for k in pattern.row(o) {
                    let c = pattern.col_idx[k] as usize;
                    let xrow = &x[c * batch..(c + 1) * batch];
                    g[k] = dot(drow, xrow);
                }
            }
            g
        }
    }
}

/// `Wᵀ·δ`, the gradient with respect to the layer input.
fn input_gradient<F: Real>(layer: &Layer<F>, delta: &Array2<F>) -> Array2<F> {
    let batch = delta.ncols();
    match &layer.weights {
        Weights::Dense(w) => {
            let mut dx = Array2::zeros((w.ncols(), batch));
            general_mat_mul(F::one(), &w.t(), delta, F::zero(), &mut dx);
            dx
        }
        Weights::Sparse { pattern, values } => {
            let mut dx = Array2::zeros((pattern.n_in, batch));
            let d = delta.as_slice().expect("contiguous delta");
            let out = dx.as_slice_mut().expect("contiguous");
            for o in 0..pattern.n_out {
                let drow = &d[o * batch..(o + 1) * batch];
                for k in pattern.row(o) {
                    let c = pattern.col_idx[k] as usize;
                    let w = values[k];
                    for (t, &s) in out[c * batch..(c + 1) * batch].iter_mut().zip(drow) {
                        *t = *t + w * s;
                    }
                }
            }
            dx
        }
    }
}

/// Exact gradients of the mean cross-entropy over the batch in `trace`.
/// Gradients at masked-out weights are zero (absent for sparse storage).
pub fn backward<F: Real>(
    params: &NetworkParams<F>,
    trace: &ForwardTrace<F>,
    labels: &[usize],
) -> Result<GradientSet<F>> {
    let batch = trace.batch_size();
    let n_classes = params.n_outputs();
    if labels.len() != batch {
        return Err(Error::Consistency(format!(
            "{} labels for a batch of {batch}",
            labels.len()
        )));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= n_classes) {
        return Err(Error::Consistency(format!("label {bad} ≥ {n_classes} classes")));
    }
    let scale = F::one() / F::from_f64(batch as f64);
    // softmax + cross-entropy: δ = (p − onehot) / batch
    let mut delta = trace.act.last().expect("nonempty").clone();
    for (b, &l) in labels.iter().enumerate() {
        delta[[l, b]] = delta[[l, b]] - F::one();
    }
    delta.mapv_inplace(|v| v * scale);

    let n_layers = params.layers.len();
    let mut grads: Vec<LayerGradient<F>> = Vec::with_capacity(n_layers);
    for k in (0..n_layers).rev() {
        let layer = &params.layers[k];
        let x = if k == 0 {
            trace.input.view()
        } else {
            trace.act[k - 1].view()
        };
        let weights = weight_gradient(layer, &delta, x);
        let bias = delta.sum_axis(Axis(1)).to_vec();
        grads.push(LayerGradient { weights, bias });
        if k > 0 {
            let mut dx = input_gradient(layer, &delta);
            let slope = params.leaky_slope;
            ndarray::Zip::from(&mut dx).and(&trace.pre[k - 1]).for_each(|g, &z| {
                if z <= F::zero() {
                    *g = *g * slope;
                }
            });
            delta = dx;
        }
    }
    grads.reverse();
    Ok(GradientSet { layers: grads })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::connectivity::{ArchitectureKind, ArchitectureSpec};
    use crate::data::Grid;
    use crate::network::{forward, Layer, Storage};
    use ndarray::{array, Array1};

    fn toy_vann() -> NetworkParams<f64> {
        let spec = ArchitectureSpec::vanilla(Grid::new(2, 3, 1), 2, 4, 2);
        NetworkParams::from_spec(&spec, 0, Storage::Sparse).unwrap()
    }

    #[test]
    fn masked_positions_have_zero_gradient() {
        let spec = ArchitectureSpec::dendritic(ArchitectureKind::DannLrf, Grid::new(6, 6, 1), 3, 3, 2);
        let net = NetworkParams::<f64>::from_spec(&spec, 0, Storage::DenseMasked).unwrap();
        let x = Array2::from_shape_fn((5, 36), |(i, j)| ((i * 7 + j) as f64).cos());
        let t = forward(&net, x.view()).unwrap();
        let g = backward(&net, &t, &[0, 1, 2, 0, 1]).unwrap();
        for k in 0..2 {
            let mask = net.layers[k].mask.as_ref().unwrap();
            let dense = g.dense_weights(&net, k);
            for ((o, i), v) in dense.indexed_iter() {
                if !mask.get(o, i) {
                    assert_eq!(*v, 0.0);
                }
            }
        }
    }

    #[test]
    fn sparse_gradients_equal_masked_dense_gradients() {
        // Reference route: dense gradients of the unmasked matrix, then the
        // Hadamard mask, must equal the gradients of the sparse storage.
        let spec =
            ArchitectureSpec::dendritic(ArchitectureKind::DannGrf, Grid::new(8, 8, 1), 4, 3, 3).with_mask_seed(5);
        let sparse = NetworkParams::<f64>::from_spec(&spec, 2, Storage::Sparse).unwrap();
        let dense = sparse.with_storage(Storage::DenseMasked);
        let x = Array2::from_shape_fn((6, 64), |(i, j)| ((i * 64 + j) as f64 * 0.11).sin());
        let labels = [0, 1, 2, 3, 0, 1];
        let gs = backward(&sparse, &forward(&sparse, x.view()).unwrap(), &labels).unwrap();
        let gd = backward(&dense, &forward(&dense, x.view()).unwrap(), &labels).unwrap();
        for k in 0..3 {
            let a = gs.dense_weights(&sparse, k);
            let b = gd.dense_weights(&dense, k);
            for (u, v) in a.iter().zip(&b) {
                assert!((u - v).abs() < 1e-12);
            }
            for (u, v) in gs.layers[k].bias.iter().zip(&gd.layers[k].bias) {
                assert!((u - v).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn saturated_correct_outputs_have_zero_gradient() {
        let l1 = Layer::dense(array![[1.0f64, 0.5], [0.3, -0.2]], Array1::zeros(2)).unwrap();
        let l2 = Layer::dense(array![[1.0, 1.0]], Array1::zeros(1)).unwrap();
        let l3 = Layer::dense(array![[0.0], [0.0]], array![1000.0, -1000.0]).unwrap();
        let net = NetworkParams::from_layers(vec![l1, l2, l3]).unwrap();
        let x = array![[1.0, 2.0], [0.5, -1.0]];
        let t = forward(&net, x.view()).unwrap();
        let g = backward(&net, &t, &[0, 0]).unwrap();
        for l in &g.layers {
            assert!(l.weights.iter().chain(&l.bias).all(|v| v.abs() < 1e-12));
        }
    }

    #[test]
    fn rejects_label_mismatch() {
        let net = toy_vann();
        let x = Array2::zeros((2, 6));
        let t = forward(&net, x.view()).unwrap();
        assert!(backward(&net, &t, &[0]).is_err());
        assert!(backward(&net, &t, &[0, 2]).is_err());
    }
}
