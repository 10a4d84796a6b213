use ndarray::linalg::general_mat_mul;
use ndarray::{Array2, ArrayView2, ArrayViewMut2, Axis};

use super::{Layer, NetworkParams, Real, Weights};
use crate::error::{Error, Result};

/// Intermediates of one forward pass, all feature-major `[units × batch]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardTrace<F> {
    pub input: Array2<F>,
    /// Pre-activations `W·x + b` per layer.
    pub pre: Vec<Array2<F>>,
    /// Activations per layer; the last one holds class probabilities.
    pub act: Vec<Array2<F>>,
}

impl<F: Real> ForwardTrace<F> {
    pub fn batch_size(&self) -> usize {
        self.input.ncols()
    }

    /// Sample-major `[batch × units]` activations of layer `k`.
    pub fn activations(&self, k: usize) -> ArrayView2<'_, F> {
        self.act[k].t()
    }

    /// Sample-major class probabilities.
    pub fn probs(&self) -> ArrayView2<'_, F> {
        self.act.last().expect("nonempty").t()
    }
}

#[inline]
pub fn leaky_relu<F: Real>(x: F, slope: F) -> F {
    if x > F::zero() {
        x
    } else {
        x * slope
    }
}

/// Row-wise softmax of a sample-major matrix, max-shifted.
pub fn softmax_rows<F: Real>(logits: ArrayView2<'_, F>) -> Array2<F> {
    let mut out = logits.to_owned();
    for row in out.rows_mut() {
        softmax_in_place(row);
    }
    out
}

fn softmax_in_place<'a, F: Real>(mut v: ndarray::ArrayViewMut1<'a, F>) {
    let max = v.iter().copied().fold(F::neg_infinity(), F::max);
    let mut sum = F::zero();
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum = sum + *x;
    }
    for x in v.iter_mut() {
        *x = *x / sum;
    }
}

/// `out = W·x + b` for one layer, `x` and `out` feature-major.
pub(crate) fn affine<F: Real>(layer: &Layer<F>, x: ArrayView2<'_, F>, mut out: ArrayViewMut2<'_, F>) {
    let batch = x.ncols();
    for (mut row, &b) in out.axis_iter_mut(Axis(0)).zip(layer.bias.iter()) {
        row.fill(b);
    }
    match &layer.weights {
        Weights::Dense(w) => general_mat_mul(F::one(), w, &x, F::one(), &mut out),
        Weights::Sparse { pattern, values } => {
            let x = x.as_slice().expect("feature-major input is contiguous");
            let out = out.as_slice_mut().expect("contiguous output");
            for o in 0..pattern.n_out {
                let dst = &mut out[o * batch..(o + 1) * batch];
                for k in pattern.row(o) {
                    let c = pattern.col_idx[k] as usize;
                    let w = values[k];
                    let src = &x[c * batch..(c + 1) * batch];
                    for (d, &s) in dst.iter_mut().zip(src) {
                        *d = *d + w * s;
                    }
                }
            }
        }
    }
}

/// Runs a sample-major batch `[batch × n_inputs]` through the network.
/// Hidden layers use LeakyReLU, the output layer softmax.
pub fn forward<F: Real>(params: &NetworkParams<F>, batch: ArrayView2<'_, F>) -> Result<ForwardTrace<F>> {
    if batch.ncols() != params.n_inputs() {
        return Err(Error::Consistency(format!(
            "batch has {} features, network expects {}",
            batch.ncols(),
            params.n_inputs()
        )));
    }
    if batch.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("non-finite value in input batch".into()));
    }
    let n = batch.nrows();
    let input = batch.t().as_standard_layout().into_owned();
    let n_layers = params.layers.len();
    let mut pre = Vec::with_capacity(n_layers);
    let mut act: Vec<Array2<F>> = Vec::with_capacity(n_layers);
    for (k, layer) in params.layers.iter().enumerate() {
        let mut z = Array2::zeros((layer.n_out(), n));
        {
            let x = if k == 0 { input.view() } else { act[k - 1].view() };
            affine(layer, x, z.view_mut());
        }
        let a = if k + 1 == n_layers {
            let mut a = z.clone();
            for col in a.axis_iter_mut(Axis(1)) {
                softmax_in_place(col);
            }
            a
        } else {
            z.mapv(|v| leaky_relu(v, params.leaky_slope))
        };
        pre.push(z);
        act.push(a);
    }
    Ok(ForwardTrace { input, pre, act })
}
