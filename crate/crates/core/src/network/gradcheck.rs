use ndarray::ArrayView2;

use super::{forward, loss_and_accuracy, GradientSet, LayerGradient, NetworkParams, Real};
use crate::error::Result;

/// Central-difference gradient of the mean cross-entropy, one stored value
/// at a time. Aligned with [`super::backward`]'s output. For dense masked
/// storage this also differentiates the masked-out positions, which
/// `backward` deliberately reports as zero.
pub fn numeric_gradient<F: Real>(
    params: &NetworkParams<F>,
    batch: ArrayView2<'_, F>,
    labels: &[usize],
    h: F,
) -> Result<GradientSet<F>> {
    let mut work = params.clone();
    let loss = |p: &NetworkParams<F>| -> Result<f64> {
        let trace = forward(p, batch)?;
        Ok(loss_and_accuracy(trace.probs(), labels)?.0)
    };
    let two_h = 2.0 * h.as_f64();
    let mut layers = Vec::with_capacity(params.layers.len());
    for k in 0..params.layers.len() {
        let n_w = params.layers[k].weight_values().len();
        let mut weights = Vec::with_capacity(n_w);
        for i in 0..n_w {
            let orig = work.layers[k].weight_values()[i];
            work.layers[k].weight_values_mut()[i] = orig + h;
            let up = loss(&work)?;
            work.layers[k].weight_values_mut()[i] = orig - h;
            let down = loss(&work)?;
            work.layers[k].weight_values_mut()[i] = orig;
            weights.push(F::from_f64((up - down) / two_h));
        }
        let mut bias = Vec::with_capacity(params.layers[k].n_out());
        for i in 0..params.layers[k].n_out() {
            let orig = work.layers[k].bias[i];
            work.layers[k].bias[i] = orig + h;
            let up = loss(&work)?;
            work.layers[k].bias[i] = orig - h;
            let down = loss(&work)?;
            work.layers[k].bias[i] = orig;
            bias.push(F::from_f64((up - down) / two_h));
        }
        layers.push(LayerGradient { weights, bias });
    }
    Ok(GradientSet { layers })
}

/// `‖a − b‖ / (‖a‖ + ‖b‖)` over every entry of two gradient sets (0 when both vanish).
pub fn relative_error<F: Real>(a: &GradientSet<F>, b: &GradientSet<F>) -> f64 {
    let (mut diff, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (la, lb) in a.layers.iter().zip(&b.layers) {
        let xs = la.weights.iter().chain(&la.bias);
        let ys = lb.weights.iter().chain(&lb.bias);
        for (&x, &y) in xs.zip(ys) {
            let (x, y) = (x.as_f64(), y.as_f64());
            diff += (x - y) * (x - y);
            na += x * x;
            nb += y * y;
        }
    }
    let denom = na.sqrt() + nb.sqrt();
    if denom == 0.0 {
        0.0
    } else {
        diff.sqrt() / denom
    }
}
