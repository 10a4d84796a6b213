use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::{GradientSet, LayerGradient, NetworkParams, Real};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-7,
        }
    }
}

/// First/second moments shaped like the network's trainable values.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<F> {
    pub config: AdamConfig,
    pub m: Vec<LayerGradient<F>>,
    pub v: Vec<LayerGradient<F>>,
    pub t: u64,
}

impl<F: Real> AdamState<F> {
    pub fn new(params: &NetworkParams<F>, config: AdamConfig) -> Self {
        let zeros = GradientSet::zeros_like(params).layers;
        Self {
            config,
            m: zeros.clone(),
            v: zeros,
            t: 0,
        }
    }
}

fn update<F: Real>(theta: &mut [F], g: &[F], m: &mut [F], v: &mut [F], k: &StepConstants<F>) {
    for (((p, &g), m), v) in theta.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
        *m = k.beta1 * *m + k.one_minus_beta1 * g;
        *v = k.beta2 * *v + k.one_minus_beta2 * g * g;
        let m_hat = *m * k.m_correction;
        let v_hat = *v * k.v_correction;
        *p = *p - k.lr * m_hat / (v_hat.sqrt() + k.eps);
    }
}

struct StepConstants<F> {
    beta1: F,
    beta2: F,
    one_minus_beta1: F,
    one_minus_beta2: F,
    m_correction: F,
    v_correction: F,
    lr: F,
    eps: F,
}

/// One bias-corrected Adam update followed by re-applying the weight masks.
/// Non-finite gradients abort the step and leave everything untouched.
pub fn adam_step<F: Real>(
    params: &mut NetworkParams<F>,
    grads: &GradientSet<F>,
    state: &mut AdamState<F>,
) -> Result<()> {
    if grads.layers.len() != params.layers.len()
        || grads
            .layers
            .iter()
            .zip(&params.layers)
            .any(|(g, l)| g.weights.len() != l.weight_values().len() || g.bias.len() != l.n_out())
    {
        return Err(Error::Consistency("gradient shapes do not match parameters".into()));
    }
    if !grads.all_finite() {
        return Err(Error::Numeric("non-finite gradient".into()));
    }
    state.t += 1;
    let c = state.config;
    let t = state.t as i32;
    let k = StepConstants {
        beta1: F::from_f64(c.beta1),
        beta2: F::from_f64(c.beta2),
        one_minus_beta1: F::from_f64(1.0 - c.beta1),
        one_minus_beta2: F::from_f64(1.0 - c.beta2),
        m_correction: F::from_f64(1.0 / (1.0 - c.beta1.powi(t))),
        v_correction: F::from_f64(1.0 / (1.0 - c.beta2.powi(t))),
        lr: F::from_f64(c.lr),
        eps: F::from_f64(c.eps),
    };
    for (((layer, g), m), v) in params
        .layers
        .iter_mut()
        .zip(&grads.layers)
        .zip(&mut state.m)
        .zip(&mut state.v)
    {
        update(
            layer.weight_values_mut(),
            &g.weights,
            &mut m.weights,
            &mut v.weights,
            &k,
        );
        update(
            layer.bias.as_slice_mut().expect("contiguous bias"),
            &g.bias,
            &mut m.bias,
            &mut v.bias,
            &k,
        );
        layer.enforce_mask();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::connectivity::{ArchitectureKind, ArchitectureSpec};
    use crate::data::Grid;
    use crate::network::{Layer, Storage};
    use crate::rng;
    use ndarray::{array, Array1};
    use rand::Rng;

    fn scalar_net(theta: f64) -> NetworkParams<f64> {
        NetworkParams::from_layers(vec![Layer::dense(array![[theta]], Array1::zeros(1)).unwrap()]).unwrap()
    }

    #[test]
    fn first_step_closed_form() {
        // m̂ = g, v̂ = g², so θ₁ = −lr·g/(|g| + ε)
        let mut net = scalar_net(0.0);
        let mut st = AdamState::new(&net, AdamConfig::default());
        let g = GradientSet {
            layers: vec![LayerGradient {
                weights: vec![0.5],
                bias: vec![0.0],
            }],
        };
        adam_step(&mut net, &g, &mut st).unwrap();
        let theta = net.layers[0].weight_values()[0];
        let expected = -0.001 * 0.5 / (0.5 + 1e-7);
        assert!((theta - expected).abs() < 1e-15, "{theta}");
        assert!((theta + 0.000_999_999_8).abs() < 1e-12);
        assert_eq!(net.layers[0].bias[0], 0.0);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn zero_gradient_is_fixed_point() {
        let mut net = scalar_net(0.3);
        let mut st = AdamState::new(&net, AdamConfig::default());
        let g = GradientSet::zeros_like(&net);
        for _ in 0..5 {
            adam_step(&mut net, &g, &mut st).unwrap();
        }
        assert_eq!(net.layers[0].weight_values()[0], 0.3);
        assert_eq!(st.t, 5);
    }

    #[test]
    fn non_finite_gradient_aborts() {
        let mut net = scalar_net(0.3);
        let mut st = AdamState::new(&net, AdamConfig::default());
        let g = GradientSet {
            layers: vec![LayerGradient {
                weights: vec![f64::NAN],
                bias: vec![0.0],
            }],
        };
        assert!(matches!(adam_step(&mut net, &g, &mut st), Err(Error::Numeric(_))));
        assert_eq!(st.t, 0);
        assert_eq!(net.layers[0].weight_values()[0], 0.3);
    }

    #[test]
    fn masked_weights_survive_random_gradients() {
        let spec = ArchitectureSpec::dendritic(ArchitectureKind::DannR, Grid::new(6, 6, 1), 3, 4, 3).with_synapses(5);
        let mut net = NetworkParams::<f32>::from_spec(&spec, 0, Storage::DenseMasked).unwrap();
        let mut st = AdamState::new(&net, AdamConfig::default());
        let mut rng = rng::seeded(1);
        for _ in 0..1000 {
            let mut g = GradientSet::zeros_like(&net);
            for (k, l) in g.layers.iter_mut().enumerate() {
                for w in l.weights.iter_mut() {
                    *w = rng.random_range(-1.0..1.0);
                }
                // gradients arrive already masked, as backward produces them
                if let Some(mask) = &net.layers[k].mask {
                    let n_in = mask.n_in();
                    for (i, w) in l.weights.iter_mut().enumerate() {
                        if !mask.get(i / n_in, i % n_in) {
                            *w = 0.0;
                        }
                    }
                }
            }
            adam_step(&mut net, &g, &mut st).unwrap();
        }
        assert_eq!(net.mask_violations(), 0);
        // moments at masked positions never accumulate
        for (k, layer) in net.layers.iter().enumerate() {
            if let Some(mask) = &layer.mask {
                let n_in = mask.n_in();
                for (i, (&m, &v)) in st.m[k].weights.iter().zip(&st.v[k].weights).enumerate() {
                    if !mask.get(i / n_in, i % n_in) {
                        assert_eq!((m, v), (0.0, 0.0));
                    }
                    assert!(v >= 0.0);
                }
            }
        }
    }
}
