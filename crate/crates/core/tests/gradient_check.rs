//! Backprop against central finite differences on small random networks.

use dendrite::connectivity::{ArchitectureKind, ArchitectureSpec};
use dendrite::data::Grid;
use dendrite::network::{backward, forward, numeric_gradient, relative_error, GradientSet, NetworkParams, Storage};
use dendrite::rng;
use ndarray::Array2;
use rand::Rng;

const H: f64 = 1e-4;
const TOL: f64 = 1e-5;

fn toy_spec(kind: ArchitectureKind, r: &mut impl Rng, seed: u64) -> ArchitectureSpec {
    let grid = Grid::new(r.random_range(4..7), r.random_range(4..7), r.random_range(1..3));
    let classes = r.random_range(2..5);
    match kind {
        ArchitectureKind::Vann => ArchitectureSpec::vanilla(grid, classes, r.random_range(2..7), r.random_range(2..5)),
        k => ArchitectureSpec::dendritic(k, grid, classes, r.random_range(2..5), r.random_range(1..4))
            .with_synapses(4)
            .with_grf_spread(1),
    }
    .with_mask_seed(seed)
}

struct Case {
    params: NetworkParams<f64>,
    analytic: GradientSet<f64>,
    numeric: GradientSet<f64>,
}

fn cases(storage: Storage) -> Vec<Case> {
    let mut r = rng::seeded(2024);
    (0..50u64)
        .map(|net| {
            let spec = toy_spec(ArchitectureKind::ALL[net as usize % 4], &mut r, net);
            let mut params = NetworkParams::<f64>::from_spec(&spec, 100 + net, storage).unwrap();
            for l in params.layers.iter_mut() {
                l.bias.mapv_inplace(|_| r.random_range(-0.1..0.1));
            }
            let x = Array2::from_shape_fn((6, spec.n_inputs()), |_| r.random_range(0.0..1.0));
            let labels: Vec<usize> = (0..6).map(|_| r.random_range(0..spec.n_classes)).collect();
            let analytic = backward(&params, &forward(&params, x.view()).unwrap(), &labels).unwrap();
            let numeric = numeric_gradient(&params, x.view(), &labels, H).unwrap();
            Case {
                params,
                analytic,
                numeric,
            }
        })
        .collect()
}

fn assert_entries_close(a: &[f64], n: &[f64], what: &str) {
    for (i, (&a, &n)) in a.iter().zip(n).enumerate() {
        assert!(
            (a - n).abs() <= TOL * a.abs().max(n.abs()) + 1e-9,
            "{what}[{i}]: backprop {a:e}, finite difference {n:e}"
        );
    }
}

#[test]
fn sparse_backprop_matches_finite_differences() {
    let cases = cases(Storage::Sparse);
    let masked = cases.iter().filter(|c| c.params.layers[0].mask.is_some()).count();
    assert!(
        masked > 0 && masked < cases.len(),
        "both dense and dendritic networks are covered"
    );
    for (n, c) in cases.iter().enumerate() {
        let rel = relative_error(&c.analytic, &c.numeric);
        assert!(rel < TOL, "network {n}: relative error {rel:e}");
        for (k, (a, f)) in c.analytic.layers.iter().zip(&c.numeric.layers).enumerate() {
            assert_entries_close(&a.weights, &f.weights, &format!("net {n} layer {k} W"));
            assert_entries_close(&a.bias, &f.bias, &format!("net {n} layer {k} b"));
        }
    }
}

#[test]
fn dense_masked_backprop_matches_on_kept_weights() {
    for (n, c) in cases(Storage::DenseMasked).iter().enumerate() {
        let mut kept = c.analytic.clone();
        let mut numeric = c.numeric.clone();
        for (k, layer) in c.params.layers.iter().enumerate() {
            let Some(mask) = &layer.mask else { continue };
            let n_in = mask.n_in();
            for i in 0..kept.layers[k].weights.len() {
                if !mask.get(i / n_in, i % n_in) {
                    assert_eq!(kept.layers[k].weights[i], 0.0, "masked gradient must vanish");
                    numeric.layers[k].weights[i] = 0.0;
                    kept.layers[k].weights[i] = 0.0;
                }
            }
        }
        let rel = relative_error(&kept, &numeric);
        assert!(rel < TOL, "network {n}: relative error {rel:e}");
    }
}
