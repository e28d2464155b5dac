//! Seeded random networks for gradient and Lipschitz tests.

use otxai_core::losses::{HkrConfig, HkrVariant, LossKind};
use otxai_core::model::{Dense, Layer};
use otxai_core::{LipNet, Rng, Tensor};

fn dense(inputs: usize, outputs: usize, rng: &mut Rng) -> Dense {
    let w = Tensor::matrix(outputs, inputs, rng.normal_vec(inputs * outputs, 0.5)).unwrap();
    let b = Tensor::vector(rng.normal_vec(outputs, 0.3)).unwrap();
    Dense::new(w, b).unwrap()
}

/// Random net with `hidden` dense layers (each followed by an activation)
/// and a dense head with `q` outputs. Hidden widths are even and ≤ 16.
/// Spectral layers are left unprojected unless the caller projects.
pub fn random_net(input_dim: usize, hidden: usize, q: usize, groupsort: bool, spectral: bool, rng: &mut Rng) -> LipNet {
    let mut layers = Vec::new();
    let mut width = input_dim;
    for _ in 0..hidden {
        let w = 2 * (1 + rng.below(8));
        let d = dense(width, w, rng);
        layers.push(if spectral {
            Layer::SpectralDense(d)
        } else {
            Layer::PlainDense(d)
        });
        layers.push(if groupsort {
            Layer::GroupSort2 { width: w }
        } else {
            Layer::Relu { width: w }
        });
        width = w;
    }
    let d = dense(width, q, rng);
    layers.push(if spectral {
        Layer::SpectralDense(d)
    } else {
        Layer::PlainDense(d)
    });
    LipNet::new(input_dim, layers).unwrap()
}

/// Every loss applicable to `q` outputs.
pub fn losses_for(q: usize) -> Vec<LossKind> {
    let hkr = |variant| {
        LossKind::Hkr(HkrConfig {
            variant,
            lambda: 10.0,
            margin: 0.5,
            alpha: 10.0,
        })
    };
    if q == 1 {
        vec![hkr(HkrVariant::Binary), LossKind::CrossEntropy]
    } else {
        vec![
            hkr(HkrVariant::MulticlassOva),
            hkr(HkrVariant::MulticlassSoftmax),
            LossKind::CrossEntropy,
        ]
    }
}

/// Labels cycling through every class.
pub fn cycling_labels(n: usize, q: usize) -> Vec<usize> {
    (0..n).map(|i| i % q.max(2)).collect()
}
