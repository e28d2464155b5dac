//! Central finite differences against the reverse-mode gradients.

use otxai_core::losses::LossKind;
use otxai_core::model::Layer;
use otxai_core::{LipNet, Tensor};

pub const H: f64 = 1e-5;

/// Gradient norms below this count as zero: central-difference rounding is
/// about `ε·|loss| / H ≈ 1e-10`.
pub const FLOOR: f64 = 1e-5;

/// `‖a − b‖ / max(‖a‖, ‖b‖, FLOOR)`.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(FLOOR)
}

pub fn loss_value(net: &LipNet, x: &[f64], labels: &[usize], loss: &LossKind) -> f64 {
    let n = labels.len();
    let s = net.forward_batch(x).unwrap();
    let q = s.len() / n;
    loss.evaluate(&Tensor::matrix(n, q, s).unwrap(), labels).unwrap().loss
}

/// `(weight, bias)` gradients per dense layer, then the input gradient.
pub type Grads = (Vec<(Vec<f64>, Vec<f64>)>, Vec<f64>);

/// Analytic loss gradients: one `(weight, bias)` pair per dense layer in
/// layer order, then the input gradient.
pub fn analytic(net: &LipNet, x: &[f64], labels: &[usize], loss: &LossKind) -> Grads {
    let n = labels.len();
    let xt = Tensor::matrix(n, net.input_dim(), x.to_vec()).unwrap();
    let trace = net.forward_trace(&xt).unwrap();
    let scores = Tensor::matrix(n, net.out_dim(), trace.output().to_vec()).unwrap();
    let out = loss.evaluate(&scores, labels).unwrap();
    let g = net.backward(&trace, &out.grad).unwrap();
    let params = g
        .by_parameter
        .into_iter()
        .flatten()
        .map(|p| (p.weight.into_data(), p.bias.into_data()))
        .collect();
    (params, g.by_input.into_data())
}

/// Finite-difference counterpart of [`analytic`].
pub fn numeric(net: &LipNet, x: &[f64], labels: &[usize], loss: &LossKind) -> Grads {
    let mut params = Vec::new();
    let dense: Vec<usize> = net
        .layers()
        .iter()
        .enumerate()
        .filter(|(_, l)| l.dense().is_some())
        .map(|(i, _)| i)
        .collect();
    for &idx in &dense {
        let (nw, nb) = {
            let d = net.layers()[idx].dense().unwrap();
            (d.weight().len(), d.bias().len())
        };
        let mut gw = vec![0.0; nw];
        let mut gb = vec![0.0; nb];
        for (which, out) in [(0usize, &mut gw), (1, &mut gb)] {
            for k in 0..out.len() {
                let eval = |delta: f64| {
                    let mut m = net.clone();
                    let (w, b) = m.params_mut(idx).unwrap();
                    if which == 0 {
                        w[k] += delta;
                    } else {
                        b[k] += delta;
                    }
                    loss_value(&m, x, labels, loss)
                };
                out[k] = (eval(H) - eval(-H)) / (2.0 * H);
            }
        }
        params.push((gw, gb));
    }
    let mut gx = vec![0.0; x.len()];
    for k in 0..x.len() {
        let mut xp = x.to_vec();
        xp[k] += H;
        let mut xm = x.to_vec();
        xm[k] -= H;
        gx[k] = (loss_value(net, &xp, labels, loss) - loss_value(net, &xm, labels, loss)) / (2.0 * H);
    }
    (params, gx)
}

/// Largest relative error over every parameter tensor and the input.
pub fn worst_error(net: &LipNet, x: &[f64], labels: &[usize], loss: &LossKind) -> f64 {
    let (pa, xa) = analytic(net, x, labels, loss);
    let (pn, xn) = numeric(net, x, labels, loss);
    let mut worst = rel_err(&xa, &xn);
    for ((wa, ba), (wn, bn)) in pa.iter().zip(&pn) {
        worst = worst.max(rel_err(wa, wn)).max(rel_err(ba, bn));
    }
    worst
}

pub fn has_groupsort(net: &LipNet) -> bool {
    net.layers().iter().any(|l| matches!(l, Layer::GroupSort2 { .. }))
}
