//! Adam with a staged learning-rate schedule and the projected training loop.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::Dataset;
use crate::linalg::ProjectionConfig;
use crate::losses::LossKind;
use crate::model::{Gradients, LipNet};
use crate::{Error, Result, Rng, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update of `param` in place; `t` is the 1-based
/// step count.
pub fn adam_update(
    param: &mut [f64],
    grad: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    t: u64,
    lr: f64,
    cfg: &AdamConfig,
) -> Result<()> {
    if param.len() != grad.len() || m.len() != grad.len() || v.len() != grad.len() {
        return Err(Error::dim(format!(
            "adam: parameter {} / gradient {} / moments {},{}",
            param.len(),
            grad.len(),
            m.len(),
            v.len()
        )));
    }
    if !(lr > 0.0) || t == 0 {
        return Err(Error::invalid(format!("adam needs lr > 0 and t ≥ 1 (lr {lr}, t {t})")));
    }
    let c1 = 1.0 - libm::pow(cfg.beta1, t as f64);
    let c2 = 1.0 - libm::pow(cfg.beta2, t as f64);
    for i in 0..param.len() {
        let g = grad[i];
        m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
        v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
        let mh = m[i] / c1;
        let vh = v[i] / c2;
        param[i] -= lr * mh / (libm::sqrt(vh) + cfg.eps);
    }
    Ok(())
}

/// Moment buffers for every dense layer of a network.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub cfg: AdamConfig,
    /// Steps taken so far.
    pub t: u64,
    moments: Vec<Option<LayerMoments>>,
}

#[derive(Debug, Clone, PartialEq)]
struct LayerMoments {
    mw: Vec<f64>,
    vw: Vec<f64>,
    mb: Vec<f64>,
    vb: Vec<f64>,
}

impl AdamState {
    pub fn new(net: &LipNet, cfg: AdamConfig) -> Self {
        let moments = net
            .layers()
            .iter()
            .map(|l| {
                l.dense().map(|d| LayerMoments {
                    mw: vec![0.0; d.weight().len()],
                    vw: vec![0.0; d.weight().len()],
                    mb: vec![0.0; d.bias().len()],
                    vb: vec![0.0; d.bias().len()],
                })
            })
            .collect();
        AdamState { cfg, t: 0, moments }
    }

    /// Applies one step to every dense layer.
    pub fn step(&mut self, net: &mut LipNet, grads: &Gradients, lr: f64) -> Result<()> {
        if grads.by_parameter.len() != self.moments.len() {
            return Err(Error::dim("gradient list does not match the network"));
        }
        self.t += 1;
        let t = self.t;
        let cfg = self.cfg;
        for (idx, (mom, g)) in self.moments.iter_mut().zip(&grads.by_parameter).enumerate() {
            let (Some(mom), Some(g)) = (mom, g) else { continue };
            let (w, b) = net
                .params_mut(idx)
                .ok_or_else(|| Error::dim(format!("layer {idx} has no parameters")))?;
            adam_update(w, g.weight.data(), &mut mom.mw, &mut mom.vw, t, lr, &cfg)?;
            adam_update(b, g.bias.data(), &mut mom.mb, &mut mom.vb, t, lr, &cfg)?;
        }
        Ok(())
    }
}

/// Piecewise-constant learning rate: entry `(epoch, lr)` applies from
/// `epoch` until the next entry.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule(Vec<(usize, f64)>);

impl Schedule {
    pub fn new(mut stages: Vec<(usize, f64)>) -> Result<Self> {
        stages.sort_by_key(|s| s.0);
        if stages.first().map(|s| s.0) != Some(0) {
            return Err(Error::invalid("schedule must start at epoch 0"));
        }
        if stages.iter().any(|s| !(s.1 > 0.0) || !s.1.is_finite()) {
            return Err(Error::invalid("learning rates must be positive"));
        }
        Ok(Schedule(stages))
    }

    pub fn constant(lr: f64) -> Self {
        Schedule(vec![(0, lr)])
    }

    pub fn stages(&self) -> &[(usize, f64)] {
        &self.0
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        self.0
            .iter()
            .take_while(|s| s.0 <= epoch)
            .last()
            .map_or(self.0[0].1, |s| s.1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub schedule: Schedule,
    pub adam: AdamConfig,
    pub projection: ProjectionConfig,
}

impl TrainConfig {
    pub fn new(batch_size: usize, epochs: usize, schedule: Schedule) -> Self {
        TrainConfig {
            batch_size,
            epochs,
            schedule,
            adam: AdamConfig::default(),
            projection: ProjectionConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    /// Mean of the minibatch losses.
    pub mean_loss: f64,
    /// Training accuracy measured on the minibatches before each update.
    pub accuracy: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    pub epochs: Vec<EpochStats>,
}

/// Predicted class from one score row: `f > 0` for a single output,
/// argmax (first on ties) otherwise.
pub fn predict(scores: &[f64]) -> usize {
    if scores.len() == 1 {
        usize::from(scores[0] > 0.0)
    } else {
        let mut best = 0;
        for (k, &s) in scores.iter().enumerate() {
            if s > scores[best] {
                best = k;
            }
        }
        best
    }
}

/// Fraction of samples whose predicted class matches the label.
pub fn accuracy(net: &LipNet, data: &Dataset) -> Result<f64> {
    let q = net.out_dim();
    let mut correct = 0usize;
    let chunk = 512;
    for start in (0..data.len()).step_by(chunk) {
        let end = (start + chunk).min(data.len());
        let d = data.meta.d;
        let scores = net.forward_batch(&data.inputs.data()[start * d..end * d])?;
        correct += scores
            .chunks_exact(q)
            .zip(&data.labels[start..end])
            .filter(|(s, &l)| predict(s) == l)
            .count();
    }
    Ok(correct as f64 / data.len() as f64)
}

/// Minibatch index lists for one epoch.
///
/// With `stratified`, each class is shuffled separately, the classes are
/// concatenated and the sequence is dealt round-robin across batches. A
/// class occupies consecutive deals, so every batch sees every class
/// whenever each class has at least as many samples as there are batches.
pub fn epoch_batches(
    labels: &[usize],
    q: usize,
    batch_size: usize,
    stratified: bool,
    rng: &mut Rng,
) -> Vec<Vec<usize>> {
    let n = labels.len();
    let nb = n.div_ceil(batch_size.max(1));
    if !stratified {
        let mut idx: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut idx);
        return idx.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect();
    }
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); q.max(2)];
    for (i, &l) in labels.iter().enumerate() {
        per_class[l].push(i);
    }
    for c in &mut per_class {
        rng.shuffle(c);
    }
    let order: Vec<usize> = per_class.concat();
    let mut batches = vec![Vec::with_capacity(batch_size); nb];
    for (j, i) in order.into_iter().enumerate() {
        batches[j % nb].push(i);
    }
    rng.shuffle(&mut batches);
    batches
}

/// Projected minibatch training.
///
/// The network is projected once up front and again after every Adam step,
/// so every intermediate state is a valid 1-Lipschitz network when all its
/// dense layers are spectral.
pub fn train(net: &mut LipNet, data: &Dataset, loss: &LossKind, cfg: &TrainConfig, rng: &mut Rng) -> Result<History> {
    if data.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    if data.meta.d != net.input_dim() {
        return Err(Error::dim(format!(
            "dataset width {} vs network input {}",
            data.meta.d,
            net.input_dim()
        )));
    }
    if cfg.batch_size == 0 {
        return Err(Error::invalid("batch size must be positive"));
    }
    net.project_with(&cfg.projection)?;
    let mut adam = AdamState::new(net, cfg.adam);
    let mut history = History::default();
    let d = data.meta.d;
    let q = net.out_dim();
    for epoch in 0..cfg.epochs {
        let lr = cfg.schedule.lr_at(epoch);
        let batches = epoch_batches(&data.labels, data.meta.q, cfg.batch_size, loss.needs_all_classes(), rng);
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for (b, idx) in batches.iter().enumerate() {
            let wrap = |e: Error| Error::Training {
                epoch,
                batch: b,
                source: Box::new(e),
            };
            let mut xb = Vec::with_capacity(idx.len() * d);
            for &i in idx {
                xb.extend_from_slice(data.input(i));
            }
            let labels: Vec<usize> = idx.iter().map(|&i| data.labels[i]).collect();
            let x = Tensor::from_parts(vec![idx.len(), d], xb);
            let trace = net.forward_trace(&x).map_err(wrap)?;
            let scores = Tensor::from_parts(vec![idx.len(), q], trace.output().to_vec());
            let out = loss.evaluate(&scores, &labels).map_err(wrap)?;
            correct += scores
                .data()
                .chunks_exact(q)
                .zip(&labels)
                .filter(|(s, &l)| predict(s) == l)
                .count();
            loss_sum += out.loss;
            let grads = net.backward(&trace, &out.grad).map_err(wrap)?;
            adam.step(net, &grads, lr).map_err(wrap)?;
            net.project_with(&cfg.projection).map_err(wrap)?;
        }
        history.epochs.push(EpochStats {
            epoch,
            lr,
            mean_loss: loss_sum / batches.len() as f64,
            accuracy: correct as f64 / data.len() as f64,
        });
    }
    Ok(history)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gaussian_blobs;
    use crate::losses::{HkrConfig, HkrVariant};
    use crate::model::LayerSpec;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = vec![1.0, -2.0];
        let (mut m, mut v) = (vec![0.0; 2], vec![0.0; 2]);
        adam_update(&mut p, &[0.0, 0.0], &mut m, &mut v, 1, 0.1, &AdamConfig::default()).unwrap();
        assert_eq!(p, vec![1.0, -2.0]);
    }

    #[test]
    fn first_step_closed_form() {
        let mut p = vec![0.0];
        let (mut m, mut v) = (vec![0.0], vec![0.0]);
        adam_update(&mut p, &[2.0], &mut m, &mut v, 1, 0.1, &AdamConfig::default()).unwrap();
        // m̂ = 2, v̂ = 4 → step = 0.1 · 2 / (2 + 1e-8)
        assert!((p[0] + 0.1 * 2.0 / (2.0 + 1e-8)).abs() < 1e-15);
        assert!((p[0] + 0.1).abs() < 1e-6);
    }

    #[test]
    fn two_steps_hand_unrolled() {
        let cfg = AdamConfig::default();
        let mut p = vec![1.0];
        let (mut m, mut v) = (vec![0.0], vec![0.0]);
        for t in 1..=2 {
            adam_update(&mut p, &[0.5], &mut m, &mut v, t, 0.01, &cfg).unwrap();
        }
        // m2 = 0.1·0.5·(1 + 0.9) = 0.095, v2 = 0.001·0.25·(1 + 0.999) = 0.00049975
        // m̂2 = 0.095 / 0.19 = 0.5, v̂2 = 0.00049975 / 0.001999 = 0.25
        let step = 0.01 * 0.5 / (0.5 + 1e-8);
        let expected = 1.0 - 2.0 * step;
        assert!((p[0] - expected).abs() < 1e-12, "{} vs {expected}", p[0]);
        assert!((m[0] - 0.095).abs() < 1e-15);
        assert!((v[0] - 0.00049975).abs() < 1e-15);
    }

    #[test]
    fn shape_mismatch() {
        let mut p = vec![0.0; 2];
        let (mut m, mut v) = (vec![0.0; 2], vec![0.0; 2]);
        let r = adam_update(&mut p, &[1.0], &mut m, &mut v, 1, 0.1, &AdamConfig::default());
        assert!(matches!(r, Err(Error::Dimension(_))));
    }

    #[test]
    fn schedule_stages() {
        let s = Schedule::new(vec![(50, 5e-5), (0, 5e-4), (75, 1e-6)]).unwrap();
        assert_eq!(s.lr_at(0), 5e-4);
        assert_eq!(s.lr_at(49), 5e-4);
        assert_eq!(s.lr_at(50), 5e-5);
        assert_eq!(s.lr_at(199), 1e-6);
        assert!(Schedule::new(vec![(3, 1e-3)]).is_err());
    }

    #[test]
    fn stratified_batches_cover_every_class() {
        let labels: Vec<usize> = (0..100).map(|i| if i < 70 { i % 2 * 3 } else { 1 + i % 2 }).collect();
        let batches = epoch_batches(&labels, 4, 16, true, &mut Rng::seed_from_u64(2));
        let mut seen: Vec<usize> = batches.concat();
        seen.sort_unstable();
        assert_eq!(seen, (0..100).collect::<Vec<_>>());
        for b in &batches {
            for c in 0..4 {
                assert!(b.iter().any(|&i| labels[i] == c));
            }
        }
    }

    fn blob_net(rng: &mut Rng) -> LipNet {
        LipNet::from_spec(
            2,
            &[
                LayerSpec::SpectralDense { units: 8 },
                LayerSpec::Groupsort2,
                LayerSpec::SpectralDense { units: 1 },
            ],
            rng,
        )
        .unwrap()
    }

    #[test]
    fn zero_epochs_only_projects() {
        let mut rng = Rng::seed_from_u64(1);
        let data = gaussian_blobs(&[vec![-2.0, 0.0], vec![2.0, 0.0]], 0.3, 20, &mut rng).unwrap();
        let mut net = blob_net(&mut rng);
        let mut reference = net.clone();
        reference.project().unwrap();
        let loss = LossKind::Hkr(HkrConfig {
            variant: HkrVariant::Binary,
            lambda: 10.0,
            margin: 0.5,
            alpha: 0.0,
        });
        let h = train(
            &mut net,
            &data,
            &loss,
            &TrainConfig::new(8, 0, Schedule::constant(1e-3)),
            &mut rng,
        )
        .unwrap();
        assert!(h.epochs.is_empty());
        assert_eq!(net, reference);
    }

    #[test]
    fn separable_blobs_reach_full_accuracy() {
        let mut rng = Rng::seed_from_u64(5);
        let data = gaussian_blobs(&[vec![-2.0, 1.0], vec![2.0, -1.0]], 0.4, 100, &mut rng).unwrap();
        let mut net = blob_net(&mut rng);
        let loss = LossKind::Hkr(HkrConfig {
            variant: HkrVariant::Binary,
            lambda: 10.0,
            margin: 0.5,
            alpha: 0.0,
        });
        let cfg = TrainConfig::new(32, 200, Schedule::constant(5e-3));
        let h = train(&mut net, &data, &loss, &cfg, &mut rng).unwrap();
        assert!(accuracy(&net, &data).unwrap() >= 0.99);
        let first: f64 = h.epochs[..10].iter().map(|e| e.mean_loss).sum();
        let last: f64 = h.epochs[h.epochs.len() - 10..].iter().map(|e| e.mean_loss).sum();
        assert!(last <= first);
    }

    #[test]
    fn degenerate_batch_reports_position() {
        let mut rng = Rng::seed_from_u64(5);
        let data = gaussian_blobs(&[vec![-2.0], vec![2.0]], 0.4, 3, &mut rng).unwrap();
        let mut net = LipNet::from_spec(1, &[LayerSpec::SpectralDense { units: 1 }], &mut rng).unwrap();
        let loss = LossKind::Hkr(HkrConfig {
            variant: HkrVariant::Binary,
            lambda: 1.0,
            margin: 0.5,
            alpha: 0.0,
        });
        // 6 samples in batches of 1 cannot hold both classes.
        let r = train(
            &mut net,
            &data,
            &loss,
            &TrainConfig::new(1, 1, Schedule::constant(1e-3)),
            &mut rng,
        );
        match r {
            Err(Error::Training { epoch: 0, source, .. }) => {
                assert!(matches!(*source, Error::DegenerateBatch(_)))
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
