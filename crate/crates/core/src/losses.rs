//! Hinge-Kantorovich-Rubinstein losses and cross-entropy baselines.
//!
//! Every loss returns its batch value together with the exact
//! (sub)gradient with respect to the `batch x q` score matrix, ready to be
//! fed to [`LipNet::backward`](crate::LipNet::backward). Hinge kinks take
//! subgradient 0. Binary losses map label `1` to `y = +1` and label `0` to
//! `y = −1`.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::{Error, Result, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum HkrVariant {
    Binary,
    MulticlassOva,
    MulticlassSoftmax,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HkrConfig {
    pub variant: HkrVariant,
    /// Weight of the hinge term.
    pub lambda: f64,
    pub margin: f64,
    /// Softmax temperature (softmax variant only).
    pub alpha: f64,
}

impl HkrConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.margin > 0.0) || !self.margin.is_finite() {
            return Err(Error::invalid(format!("margin must be positive, got {}", self.margin)));
        }
        if !(self.lambda >= 0.0) || !self.lambda.is_finite() {
            return Err(Error::invalid(format!(
                "lambda must be non-negative, got {}",
                self.lambda
            )));
        }
        if !(self.alpha >= 0.0) || !self.alpha.is_finite() {
            return Err(Error::invalid(format!(
                "alpha must be non-negative, got {}",
                self.alpha
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LossKind {
    Hkr(HkrConfig),
    /// Softmax cross-entropy for `q ≥ 2`, sigmoid cross-entropy for `q = 1`.
    CrossEntropy,
}

impl LossKind {
    pub fn evaluate(&self, scores: &Tensor, labels: &[usize]) -> Result<LossOutput> {
        match self {
            LossKind::Hkr(cfg) => match cfg.variant {
                HkrVariant::Binary => hkr_binary(scores, labels, cfg),
                HkrVariant::MulticlassOva => hkr_multiclass_ova(scores, labels, cfg),
                HkrVariant::MulticlassSoftmax => hkr_multiclass_softmax(scores, labels, cfg),
            },
            LossKind::CrossEntropy => {
                if scores.shape().get(1) == Some(&1) {
                    cross_entropy_sigmoid(scores, labels)
                } else {
                    cross_entropy_softmax(scores, labels)
                }
            }
        }
    }

    /// Whether every minibatch must contain every class.
    pub fn needs_all_classes(&self) -> bool {
        matches!(
            self,
            LossKind::Hkr(HkrConfig {
                variant: HkrVariant::Binary | HkrVariant::MulticlassOva,
                ..
            })
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub loss: f64,
    /// `∂loss/∂scores`, same shape as the scores.
    pub grad: Tensor,
}

pub fn binary_sign(label: usize) -> f64 {
    if label == 1 {
        1.0
    } else {
        -1.0
    }
}

fn hinge(z: f64) -> f64 {
    if z > 0.0 {
        z
    } else {
        0.0
    }
}

fn hinge_slope(z: f64) -> f64 {
    if z > 0.0 {
        1.0
    } else {
        0.0
    }
}

fn check_batch(scores: &Tensor, labels: &[usize], q_expected: Option<usize>) -> Result<(usize, usize)> {
    let (n, q) = scores.dims2()?;
    if labels.len() != n {
        return Err(Error::dim(format!("{} labels for a batch of {n}", labels.len())));
    }
    if let Some(qe) = q_expected {
        if q != qe {
            return Err(Error::dim(format!("expected {qe} score column(s), got {q}")));
        }
    }
    let classes = q.max(2);
    if let Some(&bad) = labels.iter().find(|&&l| l >= classes) {
        return Err(Error::invalid(format!(
            "label {bad} out of range for {classes} classes"
        )));
    }
    Ok((n, q))
}

/// `mean_{y=−1} f − mean_{y=+1} f + λ mean (m − y f)₊` over a `batch x 1` score column.
pub fn hkr_binary(scores: &Tensor, labels: &[usize], cfg: &HkrConfig) -> Result<LossOutput> {
    cfg.validate()?;
    let (n, _) = check_batch(scores, labels, Some(1))?;
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = n - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::DegenerateBatch(format!(
            "binary hKR needs both classes, got {pos} positive and {neg} negative"
        )));
    }
    let f = scores.data();
    let (mut mean_pos, mut mean_neg, mut hinge_sum) = (0.0, 0.0, 0.0);
    let mut grad = vec![0.0; n];
    for (i, (&fi, &l)) in f.iter().zip(labels).enumerate() {
        let y = binary_sign(l);
        if l == 1 {
            mean_pos += fi;
            grad[i] -= 1.0 / pos as f64;
        } else {
            mean_neg += fi;
            grad[i] += 1.0 / neg as f64;
        }
        let z = cfg.margin - y * fi;
        hinge_sum += hinge(z);
        grad[i] -= cfg.lambda * y * hinge_slope(z) / n as f64;
    }
    let loss = mean_neg / neg as f64 - mean_pos / pos as f64 + cfg.lambda * hinge_sum / n as f64;
    Ok(LossOutput {
        loss,
        grad: Tensor::from_parts(vec![n, 1], grad),
    })
}

/// `σ(f_k, y, α) = exp(α f_k) / Σ_{j≠y} exp(α f_j)` for every `k ≠ y`, in
/// index order. Stabilized by subtracting the largest competitor score.
pub fn softmax_weights(scores_row: &[f64], y: usize, alpha: f64) -> Result<Vec<f64>> {
    let q = scores_row.len();
    if q < 2 {
        return Err(Error::Arity(format!("softmax weights need at least 2 scores, got {q}")));
    }
    if y >= q {
        return Err(Error::invalid(format!("class {y} out of range for {q} scores")));
    }
    let max = scores_row
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != y)
        .fold(f64::NEG_INFINITY, |m, (_, &v)| m.max(v));
    let mut w: Vec<f64> = scores_row
        .iter()
        .enumerate()
        .filter(|&(k, _)| k != y)
        .map(|(_, &v)| libm::exp(alpha * (v - max)))
        .collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= total);
    Ok(w)
}

/// One-versus-all multiclass hKR:
/// `Σ_k [mean_{y≠k} f_k − mean_{y=k} f_k] + λ mean H(f, y, m)` with
/// `H = (m − f_y)₊ + Σ_{k≠y} (m + f_k)₊`.
pub fn hkr_multiclass_ova(scores: &Tensor, labels: &[usize], cfg: &HkrConfig) -> Result<LossOutput> {
    cfg.validate()?;
    let (n, q) = check_batch(scores, labels, None)?;
    if q < 2 {
        return Err(Error::Arity("multiclass hKR needs at least 2 outputs".into()));
    }
    let mut counts = vec![0usize; q];
    for &l in labels {
        counts[l] += 1;
    }
    if let Some(k) = counts.iter().position(|&c| c == 0 || c == n) {
        return Err(Error::DegenerateBatch(format!(
            "class {k} has {} of {n} samples; every class and its complement must be present",
            counts[k]
        )));
    }
    let f = scores.data();
    let mut grad = vec![0.0; n * q];
    let mut kr = 0.0;
    let mut hinge_sum = 0.0;
    let nf = n as f64;
    for (i, &y) in labels.iter().enumerate() {
        let row = &f[i * q..(i + 1) * q];
        let g = &mut grad[i * q..(i + 1) * q];
        for k in 0..q {
            let inside = counts[k] as f64;
            let outside = (n - counts[k]) as f64;
            if k == y {
                kr -= row[k] / inside;
                g[k] -= 1.0 / inside;
                let z = cfg.margin - row[k];
                hinge_sum += hinge(z);
                g[k] -= cfg.lambda * hinge_slope(z) / nf;
            } else {
                kr += row[k] / outside;
                g[k] += 1.0 / outside;
                let z = cfg.margin + row[k];
                hinge_sum += hinge(z);
                g[k] += cfg.lambda * hinge_slope(z) / nf;
            }
        }
    }
    Ok(LossOutput {
        loss: kr + cfg.lambda * hinge_sum / nf,
        grad: Tensor::from_parts(vec![n, q], grad),
    })
}

/// Sample-wise softmax-weighted hKR, averaged over the batch:
/// `Σ_{k≠y} σ_k f_k − f_y + λ [(m − f_y)₊ + Σ_{k≠y} σ_k (m + f_k)₊]`.
pub fn hkr_multiclass_softmax(scores: &Tensor, labels: &[usize], cfg: &HkrConfig) -> Result<LossOutput> {
    cfg.validate()?;
    let (n, q) = check_batch(scores, labels, None)?;
    if q < 2 {
        return Err(Error::Arity("softmax hKR needs at least 2 outputs".into()));
    }
    let f = scores.data();
    let nf = n as f64;
    let mut grad = vec![0.0; n * q];
    let mut total = 0.0;
    let mut a = vec![0.0; q - 1];
    let mut da = vec![0.0; q - 1];
    for (i, &y) in labels.iter().enumerate() {
        let row = &f[i * q..(i + 1) * q];
        let sigma = softmax_weights(row, y, cfg.alpha)?;
        // a_k = f_k + λ (m + f_k)₊ for each competitor k.
        for (j, k) in (0..q).filter(|&k| k != y).enumerate() {
            let z = cfg.margin + row[k];
            a[j] = row[k] + cfg.lambda * hinge(z);
            da[j] = 1.0 + cfg.lambda * hinge_slope(z);
        }
        let weighted: f64 = sigma.iter().zip(&a).map(|(s, v)| s * v).sum();
        let zy = cfg.margin - row[y];
        total += weighted - row[y] + cfg.lambda * hinge(zy);

        let g = &mut grad[i * q..(i + 1) * q];
        g[y] = (-1.0 - cfg.lambda * hinge_slope(zy)) / nf;
        for (j, k) in (0..q).filter(|&k| k != y).enumerate() {
            // ∂/∂f_k Σ σ_j a_j = σ_k a_k' + α σ_k (a_k − Σ σ_j a_j)
            g[k] = (sigma[j] * da[j] + cfg.alpha * sigma[j] * (a[j] - weighted)) / nf;
        }
    }
    Ok(LossOutput {
        loss: total / nf,
        grad: Tensor::from_parts(vec![n, q], grad),
    })
}

/// Mean softmax cross-entropy via log-sum-exp; gradient `(softmax − onehot) / n`.
pub fn cross_entropy_softmax(scores: &Tensor, labels: &[usize]) -> Result<LossOutput> {
    let (n, q) = check_batch(scores, labels, None)?;
    if q < 2 {
        return Err(Error::Arity("softmax cross-entropy needs at least 2 outputs".into()));
    }
    let f = scores.data();
    let mut grad = vec![0.0; n * q];
    let mut total = 0.0;
    for (i, &y) in labels.iter().enumerate() {
        let row = &f[i * q..(i + 1) * q];
        let max = row.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let sum: f64 = row.iter().map(|&v| libm::exp(v - max)).sum();
        let lse = max + libm::log(sum);
        total += lse - row[y];
        for k in 0..q {
            let p = libm::exp(row[k] - lse);
            grad[i * q + k] = (p - if k == y { 1.0 } else { 0.0 }) / n as f64;
        }
    }
    Ok(LossOutput {
        loss: total / n as f64,
        grad: Tensor::from_parts(vec![n, q], grad),
    })
}

/// Mean binary cross-entropy on a single logit column (label 1 is positive).
pub fn cross_entropy_sigmoid(scores: &Tensor, labels: &[usize]) -> Result<LossOutput> {
    let (n, _) = check_batch(scores, labels, Some(1))?;
    let f = scores.data();
    let mut grad = vec![0.0; n];
    let mut total = 0.0;
    for (i, (&z, &l)) in f.iter().zip(labels).enumerate() {
        let t = if l == 1 { 1.0 } else { 0.0 };
        // softplus(z) − t z, computed stably
        total += z.max(0.0) - t * z + libm::log1p(libm::exp(-z.abs()));
        let p = 1.0 / (1.0 + libm::exp(-z));
        grad[i] = (p - t) / n as f64;
    }
    Ok(LossOutput {
        loss: total / n as f64,
        grad: Tensor::from_parts(vec![n, 1], grad),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(variant: HkrVariant, lambda: f64, margin: f64, alpha: f64) -> HkrConfig {
        HkrConfig {
            variant,
            lambda,
            margin,
            alpha,
        }
    }

    fn col(v: &[f64]) -> Tensor {
        Tensor::matrix(v.len(), 1, v.to_vec()).unwrap()
    }

    #[test]
    fn binary_hand_value() {
        let out = hkr_binary(&col(&[1.0, -1.0]), &[1, 0], &cfg(HkrVariant::Binary, 2.0, 0.5, 0.0)).unwrap();
        assert_eq!(out.loss, -2.0);
    }

    #[test]
    fn binary_zero_scores() {
        let out = hkr_binary(&col(&[0.0; 4]), &[1, 0, 1, 0], &cfg(HkrVariant::Binary, 1.0, 1.0, 0.0)).unwrap();
        assert_eq!(out.loss, 1.0);
    }

    #[test]
    fn binary_single_class_is_degenerate() {
        let r = hkr_binary(&col(&[0.3, 0.2]), &[1, 1], &cfg(HkrVariant::Binary, 1.0, 1.0, 0.0));
        assert!(matches!(r, Err(Error::DegenerateBatch(_))));
    }

    #[test]
    fn invalid_hyperparameters() {
        let bad = cfg(HkrVariant::Binary, 1.0, 0.0, 0.0);
        assert!(matches!(
            hkr_binary(&col(&[1.0, -1.0]), &[1, 0], &bad),
            Err(Error::InvalidArgument(_))
        ));
        let bad = cfg(HkrVariant::Binary, -1.0, 1.0, 0.0);
        assert!(bad.validate().is_err());
    }

    #[test]
    fn softmax_weight_cases() {
        let w = softmax_weights(&[5.0, 1.0, -2.0], 0, 0.0).unwrap();
        assert_eq!(w, vec![0.5, 0.5]);
        assert_eq!(softmax_weights(&[0.3, 7.0], 0, 12.0).unwrap(), vec![1.0]);
        let ln2 = core::f64::consts::LN_2;
        let w = softmax_weights(&[123.0, ln2, ln2 + libm::log(3.0)], 0, 1.0).unwrap();
        assert!((w[0] - 0.25).abs() < 1e-15 && (w[1] - 0.75).abs() < 1e-15, "{w:?}");
        assert!(matches!(softmax_weights(&[1.0], 0, 1.0), Err(Error::Arity(_))));
    }

    #[test]
    fn softmax_weights_shift_invariant() {
        let a = softmax_weights(&[0.1, 2.0, -1.0, 0.5], 2, 3.0).unwrap();
        let b = softmax_weights(&[0.1 + 40.0, 2.0 + 40.0, -1.0, 0.5 + 40.0], 2, 3.0).unwrap();
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!((a.iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ova_zero_scores() {
        let q = 3;
        let scores = Tensor::zeros(&[6, q]);
        let out = hkr_multiclass_ova(
            &scores,
            &[0, 1, 2, 0, 1, 2],
            &cfg(HkrVariant::MulticlassOva, 1.0, 1.0, 0.0),
        )
        .unwrap();
        assert_eq!(out.loss, q as f64);
    }

    #[test]
    fn ova_hand_value() {
        // one sample per class, q = 2, f = [[2, -1], [0.25, 0.5]], labels [0, 1], m = 1, λ = 0.5
        // KR: k=0: f0(x1) - f0(x0) = 0.25 - 2 = -1.75; k=1: f1(x0) - f1(x1) = -1 - 0.5 = -1.5
        // H(x0) = (1-2)+ + (1-1)+ = 0; H(x1) = (1-0.5)+ + (1+0.25)+ = 1.75; mean 0.875
        let s = Tensor::from_rows(&[&[2.0, -1.0], &[0.25, 0.5]]).unwrap();
        let out = hkr_multiclass_ova(&s, &[0, 1], &cfg(HkrVariant::MulticlassOva, 0.5, 1.0, 0.0)).unwrap();
        assert!((out.loss - (-3.25 + 0.5 * 0.875)).abs() < 1e-15);
    }

    #[test]
    fn ova_antisymmetric_two_class_mirrors_binary() {
        // With f = (s, −s) the OVA KR part is twice the binary KR part where
        // class 0 plays y = +1, and the hinge is twice the binary hinge.
        let s = [0.7, -0.2, 1.3, -0.9];
        let labels_ova = [0, 1, 0, 1];
        let rows: Vec<f64> = s.iter().flat_map(|&v| [v, -v]).collect();
        let c = cfg(HkrVariant::MulticlassOva, 0.0, 0.5, 0.0);
        let ova = hkr_multiclass_ova(&Tensor::matrix(4, 2, rows).unwrap(), &labels_ova, &c).unwrap();
        let bin_labels: Vec<usize> = labels_ova.iter().map(|&l| 1 - l).collect();
        let bin = hkr_binary(&col(&s), &bin_labels, &cfg(HkrVariant::Binary, 0.0, 0.5, 0.0)).unwrap();
        assert!((ova.loss - 2.0 * bin.loss).abs() < 1e-12);
    }

    #[test]
    fn ova_missing_class() {
        let s = Tensor::zeros(&[2, 3]);
        let r = hkr_multiclass_ova(&s, &[0, 1], &cfg(HkrVariant::MulticlassOva, 1.0, 1.0, 0.0));
        assert!(matches!(r, Err(Error::DegenerateBatch(_))));
    }

    #[test]
    fn softmax_variant_hand_values() {
        for alpha in [0.0, 1.0, 10.0] {
            let out = hkr_multiclass_softmax(
                &Tensor::from_rows(&[&[1.0, -1.0]]).unwrap(),
                &[0],
                &cfg(HkrVariant::MulticlassSoftmax, 3.0, 1.0, alpha),
            )
            .unwrap();
            assert_eq!(out.loss, -2.0);
        }
        let (lambda, m) = (1.5, 0.25);
        let out = hkr_multiclass_softmax(
            &Tensor::zeros(&[2, 4]),
            &[1, 3],
            &cfg(HkrVariant::MulticlassSoftmax, lambda, m, 2.0),
        )
        .unwrap();
        assert!((out.loss - 2.0 * lambda * m).abs() < 1e-15);
        let out = hkr_multiclass_softmax(
            &Tensor::from_rows(&[&[2.0, 1.0, 3.0]]).unwrap(),
            &[0],
            &cfg(HkrVariant::MulticlassSoftmax, 1.0, 0.5, 0.0),
        )
        .unwrap();
        assert!((out.loss - 2.5).abs() < 1e-15);
    }

    #[test]
    fn cross_entropy_cases() {
        let out = cross_entropy_softmax(&Tensor::zeros(&[1, 4]), &[2]).unwrap();
        assert!((out.loss - libm::log(4.0)).abs() < 1e-15);
        let out = cross_entropy_softmax(&Tensor::from_rows(&[&[1.0, 0.0]]).unwrap(), &[0]).unwrap();
        assert!((out.loss - libm::log1p(libm::exp(-1.0))).abs() < 1e-15);
        let mut last = f64::INFINITY;
        for z in [0.0, 1.0, 5.0, 20.0, 100.0] {
            let l = cross_entropy_softmax(&Tensor::from_rows(&[&[z, 0.0, 0.0]]).unwrap(), &[0])
                .unwrap()
                .loss;
            assert!(l < last && l >= 0.0);
            last = l;
        }
        let s = cross_entropy_sigmoid(&col(&[0.0]), &[1]).unwrap();
        assert!((s.loss - core::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn lambda_zero_drops_hinge() {
        let s = Tensor::from_rows(&[&[0.2, -0.4, 0.1], &[-0.3, 0.6, 0.0], &[0.5, 0.5, -0.5]]).unwrap();
        let labels = [0, 1, 2];
        let out = hkr_multiclass_softmax(&s, &labels, &cfg(HkrVariant::MulticlassSoftmax, 0.0, 0.5, 2.0)).unwrap();
        let mut kr = 0.0;
        for (i, &y) in labels.iter().enumerate() {
            let row = s.row(i);
            let w = softmax_weights(row, y, 2.0).unwrap();
            let others: Vec<f64> = (0..3).filter(|&k| k != y).map(|k| row[k]).collect();
            kr += w.iter().zip(&others).map(|(a, b)| a * b).sum::<f64>() - row[y];
        }
        assert!((out.loss - kr / 3.0).abs() < 1e-15);
    }
}
