//! Empirical checks of the transport geometry of trained 1-Lipschitz
//! classifiers: boundary points, gradient norms, certificates, the Dirac
//! optimum and level sets.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::attribution::{boundary_point, CounterfactualPath};
use crate::contour::{self, BBox, Polyline};
use crate::data::{dirac_pair, Dataset};
use crate::losses::{HkrConfig, HkrVariant, LossKind};
use crate::metrics::{line_attack, AttackConfig, Decision};
use crate::model::LayerSpec;
use crate::optim::{train, TrainConfig};
use crate::stats::{mean, percentile};
use crate::tensor::norm;
use crate::{Error, LipNet, Result, Rng, Score, Tensor};

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Summary {
    pub mean: f64,
    pub p5: f64,
    pub p95: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(xs: &[f64]) -> Self {
        Summary {
            mean: mean(xs),
            p5: percentile(xs, 5.0),
            p95: percentile(xs, 95.0),
            max: xs.iter().copied().fold(f64::NAN, f64::max),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GeometryReport {
    pub samples: usize,
    /// Samples whose gradient norm was too small for a boundary point.
    pub degenerate: usize,
    pub grad_norm: Summary,
    /// `|f(x_δ)|` over non-degenerate samples.
    pub residual: Summary,
    pub max_abs_f: f64,
    pub tau: f64,
    /// Fraction of non-degenerate samples with `|f(x_δ)| ≤ τ`.
    pub within_tau: f64,
    /// Largest violation of `‖x − x_δ‖ = |f(x)|·‖∇f(x)‖`.
    pub identity_error: f64,
}

/// Default residual tolerance as a fraction of `max |f|` over the samples.
pub const DEFAULT_TAU_FRACTION: f64 = 0.1;

/// Boundary points `x_δ = x − f(x)∇f(x)` of every sample.
pub fn boundary_points(net: &LipNet, data: &Dataset, score: Score) -> Vec<Result<CounterfactualPath>> {
    (0..data.len())
        .map(|i| boundary_point(net, data.input(i), score))
        .collect()
}

/// Residual statistics of the boundary points. `tau = None` uses
/// `0.1 · max |f|` over the samples.
pub fn check_boundary(net: &LipNet, data: &Dataset, score: Score, tau: Option<f64>) -> Result<GeometryReport> {
    summarize_boundary(&boundary_points(net, data, score), tau)
}

/// [`check_boundary`] over precomputed boundary points.
pub fn summarize_boundary(points: &[Result<CounterfactualPath>], tau: Option<f64>) -> Result<GeometryReport> {
    let (mut grad, mut resid, mut values) = (Vec::new(), Vec::new(), Vec::new());
    let (mut degenerate, mut identity_error) = (0usize, 0.0f64);
    for p in points {
        match p {
            Ok(p) => {
                let gn = norm(&p.direction);
                let moved: Vec<f64> = p.origin.iter().zip(&p.endpoint).map(|(a, b)| a - b).collect();
                identity_error = identity_error.max((norm(&moved) - p.value.abs() * gn).abs());
                grad.push(gn);
                resid.push(p.residual.abs());
                values.push(p.value.abs());
            }
            Err(Error::DegenerateGradient { .. }) => degenerate += 1,
            Err(e) => return Err(e.clone()),
        }
    }
    if grad.is_empty() {
        return Err(Error::invalid("no sample has a usable gradient"));
    }
    let max_abs_f = values.iter().copied().fold(0.0, f64::max);
    let tau = tau.unwrap_or(DEFAULT_TAU_FRACTION * max_abs_f);
    let within = resid.iter().filter(|r| **r <= tau).count();
    Ok(GeometryReport {
        samples: points.len(),
        degenerate,
        grad_norm: Summary::of(&grad),
        residual: Summary::of(&resid),
        max_abs_f,
        tau,
        within_tau: within as f64 / grad.len() as f64,
        identity_error,
    })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CertificateReport {
    pub samples: usize,
    /// Fraction of samples where no attack flipped the sign closer than
    /// `|f(x)| − 1e-5`.
    pub pass_rate: f64,
    /// Smallest `distance − |f(x)|` over all attacks.
    pub min_slack: f64,
    /// Flip distance along the gradient divided by `|f(x)|`.
    pub gradient_ratio: Summary,
    /// Attacks that never flipped within the radius budget.
    pub censored: usize,
}

pub const CERTIFICATE_SLACK: f64 = 1e-5;

/// Bisection attacks on a binary head: one along the gradient direction
/// and `random_directions` along seeded uniform directions per sample.
pub fn check_certificate(
    net: &LipNet,
    data: &Dataset,
    cfg: &AttackConfig,
    random_directions: usize,
    rng: &mut Rng,
) -> Result<CertificateReport> {
    if net.out_dim() != 1 {
        return Err(Error::invalid("certificate checks need a single-output network"));
    }
    let (mut passed, mut censored, mut min_slack) = (0usize, 0usize, f64::INFINITY);
    let mut ratios = Vec::new();
    for i in 0..data.len() {
        let x = data.input(i);
        let (f, g) = net.score_gradient(x, Score::Output(0))?;
        let bound = f.abs();
        let mut ok = true;
        let mut attack = |dir: &[f64], r0: f64| -> Result<f64> {
            let r = line_attack(net, x, dir, Decision::Binary, r0, cfg)?;
            if r.censored {
                censored += 1;
            } else {
                min_slack = min_slack.min(r.distance - bound);
                ok &= r.distance >= bound - CERTIFICATE_SLACK;
            }
            Ok(r.distance)
        };
        let gn = norm(&g);
        if gn > 0.0 && bound > 0.0 {
            let s = if f > 0.0 { -1.0 / gn } else { 1.0 / gn };
            let dir: Vec<f64> = g.iter().map(|v| v * s).collect();
            let d = attack(&dir, bound / gn)?;
            ratios.push(d / bound);
        }
        for _ in 0..random_directions {
            let mut dir = rng.normal_vec(x.len(), 1.0);
            let n = norm(&dir);
            dir.iter_mut().for_each(|v| *v /= n);
            attack(&dir, bound.max(1e-3))?;
        }
        passed += usize::from(ok);
    }
    Ok(CertificateReport {
        samples: data.len(),
        pass_rate: passed as f64 / data.len().max(1) as f64,
        min_slack,
        gradient_ratio: Summary::of(&ratios),
        censored,
    })
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct DiracReport {
    pub a: f64,
    pub final_loss: f64,
    /// `−2a`: minus the transport cost between the two masses.
    pub expected: f64,
    /// Lowest full-batch loss after any epoch.
    pub min_loss: f64,
}

/// Trains a small spectral network on two Dirac masses at `±a` and reports
/// the full-batch hKR loss. Requires `0 ≤ m < 2a`.
pub fn check_dirac_ot(a: f64, margin: f64, lambda: f64, cfg: &TrainConfig, rng: &mut Rng) -> Result<DiracReport> {
    if !(a > 0.0) || !(margin >= 0.0 && margin < 2.0 * a) {
        return Err(Error::invalid(format!(
            "Dirac check needs a > 0 and 0 ≤ m < 2a (a {a}, m {margin})"
        )));
    }
    let data = dirac_pair(a, 8)?;
    let loss = LossKind::Hkr(HkrConfig {
        variant: HkrVariant::Binary,
        lambda,
        margin,
        alpha: 0.0,
    });
    let mut net = LipNet::from_spec(
        1,
        &[
            LayerSpec::SpectralDense { units: 8 },
            LayerSpec::Groupsort2,
            LayerSpec::SpectralDense { units: 1 },
        ],
        rng,
    )?;
    let full_loss = |net: &LipNet| -> Result<f64> {
        let s = net.forward_batch(data.inputs.data())?;
        Ok(loss.evaluate(&Tensor::matrix(data.len(), 1, s)?, &data.labels)?.loss)
    };
    let mut min_loss = f64::INFINITY;
    let mut epoch_cfg = cfg.clone();
    epoch_cfg.epochs = 1;
    for epoch in 0..cfg.epochs {
        epoch_cfg.schedule = crate::optim::Schedule::constant(cfg.schedule.lr_at(epoch));
        train(&mut net, &data, &loss, &epoch_cfg, rng)?;
        min_loss = min_loss.min(full_loss(&net)?);
    }
    let final_loss = full_loss(&net)?;
    Ok(DiracReport {
        a,
        final_loss,
        expected: -2.0 * a,
        min_loss: min_loss.min(final_loss),
    })
}

/// Level set of a 2-D network score over `bbox`.
pub fn level_set(net: &LipNet, score: Score, bbox: &BBox, resolution: usize, level: f64) -> Result<Vec<Polyline>> {
    if net.input_dim() != 2 {
        return Err(Error::dim(format!(
            "level sets need 2-D inputs, network takes {}",
            net.input_dim()
        )));
    }
    let q = net.out_dim();
    contour::level_set(
        |pts| {
            let flat: Vec<f64> = pts.iter().flat_map(|p| [p[0], p[1]]).collect();
            let mut out = vec![0.0; pts.len()];
            for (o, s) in out.iter_mut().zip(net.forward_batch(&flat)?.chunks_exact(q)) {
                *o = score.eval(s);
            }
            Ok(out)
        },
        bbox,
        resolution,
        level,
    )
}
