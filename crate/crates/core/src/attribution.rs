//! Gradient attributions, boundary points and counterfactual paths.
//!
//! Every method reads the input gradient of one scalar [`Score`]; for a
//! binary head that is `Score::Output(0)`, for a multiclass head either one
//! class score or a targeted difference.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::tensor::norm;
use crate::{Error, LipNet, Result, Rng, Score, Tensor};

/// Gradient norms below this make boundary points undefined.
pub const MIN_GRAD_NORM: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "method", rename_all = "snake_case"))]
pub enum Method {
    Saliency,
    SmoothGrad {
        n: usize,
        sigma: f64,
    },
    /// Zero baseline.
    IntegratedGradients {
        n: usize,
    },
    GradientInput,
}

impl Method {
    pub fn smoothgrad() -> Self {
        Method::SmoothGrad { n: 50, sigma: 0.2 }
    }

    pub fn integrated_gradients() -> Self {
        Method::IntegratedGradients { n: 50 }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Method::Saliency => "saliency",
            Method::SmoothGrad { .. } => "smoothgrad",
            Method::IntegratedGradients { .. } => "ig",
            Method::GradientInput => "gradinput",
        }
    }

    /// Parses the command-line names `saliency`, `smoothgrad`, `ig`, `gradinput`
    /// with default settings.
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "saliency" => Ok(Method::Saliency),
            "smoothgrad" => Ok(Method::smoothgrad()),
            "ig" => Ok(Method::integrated_gradients()),
            "gradinput" => Ok(Method::GradientInput),
            other => Err(Error::invalid(format!("unknown attribution method `{other}`"))),
        }
    }

    /// Whether the method draws random numbers.
    pub fn is_stochastic(&self) -> bool {
        matches!(self, Method::SmoothGrad { sigma, .. } if *sigma > 0.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Attribution {
    /// Same shape as the explained input.
    pub values: Tensor,
    pub method: Method,
    pub target: Score,
}

impl Attribution {
    pub fn data(&self) -> &[f64] {
        self.values.data()
    }
}

fn wrap(values: Vec<f64>, method: Method, target: Score) -> Result<Attribution> {
    Ok(Attribution {
        values: Tensor::vector(values)?,
        method,
        target,
    })
}

fn check_input(net: &LipNet, x: &[f64]) -> Result<()> {
    if x.len() != net.input_dim() {
        return Err(Error::dim(format!(
            "input has {} features, network expects {}",
            x.len(),
            net.input_dim()
        )));
    }
    Ok(())
}

/// `|∇ₓ score(x)|`.
pub fn saliency(net: &LipNet, x: &[f64], target: Score) -> Result<Attribution> {
    check_input(net, x)?;
    let (_, g) = net.score_gradient(x, target)?;
    wrap(g.into_iter().map(f64::abs).collect(), Method::Saliency, target)
}

/// Mean signed gradient over `n` Gaussian perturbations of standard
/// deviation `sigma`. With `sigma = 0` this is the plain gradient.
pub fn smoothgrad_signed(
    net: &LipNet,
    x: &[f64],
    target: Score,
    n: usize,
    sigma: f64,
    rng: &mut Rng,
) -> Result<Vec<f64>> {
    check_input(net, x)?;
    if n == 0 || !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::invalid(format!(
            "smoothgrad needs n ≥ 1 and sigma ≥ 0 (n {n}, sigma {sigma})"
        )));
    }
    if sigma == 0.0 {
        return Ok(net.score_gradient(x, target)?.1);
    }
    let d = x.len();
    let mut batch = Vec::with_capacity(n * d);
    for _ in 0..n {
        batch.extend(x.iter().map(|&xi| xi + sigma * rng.normal()));
    }
    let (_, grads) = net.score_gradients(&batch, target)?;
    let mut mean = vec![0.0; d];
    for g in grads.chunks_exact(d) {
        for (m, gi) in mean.iter_mut().zip(g) {
            *m += gi;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    Ok(mean)
}

/// Absolute value of [`smoothgrad_signed`].
pub fn smoothgrad(net: &LipNet, x: &[f64], target: Score, n: usize, sigma: f64, rng: &mut Rng) -> Result<Attribution> {
    let signed = smoothgrad_signed(net, x, target, n, sigma, rng)?;
    wrap(
        signed.into_iter().map(f64::abs).collect(),
        Method::SmoothGrad { n, sigma },
        target,
    )
}

/// `(x − baseline) ⊙ mean gradient` at the `n` midpoints of the straight
/// path from `baseline` to `x`.
pub fn integrated_gradients(net: &LipNet, x: &[f64], baseline: &[f64], target: Score, n: usize) -> Result<Attribution> {
    check_input(net, x)?;
    if baseline.len() != x.len() {
        return Err(Error::dim(format!(
            "baseline has {} features, input {}",
            baseline.len(),
            x.len()
        )));
    }
    if n == 0 {
        return Err(Error::invalid("integrated gradients needs n ≥ 1"));
    }
    let d = x.len();
    let mut batch = Vec::with_capacity(n * d);
    for k in 0..n {
        let a = (k as f64 + 0.5) / n as f64;
        batch.extend(x.iter().zip(baseline).map(|(&xi, &bi)| bi + a * (xi - bi)));
    }
    let (_, grads) = net.score_gradients(&batch, target)?;
    let mut sum = vec![0.0; d];
    for g in grads.chunks_exact(d) {
        for (s, gi) in sum.iter_mut().zip(g) {
            *s += gi;
        }
    }
    let values = sum
        .iter()
        .zip(x.iter().zip(baseline))
        .map(|(s, (xi, bi))| (xi - bi) * s / n as f64)
        .collect();
    wrap(values, Method::IntegratedGradients { n }, target)
}

/// `∇ₓ score(x) ⊙ x`.
pub fn gradient_input(net: &LipNet, x: &[f64], target: Score) -> Result<Attribution> {
    check_input(net, x)?;
    let (_, g) = net.score_gradient(x, target)?;
    wrap(
        g.iter().zip(x).map(|(gi, xi)| gi * xi).collect(),
        Method::GradientInput,
        target,
    )
}

/// Runs `method` with its own settings; IG uses the zero baseline.
pub fn explain(net: &LipNet, x: &[f64], target: Score, method: &Method, rng: &mut Rng) -> Result<Attribution> {
    match *method {
        Method::Saliency => saliency(net, x, target),
        Method::SmoothGrad { n, sigma } => smoothgrad(net, x, target, n, sigma, rng),
        Method::IntegratedGradients { n } => integrated_gradients(net, x, &vec![0.0; x.len()], target, n),
        Method::GradientInput => gradient_input(net, x, target),
    }
}

/// Straight move `x′ = x − t·f(x)·∇f(x)` along the score gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct CounterfactualPath {
    pub origin: Vec<f64>,
    /// `∇ₓ f(origin)`.
    pub direction: Vec<f64>,
    pub t: f64,
    pub endpoint: Vec<f64>,
    /// `f(origin)`.
    pub value: f64,
    /// `f(endpoint)`.
    pub residual: f64,
    /// Whether any endpoint coordinate was clamped into the input domain.
    pub clamped: bool,
}

impl CounterfactualPath {
    pub fn flipped(&self) -> bool {
        (self.value > 0.0) != (self.residual > 0.0)
    }
}

/// Score to follow for a targeted multiclass counterfactual: positive while
/// `current` still wins over `target`.
pub fn targeted_score(current: usize, target: usize) -> Score {
    Score::Difference {
        positive: current,
        negative: target,
    }
}

/// `x_δ = x − f(x)∇f(x)`.
pub fn boundary_point(net: &LipNet, x: &[f64], score: Score) -> Result<CounterfactualPath> {
    counterfactual(net, x, score, 1.0, None)
}

/// `x′ = x − t·f(x)·∇f(x)`, optionally clamped coordinatewise into
/// `[lo, hi]` (image domains).
pub fn counterfactual(
    net: &LipNet,
    x: &[f64],
    score: Score,
    t: f64,
    clamp: Option<(f64, f64)>,
) -> Result<CounterfactualPath> {
    check_input(net, x)?;
    if !t.is_finite() {
        return Err(Error::NonFinite("counterfactual step"));
    }
    let (value, direction) = net.score_gradient(x, score)?;
    let gn = norm(&direction);
    if gn < MIN_GRAD_NORM {
        return Err(Error::DegenerateGradient { norm: gn });
    }
    let step = t * value;
    let mut clamped = false;
    let endpoint: Vec<f64> = x
        .iter()
        .zip(&direction)
        .map(|(xi, gi)| {
            let e = xi - step * gi;
            match clamp {
                Some((lo, hi)) if e < lo || e > hi => {
                    clamped = true;
                    e.clamp(lo, hi)
                }
                _ => e,
            }
        })
        .collect();
    let scores = net.forward_batch(&endpoint)?;
    let residual = score.eval(&scores);
    Ok(CounterfactualPath {
        origin: x.to_vec(),
        direction,
        t,
        endpoint,
        value,
        residual,
        clamped,
    })
}
