//! Explanation-quality metrics.
//!
//! Per-sample kernels take the explained score explicitly. [`evaluate_sample`]
//! wires them to a dataset with the conventions used in reports: the
//! explained score is the predicted class (or the single binary output), and
//! every random draw comes from a stream derived from the settings seed and
//! the sample index.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::attribution::{explain, smoothgrad_signed, Attribution, Method};
use crate::data::Dataset;
use crate::optim::predict;
use crate::stats::{mean, pearson, spearman, std_dev, trapezoid_unit};
use crate::tensor::norm;
use crate::{Error, LipNet, Result, Rng, Score};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum BaselineKind {
    Zero,
    /// Independent `U[0, 1]` per feature.
    Uniform,
}

impl BaselineKind {
    pub fn materialize(self, d: usize, rng: &mut Rng) -> Vec<f64> {
        match self {
            BaselineKind::Zero => vec![0.0; d],
            BaselineKind::Uniform => (0..d).map(|_| rng.uniform()).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Grouping {
    /// Every input coordinate is its own feature.
    Native,
    /// Image cut into a `rows x cols` grid of near-equal cells; ignored for
    /// inputs without an image shape.
    Grid { rows: usize, cols: usize },
}

/// Partition of the input coordinates into the units that metrics rank and
/// remove.
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    d: usize,
    groups: Vec<Vec<usize>>,
}

impl Features {
    pub fn native(d: usize) -> Self {
        Features {
            d,
            groups: (0..d).map(|i| vec![i]).collect(),
        }
    }

    /// Row-major grid cells; cell `r` spans image rows
    /// `⌊r·h/rows⌋ .. ⌊(r+1)·h/rows⌋`, likewise for columns.
    pub fn grid(h: usize, w: usize, rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 || rows > h || cols > w {
            return Err(Error::invalid(format!(
                "{rows}x{cols} grid does not fit a {h}x{w} image"
            )));
        }
        let mut groups = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                let mut g = Vec::new();
                for y in r * h / rows..(r + 1) * h / rows {
                    for x in c * w / cols..(c + 1) * w / cols {
                        g.push(y * w + x);
                    }
                }
                groups.push(g);
            }
        }
        Ok(Features { d: h * w, groups })
    }

    pub fn for_data(d: usize, image_shape: Option<(usize, usize)>, grouping: Grouping) -> Result<Self> {
        match (grouping, image_shape) {
            (Grouping::Grid { rows, cols }, Some((h, w))) => Features::grid(h, w, rows, cols),
            _ => Ok(Features::native(d)),
        }
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    /// Attribution summed within each feature.
    pub fn scores(&self, attr: &[f64]) -> Vec<f64> {
        self.groups.iter().map(|g| g.iter().map(|&i| attr[i]).sum()).collect()
    }

    /// Feature indices by descending summed attribution, ties by ascending
    /// index.
    pub fn ranking(&self, attr: &[f64]) -> Vec<usize> {
        let s = self.scores(attr);
        let mut order: Vec<usize> = (0..s.len()).collect();
        order.sort_by(|&a, &b| s[b].total_cmp(&s[a]).then(a.cmp(&b)));
        order
    }

    fn check(&self, x: &[f64], attr: &[f64], baseline: &[f64]) -> Result<()> {
        if x.len() != self.d || attr.len() != self.d || baseline.len() != self.d {
            return Err(Error::dim(format!(
                "features cover {} inputs; got input {}, attribution {}, baseline {}",
                self.d,
                x.len(),
                attr.len(),
                baseline.len()
            )));
        }
        Ok(())
    }
}

fn scores_of(net: &LipNet, batch: &[f64], score: Score) -> Result<Vec<f64>> {
    let q = net.out_dim();
    Ok(net
        .forward_batch(batch)?
        .chunks_exact(q)
        .map(|s| score.eval(s))
        .collect())
}

/// Number of features switched after step `s` of `steps`.
fn step_count(s: usize, steps: usize, total: usize) -> usize {
    (s * total + steps / 2) / steps
}

fn progressive_curve(
    net: &LipNet,
    start: &[f64],
    end: &[f64],
    order: &[usize],
    features: &Features,
    score: Score,
    steps: usize,
) -> Result<Vec<f64>> {
    if steps == 0 {
        return Err(Error::invalid("curve needs at least one step"));
    }
    let d = start.len();
    let mut batch = Vec::with_capacity((steps + 1) * d);
    let mut current = start.to_vec();
    let mut done = 0;
    for s in 0..=steps {
        let upto = step_count(s, steps, order.len());
        for &f in &order[done..upto] {
            for &i in &features.groups[f] {
                current[i] = end[i];
            }
        }
        done = upto;
        batch.extend_from_slice(&current);
    }
    scores_of(net, &batch, score)
}

/// Score after removing `0, 1/steps, …, 1` of the features (most
/// attributed first) by setting them to the baseline.
pub fn deletion_curve(
    net: &LipNet,
    x: &[f64],
    attr: &[f64],
    baseline: &[f64],
    score: Score,
    features: &Features,
    steps: usize,
) -> Result<Vec<f64>> {
    features.check(x, attr, baseline)?;
    progressive_curve(net, x, baseline, &features.ranking(attr), features, score, steps)
}

/// Score while restoring features (most attributed first) into the
/// baseline.
pub fn insertion_curve(
    net: &LipNet,
    x: &[f64],
    attr: &[f64],
    baseline: &[f64],
    score: Score,
    features: &Features,
    steps: usize,
) -> Result<Vec<f64>> {
    features.check(x, attr, baseline)?;
    progressive_curve(net, baseline, x, &features.ranking(attr), features, score, steps)
}

/// Trapezoidal area under the deletion curve over fraction removed.
pub fn deletion_auc(
    net: &LipNet,
    x: &[f64],
    attr: &[f64],
    baseline: &[f64],
    score: Score,
    features: &Features,
    steps: usize,
) -> Result<f64> {
    Ok(trapezoid_unit(&deletion_curve(
        net, x, attr, baseline, score, features, steps,
    )?))
}

/// Trapezoidal area under the insertion curve over fraction restored.
pub fn insertion_auc(
    net: &LipNet,
    x: &[f64],
    attr: &[f64],
    baseline: &[f64],
    score: Score,
    features: &Features,
    steps: usize,
) -> Result<f64> {
    Ok(trapezoid_unit(&insertion_curve(
        net, x, attr, baseline, score, features, steps,
    )?))
}

/// Pearson correlation between `Σ_{i∈u} g_i` and the score drop from
/// baselining `u`, over `n_subsets` random feature subsets of size
/// `round(k_fraction · #features)` (at least one).
#[allow(clippy::too_many_arguments)]
pub fn mu_fidelity(
    net: &LipNet,
    x: &[f64],
    attr: &[f64],
    baseline: &[f64],
    score: Score,
    features: &Features,
    k_fraction: f64,
    n_subsets: usize,
    rng: &mut Rng,
) -> Result<f64> {
    features.check(x, attr, baseline)?;
    if n_subsets < 8 {
        return Err(Error::invalid(format!(
            "μFidelity needs at least 8 subsets, got {n_subsets}"
        )));
    }
    if !(k_fraction > 0.0 && k_fraction <= 1.0) {
        return Err(Error::invalid(format!("subset fraction {k_fraction} outside (0, 1]")));
    }
    let g = features.scores(attr);
    let k = (libm::round(k_fraction * g.len() as f64) as usize).clamp(1, g.len());
    let d = x.len();
    let mut batch = Vec::with_capacity((n_subsets + 1) * d);
    batch.extend_from_slice(x);
    let mut sums = Vec::with_capacity(n_subsets);
    for _ in 0..n_subsets {
        let u = rng.sample_indices(g.len(), k);
        sums.push(u.iter().map(|&f| g[f]).sum::<f64>());
        let start = batch.len();
        batch.extend_from_slice(x);
        for &f in &u {
            for &i in &features.groups[f] {
                batch[start + i] = baseline[i];
            }
        }
    }
    let f = scores_of(net, &batch, score)?;
    let drops: Vec<f64> = f[1..].iter().map(|v| f[0] - v).collect();
    pearson(&sums, &drops)
}

/// What counts as a changed decision for the restricted attack.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    /// Sign of the single output.
    Binary,
    /// Arg-max leaves `class`.
    Multiclass { class: usize },
}

impl Decision {
    pub fn for_prediction(net: &LipNet, x: &[f64]) -> Result<Self> {
        let s = net.forward_batch(x)?;
        Ok(if s.len() == 1 {
            Decision::Binary
        } else {
            Decision::Multiclass { class: predict(&s) }
        })
    }

    /// Positive while the decision at `x` is kept; `reference` is the sign
    /// of the binary output at the attacked point.
    fn margin(&self, scores: &[f64], reference: f64) -> f64 {
        match *self {
            Decision::Binary => reference * scores[0],
            Decision::Multiclass { class } => {
                let other = scores
                    .iter()
                    .enumerate()
                    .filter(|(k, _)| *k != class)
                    .map(|(_, s)| *s)
                    .fold(f64::NEG_INFINITY, f64::max);
                scores[class] - other
            }
        }
    }

    /// Score whose gradient points away from the decision boundary at `x`.
    fn score_at(&self, scores: &[f64]) -> Score {
        match *self {
            Decision::Binary => Score::Output(0),
            Decision::Multiclass { class } => {
                let mut runner = if class == 0 { 1 } else { 0 };
                for (k, &s) in scores.iter().enumerate() {
                    if k != class && s > scores[runner] {
                        runner = k;
                    }
                }
                Score::Difference {
                    positive: class,
                    negative: runner,
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AttackConfig {
    pub bisection_steps: usize,
    /// Step growth while searching for a first flipped radius.
    pub growth: f64,
    /// Radius beyond which the search gives up (censored result).
    pub max_radius: f64,
}

impl Default for AttackConfig {
    fn default() -> Self {
        AttackConfig {
            bisection_steps: 20,
            growth: 1.5,
            max_radius: 100.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AttackResult {
    /// Distance to the first crossing found; `max_radius` when censored.
    pub distance: f64,
    pub censored: bool,
}

/// Smallest radius `r` along the unit direction `dir` at which the decision
/// changes, by geometric growth from `r0`, bisection, and a final linear
/// interpolation of the margin inside the last bracket.
pub fn line_attack(
    net: &LipNet,
    x: &[f64],
    dir: &[f64],
    decision: Decision,
    r0: f64,
    cfg: &AttackConfig,
) -> Result<AttackResult> {
    let reference = {
        let s = net.forward_batch(x)?;
        if s[0] >= 0.0 {
            1.0
        } else {
            -1.0
        }
    };
    let margin_at = |r: f64| -> Result<f64> {
        let p: Vec<f64> = x.iter().zip(dir).map(|(xi, di)| xi + r * di).collect();
        Ok(decision.margin(&net.forward_batch(&p)?, reference))
    };
    let m0 = margin_at(0.0)?;
    if m0 <= 0.0 {
        return Ok(AttackResult {
            distance: 0.0,
            censored: false,
        });
    }
    let (mut lo, mut m_lo) = (0.0, m0);
    let mut hi = r0.max(1e-12);
    let mut m_hi = margin_at(hi)?;
    while m_hi > 0.0 {
        if hi >= cfg.max_radius {
            return Ok(AttackResult {
                distance: cfg.max_radius,
                censored: true,
            });
        }
        (lo, m_lo) = (hi, m_hi);
        hi = (hi * cfg.growth).min(cfg.max_radius);
        m_hi = margin_at(hi)?;
    }
    for _ in 0..cfg.bisection_steps {
        let mid = 0.5 * (lo + hi);
        let m = margin_at(mid)?;
        if m > 0.0 {
            (lo, m_lo) = (mid, m);
        } else {
            (hi, m_hi) = (mid, m);
        }
    }
    let distance = lo + (hi - lo) * m_lo / (m_lo - m_hi);
    Ok(AttackResult {
        distance: distance.clamp(lo, hi),
        censored: false,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessCurve {
    pub fractions: Vec<f64>,
    /// Monotone non-increasing in the fraction.
    pub distances: Vec<f64>,
    pub censored: Vec<bool>,
    /// Trapezoidal area of distance over the fraction axis.
    pub auc: f64,
}

/// Robustness-Sr: for each fraction `u`, the distance of the decision flip
/// found by attacking only the top-`u` features along the restricted
/// gradient direction.
///
/// A perturbation admissible for a smaller feature set is admissible for a
/// larger one, so each distance is the running minimum over the fractions
/// seen so far (fractions are processed in increasing order).
pub fn robustness_sr(
    net: &LipNet,
    x: &[f64],
    attr: &[f64],
    features: &Features,
    fractions: &[f64],
    cfg: &AttackConfig,
) -> Result<RobustnessCurve> {
    features.check(x, attr, x)?;
    if fractions.is_empty() || fractions.iter().any(|f| !(*f > 0.0 && *f <= 1.0)) {
        return Err(Error::invalid("fractions must lie in (0, 1]"));
    }
    let mut fr = fractions.to_vec();
    fr.sort_by(f64::total_cmp);
    let decision = Decision::for_prediction(net, x)?;
    let s = net.forward_batch(x)?;
    let score = decision.score_at(&s);
    let (value, grad) = net.score_gradient(x, score)?;
    let away = match decision {
        Decision::Binary if value < 0.0 => -1.0,
        _ => 1.0,
    };
    let order = features.ranking(attr);
    let (mut distances, mut censored) = (Vec::new(), Vec::new());
    let mut best = AttackResult {
        distance: f64::INFINITY,
        censored: true,
    };
    for &u in &fr {
        let k = (libm::round(u * order.len() as f64) as usize).clamp(1, order.len());
        let mut dir = vec![0.0; x.len()];
        for &f in &order[..k] {
            for &i in &features.groups[f] {
                dir[i] = -away * grad[i];
            }
        }
        let gn = norm(&dir);
        let found = if gn == 0.0 {
            AttackResult {
                distance: cfg.max_radius,
                censored: true,
            }
        } else {
            dir.iter_mut().for_each(|v| *v /= gn);
            line_attack(net, x, &dir, decision, value.abs() / gn, cfg)?
        };
        if found.distance < best.distance {
            best = found;
        }
        distances.push(best.distance);
        censored.push(best.censored);
    }
    let auc = fr
        .windows(2)
        .zip(distances.windows(2))
        .map(|(f, d)| 0.5 * (f[1] - f[0]) * (d[0] + d[1]))
        .sum();
    Ok(RobustnessCurve {
        fractions: fr,
        distances,
        censored,
        auc,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum ExplanationDistance {
    L2,
    /// `1 − ρ` with `ρ` the Spearman rank correlation.
    OneMinusSpearman,
}

impl ExplanationDistance {
    /// Identical maps are at distance 0 even when constant.
    pub fn between(self, a: &[f64], b: &[f64]) -> Result<f64> {
        match self {
            ExplanationDistance::L2 => {
                if a.len() != b.len() {
                    return Err(Error::dim("explanations differ in length"));
                }
                Ok(libm::sqrt(a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()))
            }
            ExplanationDistance::OneMinusSpearman => {
                if a == b {
                    return Ok(0.0);
                }
                Ok(1.0 - spearman(a, b)?)
            }
        }
    }
}

/// Norm of the neighborhood ball used by [`stability`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum BallNorm {
    L2,
    /// Independent uniform noise in `[-radius, radius]` per variable.
    LInf,
}

/// Point drawn uniformly from the ball of `radius` around `x`.
pub fn ball_sample(x: &[f64], radius: f64, ball: BallNorm, rng: &mut Rng) -> Vec<f64> {
    match ball {
        BallNorm::L2 => {
            let dir = rng.normal_vec(x.len(), 1.0);
            let n = norm(&dir);
            let r = radius * libm::pow(rng.uniform(), 1.0 / x.len() as f64);
            x.iter().zip(&dir).map(|(xi, di)| xi + r * di / n).collect()
        }
        BallNorm::LInf => x.iter().map(|xi| xi + rng.uniform_in(-radius, radius)).collect(),
    }
}

/// Mean distance between the explanation at `x` and the explanations at
/// `n_neighbors` uniform samples from the ball of `radius` around `x`, all
/// explaining the same score.
#[allow(clippy::too_many_arguments)]
pub fn stability(
    net: &LipNet,
    x: &[f64],
    score: Score,
    method: &Method,
    radius: f64,
    ball: BallNorm,
    n_neighbors: usize,
    distance: ExplanationDistance,
    rng: &mut Rng,
) -> Result<f64> {
    if n_neighbors < 2 {
        return Err(Error::invalid(format!(
            "stability needs at least 2 neighbors, got {n_neighbors}"
        )));
    }
    if !(radius >= 0.0) {
        return Err(Error::invalid("radius must be non-negative"));
    }
    let centre = explain(net, x, score, method, rng)?;
    let mut total = 0.0;
    for _ in 0..n_neighbors {
        let z = ball_sample(x, radius, ball, rng);
        let e = explain(net, &z, score, method, rng)?;
        total += distance.between(centre.data(), e.data())?;
    }
    Ok(total / n_neighbors as f64)
}

/// `‖∇f(x) − SmoothGrad_signed(x)‖₂`: how far smoothing moves the gradient.
pub fn smoothing_distance(net: &LipNet, x: &[f64], score: Score, n: usize, sigma: f64, rng: &mut Rng) -> Result<f64> {
    let (_, g) = net.score_gradient(x, score)?;
    let s = smoothgrad_signed(net, x, score, n, sigma, rng)?;
    ExplanationDistance::L2.between(&g, &s)
}

/// 8-bit quantization of `|a| / max|a|` (all zeros for a zero map).
pub fn quantize(attr: &[f64]) -> Vec<u8> {
    let m = attr.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    attr.iter()
        .map(|v| {
            if m > 0.0 {
                libm::round(255.0 * v.abs() / m) as u8
            } else {
                0
            }
        })
        .collect()
}

/// Deflate level used for the complexity proxy.
pub const COMPLEXITY_LEVEL: u8 = 9;

/// Compressed size in bytes of the quantized map.
pub fn complexity(attr: &[f64]) -> usize {
    miniz_oxide::deflate::compress_to_vec(&quantize(attr), COMPLEXITY_LEVEL).len()
}

/// Fraction of the top `k_percent` % attribution values that fall inside
/// `mask`. Values tied at the selection threshold share the remaining slots
/// in proportion to how many of them are masked.
pub fn null_block_fraction(attr: &[f64], mask: &[bool], k_percent: f64) -> Result<f64> {
    if attr.len() != mask.len() {
        return Err(Error::dim(format!(
            "mask has {} entries, attribution {}",
            mask.len(),
            attr.len()
        )));
    }
    let k = libm::floor(k_percent / 100.0 * attr.len() as f64) as usize;
    if k == 0 || k > attr.len() {
        return Err(Error::Arity(format!(
            "top {k_percent}% of {} values selects {k}",
            attr.len()
        )));
    }
    let mut sorted = attr.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let threshold = sorted[k - 1];
    let (mut above, mut above_masked, mut tied, mut tied_masked) = (0usize, 0usize, 0usize, 0usize);
    for (v, &m) in attr.iter().zip(mask) {
        if *v > threshold {
            above += 1;
            above_masked += usize::from(m);
        } else if *v == threshold {
            tied += 1;
            tied_masked += usize::from(m);
        }
    }
    let share = (k - above) as f64 * tied_masked as f64 / tied as f64;
    Ok((above_masked as f64 + share) / k as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Metric {
    MufidZero,
    MufidUniform,
    Deletion,
    Insertion,
    RobustnessSr,
    StabilitySpearman,
    StabilityL2,
    Complexity,
    /// L2 distance between the signed gradient and signed SmoothGrad.
    SmoothgradDistance,
    /// Null-block top-k fraction (BlockMNIST only).
    NullBlock,
}

impl Metric {
    pub const ALL: [Metric; 10] = [
        Metric::MufidZero,
        Metric::MufidUniform,
        Metric::Deletion,
        Metric::Insertion,
        Metric::RobustnessSr,
        Metric::StabilitySpearman,
        Metric::StabilityL2,
        Metric::Complexity,
        Metric::SmoothgradDistance,
        Metric::NullBlock,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::MufidZero => "mufid_zero",
            Metric::MufidUniform => "mufid_uniform",
            Metric::Deletion => "deletion",
            Metric::Insertion => "insertion",
            Metric::RobustnessSr => "robustness_sr",
            Metric::StabilitySpearman => "stability_spearman",
            Metric::StabilityL2 => "stability_l2",
            Metric::Complexity => "complexity",
            Metric::SmoothgradDistance => "smoothgrad_distance",
            Metric::NullBlock => "null_block",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == name)
            .ok_or_else(|| Error::invalid(format!("unknown metric `{name}`")))
    }

    /// Whether larger values mean a better explanation.
    pub fn higher_is_better(self) -> bool {
        matches!(self, Metric::MufidZero | Metric::MufidUniform | Metric::Insertion)
    }

    /// Whether the value depends on the attribution method at all.
    pub fn uses_method(self) -> bool {
        !matches!(self, Metric::SmoothgradDistance)
    }
}

/// Everything that, together with the model and data, fixes a report.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields, default))]
pub struct MetricSettings {
    pub grouping: Grouping,
    pub curve_steps: usize,
    pub k_fraction: f64,
    pub n_subsets: usize,
    pub radius: f64,
    pub ball: BallNorm,
    pub n_neighbors: usize,
    pub fractions: Vec<f64>,
    pub attack: AttackConfig,
    pub smoothgrad_n: usize,
    pub smoothgrad_sigma: f64,
    pub null_k_percent: f64,
    pub seed: u64,
}

impl Default for MetricSettings {
    fn default() -> Self {
        MetricSettings {
            grouping: Grouping::Grid { rows: 20, cols: 20 },
            curve_steps: 20,
            k_fraction: 0.2,
            n_subsets: 32,
            radius: 0.3,
            ball: BallNorm::LInf,
            n_neighbors: 8,
            fractions: (1..=10).map(|i| i as f64 / 10.0).collect(),
            attack: AttackConfig::default(),
            smoothgrad_n: 50,
            smoothgrad_sigma: 0.2,
            null_k_percent: 10.0,
            seed: 0,
        }
    }
}

/// Random streams of sample `i`: one for baselines (shared by every metric,
/// so deletion and insertion see the same noise) and one for everything
/// else.
pub fn sample_streams(seed: u64, i: usize) -> (Rng, Rng) {
    (
        Rng::derive(seed, (i as u64) << 1),
        Rng::derive(seed, ((i as u64) << 1) | 1),
    )
}

/// Explained score for one input: the single output for a binary head,
/// otherwise the predicted class.
pub fn explained_score(net: &LipNet, x: &[f64]) -> Result<Score> {
    let s = net.forward_batch(x)?;
    Ok(Score::Output(if s.len() == 1 { 0 } else { predict(&s) }))
}

/// Value of `metric` for sample `i` of `data`, explained by `method`.
pub fn evaluate_sample(
    net: &LipNet,
    data: &Dataset,
    i: usize,
    method: &Method,
    metric: Metric,
    settings: &MetricSettings,
) -> Result<f64> {
    let x = data.input(i);
    let score = explained_score(net, x)?;
    let (mut base_rng, mut rng) = sample_streams(settings.seed, i);
    let features = || Features::for_data(data.meta.d, data.meta.image_shape, settings.grouping);
    let attribution = |rng: &mut Rng| -> Result<Attribution> { explain(net, x, score, method, rng) };
    let d = x.len();
    match metric {
        Metric::MufidZero | Metric::MufidUniform => {
            let kind = if metric == Metric::MufidZero {
                BaselineKind::Zero
            } else {
                BaselineKind::Uniform
            };
            let baseline = kind.materialize(d, &mut base_rng);
            let a = attribution(&mut rng)?;
            mu_fidelity(
                net,
                x,
                a.data(),
                &baseline,
                score,
                &features()?,
                settings.k_fraction,
                settings.n_subsets,
                &mut rng,
            )
        }
        Metric::Deletion | Metric::Insertion => {
            let baseline = BaselineKind::Zero.materialize(d, &mut base_rng);
            let a = attribution(&mut rng)?;
            let f = if metric == Metric::Deletion {
                deletion_auc
            } else {
                insertion_auc
            };
            f(net, x, a.data(), &baseline, score, &features()?, settings.curve_steps)
        }
        Metric::RobustnessSr => {
            let a = attribution(&mut rng)?;
            Ok(robustness_sr(net, x, a.data(), &features()?, &settings.fractions, &settings.attack)?.auc)
        }
        Metric::StabilitySpearman | Metric::StabilityL2 => {
            let dist = if metric == Metric::StabilityL2 {
                ExplanationDistance::L2
            } else {
                ExplanationDistance::OneMinusSpearman
            };
            stability(
                net,
                x,
                score,
                method,
                settings.radius,
                settings.ball,
                settings.n_neighbors,
                dist,
                &mut rng,
            )
        }
        Metric::Complexity => Ok(complexity(attribution(&mut rng)?.data()) as f64),
        Metric::SmoothgradDistance => smoothing_distance(
            net,
            x,
            score,
            settings.smoothgrad_n,
            settings.smoothgrad_sigma,
            &mut rng,
        ),
        Metric::NullBlock => {
            let mask = data
                .null_mask(i)
                .ok_or_else(|| Error::invalid("null_block needs a dataset with null blocks"))?;
            null_block_fraction(attribution(&mut rng)?.data(), &mask, settings.null_k_percent)
        }
    }
}

/// Per-sample values of one metric with their aggregate.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MetricReport {
    pub metric: String,
    pub method: String,
    pub samples: Vec<usize>,
    /// `None` where the value is undefined (e.g. zero-variance correlation).
    pub per_sample: Vec<Option<f64>>,
    pub excluded: usize,
    pub mean: f64,
    pub sd: f64,
    pub settings: MetricSettings,
}

impl MetricReport {
    /// Aggregates per-sample results; undefined correlations and degenerate
    /// gradients are excluded, any other error is returned.
    pub fn collect(
        metric: Metric,
        method: &Method,
        samples: Vec<usize>,
        results: Vec<Result<f64>>,
        settings: &MetricSettings,
    ) -> Result<Self> {
        let mut per_sample = Vec::with_capacity(results.len());
        for r in results {
            match r {
                Ok(v) => per_sample.push(Some(v)),
                Err(Error::UndefinedCorrelation | Error::DegenerateGradient { .. }) => per_sample.push(None),
                Err(e) => return Err(e),
            }
        }
        let values: Vec<f64> = per_sample.iter().flatten().copied().collect();
        Ok(MetricReport {
            metric: String::from(metric.name()),
            method: String::from(if metric.uses_method() { method.name() } else { "none" }),
            samples,
            excluded: per_sample.len() - values.len(),
            per_sample,
            mean: mean(&values),
            sd: std_dev(&values),
            settings: settings.clone(),
        })
    }
}
