//! Desk-scale experiment presets and the comparisons run on them.

use std::path::Path;

use otxai_core::attribution::Method;
use otxai_core::data::{min_class_distance, Dataset};
use otxai_core::losses::HkrVariant;
use otxai_core::metrics::{evaluate_sample, AttackConfig, Metric, MetricSettings};
use otxai_core::model::LayerSpec;
use otxai_core::stats::{mean, sign_test};
use otxai_core::verify::{check_boundary, check_certificate, CertificateReport, GeometryReport};
use otxai_core::{LipNet, Rng};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{DatasetSpec, ExperimentConfig, LossSpec, OptimizerSpec};
use crate::error::{Error, Result};
use crate::train::{self, TrainReport, TrainedModel};

pub const DEFAULT_SEED: u64 = 0;
pub const FASHION_SUBSET: usize = 10_000;
/// Test samples scored per model in the attribution-metric comparison.
pub const COMPARISON_SAMPLES: usize = 1000;
pub const SIGNIFICANCE: f64 = 0.05;

/// Stream of the random certificate directions.
pub const CERTIFICATE_STREAM: u64 = 0xce27;
/// Random attack directions per certificate sample, besides the gradient.
pub const CERTIFICATE_DIRECTIONS: usize = 4;

pub const PRESETS: &[&str] = &[
    "koch",
    "table6-ova",
    "table6-softmax",
    "table1-otnn",
    "table1-unconstrained",
    "table9-otnn",
    "table9-unconstrained",
];

fn spectral_mlp(hidden: &[usize], out: usize) -> Vec<LayerSpec> {
    let mut layers = Vec::new();
    for &units in hidden {
        layers.push(LayerSpec::SpectralDense { units });
        layers.push(LayerSpec::Groupsort2);
    }
    layers.push(LayerSpec::SpectralDense { units: out });
    layers
}

fn relu_mlp(hidden: &[usize], out: usize) -> Vec<LayerSpec> {
    let mut layers = Vec::new();
    for &units in hidden {
        layers.push(LayerSpec::PlainDense { units });
        layers.push(LayerSpec::Relu);
    }
    layers.push(LayerSpec::PlainDense { units: out });
    layers
}

fn hkr(variant: HkrVariant, lambda: f64, margin: f64, alpha: f64) -> LossSpec {
    LossSpec::Hkr {
        variant,
        lambda,
        margin: Some(margin),
        margin_from_distance: None,
        alpha,
    }
}

/// Two snowflakes, a 3x64 GroupSort network and a margin well inside the
/// class gap.
pub fn koch_config(seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        dataset: DatasetSpec::Koch {
            order: 4,
            scales: [1.0, 1.6],
            samples_per_class: 2000,
            test_samples_per_class: 250,
            noise_sd: 0.0,
        },
        architecture: spectral_mlp(&[64, 64, 64], 1),
        loss: LossSpec::Hkr {
            variant: HkrVariant::Binary,
            lambda: 5.0,
            margin: None,
            margin_from_distance: Some(0.2),
            alpha: 0.0,
        },
        optimizer: OptimizerSpec::new(128, 400, vec![(0, 5e-3), (200, 1e-3), (300, 2e-4)]),
        seed,
        output: None,
    }
}

fn fashion(subset: usize) -> DatasetSpec {
    DatasetSpec::FashionMnist {
        subset: Some(subset),
        test_subset: None,
    }
}

/// 256-256 spectral MLP on a FashionMNIST subset; only the hKR variant
/// differs between the two arms.
pub fn table6_config(variant: HkrVariant, subset: usize, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        dataset: fashion(subset),
        architecture: spectral_mlp(&[256, 256], 10),
        loss: hkr(variant, 10.0, 0.5, 10.0),
        optimizer: OptimizerSpec::new(128, 30, vec![(0, 5e-4), (22, 5e-5)]),
        seed,
        output: None,
    }
}

/// Softmax-variant OTNN with the hinge weight used for attribution
/// experiments (lower than in the variant comparison).
pub fn table1_otnn_config(subset: usize, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        dataset: fashion(subset),
        architecture: spectral_mlp(&[256, 256], 10),
        loss: hkr(HkrVariant::MulticlassSoftmax, 5.0, 0.5, 10.0),
        optimizer: OptimizerSpec::new(128, 60, vec![(0, 5e-4), (45, 5e-5)]),
        seed,
        output: None,
    }
}

/// Unconstrained counterpart of the attribution OTNN: same widths and
/// epochs, ReLU, cross-entropy.
pub fn table1_unconstrained_config(subset: usize, seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        dataset: fashion(subset),
        architecture: relu_mlp(&[256, 256], 10),
        loss: LossSpec::CrossEntropy,
        optimizer: OptimizerSpec::new(128, 60, vec![(0, 1e-3), (45, 1e-4)]),
        seed,
        output: None,
    }
}

fn block_mnist() -> DatasetSpec {
    DatasetSpec::BlockMnist { test_fraction: 0.2 }
}

pub fn table9_otnn_config(seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        dataset: block_mnist(),
        architecture: spectral_mlp(&[256, 256], 1),
        loss: hkr(HkrVariant::Binary, 10.0, 0.5, 0.0),
        optimizer: OptimizerSpec::new(128, 40, vec![(0, 5e-4), (30, 5e-5)]),
        seed,
        output: None,
    }
}

pub fn table9_unconstrained_config(seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        dataset: block_mnist(),
        architecture: relu_mlp(&[256, 256], 1),
        loss: LossSpec::CrossEntropy,
        optimizer: OptimizerSpec::new(128, 40, vec![(0, 1e-3), (30, 1e-4)]),
        seed,
        output: None,
    }
}

/// Config of a named preset; `subset` applies to the FashionMNIST ones.
pub fn preset(name: &str, seed: u64, subset: Option<usize>) -> Result<ExperimentConfig> {
    let subset = subset.unwrap_or(FASHION_SUBSET);
    Ok(match name {
        "koch" => koch_config(seed),
        "table6-ova" => table6_config(HkrVariant::MulticlassOva, subset, seed),
        "table6-softmax" => table6_config(HkrVariant::MulticlassSoftmax, subset, seed),
        "table1-otnn" => table1_otnn_config(subset, seed),
        "table1-unconstrained" => table1_unconstrained_config(subset, seed),
        "table9-otnn" => table9_otnn_config(seed),
        "table9-unconstrained" => table9_unconstrained_config(seed),
        _ => {
            return Err(Error::Usage(format!(
                "unknown preset `{name}` (expected one of {})",
                PRESETS.join(", ")
            )))
        }
    })
}

/// Training outcome carried into every experiment report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub config_hash: String,
    pub seed: u64,
    pub train_samples: usize,
    pub test_samples: usize,
    pub final_train_loss: Option<f64>,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
}

impl From<&TrainReport> for RunSummary {
    fn from(r: &TrainReport) -> Self {
        RunSummary {
            config_hash: r.config_hash.clone(),
            seed: r.seed,
            train_samples: r.train_samples,
            test_samples: r.test_samples,
            final_train_loss: r.final_train_loss,
            train_accuracy: r.train_accuracy,
            test_accuracy: r.test_accuracy,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KochReport {
    pub run: RunSummary,
    pub margin: f64,
    /// Brute-force nearest distance between the two training classes.
    pub class_distance: f64,
    pub geometry: GeometryReport,
    pub certificate: CertificateReport,
}

pub fn koch_report(model: &TrainedModel) -> Result<KochReport> {
    let score = otxai_core::Score::Output(0);
    let geometry = check_boundary(&model.net, &model.test, score, None)?;
    let mut rng = Rng::derive(model.report.seed, CERTIFICATE_STREAM);
    let certificate = check_certificate(
        &model.net,
        &model.test,
        &AttackConfig::default(),
        CERTIFICATE_DIRECTIONS,
        &mut rng,
    )?;
    Ok(KochReport {
        run: RunSummary::from(&model.report),
        margin: model.report.margin.unwrap_or(f64::NAN),
        class_distance: min_class_distance(&model.train, 0, 1),
        geometry,
        certificate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table6Report {
    pub ova: RunSummary,
    pub softmax: RunSummary,
    /// Test accuracy difference, in percentage points.
    pub softmax_minus_ova: f64,
}

pub fn table6_report(ova: &TrainedModel, softmax: &TrainedModel) -> Table6Report {
    Table6Report {
        ova: RunSummary::from(&ova.report),
        softmax: RunSummary::from(&softmax.report),
        softmax_minus_ova: 100.0 * (softmax.report.test_accuracy - ova.report.test_accuracy),
    }
}

/// One metric on the same samples for an OTNN and an unconstrained net.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairedComparison {
    pub metric: String,
    pub method: String,
    pub higher_is_better: bool,
    /// Samples where both values are defined.
    pub pairs: usize,
    pub otnn_mean: f64,
    pub unconstrained_mean: f64,
    /// Pairs where the OTNN value is strictly better.
    pub otnn_better: usize,
    /// One-sided sign test p-value for "OTNN better".
    pub p_value: f64,
    /// OTNN better on the mean, with `p_value < 0.05`.
    pub holds: bool,
}

fn per_sample(
    net: &LipNet,
    data: &Dataset,
    samples: &[usize],
    method: &Method,
    metric: Metric,
    settings: &MetricSettings,
) -> Result<Vec<Option<f64>>> {
    samples
        .par_iter()
        .map(|&i| match evaluate_sample(net, data, i, method, metric, settings) {
            Ok(v) => Ok(Some(v)),
            Err(otxai_core::Error::UndefinedCorrelation | otxai_core::Error::DegenerateGradient { .. }) => Ok(None),
            Err(e) => Err(e.into()),
        })
        .collect()
}

pub fn compare(
    otnn: &LipNet,
    unconstrained: &LipNet,
    data: &Dataset,
    samples: &[usize],
    method: &Method,
    metric: Metric,
    settings: &MetricSettings,
) -> Result<PairedComparison> {
    let a = per_sample(otnn, data, samples, method, metric, settings)?;
    let b = per_sample(unconstrained, data, samples, method, metric, settings)?;
    let (xs, ys): (Vec<f64>, Vec<f64>) = a.iter().zip(&b).filter_map(|(x, y)| Some(((*x)?, (*y)?))).unzip();
    let sign = if metric.higher_is_better() { 1.0 } else { -1.0 };
    let diffs: Vec<f64> = xs.iter().zip(&ys).map(|(x, y)| sign * (x - y)).collect();
    let (otnn_mean, unconstrained_mean) = (mean(&xs), mean(&ys));
    let p_value = sign_test(&diffs);
    Ok(PairedComparison {
        metric: metric.name().to_string(),
        method: if metric.uses_method() { method.name() } else { "none" }.to_string(),
        higher_is_better: metric.higher_is_better(),
        pairs: diffs.len(),
        otnn_mean,
        unconstrained_mean,
        otnn_better: diffs.iter().filter(|d| **d > 0.0).count(),
        p_value,
        holds: sign * (otnn_mean - unconstrained_mean) > 0.0 && p_value < SIGNIFICANCE,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table1Report {
    pub samples: Vec<usize>,
    pub otnn: RunSummary,
    pub unconstrained: RunSummary,
    pub settings: MetricSettings,
    pub rows: Vec<PairedComparison>,
}

/// Saliency fidelity, SmoothGrad distance and Saliency stability on the
/// first `n_samples` test images.
pub fn table1_report(
    otnn: &TrainedModel,
    unconstrained: &TrainedModel,
    n_samples: usize,
    settings: &MetricSettings,
) -> Result<Table1Report> {
    let data = &otnn.test;
    if unconstrained.test.len() != data.len() {
        return Err(Error::Usage(
            "table1 models were evaluated on different test sets".into(),
        ));
    }
    let samples: Vec<usize> = (0..n_samples.min(data.len())).collect();
    let rows = [Metric::MufidZero, Metric::SmoothgradDistance, Metric::StabilitySpearman]
        .into_iter()
        .map(|metric| {
            compare(
                &otnn.net,
                &unconstrained.net,
                data,
                &samples,
                &Method::Saliency,
                metric,
                settings,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Table1Report {
        samples,
        otnn: RunSummary::from(&otnn.report),
        unconstrained: RunSummary::from(&unconstrained.report),
        settings: settings.clone(),
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Table9Report {
    pub otnn: RunSummary,
    pub unconstrained: RunSummary,
    pub settings: MetricSettings,
    /// Fraction of the top-k saliency in the null block.
    pub null_block: PairedComparison,
}

/// Null-block fraction of the Saliency top-k on every test image.
pub fn table9_report(
    otnn: &TrainedModel,
    unconstrained: &TrainedModel,
    settings: &MetricSettings,
) -> Result<Table9Report> {
    let samples: Vec<usize> = (0..otnn.test.len()).collect();
    let null_block = compare(
        &otnn.net,
        &unconstrained.net,
        &otnn.test,
        &samples,
        &Method::Saliency,
        Metric::NullBlock,
        settings,
    )?;
    Ok(Table9Report {
        otnn: RunSummary::from(&otnn.report),
        unconstrained: RunSummary::from(&unconstrained.report),
        settings: settings.clone(),
        null_block,
    })
}

/// Trains a preset.
pub fn train_preset(name: &str, seed: u64, subset: Option<usize>, data_dir: &Path) -> Result<TrainedModel> {
    train::run(&preset(name, seed, subset)?, data_dir, None)
}
