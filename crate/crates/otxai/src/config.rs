//! Experiment configuration files.

use std::fs;
use std::path::{Path, PathBuf};

use otxai_core::data::{self, Dataset};
use otxai_core::linalg::BjorckConfig;
use otxai_core::losses::{HkrConfig, HkrVariant, LossKind};
use otxai_core::model::LayerSpec;
use otxai_core::optim::{AdamConfig, Schedule, TrainConfig};
use otxai_core::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datasets;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSpec,
    pub architecture: Vec<LayerSpec>,
    pub loss: LossSpec,
    pub optimizer: OptimizerSpec,
    pub seed: u64,
    /// Output directory; `--out` takes precedence.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    /// Two concentric Koch snowflakes (class 0 inside).
    Koch {
        order: usize,
        scales: [f64; 2],
        #[serde(alias = "n")]
        samples_per_class: usize,
        #[serde(default = "default_koch_test")]
        test_samples_per_class: usize,
        #[serde(default)]
        noise_sd: f64,
    },
    /// FashionMNIST from the data directory. `subset` keeps the first
    /// training images, `test_subset` the first test images.
    FashionMnist {
        #[serde(default)]
        subset: Option<usize>,
        #[serde(default)]
        test_subset: Option<usize>,
    },
    /// BlockMNIST (digits 0 and 1) synthesized from the MNIST test images;
    /// `test_fraction` of the synthesized images are held out.
    BlockMnist { test_fraction: f64 },
    /// Any IDX image/label quadruple.
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
    },
    Blobs {
        means: Vec<Vec<f64>>,
        sd: f64,
        samples_per_class: usize,
        test_samples_per_class: usize,
    },
    /// Masses at `±a`.
    Dirac { a: f64, copies: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LossSpec {
    /// Exactly one of `margin` and `margin_from_distance` is set; the latter
    /// is a multiple of the smallest distance between the two training
    /// classes.
    Hkr {
        variant: HkrVariant,
        lambda: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        margin: Option<f64>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        margin_from_distance: Option<f64>,
        #[serde(default)]
        alpha: f64,
    },
    CrossEntropy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSpec {
    pub batch_size: usize,
    pub epochs: usize,
    /// `[epoch, learning_rate]` stages; the first starts at epoch 0.
    pub schedule: Vec<(usize, f64)>,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
    /// Björck iteration cap of the projection after each step.
    #[serde(default = "default_bjorck_iters")]
    pub bjorck_iters: usize,
    /// Björck stopping threshold on `max |WᵀW − I|`.
    #[serde(default = "default_bjorck_tol")]
    pub bjorck_tol: f64,
}

fn default_koch_test() -> usize {
    250
}

fn default_beta1() -> f64 {
    0.9
}

fn default_beta2() -> f64 {
    0.999
}

fn default_eps() -> f64 {
    1e-8
}

fn default_bjorck_iters() -> usize {
    BjorckConfig::default().max_iters
}

fn default_bjorck_tol() -> f64 {
    BjorckConfig::default().tol
}

impl OptimizerSpec {
    pub fn new(batch_size: usize, epochs: usize, schedule: Vec<(usize, f64)>) -> Self {
        OptimizerSpec {
            batch_size,
            epochs,
            schedule,
            beta1: default_beta1(),
            beta2: default_beta2(),
            eps: default_eps(),
            bjorck_iters: default_bjorck_iters(),
            bjorck_tol: default_bjorck_tol(),
        }
    }

    pub fn train_config(&self) -> Result<TrainConfig> {
        let mut cfg = TrainConfig::new(self.batch_size, self.epochs, Schedule::new(self.schedule.clone())?);
        cfg.adam = AdamConfig {
            beta1: self.beta1,
            beta2: self.beta2,
            eps: self.eps,
        };
        cfg.projection.bjorck.max_iters = self.bjorck_iters;
        cfg.projection.bjorck.tol = self.bjorck_tol;
        Ok(cfg)
    }
}

impl LossSpec {
    /// Concrete loss for `train`; a distance-relative margin is measured on
    /// the training set.
    pub fn resolve(&self, train: &Dataset) -> Result<LossKind> {
        match *self {
            LossSpec::CrossEntropy => Ok(LossKind::CrossEntropy),
            LossSpec::Hkr {
                variant,
                lambda,
                margin,
                margin_from_distance,
                alpha,
            } => {
                let margin = match (margin, margin_from_distance) {
                    (Some(m), None) => m,
                    (None, Some(k)) => {
                        if train.meta.q != 2 {
                            return Err(Error::Usage("margin_from_distance needs a two-class dataset".into()));
                        }
                        k * data::min_class_distance(train, 0, 1)
                    }
                    _ => {
                        return Err(Error::Usage(
                            "hkr loss needs exactly one of `margin` and `margin_from_distance`".into(),
                        ))
                    }
                };
                let cfg = HkrConfig {
                    variant,
                    lambda,
                    margin,
                    alpha,
                };
                cfg.validate()?;
                Ok(LossKind::Hkr(cfg))
            }
        }
    }
}

impl DatasetSpec {
    /// `(train, test)` splits. `subset` overrides the training subset size
    /// of image datasets and truncates the others.
    pub fn load(&self, data_dir: &Path, subset: Option<usize>, seed: u64) -> Result<(Dataset, Dataset)> {
        let mut rng = Rng::derive(seed, datasets::DATA_STREAM);
        let (train, test) = match self {
            DatasetSpec::Koch {
                order,
                scales,
                samples_per_class,
                test_samples_per_class,
                noise_sd,
            } => (
                data::koch_snowflakes(*order, *scales, *samples_per_class, *noise_sd, &mut rng)?,
                data::koch_snowflakes(*order, *scales, *test_samples_per_class, *noise_sd, &mut rng)?,
            ),
            DatasetSpec::FashionMnist { subset: s, test_subset } => {
                let split = datasets::fashion_mnist(data_dir)?;
                let (train, test) = &*split;
                let keep = subset.or(*s);
                (
                    keep.map_or(Ok(train.clone()), |n| train.take(n.min(train.len())))?,
                    test_subset.map_or(Ok(test.clone()), |n| test.take(n.min(test.len())))?,
                )
            }
            DatasetSpec::BlockMnist { test_fraction } => {
                datasets::block_mnist_split(data_dir, *test_fraction, &mut rng)?
            }
            DatasetSpec::Idx {
                train_images,
                train_labels,
                test_images,
                test_labels,
            } => (
                crate::idx::load_idx(train_images, train_labels, "idx-train")?,
                crate::idx::load_idx(test_images, test_labels, "idx-test")?,
            ),
            DatasetSpec::Blobs {
                means,
                sd,
                samples_per_class,
                test_samples_per_class,
            } => (
                data::gaussian_blobs(means, *sd, *samples_per_class, &mut rng)?,
                data::gaussian_blobs(means, *sd, *test_samples_per_class, &mut rng)?,
            ),
            DatasetSpec::Dirac { a, copies } => (data::dirac_pair(*a, *copies)?, data::dirac_pair(*a, 1)?),
        };
        let train = match (self, subset) {
            (DatasetSpec::FashionMnist { .. }, _) | (_, None) => train,
            (_, Some(n)) => train.take(n.min(train.len()))?,
        };
        Ok((train, test))
    }
}

impl ExperimentConfig {
    /// Parses JSON, reporting the failing field path with line and column.
    pub fn from_json(text: &str, path: &Path) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let field = e.path().to_string();
            let inner = e.into_inner();
            Error::Config {
                path: path.to_path_buf(),
                field,
                line: inner.line(),
                column: inner.column(),
                message: strip_position(&inner.to_string()),
            }
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text, path)
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    /// Hex SHA-256 of the canonical (compact) serialization.
    pub fn hash(&self) -> Result<String> {
        let bytes = serde_json::to_vec(self)?;
        Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
    }
}

/// serde_json appends " at line L column C"; the config error prints its
/// own position.
fn strip_position(msg: &str) -> String {
    match msg.rfind(" at line ") {
        Some(i) => msg[..i].to_string(),
        None => msg.to_string(),
    }
}
