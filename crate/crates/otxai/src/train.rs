//! Config-driven training runs.

use std::fmt::Write as _;
use std::path::Path;

use otxai_core::data::Dataset;
use otxai_core::losses::LossKind;
use otxai_core::optim::{accuracy, train, History};
use otxai_core::{LipNet, Rng};
use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::Result;
use crate::model_io::ModelMeta;

pub const INIT_STREAM: u64 = 0x1417;
pub const TRAIN_STREAM: u64 = 0x7a1e;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainReport {
    pub config_hash: String,
    pub seed: u64,
    pub dataset: String,
    pub train_samples: usize,
    pub test_samples: usize,
    pub parameters: usize,
    /// Margin actually used by an hKR loss.
    pub margin: Option<f64>,
    pub final_train_loss: Option<f64>,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub net: LipNet,
    pub history: History,
    pub train: Dataset,
    pub test: Dataset,
    pub loss: LossKind,
    pub report: TrainReport,
}

impl TrainedModel {
    pub fn meta(&self) -> ModelMeta {
        ModelMeta {
            config_hash: self.report.config_hash.clone(),
            seed: self.report.seed,
        }
    }
}

/// Loads the data, initializes the network and trains it.
pub fn run(cfg: &ExperimentConfig, data_dir: &Path, subset: Option<usize>) -> Result<TrainedModel> {
    let (train_set, test_set) = cfg.dataset.load(data_dir, subset, cfg.seed)?;
    let loss = cfg.loss.resolve(&train_set)?;
    let mut init = Rng::derive(cfg.seed, INIT_STREAM);
    let mut net = LipNet::from_spec(train_set.meta.d, &cfg.architecture, &mut init)?;
    let mut rng = Rng::derive(cfg.seed, TRAIN_STREAM);
    let history = train(&mut net, &train_set, &loss, &cfg.optimizer.train_config()?, &mut rng)?;
    let report = TrainReport {
        config_hash: cfg.hash()?,
        seed: cfg.seed,
        dataset: train_set.meta.name.clone(),
        train_samples: train_set.len(),
        test_samples: test_set.len(),
        parameters: net.num_parameters(),
        margin: match loss {
            LossKind::Hkr(h) => Some(h.margin),
            LossKind::CrossEntropy => None,
        },
        final_train_loss: history.epochs.last().map(|e| e.mean_loss),
        train_accuracy: accuracy(&net, &train_set)?,
        test_accuracy: accuracy(&net, &test_set)?,
    };
    Ok(TrainedModel {
        net,
        history,
        train: train_set,
        test: test_set,
        loss,
        report,
    })
}

/// `epoch,lr,mean_loss,train_accuracy` rows.
pub fn history_csv(history: &History) -> String {
    let mut s = String::from("epoch,lr,mean_loss,train_accuracy\n");
    for e in &history.epochs {
        let _ = writeln!(s, "{},{},{},{}", e.epoch, e.lr, e.mean_loss, e.accuracy);
    }
    s
}
