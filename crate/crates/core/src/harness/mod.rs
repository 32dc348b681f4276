//! Configuration, training, evaluation and experiment orchestration.

mod augment;
mod checkpoint;
mod config;
mod evaluate;
mod experiments;
mod network;
mod train;

use std::path::Path;

use crate::data_synth::{load_dataset, DatasetSplits, Splits};
use crate::error::{Error, Result};

pub use augment::{augment, random_flip, zoom};
pub use checkpoint::{Checkpoint, RngState, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use config::{
    config_diff, Alignment, Arm, ArmToggles, AugmentConfig, BaselineConfig, Branches, EvalConfig,
    ExperimentConfig, Fusion, LearningRates, LossWeights, ModelConfig, QfcMode, RunConfig, Schedule,
};
pub use evaluate::{evaluate, evaluate_samples, evaluate_tests, overlay, predict, render_overlays, TestReport};
pub use experiments::{
    run_ablation, run_arm, run_arms, run_comparison, MetricSummary, ResultsTable, RunRecord, TableRow,
    TABLE_COLUMNS,
};
pub use network::{
    forward_cdfi, paired_step_loss, single_step_loss, total_loss, CdfiOutputs, LossBundle, Network,
    StepLoss,
};
pub use train::{train, train_on, train_with_progress, HistoryRow, TrainOutcome};

/// The three datasets a run draws from.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingData {
    pub cdd: Splits,
    pub add: Splits,
    pub tdd: Splits,
    pub image_size: usize,
}

impl TrainingData {
    pub fn load(dir: &Path) -> Result<Self> {
        let cdd = load_dataset(dir, "cdd")?;
        let add = load_dataset(dir, "add")?;
        let tdd = load_dataset(dir, "tdd")?;
        if cdd.image_size != add.image_size || add.image_size != tdd.image_size {
            return Err(Error::Config(format!(
                "datasets in {} disagree on image size",
                dir.display()
            )));
        }
        Ok(Self {
            image_size: cdd.image_size,
            cdd: cdd.splits,
            add: add.splits,
            tdd: tdd.splits,
        })
    }
}

impl From<DatasetSplits> for TrainingData {
    fn from(d: DatasetSplits) -> Self {
        Self {
            cdd: d.cdd,
            add: d.add,
            tdd: d.tdd,
            image_size: d.image_size,
        }
    }
}
