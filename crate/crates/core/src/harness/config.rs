use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data_synth::DatasetConfig;
use crate::error::{Error, Result};
use crate::params::GroupRates;

/// A training recipe: a baseline, the full method, or an ablation of it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Arm {
    TrainCdd,
    FinetuneAdd,
    TrainTdd,
    AdainOnly,
    Coral,
    Triplet,
    Mmd,
    Dann,
    Cdfi,
    CdfiQfcOnly,
    CdfiGffOnly,
}

impl Arm {
    pub const ALL: [Arm; 11] = [
        Arm::TrainCdd,
        Arm::FinetuneAdd,
        Arm::TrainTdd,
        Arm::AdainOnly,
        Arm::Coral,
        Arm::Triplet,
        Arm::Mmd,
        Arm::Dann,
        Arm::Cdfi,
        Arm::CdfiQfcOnly,
        Arm::CdfiGffOnly,
    ];

    /// Rows of the method comparison.
    pub const COMPARISON: [Arm; 9] = [
        Arm::TrainCdd,
        Arm::FinetuneAdd,
        Arm::TrainTdd,
        Arm::AdainOnly,
        Arm::Coral,
        Arm::Triplet,
        Arm::Mmd,
        Arm::Dann,
        Arm::Cdfi,
    ];

    /// Rows of the ablation.
    pub const ABLATION: [Arm; 4] = [Arm::TrainTdd, Arm::CdfiQfcOnly, Arm::CdfiGffOnly, Arm::Cdfi];

    pub fn name(self) -> &'static str {
        match self {
            Arm::TrainCdd => "train_cdd",
            Arm::FinetuneAdd => "finetune_add",
            Arm::TrainTdd => "train_tdd",
            Arm::AdainOnly => "adain_only",
            Arm::Coral => "coral",
            Arm::Triplet => "triplet",
            Arm::Mmd => "mmd",
            Arm::Dann => "dann",
            Arm::Cdfi => "cdfi",
            Arm::CdfiQfcOnly => "cdfi_qfc_only",
            Arm::CdfiGffOnly => "cdfi_gff_only",
        }
    }

    /// The loss and fusion switches this arm turns on.
    pub fn toggles(self) -> ArmToggles {
        use {Alignment as Al, Branches as B, Fusion as F, QfcMode as Q, Schedule as S};
        let (schedule, branches, fusion, qfc, alignment) = match self {
            Arm::TrainCdd => (S::Cdd, B::Single, F::None, Q::Off, Al::None),
            Arm::FinetuneAdd => (S::CddThenAdd, B::Single, F::None, Q::Off, Al::None),
            Arm::TrainTdd => (S::Tdd, B::Single, F::None, Q::Off, Al::None),
            Arm::AdainOnly => (S::Paired, B::Quad, F::Plain, Q::Off, Al::None),
            Arm::Coral => (S::Paired, B::Pair, F::None, Q::Off, Al::Coral),
            Arm::Triplet => (S::Paired, B::Pair, F::None, Q::Off, Al::Triplet),
            Arm::Mmd => (S::Paired, B::Pair, F::None, Q::Off, Al::Mmd),
            Arm::Dann => (S::Paired, B::Pair, F::None, Q::Off, Al::Dann),
            Arm::Cdfi => (S::Paired, B::Quad, F::Gated, Q::Full, Al::None),
            Arm::CdfiQfcOnly => (S::Paired, B::Pair, F::None, Q::Full, Al::None),
            Arm::CdfiGffOnly => (S::Paired, B::Quad, F::Gated, Q::FeatureOnly, Al::None),
        };
        ArmToggles {
            schedule,
            branches,
            fusion,
            qfc,
            alignment,
        }
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Arm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Arm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown arm {s:?}")))
    }
}

/// Which data each optimiser step sees.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    Cdd,
    Tdd,
    /// Train on clean data, then fine-tune on artifact data.
    CddThenAdd,
    /// Half of each batch clean, half artifact, randomly paired.
    Paired,
}

/// Detection branches supervised per step.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branches {
    /// `D(E_C(x))` only.
    Single,
    /// `D(z_cc)` and `D(z_ca)`.
    Pair,
    /// The two direct branches plus the two fused ones.
    Quad,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fusion {
    None,
    Plain,
    Gated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QfcMode {
    Off,
    /// Projection, adversarial and margin terms.
    Full,
    /// Projection and adversarial terms only.
    FeatureOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Alignment {
    None,
    Coral,
    Mmd,
    Triplet,
    Dann,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArmToggles {
    pub schedule: Schedule,
    pub branches: Branches,
    pub fusion: Fusion,
    pub qfc: QfcMode,
    pub alignment: Alignment,
}

impl ArmToggles {
    pub fn needs_artifact_encoder(&self) -> bool {
        self.branches == Branches::Quad || self.qfc != QfcMode::Off || self.alignment == Alignment::Triplet
    }
}

/// Weights of the four branch losses and the QFC term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub w1: f64,
    pub w2: f64,
    pub w3: f64,
    pub w4: f64,
    pub wq: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            w1: 2.0,
            w2: 2.0,
            w3: 2.0,
            w4: 2.0,
            wq: 10.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LearningRates {
    /// Encoders and detection head.
    pub base: f64,
    /// Embedding heads of the distance constraint.
    pub qfc: f64,
    /// Gate network.
    pub gff: f64,
    /// Domain discriminators (QFC and DANN).
    pub adversary: f64,
    /// Whole network during the artifact fine-tuning phase.
    pub finetune: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        Self {
            base: 5e-4,
            qfc: 3e-6,
            gff: 3e-6,
            adversary: 5e-4,
            finetune: 3e-5,
        }
    }
}

impl LearningRates {
    pub fn groups(&self) -> GroupRates {
        GroupRates {
            base: self.base,
            qfc: self.qfc,
            gff: self.gff,
            adversary: self.adversary,
        }
    }

    pub fn finetune_groups(&self) -> GroupRates {
        GroupRates {
            base: self.finetune,
            qfc: self.finetune,
            gff: self.finetune,
            adversary: self.finetune,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Channels of both encoders' output features.
    pub channels: usize,
    pub stem_channels: usize,
    pub clean_stages: usize,
    pub artifact_stages: usize,
    /// Total downsampling of both encoders.
    pub downsample: usize,
    pub head_hidden: usize,
    pub anchor_count: usize,
    pub disc_hidden: usize,
    pub embed_hidden: usize,
    pub embed_dim: usize,
    pub gate_hidden: usize,
    /// Gradient-reversal coefficient.
    pub grl_lambda: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            channels: 32,
            stem_channels: 16,
            clean_stages: 4,
            artifact_stages: 2,
            downsample: 16,
            head_hidden: 32,
            anchor_count: 3,
            disc_hidden: 32,
            embed_hidden: 64,
            embed_dim: 64,
            gate_hidden: 32,
            grl_lambda: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentConfig {
    pub flip: bool,
    pub scale: bool,
    /// Zoom factor range for the scaling augmentation.
    pub scale_range: (f64, f64),
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            flip: true,
            scale: true,
            scale_range: (0.75, 1.25),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    /// Weight of the CORAL, MMD, triplet or adversarial term.
    pub weight: f64,
    pub triplet_margin: f64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            weight: 1.0,
            triplet_margin: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalConfig {
    pub conf_thresh: f64,
    pub nms_iou: f64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            conf_thresh: 0.05,
            nms_iou: 0.45,
        }
    }
}

/// Everything that determines one training run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub arm: Arm,
    pub seed: u64,
    /// Directory holding the `cdd`, `add` and `tdd` manifests.
    pub data_dir: PathBuf,
    pub epochs: usize,
    /// Epochs of the artifact fine-tuning phase, where applicable.
    pub finetune_epochs: usize,
    pub batch_size: usize,
    pub image_size: usize,
    pub learning_rates: LearningRates,
    pub margin: f64,
    pub weights: LossWeights,
    pub model: ModelConfig,
    pub augment: AugmentConfig,
    pub baseline: BaselineConfig,
    pub eval: EvalConfig,
    /// Caps optimiser steps per epoch; `None` runs full epochs.
    pub max_steps_per_epoch: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl RunConfig {
    /// Published training schedule at full resolution.
    pub fn paper() -> Self {
        Self {
            epochs: 120,
            finetune_epochs: 60,
            batch_size: 4,
            image_size: 416,
            ..Self::desk()
        }
    }

    /// CPU-sized schedule used for all experiments in this repository.
    pub fn desk() -> Self {
        Self {
            arm: Arm::Cdfi,
            seed: 0,
            data_dir: PathBuf::from("data"),
            epochs: 40,
            finetune_epochs: 20,
            batch_size: 8,
            image_size: 96,
            learning_rates: LearningRates::default(),
            margin: 100.0,
            weights: LossWeights::default(),
            model: ModelConfig::default(),
            augment: AugmentConfig::default(),
            baseline: BaselineConfig::default(),
            eval: EvalConfig::default(),
            max_steps_per_epoch: None,
        }
    }

    pub fn with_arm(&self, arm: Arm) -> Self {
        Self { arm, ..self.clone() }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.epochs == 0 {
            return bad("epochs must be positive".into());
        }
        if self.batch_size < 2 || self.batch_size % 2 != 0 {
            return bad(format!(
                "batch_size {} must be even so paired arms can split it",
                self.batch_size
            ));
        }
        if self.image_size % self.model.downsample != 0 {
            return bad(format!(
                "image_size {} is not a multiple of the downsample factor {}",
                self.image_size, self.model.downsample
            ));
        }
        if self.model.artifact_stages >= self.model.clean_stages {
            return bad("the artifact encoder must be shallower than the clean encoder".into());
        }
        if !(self.margin > 0.0) {
            return bad(format!("margin must be positive, got {}", self.margin));
        }
        let w = &self.weights;
        if [w.w1, w.w2, w.w3, w.w4, w.wq].iter().any(|v| !(*v >= 0.0)) {
            return bad(format!("loss weights must be nonnegative: {w:?}"));
        }
        let (lo, hi) = self.augment.scale_range;
        if !(lo > 0.0 && lo <= hi) {
            return bad(format!("bad scale range {:?}", self.augment.scale_range));
        }
        Ok(())
    }

    /// Short stable digest of the configuration.
    pub fn hash(&self) -> String {
        let json = serde_json::to_string(self).expect("config serialises");
        let digest = Sha256::digest(json.as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    /// Fully resolved snapshot including the arm's toggles; two arms built
    /// from the same base differ only under `arm` and `toggles`.
    pub fn snapshot(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("config serialises");
        v["toggles"] = serde_json::to_value(self.arm.toggles()).expect("toggles serialise");
        v
    }
}

/// Dotted paths at which two JSON documents differ.
pub fn config_diff(a: &serde_json::Value, b: &serde_json::Value) -> Vec<String> {
    fn walk(a: &serde_json::Value, b: &serde_json::Value, path: &str, out: &mut Vec<String>) {
        use serde_json::Value::Object;
        match (a, b) {
            (Object(x), Object(y)) => {
                let mut keys: Vec<&String> = x.keys().chain(y.keys()).collect();
                keys.sort();
                keys.dedup();
                for k in keys {
                    let sub = if path.is_empty() { k.clone() } else { format!("{path}.{k}") };
                    match (x.get(k), y.get(k)) {
                        (Some(p), Some(q)) => walk(p, q, &sub, out),
                        _ => out.push(sub),
                    }
                }
            }
            _ if a != b => out.push(path.to_string()),
            _ => {}
        }
    }
    let mut out = Vec::new();
    walk(a, b, "", &mut out);
    out
}

/// Top-level experiment file: dataset recipe, base run configuration, seeds
/// and output location.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub dataset: DatasetConfig,
    pub run: RunConfig,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetConfig::default(),
            run: RunConfig::desk(),
            seeds: vec![0, 1, 2],
            out_dir: PathBuf::from("runs"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(s).map_err(|e| Error::Config(e.to_string()))?;
        cfg.run.validate()?;
        if cfg.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        if cfg.dataset.scene.image_size != cfg.run.image_size {
            return Err(Error::Config(format!(
                "dataset renders {} px images but the run expects {}",
                cfg.dataset.scene.image_size, cfg.run.image_size
            )));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::Missing(path.to_path_buf()));
        }
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }
}
