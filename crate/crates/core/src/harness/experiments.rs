use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{config_diff, Arm, ExperimentConfig, RunConfig};
use super::evaluate::{evaluate_tests, TestReport};
use super::train::{train_with_progress, HistoryRow};
use super::TrainingData;
use crate::error::{Error, Result};

/// Result of training and testing one arm with one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub arm: Arm,
    pub seed: u64,
    pub config_hash: String,
    pub best_epoch: usize,
    pub best_val_ap50: f64,
    pub test: TestReport,
}

fn write_history(path: &Path, rows: &[HistoryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Config(e.to_string()))?;
    for r in rows {
        w.serialize(r).map_err(|e| Error::Config(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

/// Trains `cfg`, tests the best checkpoint, and when `out_dir` is given
/// writes `config.toml`, `checkpoint.json`, `history.csv` and `report.json`
/// there.
pub fn run_arm(
    cfg: &RunConfig,
    data: &TrainingData,
    out_dir: Option<&Path>,
    progress: impl FnMut(&HistoryRow),
) -> Result<RunRecord> {
    let outcome = train_with_progress(cfg, data, progress)?;
    let test = evaluate_tests(&outcome.checkpoint, data)?;
    let record = RunRecord {
        arm: cfg.arm,
        seed: cfg.seed,
        config_hash: cfg.hash(),
        best_epoch: outcome.best_epoch,
        best_val_ap50: outcome.best_val_ap50,
        test,
    };
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        let snapshot = toml::to_string_pretty(cfg).map_err(|e| Error::Config(e.to_string()))?;
        fs::write(dir.join("config.toml"), snapshot)?;
        outcome.checkpoint.save(&dir.join("checkpoint.json"))?;
        write_history(&dir.join("history.csv"), &outcome.history)?;
        fs::write(dir.join("report.json"), serde_json::to_string_pretty(&record)? + "\n")?;
    }
    Ok(record)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub mean: f64,
    /// Sample standard deviation; 0 for a single seed.
    pub sd: f64,
}

impl MetricSummary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Self { mean, sd }
    }
}

/// One arm's metrics over seeds: `[AP, AP50, AP75]` on each test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub arm: Arm,
    pub artifact: [MetricSummary; 3],
    pub two_domain: [MetricSummary; 3],
    pub runs: Vec<RunRecord>,
}

impl TableRow {
    fn from_runs(arm: Arm, runs: Vec<RunRecord>) -> Self {
        let col = |f: &dyn Fn(&RunRecord) -> f64| MetricSummary::of(&runs.iter().map(f).collect::<Vec<_>>());
        Self {
            arm,
            artifact: [
                col(&|r| r.test.artifact.ap),
                col(&|r| r.test.artifact.ap50),
                col(&|r| r.test.artifact.ap75),
            ],
            two_domain: [
                col(&|r| r.test.two_domain.ap),
                col(&|r| r.test.two_domain.ap50),
                col(&|r| r.test.two_domain.ap75),
            ],
            runs,
        }
    }
}

pub const TABLE_COLUMNS: [&str; 6] = [
    "artifact_ap",
    "artifact_ap50",
    "artifact_ap75",
    "two_domain_ap",
    "two_domain_ap50",
    "two_domain_ap75",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsTable {
    pub kind: String,
    pub seeds: Vec<u64>,
    pub rows: Vec<TableRow>,
}

impl ResultsTable {
    pub fn row(&self, arm: Arm) -> Option<&TableRow> {
        self.rows.iter().find(|r| r.arm == arm)
    }

    /// `arm` followed by mean and sd of every column.
    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["arm".to_string()];
        for c in TABLE_COLUMNS {
            header.push(format!("{c}_mean"));
            header.push(format!("{c}_sd"));
        }
        w.write_record(&header).map_err(|e| Error::Config(e.to_string()))?;
        for r in &self.rows {
            let mut rec = vec![r.arm.name().to_string()];
            for m in r.artifact.iter().chain(&r.two_domain) {
                rec.push(m.mean.to_string());
                rec.push(m.sd.to_string());
            }
            w.write_record(&rec).map_err(|e| Error::Config(e.to_string()))?;
        }
        let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
        String::from_utf8(bytes).map_err(|e| Error::Config(e.to_string()))
    }

    /// Markdown table in percent, `mean ± sd`.
    pub fn to_markdown(&self) -> String {
        let mut s = String::from(
            "| arm | artifact AP | AP50 | AP75 | two-domain AP | AP50 | AP75 |\n|---|---|---|---|---|---|---|\n",
        );
        for r in &self.rows {
            s.push_str(&format!("| {} |", r.arm));
            for m in r.artifact.iter().chain(&r.two_domain) {
                s.push_str(&format!(" {:.1} ± {:.1} |", 100.0 * m.mean, 100.0 * m.sd));
            }
            s.push('\n');
        }
        s
    }

    /// Writes `<kind>.json` and `<kind>.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        fs::write(dir.join(format!("{}.json", self.kind)), serde_json::to_string_pretty(self)? + "\n")?;
        fs::write(dir.join(format!("{}.csv", self.kind)), self.to_csv()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::Missing(path.to_path_buf()));
        }
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }
}

/// Trains every arm with every seed from one base configuration. Run
/// directories go to `<out_dir>/<arm>/seed-<seed>` when `out_dir` is set.
pub fn run_arms(
    kind: &str,
    base: &RunConfig,
    arms: &[Arm],
    seeds: &[u64],
    data: &TrainingData,
    out_dir: Option<&Path>,
    mut progress: impl FnMut(Arm, u64, &HistoryRow),
) -> Result<ResultsTable> {
    if seeds.is_empty() {
        return Err(Error::Config("at least one seed is required".into()));
    }
    let reference = base.with_arm(arms[0]).snapshot();
    let mut rows = Vec::with_capacity(arms.len());
    for &arm in arms {
        let diff = config_diff(&reference, &base.with_arm(arm).snapshot());
        if let Some(bad) = diff.iter().find(|p| *p != "arm" && !p.starts_with("toggles.")) {
            return Err(Error::Config(format!("arm {arm} differs from the base outside its toggles: {bad}")));
        }
        let mut runs = Vec::with_capacity(seeds.len());
        for &seed in seeds {
            let cfg = base.with_arm(arm).with_seed(seed);
            let dir = out_dir.map(|d| d.join(arm.name()).join(format!("seed-{seed}")));
            runs.push(run_arm(&cfg, data, dir.as_deref(), |row| progress(arm, seed, row))?);
        }
        rows.push(TableRow::from_runs(arm, runs));
    }
    let table = ResultsTable {
        kind: kind.to_string(),
        seeds: seeds.to_vec(),
        rows,
    };
    if let Some(dir) = out_dir {
        table.write(dir)?;
    }
    Ok(table)
}

pub fn run_comparison(
    exp: &ExperimentConfig,
    data: &TrainingData,
    out_dir: Option<&Path>,
    progress: impl FnMut(Arm, u64, &HistoryRow),
) -> Result<ResultsTable> {
    run_arms("comparison", &exp.run, &Arm::COMPARISON, &exp.seeds, data, out_dir, progress)
}

pub fn run_ablation(
    exp: &ExperimentConfig,
    data: &TrainingData,
    out_dir: Option<&Path>,
    progress: impl FnMut(Arm, u64, &HistoryRow),
) -> Result<ResultsTable> {
    run_arms("ablation", &exp.run, &Arm::ABLATION, &exp.seeds, data, out_dir, progress)
}
