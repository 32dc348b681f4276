//! Runs every baseline arm and the full method over the configured seeds and prints the
//! mean and standard deviation of each test metric. An optional epoch count
//! shortens every run for a quick look.
//!
//!     cargo run --release --example comparison -- configs/desk.toml runs/example-comparison [epochs]

use std::path::PathBuf;

use cdfi::data_synth::build_datasets;
use cdfi::harness::{run_comparison, ExperimentConfig, TrainingData};

fn main() -> anyhow::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let config = PathBuf::from(args.first().map_or("configs/desk.toml", String::as_str));
    let out = PathBuf::from(args.get(1).map_or("runs/example-comparison", String::as_str));
    let mut exp = ExperimentConfig::load(&config)?;
    if let Some(epochs) = args.get(2) {
        exp.run.epochs = epochs.parse()?;
        exp.run.finetune_epochs = exp.run.finetune_epochs.min(exp.run.epochs);
    }
    let data: TrainingData = build_datasets(&exp.dataset)?.into();
    let table = run_comparison(&exp, &data, Some(&out), |arm, seed, r| {
        if r.epoch == exp.run.epochs || r.epoch % 10 == 0 {
            println!("{arm} seed {seed} {} epoch {}: val AP50 {:.3}", r.phase, r.epoch, r.val_ap50);
        }
    })?;
    println!("{}", table.to_markdown());
    println!("tables written to {}", out.display());
    Ok(())
}
