//! Draws ground truth (green) and predictions (blue) of a trained
//! checkpoint on artifact test images.
//!
//!     cargo run --release --example overlays -- runs/example-cdfi configs/desk.toml

use std::path::PathBuf;

use cdfi::data_synth::build_datasets;
use cdfi::harness::{render_overlays, Checkpoint, ExperimentConfig, TrainingData};

fn main() -> anyhow::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let run = PathBuf::from(args.first().map_or("runs/example-cdfi", String::as_str));
    let config = PathBuf::from(args.get(1).map_or("configs/desk.toml", String::as_str));
    let ckpt = Checkpoint::load(&run.join("checkpoint.json"))?;
    let exp = ExperimentConfig::load(&config)?;
    let data: TrainingData = build_datasets(&exp.dataset)?.into();
    let n = data.add.test.len().min(12);
    let written = render_overlays(&ckpt, &data.add.test[..n], &run.join("overlays"))?;
    for path in &written {
        println!("{}", path.display());
    }
    Ok(())
}
