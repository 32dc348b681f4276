//! Generates the datasets described by an experiment config in memory,
//! trains the full method once and reports test AP on both test sets.
//!
//!     cargo run --release --example train_cdfi -- configs/desk.toml runs/example-cdfi [epochs]

use std::path::PathBuf;

use cdfi::data_synth::build_datasets;
use cdfi::harness::{run_arm, Arm, ExperimentConfig, TrainingData};

fn main() -> anyhow::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let config = PathBuf::from(args.first().map_or("configs/desk.toml", String::as_str));
    let out = PathBuf::from(args.get(1).map_or("runs/example-cdfi", String::as_str));
    let exp = ExperimentConfig::load(&config)?;
    let mut cfg = exp.run.clone();
    cfg.arm = Arm::Cdfi;
    if let Some(epochs) = args.get(2) {
        cfg.epochs = epochs.parse()?;
    }
    let data: TrainingData = build_datasets(&exp.dataset)?.into();
    let record = run_arm(&cfg, &data, Some(&out), |r| {
        println!(
            "epoch {:>3}: loss {:.3} (L_q {:.3}) val AP50 {:.3} AP {:.3}",
            r.epoch, r.total, r.l_q, r.val_ap50, r.val_ap
        );
    })?;
    let t = &record.test;
    println!("best epoch {} (val AP50 {:.3})", record.best_epoch, record.best_val_ap50);
    println!("artifact test:   AP {:.3} AP50 {:.3} AP75 {:.3}", t.artifact.ap, t.artifact.ap50, t.artifact.ap75);
    println!("two-domain test: AP {:.3} AP50 {:.3} AP75 {:.3}", t.two_domain.ap, t.two_domain.ap50, t.two_domain.ap75);
    println!("run written to {}", out.display());
    Ok(())
}
