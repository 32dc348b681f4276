use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use cdfi::data_synth::build_datasets;
use cdfi::harness::{
    evaluate_tests, render_overlays, run_ablation, run_arm, run_comparison, Arm, Checkpoint,
    ExperimentConfig, HistoryRow, ResultsTable, TrainingData,
};

#[derive(Parser)]
#[command(name = "cdfi", about = "Artifact-robust lumen detection experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the run seed; for compare/ablate, runs only this seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the arm.
    #[arg(long)]
    arm: Option<Arm>,
    /// Overrides the output directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Render the synthetic clean, artifact and two-domain datasets.
    GenerateData(Common),
    /// Train one arm and write its run directory.
    Train(Common),
    /// Test a trained run on the artifact and two-domain test sets.
    Evaluate(Common),
    /// Train and test every comparison arm over the configured seeds.
    Compare(Common),
    /// Train and test the ablation arms over the configured seeds.
    Ablate(Common),
    /// Print the comparison and ablation tables found in the output directory.
    Report(Common),
}

fn load(common: &Common) -> Result<ExperimentConfig> {
    let mut exp = ExperimentConfig::load(&common.config)
        .with_context(|| format!("reading {}", common.config.display()))?;
    if let Some(seed) = common.seed {
        exp.run.seed = seed;
        exp.seeds = vec![seed];
    }
    if let Some(arm) = common.arm {
        exp.run.arm = arm;
    }
    if let Some(dir) = &common.out_dir {
        exp.out_dir = dir.clone();
    }
    Ok(exp)
}

fn run_dir(exp: &ExperimentConfig) -> PathBuf {
    exp.out_dir
        .join(exp.run.arm.name())
        .join(format!("seed-{}", exp.run.seed))
}

fn print_row(arm: Arm, seed: u64, r: &HistoryRow) {
    println!(
        "{arm} seed {seed} {} epoch {:>3}: loss {:.4} (c {:.4} ca {:.4} a {:.4} aa {:.4} q {:.4} = f {:.4} + d {:.4}) val AP50 {:.3} AP {:.3}",
        r.phase, r.epoch, r.total, r.l_c, r.l_ca, r.l_a, r.l_aa, r.l_q, r.l_f, r.l_d, r.val_ap50, r.val_ap
    );
}

fn data_for(exp: &ExperimentConfig) -> Result<TrainingData> {
    TrainingData::load(&exp.run.data_dir).with_context(|| {
        format!(
            "loading datasets from {} (run generate-data first)",
            exp.run.data_dir.display()
        )
    })
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::GenerateData(c) => {
            let exp = load(&c)?;
            let dest = c.out_dir.clone().unwrap_or_else(|| exp.run.data_dir.clone());
            let splits = build_datasets(&exp.dataset)?;
            splits.write_to(&dest)?;
            let n = splits.counts;
            println!("wrote datasets to {}", dest.display());
            println!("cdd train/val/test {:?}, add {:?}, tdd {:?}", n.cdd, n.add, n.tdd);
        }
        Command::Train(c) => {
            let exp = load(&c)?;
            let data = data_for(&exp)?;
            let dir = run_dir(&exp);
            let (arm, seed) = (exp.run.arm, exp.run.seed);
            let rec = run_arm(&exp.run, &data, Some(&dir), |r| print_row(arm, seed, r))?;
            println!(
                "best epoch {} (val AP50 {:.3}); artifact test AP50 {:.3}, two-domain AP {:.3}",
                rec.best_epoch, rec.best_val_ap50, rec.test.artifact.ap50, rec.test.two_domain.ap
            );
            println!("run directory {}", dir.display());
        }
        Command::Evaluate(c) => {
            let exp = load(&c)?;
            let data = data_for(&exp)?;
            let dir = run_dir(&exp);
            let ckpt = Checkpoint::load(&dir.join("checkpoint.json"))?;
            let report = evaluate_tests(&ckpt, &data)?;
            let text = serde_json::to_string_pretty(&report)?;
            std::fs::write(dir.join("test_report.json"), text.clone() + "\n")?;
            let n = data.add.test.len().min(8);
            render_overlays(&ckpt, &data.add.test[..n], &dir.join("overlays"))?;
            println!("{text}");
        }
        Command::Compare(c) => {
            let exp = load(&c)?;
            let data = data_for(&exp)?;
            let table = run_comparison(&exp, &data, Some(&exp.out_dir), print_row)?;
            println!("{}", table.to_markdown());
        }
        Command::Ablate(c) => {
            let exp = load(&c)?;
            let data = data_for(&exp)?;
            let table = run_ablation(&exp, &data, Some(&exp.out_dir), print_row)?;
            println!("{}", table.to_markdown());
        }
        Command::Report(c) => {
            let exp = load(&c)?;
            let mut found = false;
            for kind in ["comparison", "ablation"] {
                let path: &Path = &exp.out_dir.join(format!("{kind}.json"));
                if path.exists() {
                    found = true;
                    let t = ResultsTable::load(path)?;
                    println!("## {kind} (seeds {:?})\n\n{}", t.seeds, t.to_markdown());
                }
            }
            if !found {
                bail!("no comparison.json or ablation.json in {}", exp.out_dir.display());
            }
        }
    }
    Ok(())
}
