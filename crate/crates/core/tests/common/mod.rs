#![allow(dead_code)]

use cdfi::bbox::BBox;
use cdfi::data_synth::{build_datasets, DatasetConfig, SceneParams};
use cdfi::harness::{Arm, AugmentConfig, ModelConfig, RunConfig, TrainingData};
use cdfi::model::BoxPrediction;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// 48 px scenes with small lumens; enough for wiring tests.
pub fn small_dataset_config(clean: usize, artifact: usize, seed: u64) -> DatasetConfig {
    DatasetConfig {
        clean_count: clean,
        artifact_count: artifact,
        master_seed: seed,
        scene: SceneParams {
            image_size: 48,
            lumen_count_range: (1, 2),
            lumen_radius_range: (5.0, 9.0),
            wall_texture_scale: 8.0,
            ..SceneParams::default()
        },
        ..DatasetConfig::default()
    }
}

pub fn small_data(clean: usize, artifact: usize, seed: u64) -> TrainingData {
    build_datasets(&small_dataset_config(clean, artifact, seed))
        .expect("small dataset")
        .into()
}

/// A narrow network for 48 px inputs: 12x12 grid, 8 feature channels.
pub fn small_model() -> ModelConfig {
    ModelConfig {
        channels: 8,
        stem_channels: 4,
        clean_stages: 2,
        artifact_stages: 1,
        downsample: 4,
        head_hidden: 8,
        anchor_count: 3,
        disc_hidden: 8,
        embed_hidden: 8,
        embed_dim: 8,
        gate_hidden: 8,
        grl_lambda: 1.0,
    }
}

pub fn small_run(arm: Arm, seed: u64) -> RunConfig {
    RunConfig {
        arm,
        seed,
        epochs: 2,
        finetune_epochs: 1,
        batch_size: 4,
        image_size: 48,
        model: small_model(),
        max_steps_per_epoch: Some(3),
        ..RunConfig::desk()
    }
}

pub fn no_augment() -> AugmentConfig {
    AugmentConfig {
        flip: false,
        scale: false,
        ..AugmentConfig::default()
    }
}

/// Integer-coordinate box used by the AP oracle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IBox(pub i64, pub i64, pub i64, pub i64);

impl IBox {
    pub fn area(&self) -> i64 {
        (self.2 - self.0) * (self.3 - self.1)
    }

    pub fn to_bbox(self) -> BBox {
        BBox::new(self.0 as f64, self.1 as f64, self.2 as f64, self.3 as f64)
    }

    /// Intersection and union areas, exactly.
    pub fn overlap(&self, o: &IBox) -> (i64, i64) {
        let w = (self.2.min(o.2) - self.0.max(o.0)).max(0);
        let h = (self.3.min(o.3) - self.1.max(o.1)).max(0);
        let inter = w * h;
        (inter, self.area() + o.area() - inter)
    }
}

/// One image of an oracle instance: predictions with distinct confidences.
#[derive(Debug, Clone)]
pub struct OracleImage {
    pub gts: Vec<IBox>,
    pub preds: Vec<(IBox, f64)>,
}

/// AP at threshold `percent / 100` by exhaustive enumeration of confidence
/// cut-offs: at every cut-off the kept detections are re-matched from
/// scratch, giving one (recall, precision) point; AP integrates the upper
/// envelope `p(r) = max { precision at cut-offs with recall >= r }`.
pub fn brute_force_ap(images: &[OracleImage], percent: i64) -> f64 {
    let n_gt: usize = images.iter().map(|im| im.gts.len()).sum();
    if n_gt == 0 {
        return 0.0;
    }
    let mut cutoffs: Vec<f64> = images.iter().flat_map(|im| im.preds.iter().map(|p| p.1)).collect();
    cutoffs.sort_by(|a, b| b.total_cmp(a));
    let mut points = Vec::new();
    for &tau in &cutoffs {
        let (mut tp, mut kept) = (0usize, 0usize);
        for im in images {
            let mut preds: Vec<&(IBox, f64)> = im.preds.iter().filter(|p| p.1 >= tau).collect();
            preds.sort_by(|a, b| b.1.total_cmp(&a.1));
            kept += preds.len();
            let mut used = vec![false; im.gts.len()];
            for (pb, _) in preds {
                let mut best: Option<(usize, i64, i64)> = None;
                for (j, g) in im.gts.iter().enumerate() {
                    let (inter, union) = pb.overlap(g);
                    if used[j] || 100 * inter < percent * union {
                        continue;
                    }
                    let better = match best {
                        None => true,
                        Some((_, bi, bu)) => inter * bu > bi * union,
                    };
                    if better {
                        best = Some((j, inter, union));
                    }
                }
                if let Some((j, _, _)) = best {
                    used[j] = true;
                    tp += 1;
                }
            }
        }
        points.push((tp as f64 / n_gt as f64, tp as f64 / kept as f64));
    }
    let mut levels: Vec<f64> = points.iter().map(|p| p.0).filter(|&r| r > 0.0).collect();
    levels.sort_by(f64::total_cmp);
    levels.dedup();
    let mut ap = 0.0;
    let mut prev = 0.0;
    for r in levels {
        let p = points
            .iter()
            .filter(|q| q.0 >= r)
            .map(|q| q.1)
            .fold(0.0, f64::max);
        ap += (r - prev) * p;
        prev = r;
    }
    ap
}

pub fn oracle_inputs(images: &[OracleImage]) -> (Vec<Vec<BoxPrediction>>, Vec<Vec<BBox>>) {
    let preds = images
        .iter()
        .map(|im| {
            im.preds
                .iter()
                .map(|(b, c)| BoxPrediction {
                    bbox: b.to_bbox(),
                    confidence: *c,
                })
                .collect()
        })
        .collect();
    let gts = images
        .iter()
        .map(|im| im.gts.iter().map(|b| b.to_bbox()).collect())
        .collect();
    (preds, gts)
}

fn random_box(rng: &mut ChaCha8Rng) -> IBox {
    let x0 = rng.gen_range(0..20);
    let y0 = rng.gen_range(0..20);
    IBox(x0, y0, x0 + rng.gen_range(2..12), y0 + rng.gen_range(2..12))
}

/// Random instance with at most 5 ground-truth and 8 predicted boxes in
/// total over 1 to 3 images; predictions often jitter a ground truth so
/// that every threshold is exercised.
pub fn random_oracle_instance(rng: &mut ChaCha8Rng) -> Vec<OracleImage> {
    let n_images = rng.gen_range(1..=3);
    let total_gt = rng.gen_range(0..=5);
    let total_pred = rng.gen_range(0..=8);
    let mut images: Vec<OracleImage> = (0..n_images)
        .map(|_| OracleImage {
            gts: Vec::new(),
            preds: Vec::new(),
        })
        .collect();
    for _ in 0..total_gt {
        let i = rng.gen_range(0..n_images);
        let b = random_box(rng);
        images[i].gts.push(b);
    }
    let mut confidences: Vec<f64> = (0..total_pred).map(|k| (k as f64 + 1.0) / (total_pred as f64 + 1.0)).collect();
    for k in (1..confidences.len()).rev() {
        confidences.swap(k, rng.gen_range(0..=k));
    }
    for conf in confidences {
        let i = rng.gen_range(0..n_images);
        let b = if !images[i].gts.is_empty() && rng.gen_bool(0.7) {
            let g = images[i].gts[rng.gen_range(0..images[i].gts.len())];
            let j = |rng: &mut ChaCha8Rng| rng.gen_range(-2..=2);
            let (x0, y0) = (g.0 + j(rng), g.1 + j(rng));
            let (x1, y1) = (g.2 + j(rng), g.3 + j(rng));
            if x1 > x0 && y1 > y0 {
                IBox(x0, y0, x1, y1)
            } else {
                g
            }
        } else {
            random_box(rng)
        };
        images[i].preds.push((b, conf));
    }
    images
}
