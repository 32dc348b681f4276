use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::augment::augment;
use super::checkpoint::Checkpoint;
use super::config::{AugmentConfig, RunConfig, Schedule};
use super::evaluate::evaluate_samples;
use super::network::{paired_step_loss, single_step_loss, LossBundle, Network, StepLoss};
use super::TrainingData;
use crate::autograd::Graph;
use crate::bbox::BBox;
use crate::data_synth::ImageSample;
use crate::error::{Error, Result};
use crate::model::kmeans_anchors;
use crate::params::{Adam, GroupRates, ParamStore};
use crate::tensor::Tensor;

const KMEANS_ITERATIONS: usize = 50;

/// One line of the metrics history: mean training losses over an epoch and
/// validation AP at its end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub phase: String,
    pub epoch: usize,
    pub steps: usize,
    pub l_c: f64,
    pub l_ca: f64,
    pub l_a: f64,
    pub l_aa: f64,
    pub l_q: f64,
    pub l_f: f64,
    pub l_d: f64,
    pub total: f64,
    pub val_ap: f64,
    pub val_ap50: f64,
    pub val_ap75: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters of the epoch with the best validation AP50.
    pub checkpoint: Checkpoint,
    pub history: Vec<HistoryRow>,
    pub best_epoch: usize,
    pub best_val_ap50: f64,
}

enum Stream<'a> {
    Single(&'a [ImageSample]),
    Paired {
        clean: &'a [ImageSample],
        artifact: &'a [ImageSample],
    },
}

struct Phase<'a> {
    name: &'static str,
    stream: Stream<'a>,
    val: &'a [ImageSample],
    rates: GroupRates,
    epochs: usize,
}

fn phases<'a>(cfg: &RunConfig, data: &'a TrainingData) -> Vec<Phase<'a>> {
    let lr = &cfg.learning_rates;
    let main = |name, stream, val| Phase {
        name,
        stream,
        val,
        rates: lr.groups(),
        epochs: cfg.epochs,
    };
    match cfg.arm.toggles().schedule {
        Schedule::Cdd => vec![main("cdd", Stream::Single(&data.cdd.train), &data.cdd.val)],
        Schedule::Tdd => vec![main("tdd", Stream::Single(&data.tdd.train), &data.tdd.val)],
        Schedule::CddThenAdd => vec![
            main("cdd", Stream::Single(&data.cdd.train), &data.cdd.val),
            Phase {
                name: "finetune_add",
                stream: Stream::Single(&data.add.train),
                val: &data.add.val,
                rates: lr.finetune_groups(),
                epochs: cfg.finetune_epochs,
            },
        ],
        Schedule::Paired => vec![main(
            "paired",
            Stream::Paired {
                clean: &data.cdd.train,
                artifact: &data.add.train,
            },
            &data.tdd.val,
        )],
    }
}

/// Endless reshuffled pass over `0..n`.
struct Cycler {
    order: Vec<usize>,
    pos: usize,
}

impl Cycler {
    fn new(n: usize, rng: &mut ChaCha8Rng) -> Self {
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        Self { order, pos: 0 }
    }

    fn next(&mut self, rng: &mut ChaCha8Rng) -> usize {
        if self.pos == self.order.len() {
            self.order.shuffle(rng);
            self.pos = 0;
        }
        self.pos += 1;
        self.order[self.pos - 1]
    }
}

fn make_batch(
    samples: &[&ImageSample],
    aug: &AugmentConfig,
    rng: &mut ChaCha8Rng,
) -> Result<(Tensor, Vec<Vec<BBox>>)> {
    let mut images = Vec::with_capacity(samples.len());
    let mut boxes = Vec::with_capacity(samples.len());
    for s in samples {
        let (img, b) = augment(&s.image, &s.boxes, aug, rng);
        images.push(img.to_chw());
        boxes.push(b);
    }
    Ok((Tensor::stack(&images)?, boxes))
}

#[derive(Default)]
struct Running {
    sum: LossBundle,
    steps: usize,
}

impl Running {
    fn add(&mut self, b: &LossBundle) {
        self.sum.l_c += b.l_c;
        self.sum.l_ca += b.l_ca;
        self.sum.l_a += b.l_a;
        self.sum.l_aa += b.l_aa;
        self.sum.l_q += b.l_q;
        self.sum.l_f += b.l_f;
        self.sum.l_d += b.l_d;
        self.sum.total += b.total;
        self.steps += 1;
    }

    fn mean(&self) -> LossBundle {
        let n = self.steps.max(1) as f64;
        LossBundle {
            l_c: self.sum.l_c / n,
            l_ca: self.sum.l_ca / n,
            l_a: self.sum.l_a / n,
            l_aa: self.sum.l_aa / n,
            l_q: self.sum.l_q / n,
            l_f: self.sum.l_f / n,
            l_d: self.sum.l_d / n,
            total: self.sum.total / n,
        }
    }
}

/// Loads the datasets named by `cfg.data_dir` and trains.
pub fn train(cfg: &RunConfig) -> Result<TrainOutcome> {
    let data = TrainingData::load(&cfg.data_dir)?;
    train_on(cfg, &data)
}

pub fn train_on(cfg: &RunConfig, data: &TrainingData) -> Result<TrainOutcome> {
    train_with_progress(cfg, data, |_| {})
}

/// Trains one arm, calling `progress` after every epoch. Deterministic in
/// `cfg` and `data`.
pub fn train_with_progress(
    cfg: &RunConfig,
    data: &TrainingData,
    mut progress: impl FnMut(&HistoryRow),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.image_size != cfg.image_size {
        return Err(Error::Config(format!(
            "data has {} px images but the run expects {}",
            data.image_size, cfg.image_size
        )));
    }
    let train_boxes: Vec<BBox> = data.tdd.train.iter().flat_map(|s| s.boxes.iter().copied()).collect();
    let anchors = kmeans_anchors(&train_boxes, cfg.model.anchor_count, KMEANS_ITERATIONS)?;
    let net = Network::new(cfg, anchors.clone())?;

    let mut init_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut data_rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5eed_da7a);
    let mut store = ParamStore::new();
    net.init(&mut store, &mut init_rng);

    let half = cfg.batch_size / 2;
    let mut history = Vec::new();
    let mut global_step = 0usize;
    let mut best = (store.clone(), 0usize, f64::NEG_INFINITY);
    let mut epoch_counter = 0usize;

    for phase in phases(cfg, data) {
        let mut adam = Adam::new();
        best.2 = f64::NEG_INFINITY;
        let (steps_per_epoch, mut cyclers) = match &phase.stream {
            Stream::Single(src) => {
                if src.is_empty() {
                    return Err(Error::Config(format!("no training images for phase {}", phase.name)));
                }
                (src.len().div_ceil(cfg.batch_size), None)
            }
            Stream::Paired { clean, artifact } => {
                if clean.is_empty() || artifact.is_empty() {
                    return Err(Error::Config("paired training needs both domains".into()));
                }
                let c = Cycler::new(clean.len(), &mut data_rng);
                let a = Cycler::new(artifact.len(), &mut data_rng);
                ((clean.len() + artifact.len()).div_ceil(cfg.batch_size), Some((c, a)))
            }
        };
        let steps_per_epoch = cfg.max_steps_per_epoch.map_or(steps_per_epoch, |m| m.min(steps_per_epoch));

        for epoch in 0..phase.epochs {
            epoch_counter += 1;
            let mut running = Running::default();
            let single_order = match &phase.stream {
                Stream::Single(src) => {
                    let mut o: Vec<usize> = (0..src.len()).collect();
                    o.shuffle(&mut data_rng);
                    o
                }
                Stream::Paired { .. } => Vec::new(),
            };
            for step in 0..steps_per_epoch {
                let mut g = Graph::new();
                let loss: Result<StepLoss> = match (&phase.stream, cyclers.as_mut()) {
                    (Stream::Single(src), _) => {
                        let idx = &single_order[step * cfg.batch_size..((step + 1) * cfg.batch_size).min(src.len())];
                        let picked: Vec<&ImageSample> = idx.iter().map(|&i| &src[i]).collect();
                        let (x, gts) = make_batch(&picked, &cfg.augment, &mut data_rng)?;
                        let x = g.input(x);
                        single_step_loss(&mut g, &store, &net, x, &gts)
                    }
                    (Stream::Paired { clean, artifact }, Some((cc, ca))) => {
                        let pc: Vec<&ImageSample> = (0..half).map(|_| &clean[cc.next(&mut data_rng)]).collect();
                        let pa: Vec<&ImageSample> = (0..half).map(|_| &artifact[ca.next(&mut data_rng)]).collect();
                        let (xc, gc) = make_batch(&pc, &cfg.augment, &mut data_rng)?;
                        let (xa, ga) = make_batch(&pa, &cfg.augment, &mut data_rng)?;
                        let (xc, xa) = (g.input(xc), g.input(xa));
                        paired_step_loss(&mut g, &store, &net, xc, xa, &gc, &ga)
                    }
                    (Stream::Paired { .. }, None) => unreachable!("paired phases own cyclers"),
                };
                global_step += 1;
                let loss = match loss {
                    Err(Error::NonFinite(what)) => {
                        return Err(Error::Diverged {
                            step: global_step,
                            detail: format!("{} produced a non-finite {what} in epoch {}", phase.name, epoch + 1),
                        });
                    }
                    other => other?,
                };
                if !loss.bundle.total.is_finite() {
                    return Err(Error::Diverged {
                        step: global_step,
                        detail: format!("{} loss is {:?} in epoch {}", phase.name, loss.bundle, epoch + 1),
                    });
                }
                let grads = g.backward(loss.total)?;
                adam.step(&mut store, &grads, &phase.rates)?;
                running.add(&loss.bundle);
            }

            let val = evaluate_samples(&net, &store, phase.val, &cfg.eval)?;
            let mean = running.mean();
            let row = HistoryRow {
                phase: phase.name.to_string(),
                epoch: epoch + 1,
                steps: running.steps,
                l_c: mean.l_c,
                l_ca: mean.l_ca,
                l_a: mean.l_a,
                l_aa: mean.l_aa,
                l_q: mean.l_q,
                l_f: mean.l_f,
                l_d: mean.l_d,
                total: mean.total,
                val_ap: val.ap,
                val_ap50: val.ap50,
                val_ap75: val.ap75,
            };
            progress(&row);
            history.push(row);
            if val.ap50 > best.2 {
                best = (store.clone(), epoch_counter, val.ap50);
            }
        }
        store = best.0.clone();
    }

    let (params, best_epoch, best_val_ap50) = best;
    Ok(TrainOutcome {
        checkpoint: Checkpoint::new(cfg, anchors, best_epoch, params, &data_rng),
        history,
        best_epoch,
        best_val_ap50,
    })
}
