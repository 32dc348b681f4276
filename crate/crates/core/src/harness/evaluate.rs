use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::checkpoint::Checkpoint;
use super::config::EvalConfig;
use super::network::Network;
use super::TrainingData;
use crate::autograd::Graph;
use crate::bbox::BBox;
use crate::data_synth::ImageSample;
use crate::error::Result;
use crate::eval::{ap_summary, EvalReport};
use crate::model::{decode_boxes, BoxPrediction, DetectionGrid};
use crate::params::ParamStore;
use crate::raster::RgbImage;
use crate::tensor::Tensor;

const INFERENCE_BATCH: usize = 16;

/// Detections from the clean-encoder branch for every image.
pub fn predict(
    net: &Network,
    store: &ParamStore,
    images: &[&RgbImage],
    eval: &EvalConfig,
) -> Result<Vec<Vec<BoxPrediction>>> {
    let mut out = Vec::with_capacity(images.len());
    for chunk in images.chunks(INFERENCE_BATCH) {
        let batch = Tensor::stack(&chunk.iter().map(|im| im.to_chw()).collect::<Vec<_>>())?;
        let mut g = Graph::new();
        let x = g.input(batch);
        let y = net.detect(&mut g, store, x)?;
        let grid = DetectionGrid::new(
            g.value(y).clone(),
            net.head.spec.anchors.clone(),
            net.head.spec.stride,
        )?;
        for i in 0..chunk.len() {
            out.push(decode_boxes(&grid, i, eval.conf_thresh, eval.nms_iou)?);
        }
    }
    Ok(out)
}

pub fn evaluate_samples(
    net: &Network,
    store: &ParamStore,
    samples: &[ImageSample],
    eval: &EvalConfig,
) -> Result<EvalReport> {
    let images: Vec<&RgbImage> = samples.iter().map(|s| &s.image).collect();
    let preds = predict(net, store, &images, eval)?;
    let gts: Vec<Vec<BBox>> = samples.iter().map(|s| s.boxes.clone()).collect();
    ap_summary(&preds, &gts)
}

/// AP metrics on the artifact-only test split and the two-domain test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub artifact: EvalReport,
    pub two_domain: EvalReport,
}

pub fn evaluate(ckpt: &Checkpoint, samples: &[ImageSample]) -> Result<EvalReport> {
    let net = ckpt.network()?;
    evaluate_samples(&net, &ckpt.params, samples, &ckpt.config.eval)
}

pub fn evaluate_tests(ckpt: &Checkpoint, data: &TrainingData) -> Result<TestReport> {
    Ok(TestReport {
        artifact: evaluate(ckpt, &data.add.test)?,
        two_domain: evaluate(ckpt, &data.tdd.test)?,
    })
}

const GT_COLOUR: [f64; 3] = [0.1, 0.9, 0.2];
const PRED_COLOUR: [f64; 3] = [0.1, 0.5, 1.0];

fn draw_rect(img: &mut RgbImage, b: &BBox, colour: [f64; 3]) {
    let (w, h) = (img.width(), img.height());
    let clip = b.clip(w as f64, h as f64);
    let x0 = clip.x_min.floor() as usize;
    let y0 = clip.y_min.floor() as usize;
    let x1 = (clip.x_max.ceil() as usize).saturating_sub(1).min(w - 1);
    let y1 = (clip.y_max.ceil() as usize).saturating_sub(1).min(h - 1);
    for x in x0..=x1 {
        img.set(x, y0, colour);
        img.set(x, y1, colour);
    }
    for y in y0..=y1 {
        img.set(x0, y, colour);
        img.set(x1, y, colour);
    }
}

/// Draws a confidence bar along the top edge inside the box, as long as
/// `confidence` times the box width.
fn draw_confidence(img: &mut RgbImage, b: &BBox, confidence: f64, colour: [f64; 3]) {
    let clip = b.clip(img.width() as f64, img.height() as f64);
    let y = (clip.y_min.floor() as usize + 1).min(img.height() - 1);
    let x0 = clip.x_min.floor() as usize;
    let len = (clip.width() * confidence.clamp(0.0, 1.0)).round() as usize;
    for x in x0..(x0 + len).min(img.width()) {
        img.set(x, y, colour);
    }
}

/// Overlay image with ground truth (green) and predictions (blue, with a
/// confidence bar).
pub fn overlay(image: &RgbImage, gts: &[BBox], preds: &[BoxPrediction]) -> RgbImage {
    let mut img = image.clone();
    for b in gts {
        draw_rect(&mut img, b, GT_COLOUR);
    }
    for p in preds {
        draw_rect(&mut img, &p.bbox, PRED_COLOUR);
        draw_confidence(&mut img, &p.bbox, p.confidence, PRED_COLOUR);
    }
    img
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct OverlayRecord {
    sample_id: String,
    file: String,
    ground_truth: Vec<BBox>,
    predictions: Vec<BoxPrediction>,
}

/// Writes `<sample_id>.png` overlays plus `overlays.json` listing every box
/// and confidence. Returns the image paths in input order.
pub fn render_overlays(ckpt: &Checkpoint, samples: &[ImageSample], dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let net = ckpt.network()?;
    let images: Vec<&RgbImage> = samples.iter().map(|s| &s.image).collect();
    let preds = predict(&net, &ckpt.params, &images, &ckpt.config.eval)?;
    let mut paths = Vec::with_capacity(samples.len());
    let mut records = Vec::with_capacity(samples.len());
    for (s, p) in samples.iter().zip(preds) {
        let file = format!("{}.png", s.sample_id);
        let path = dir.join(&file);
        overlay(&s.image, &s.boxes, &p).save_png(&path)?;
        records.push(OverlayRecord {
            sample_id: s.sample_id.clone(),
            file,
            ground_truth: s.boxes.clone(),
            predictions: p,
        });
        paths.push(path);
    }
    fs::write(dir.join("overlays.json"), serde_json::to_string_pretty(&records)? + "\n")?;
    Ok(paths)
}
