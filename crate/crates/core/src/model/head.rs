use rand::Rng;
use serde::{Deserialize, Serialize};

use super::LEAKY_SLOPE;
use crate::autograd::{bce_logit, sigmoid, Graph, Var};
use crate::bbox::BBox;
use crate::error::{Error, Result};
use crate::params::ParamStore;
use crate::tensor::Tensor;

/// Negatives whose decoded box overlaps a ground-truth box above this IoU
/// are excluded from the objectness loss.
pub const IGNORE_IOU: f64 = 0.5;

/// Values per anchor: objectness logit, then `t_x, t_y, t_w, t_h`.
const PER_ANCHOR: usize = 5;

/// Objectness bias at init, a prior probability of about 2%.
const OBJECTNESS_PRIOR_LOGIT: f64 = -4.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadSpec {
    pub channels_in: usize,
    pub hidden: usize,
    /// Anchor priors `(width, height)` in pixels.
    pub anchors: Vec<(f64, f64)>,
    /// Pixels per grid cell.
    pub stride: usize,
}

impl HeadSpec {
    pub fn anchor_count(&self) -> usize {
        self.anchors.len()
    }

    pub fn out_channels(&self) -> usize {
        self.anchors.len() * PER_ANCHOR
    }
}

/// The detection head shared by every branch: a 3×3 convolution followed by
/// a 1×1 projection to `A × 5` channels.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionHead {
    pub spec: HeadSpec,
}

impl DetectionHead {
    pub fn new(spec: HeadSpec) -> Result<Self> {
        if spec.anchors.is_empty() || spec.stride == 0 {
            return Err(Error::InvalidParameter("head needs anchors and a stride".into()));
        }
        if spec.anchors.iter().any(|&(w, h)| !(w > 0.0 && h > 0.0)) {
            return Err(Error::InvalidParameter(format!("bad anchors {:?}", spec.anchors)));
        }
        Ok(Self { spec })
    }

    pub fn init(&self, store: &mut ParamStore, rng: &mut impl Rng) {
        store.init_conv(rng, "head/conv0", self.spec.channels_in, self.spec.hidden, 3);
        store.init_conv(rng, "head/out", self.spec.hidden, self.spec.out_channels(), 1);
        if let Some(w) = store.get_mut("head/out/weight") {
            for v in w.data_mut() {
                *v *= 0.1;
            }
        }
        if let Some(b) = store.get_mut("head/out/bias") {
            for a in 0..self.spec.anchor_count() {
                b.data_mut()[a * PER_ANCHOR] = OBJECTNESS_PRIOR_LOGIT;
            }
        }
    }

    /// `z: [N, C, g, g] -> [N, A·5, g, g]`.
    pub fn forward(&self, g: &mut Graph, store: &ParamStore, z: Var) -> Result<Var> {
        let (_, c, _, _) = g.value(z).dims4()?;
        if c != self.spec.channels_in {
            return Err(Error::Shape(format!(
                "head expects {} channels, got {c}",
                self.spec.channels_in
            )));
        }
        let w0 = g.param(store, "head/conv0/weight")?;
        let b0 = g.param(store, "head/conv0/bias")?;
        let h = g.conv2d(z, w0, b0, 1, 1)?;
        let h = g.leaky_relu(h, LEAKY_SLOPE);
        let w1 = g.param(store, "head/out/weight")?;
        let b1 = g.param(store, "head/out/bias")?;
        g.conv2d(h, w1, b1, 1, 0)
    }
}

/// Raw head output for a batch, with the anchor priors needed to read it.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionGrid {
    values: Tensor,
    anchors: Vec<(f64, f64)>,
    stride: usize,
}

impl DetectionGrid {
    pub fn new(values: Tensor, anchors: Vec<(f64, f64)>, stride: usize) -> Result<Self> {
        let (_, c, gh, gw) = values.dims4()?;
        if c != anchors.len() * PER_ANCHOR || gh != gw {
            return Err(Error::Shape(format!(
                "grid {:?} does not hold {} anchors on a square grid",
                values.shape(),
                anchors.len()
            )));
        }
        if !values.all_finite() {
            return Err(Error::NonFinite("detection grid".into()));
        }
        Ok(Self {
            values,
            anchors,
            stride,
        })
    }

    pub fn values(&self) -> &Tensor {
        &self.values
    }

    pub fn batch(&self) -> usize {
        self.values.shape()[0]
    }

    pub fn size(&self) -> usize {
        self.values.shape()[2]
    }

    pub fn anchors(&self) -> &[(f64, f64)] {
        &self.anchors
    }

    pub fn stride(&self) -> usize {
        self.stride
    }

    pub fn image_size(&self) -> f64 {
        (self.size() * self.stride) as f64
    }

    fn index(&self, n: usize, a: usize, k: usize, j: usize, i: usize) -> usize {
        let gsz = self.size();
        (((n * self.anchors.len() + a) * PER_ANCHOR + k) * gsz + j) * gsz + i
    }

    fn get(&self, n: usize, a: usize, k: usize, j: usize, i: usize) -> f64 {
        self.values.data()[self.index(n, a, k, j, i)]
    }

    /// Decoded box of anchor `a` at cell `(i, j)` (column, row).
    fn decode_cell(&self, n: usize, a: usize, j: usize, i: usize) -> BBox {
        let s = self.stride as f64;
        let cx = (i as f64 + sigmoid(self.get(n, a, 1, j, i))) * s;
        let cy = (j as f64 + sigmoid(self.get(n, a, 2, j, i))) * s;
        let w = self.anchors[a].0 * self.get(n, a, 3, j, i).clamp(-10.0, 10.0).exp();
        let h = self.anchors[a].1 * self.get(n, a, 4, j, i).clamp(-10.0, 10.0).exp();
        BBox::from_center(cx, cy, w, h)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxPrediction {
    pub bbox: BBox,
    pub confidence: f64,
}

/// Greedy non-maximum suppression; output sorted by descending confidence.
pub fn nms(mut preds: Vec<BoxPrediction>, iou_thresh: f64) -> Vec<BoxPrediction> {
    preds.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));
    let mut kept: Vec<BoxPrediction> = Vec::new();
    for p in preds {
        if kept.iter().all(|k| k.bbox.iou(&p.bbox) <= iou_thresh) {
            kept.push(p);
        }
    }
    kept
}

/// Thresholds `sigmoid(objectness)`, decodes surviving anchors to pixel
/// boxes clipped to the image, and applies NMS.
pub fn decode_boxes(
    grid: &DetectionGrid,
    image: usize,
    conf_thresh: f64,
    nms_iou: f64,
) -> Result<Vec<BoxPrediction>> {
    if !(0.0..=1.0).contains(&conf_thresh) || !(0.0..=1.0).contains(&nms_iou) {
        return Err(Error::InvalidParameter(format!(
            "thresholds must lie in [0, 1]: conf {conf_thresh}, nms {nms_iou}"
        )));
    }
    if image >= grid.batch() {
        return Err(Error::InvalidParameter(format!("no image {image} in grid")));
    }
    let size = grid.image_size();
    let mut preds = Vec::new();
    for a in 0..grid.anchors.len() {
        for j in 0..grid.size() {
            for i in 0..grid.size() {
                let conf = sigmoid(grid.get(image, a, 0, j, i));
                if conf < conf_thresh {
                    continue;
                }
                let bbox = grid.decode_cell(image, a, j, i).clip(size, size);
                if bbox.is_valid() {
                    preds.push(BoxPrediction {
                        bbox,
                        confidence: conf,
                    });
                }
            }
        }
    }
    Ok(nms(preds, nms_iou))
}

/// Responsible cell `(i, j)` and anchor for a ground-truth box.
fn assign(b: &BBox, anchors: &[(f64, f64)], stride: usize, gsz: usize) -> (usize, usize, usize) {
    let (cx, cy) = b.center();
    let s = stride as f64;
    let i = ((cx / s).floor().max(0.0) as usize).min(gsz - 1);
    let j = ((cy / s).floor().max(0.0) as usize).min(gsz - 1);
    let a = best_anchor(b.width(), b.height(), anchors);
    (i, j, a)
}

fn shape_iou(w: f64, h: f64, aw: f64, ah: f64) -> f64 {
    let inter = w.min(aw) * h.min(ah);
    inter / (w * h + aw * ah - inter)
}

fn best_anchor(w: f64, h: f64, anchors: &[(f64, f64)]) -> usize {
    let mut best = 0;
    let mut best_iou = f64::NEG_INFINITY;
    for (a, &(aw, ah)) in anchors.iter().enumerate() {
        let iou = shape_iou(w, h, aw, ah);
        if iou > best_iou {
            best_iou = iou;
            best = a;
        }
    }
    best
}

/// Per-element objectness targets and weights plus regression targets for
/// one batch.
#[derive(Debug, Clone)]
pub struct LossTargets {
    obj_target: Vec<f64>,
    obj_weight: Vec<f64>,
    /// `(grid index of the objectness slot, [fx, fy, tw, th])` per positive.
    positives: Vec<(usize, [f64; 4])>,
}

impl LossTargets {
    pub fn build(grid: &DetectionGrid, gts: &[Vec<BBox>]) -> Result<Self> {
        if gts.len() != grid.batch() {
            return Err(Error::Shape(format!(
                "{} ground-truth lists for a batch of {}",
                gts.len(),
                grid.batch()
            )));
        }
        let n_el = grid.values.len();
        let mut obj_target = vec![0.0; n_el];
        let mut obj_weight = vec![0.0; n_el];
        let mut positives = Vec::new();
        let gsz = grid.size();
        let s = grid.stride as f64;
        for (n, boxes) in gts.iter().enumerate() {
            for b in boxes {
                if !(b.is_valid() && b.area() > 0.0) {
                    return Err(Error::InvalidBox(format!("degenerate ground truth {b:?}")));
                }
            }
            for a in 0..grid.anchors.len() {
                for j in 0..gsz {
                    for i in 0..gsz {
                        let pred = grid.decode_cell(n, a, j, i);
                        let overlap = boxes.iter().map(|b| b.iou(&pred)).fold(0.0, f64::max);
                        if overlap <= IGNORE_IOU {
                            obj_weight[grid.index(n, a, 0, j, i)] = 1.0;
                        }
                    }
                }
            }
            for b in boxes {
                let (i, j, a) = assign(b, &grid.anchors, grid.stride, gsz);
                let (cx, cy) = b.center();
                let (aw, ah) = grid.anchors[a];
                let target = [
                    (cx / s - i as f64).clamp(0.0, 1.0),
                    (cy / s - j as f64).clamp(0.0, 1.0),
                    (b.width() / aw).ln(),
                    (b.height() / ah).ln(),
                ];
                let slot = grid.index(n, a, 0, j, i);
                obj_target[slot] = 1.0;
                obj_weight[slot] = 1.0;
                positives.retain(|(p, _)| *p != slot);
                positives.push((slot, target));
            }
        }
        Ok(Self {
            obj_target,
            obj_weight,
            positives,
        })
    }
}

/// Single-class detection loss and its gradient with respect to the grid.
///
/// Per image: objectness BCE over positives and non-ignored negatives plus
/// squared error on `(σ(t_x), σ(t_y), t_w, t_h)` at positives, summed over
/// cells. The batch value is the mean over images.
pub fn detection_loss_value(grid: &DetectionGrid, gts: &[Vec<BBox>]) -> Result<(f64, Tensor)> {
    let targets = LossTargets::build(grid, gts)?;
    let x = grid.values.data();
    let inv_n = 1.0 / grid.batch().max(1) as f64;
    let gsz2 = grid.size() * grid.size();
    let mut grad = Tensor::zeros(grid.values.shape());
    let gd = grad.data_mut();
    let mut total = 0.0;
    for (idx, (&t, &w)) in targets.obj_target.iter().zip(&targets.obj_weight).enumerate() {
        if w == 0.0 {
            continue;
        }
        total += w * bce_logit(x[idx], t);
        gd[idx] = w * (sigmoid(x[idx]) - t) * inv_n;
    }
    for (slot, target) in &targets.positives {
        for k in 0..4 {
            let idx = slot + (k + 1) * gsz2;
            let raw = x[idx];
            if k < 2 {
                let s = sigmoid(raw);
                let d = s - target[k];
                total += d * d;
                gd[idx] = 2.0 * d * s * (1.0 - s) * inv_n;
            } else {
                let d = raw - target[k];
                total += d * d;
                gd[idx] = 2.0 * d * inv_n;
            }
        }
    }
    Ok((total * inv_n, grad))
}

/// [`detection_loss_value`] recorded on the graph.
pub fn detection_loss(
    g: &mut Graph,
    grid: Var,
    spec: &HeadSpec,
    gts: &[Vec<BBox>],
) -> Result<Var> {
    let dg = DetectionGrid::new(g.value(grid).clone(), spec.anchors.clone(), spec.stride)?;
    let (value, grad) = detection_loss_value(&dg, gts)?;
    g.fused_scalar(grid, value, grad)
}

/// A single-image grid whose decoding reproduces `boxes`: large positive
/// logits at the responsible anchors, large negative logits elsewhere.
pub fn encode_target_grid(boxes: &[BBox], spec: &HeadSpec, grid_size: usize) -> Result<DetectionGrid> {
    let a_n = spec.anchors.len();
    let mut values = Tensor::zeros(&[1, a_n * PER_ANCHOR, grid_size, grid_size]);
    let mut grid = DetectionGrid::new(values.clone(), spec.anchors.clone(), spec.stride)?;
    let logit = |p: f64| {
        let p = p.clamp(1e-6, 1.0 - 1e-6);
        (p / (1.0 - p)).ln()
    };
    for a in 0..a_n {
        for j in 0..grid_size {
            for i in 0..grid_size {
                values.data_mut()[grid.index(0, a, 0, j, i)] = -20.0;
            }
        }
    }
    let s = spec.stride as f64;
    for b in boxes {
        b.validate()?;
        let (i, j, a) = assign(b, &spec.anchors, spec.stride, grid_size);
        let (cx, cy) = b.center();
        let (aw, ah) = spec.anchors[a];
        let vals = [
            20.0,
            logit(cx / s - i as f64),
            logit(cy / s - j as f64),
            (b.width() / aw).ln(),
            (b.height() / ah).ln(),
        ];
        for (k, v) in vals.into_iter().enumerate() {
            values.data_mut()[grid.index(0, a, k, j, i)] = v;
        }
    }
    grid.values = values;
    Ok(grid)
}

/// Anchor priors by k-means over box shapes with `1 − IoU` as distance.
/// Deterministic: clusters start at area quantiles. Sorted by area.
pub fn kmeans_anchors(boxes: &[BBox], k: usize, iterations: usize) -> Result<Vec<(f64, f64)>> {
    if boxes.is_empty() || k == 0 {
        return Err(Error::InvalidParameter("k-means needs boxes and k > 0".into()));
    }
    let mut shapes: Vec<(f64, f64)> = boxes.iter().map(|b| (b.width(), b.height())).collect();
    shapes.sort_by(|a, b| (a.0 * a.1).total_cmp(&(b.0 * b.1)));
    let mut centers: Vec<(f64, f64)> = (0..k)
        .map(|c| shapes[((2 * c + 1) * shapes.len()) / (2 * k)])
        .collect();
    for _ in 0..iterations {
        let mut sums = vec![(0.0, 0.0, 0usize); k];
        for &(w, h) in &shapes {
            let c = best_anchor(w, h, &centers);
            sums[c].0 += w;
            sums[c].1 += h;
            sums[c].2 += 1;
        }
        let next: Vec<(f64, f64)> = sums
            .iter()
            .zip(&centers)
            .map(|(&(sw, sh, n), &old)| if n == 0 { old } else { (sw / n as f64, sh / n as f64) })
            .collect();
        if next == centers {
            break;
        }
        centers = next;
    }
    centers.sort_by(|a, b| (a.0 * a.1).total_cmp(&(b.0 * b.1)));
    Ok(centers)
}
