//! IoU, greedy detection matching and COCO-style average precision.

use serde::{Deserialize, Serialize};

use crate::bbox::BBox;
use crate::error::{Error, Result};
use crate::model::BoxPrediction;

/// IoU thresholds `0.50, 0.55, ..., 0.95`.
pub fn iou_thresholds() -> [f64; 10] {
    std::array::from_fn(|i| (50 + 5 * i) as f64 / 100.0)
}

pub fn iou(a: &BBox, b: &BBox) -> Result<f64> {
    for bx in [a, b] {
        if !(bx.is_valid() && bx.area() > 0.0) {
            return Err(Error::InvalidBox(format!("degenerate box {bx:?}")));
        }
    }
    Ok(a.iou(b))
}

/// Greedy matching of confidence-sorted predictions: each prediction takes
/// the highest-IoU unmatched ground truth with `IoU >= thresh`.
/// Returns `(tp, fp)` flags aligned with `preds`.
pub fn match_detections(preds: &[BoxPrediction], gts: &[BBox], thresh: f64) -> (Vec<bool>, Vec<bool>) {
    let mut taken = vec![false; gts.len()];
    let mut tp = Vec::with_capacity(preds.len());
    for p in preds {
        let mut best: Option<(usize, f64)> = None;
        for (j, gt) in gts.iter().enumerate() {
            if taken[j] {
                continue;
            }
            let o = p.bbox.iou(gt);
            if o >= thresh && best.map_or(true, |(_, b)| o > b) {
                best = Some((j, o));
            }
        }
        if let Some((j, _)) = best {
            taken[j] = true;
        }
        tp.push(best.is_some());
    }
    let fp = tp.iter().map(|t| !t).collect();
    (tp, fp)
}

fn sorted(preds: &[BoxPrediction]) -> Vec<BoxPrediction> {
    let mut p = preds.to_vec();
    p.sort_by(|a, b| b.confidence.total_cmp(&a.confidence));
    p
}

/// All-points interpolated AP over a dataset at one IoU threshold.
/// `preds[i]` and `gts[i]` belong to image `i`. Zero when there is no
/// ground truth.
pub fn average_precision(preds: &[Vec<BoxPrediction>], gts: &[Vec<BBox>], thresh: f64) -> Result<f64> {
    if preds.len() != gts.len() {
        return Err(Error::Shape(format!(
            "{} prediction lists for {} images",
            preds.len(),
            gts.len()
        )));
    }
    let n_gt: usize = gts.iter().map(Vec::len).sum();
    if n_gt == 0 {
        return Ok(0.0);
    }
    let mut pooled: Vec<(f64, bool)> = Vec::new();
    for (p, g) in preds.iter().zip(gts) {
        let p = sorted(p);
        let (tp, _) = match_detections(&p, g, thresh);
        pooled.extend(p.iter().zip(tp).map(|(b, t)| (b.confidence, t)));
    }
    pooled.sort_by(|a, b| b.0.total_cmp(&a.0));

    let mut recall = Vec::with_capacity(pooled.len());
    let mut precision = Vec::with_capacity(pooled.len());
    let (mut ctp, mut cfp) = (0usize, 0usize);
    for &(_, t) in &pooled {
        if t {
            ctp += 1;
        } else {
            cfp += 1;
        }
        recall.push(ctp as f64 / n_gt as f64);
        precision.push(ctp as f64 / (ctp + cfp) as f64);
    }
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut ap = 0.0;
    let mut prev_r = 0.0;
    for (r, p) in recall.iter().zip(&precision) {
        if *r > prev_r {
            ap += (r - prev_r) * p;
            prev_r = *r;
        }
    }
    Ok(ap)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Mean AP over the ten IoU thresholds.
    pub ap: f64,
    pub ap50: f64,
    pub ap75: f64,
    /// `(threshold, AP)` for every threshold.
    pub curve: Vec<(f64, f64)>,
    pub n_gt: usize,
    pub n_pred: usize,
    /// Set when predictions exist but no ground truth does; all APs are 0.
    pub no_ground_truth: bool,
}

pub fn ap_summary(preds: &[Vec<BoxPrediction>], gts: &[Vec<BBox>]) -> Result<EvalReport> {
    let mut curve = Vec::with_capacity(10);
    for t in iou_thresholds() {
        curve.push((t, average_precision(preds, gts, t)?));
    }
    let ap = curve.iter().map(|c| c.1).sum::<f64>() / curve.len() as f64;
    let n_gt = gts.iter().map(Vec::len).sum();
    let n_pred = preds.iter().map(Vec::len).sum();
    Ok(EvalReport {
        ap,
        ap50: curve[0].1,
        ap75: curve[5].1,
        curve,
        n_gt,
        n_pred,
        no_ground_truth: n_gt == 0 && n_pred > 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pred(b: BBox, c: f64) -> BoxPrediction {
        BoxPrediction {
            bbox: b,
            confidence: c,
        }
    }

    #[test]
    fn iou_hand_cases() {
        let a = BBox::new(0.0, 0.0, 2.0, 2.0);
        assert_eq!(iou(&a, &a).unwrap(), 1.0);
        assert_eq!(iou(&a, &BBox::new(5.0, 5.0, 6.0, 6.0)).unwrap(), 0.0);
        assert!((iou(&a, &BBox::new(1.0, 1.0, 3.0, 3.0)).unwrap() - 1.0 / 7.0).abs() < 1e-15);
        assert!(iou(&a, &BBox::new(1.0, 1.0, 1.0, 3.0)).is_err());
    }

    #[test]
    fn matching_rules() {
        let gt = BBox::new(0.0, 0.0, 10.0, 10.0);
        let (tp, fp) = match_detections(&[pred(gt, 0.9), pred(gt, 0.8)], &[gt], 0.5);
        assert_eq!((tp, fp), (vec![true, false], vec![false, true]));
        let shifted = pred(BBox::new(0.0, 0.0, 10.0, 6.0), 0.9);
        assert_eq!(match_detections(&[shifted], &[gt], 0.75).0, vec![false]);
    }

    #[test]
    fn ap_hand_cases() {
        let gt = BBox::new(0.0, 0.0, 10.0, 10.0);
        let far = BBox::new(50.0, 50.0, 60.0, 60.0);
        assert_eq!(average_precision(&[vec![pred(gt, 0.7)]], &[vec![gt]], 0.5).unwrap(), 1.0);
        let ap = average_precision(&[vec![pred(far, 0.9), pred(gt, 0.8)]], &[vec![gt]], 0.5).unwrap();
        assert_eq!(ap, 0.5);

        // IoU exactly 0.6
        let p = pred(BBox::new(0.0, 0.0, 10.0, 6.0), 0.9);
        let r = ap_summary(&[vec![p]], &[vec![gt]]).unwrap();
        assert_eq!((r.ap50, r.ap75), (1.0, 0.0));
        assert!((r.ap - 0.3).abs() < 1e-15);

        let r = ap_summary(&[vec![]], &[vec![gt]]).unwrap();
        assert_eq!((r.ap, r.ap50, r.ap75), (0.0, 0.0, 0.0));
        let r = ap_summary(&[vec![pred(gt, 0.5)]], &[vec![]]).unwrap();
        assert!(r.no_ground_truth && r.ap == 0.0);
    }
}
