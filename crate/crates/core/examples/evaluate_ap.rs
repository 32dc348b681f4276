//! Scores hand-made detections with IoU and COCO-style average precision.
//!
//!     cargo run --release --example evaluate_ap

use cdfi::bbox::BBox;
use cdfi::eval::{ap_summary, iou};
use cdfi::model::BoxPrediction;

fn pred(x0: f64, y0: f64, x1: f64, y1: f64, confidence: f64) -> BoxPrediction {
    BoxPrediction {
        bbox: BBox::new(x0, y0, x1, y1),
        confidence,
    }
}

fn main() -> anyhow::Result<()> {
    let a = BBox::new(0.0, 0.0, 2.0, 2.0);
    let b = BBox::new(1.0, 1.0, 3.0, 3.0);
    println!("IoU of two offset squares: {:.4}", iou(&a, &b)?);

    let gts = vec![
        vec![BBox::new(10.0, 10.0, 30.0, 30.0), BBox::new(50.0, 40.0, 70.0, 64.0)],
        vec![BBox::new(5.0, 60.0, 25.0, 80.0)],
    ];
    let preds = vec![
        vec![
            pred(11.0, 10.0, 30.0, 31.0, 0.95),
            pred(52.0, 44.0, 70.0, 60.0, 0.70),
            pred(80.0, 80.0, 90.0, 90.0, 0.60),
        ],
        vec![pred(8.0, 62.0, 28.0, 84.0, 0.85), pred(5.0, 60.0, 25.0, 80.0, 0.40)],
    ];
    let r = ap_summary(&preds, &gts)?;
    println!("{} ground-truth boxes", r.n_gt);
    for (t, ap) in &r.curve {
        println!("  AP@{t:.2} = {ap:.4}");
    }
    println!("AP {:.4}  AP50 {:.4}  AP75 {:.4}", r.ap, r.ap50, r.ap75);
    Ok(())
}
