use rand::Rng;

use super::config::AugmentConfig;
use crate::bbox::BBox;
use crate::raster::RgbImage;

/// Boxes narrower or shorter than this after cropping are dropped.
const MIN_BOX_SIDE: f64 = 2.0;

/// Horizontal flip with probability 1/2.
pub fn random_flip(image: &RgbImage, boxes: &[BBox], rng: &mut impl Rng) -> (RgbImage, Vec<BBox>) {
    if !rng.gen_bool(0.5) {
        return (image.clone(), boxes.to_vec());
    }
    let w = image.width() as f64;
    let flipped = boxes
        .iter()
        .map(|b| BBox::new(w - b.x_max, b.y_min, w - b.x_min, b.y_max))
        .collect();
    (image.flip_horizontal(), flipped)
}

/// Zooms by `factor` about the image centre, keeping the image size.
/// Boxes follow the zoom, are clipped to the frame, and vanish when too
/// little of them remains.
pub fn zoom(image: &RgbImage, boxes: &[BBox], factor: f64) -> (RgbImage, Vec<BBox>) {
    let (w, h) = (image.width() as f64, image.height() as f64);
    let (cx, cy) = (w / 2.0, h / 2.0);
    let out = RgbImage::from_fn(image.width(), image.height(), |x, y| {
        let sx = (x as f64 + 0.5 - cx) / factor + cx;
        let sy = (y as f64 + 0.5 - cy) / factor + cy;
        image.sample_bilinear(sx, sy)
    });
    let moved = boxes
        .iter()
        .map(|b| {
            BBox::new(
                (b.x_min - cx) * factor + cx,
                (b.y_min - cy) * factor + cy,
                (b.x_max - cx) * factor + cx,
                (b.y_max - cy) * factor + cy,
            )
            .clip(w, h)
        })
        .filter(|b| b.width() >= MIN_BOX_SIDE && b.height() >= MIN_BOX_SIDE)
        .collect();
    (out, moved)
}

pub fn augment(
    image: &RgbImage,
    boxes: &[BBox],
    cfg: &AugmentConfig,
    rng: &mut impl Rng,
) -> (RgbImage, Vec<BBox>) {
    let (mut img, mut bx) = (image.clone(), boxes.to_vec());
    if cfg.flip {
        (img, bx) = random_flip(&img, &bx, rng);
    }
    if cfg.scale {
        let (lo, hi) = cfg.scale_range;
        let f = if hi > lo { rng.gen_range(lo..=hi) } else { lo };
        (img, bx) = zoom(&img, &bx, f);
    }
    (img, bx)
}
