use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{mix_seed, ArtifactKind, ArtifactMeta, Domain, ImageSample};
use crate::error::{Error, Result};
use crate::raster::RgbImage;

/// Severity ranges for every artifact kind. Each injection draws its
/// parameters uniformly from these intervals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArtifactConfig {
    pub bubble_count: (usize, usize),
    pub bubble_radius: (f64, f64),
    /// Whitening of a bubble's interior, 0 clear to 1 opaque.
    pub bubble_opacity: (f64, f64),
    pub spot_count: (usize, usize),
    pub spot_sigma: (f64, f64),
    pub blur_sigma: (f64, f64),
    pub haze_alpha: (f64, f64),
    pub haze_level: (f64, f64),
    pub color_gain: (f64, f64),
    pub color_bias: (f64, f64),
    /// Probability that a bubble or spot is centred inside a lumen box
    /// rather than anywhere in the image.
    pub lumen_overlap: f64,
}

impl Default for ArtifactConfig {
    fn default() -> Self {
        Self {
            bubble_count: (1, 3),
            bubble_radius: (6.0, 14.0),
            bubble_opacity: (0.3, 0.75),
            spot_count: (1, 3),
            spot_sigma: (2.0, 4.5),
            blur_sigma: (1.5, 3.5),
            haze_alpha: (0.5, 0.8),
            haze_level: (0.6, 0.85),
            color_gain: (0.6, 1.3),
            color_bias: (-0.15, 0.15),
            lumen_overlap: 0.5,
        }
    }
}

fn draw(rng: &mut impl Rng, range: (f64, f64)) -> f64 {
    if range.0 >= range.1 {
        range.0
    } else {
        rng.gen_range(range.0..range.1)
    }
}

fn draw_count(rng: &mut impl Rng, range: (usize, usize)) -> usize {
    rng.gen_range(range.0..=range.1.max(range.0))
}

fn require_clean(s: &ImageSample) -> Result<()> {
    if s.domain != Domain::Clean || s.artifact_meta.is_some() {
        return Err(Error::AlreadyCorrupted(s.sample_id.clone()));
    }
    Ok(())
}

fn blend(p: [f64; 3], q: [f64; 3], t: f64) -> [f64; 3] {
    std::array::from_fn(|c| p[c] * (1.0 - t) + q[c] * t)
}

pub fn inject_local_artifact(s: &ImageSample, kind: ArtifactKind, rng_seed: u64) -> Result<ImageSample> {
    inject_local_artifact_with(s, kind, rng_seed, &ArtifactConfig::default())
}

/// Composites bubbles or specular spots at random positions. Pixels outside
/// every composited disc are left untouched.
pub fn inject_local_artifact_with(
    s: &ImageSample,
    kind: ArtifactKind,
    rng_seed: u64,
    cfg: &ArtifactConfig,
) -> Result<ImageSample> {
    require_clean(s)?;
    if !kind.is_local() {
        return Err(Error::InvalidParameter(format!("{kind:?} is not a local artifact")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(rng_seed, 0x10ca1));
    let mut img = s.image.clone();
    let (w, h) = (img.width() as f64, img.height() as f64);
    let mut params = BTreeMap::new();
    let centre = |rng: &mut ChaCha8Rng| {
        if !s.boxes.is_empty() && rng.gen_bool(cfg.lumen_overlap.clamp(0.0, 1.0)) {
            let b = s.boxes[rng.gen_range(0..s.boxes.len())];
            (rng.gen_range(b.x_min..b.x_max), rng.gen_range(b.y_min..b.y_max))
        } else {
            (rng.gen_range(0.0..w), rng.gen_range(0.0..h))
        }
    };

    match kind {
        ArtifactKind::Bubble => {
            let n = draw_count(&mut rng, cfg.bubble_count);
            params.insert("count".into(), n as f64);
            for i in 0..n {
                let r = draw(&mut rng, cfg.bubble_radius);
                let opacity = draw(&mut rng, cfg.bubble_opacity);
                let (cx, cy) = centre(&mut rng);
                params.insert(format!("radius_{i}"), r);
                params.insert(format!("opacity_{i}"), opacity);
                stamp(&mut img, cx, cy, r, |p, d| {
                    let rim = (-((d - 0.85 * r) / (0.13 * r)).powi(2)).exp();
                    let interior = blend(p, [0.93, 0.93, 0.96], opacity);
                    let mut out = blend(interior, [1.0, 1.0, 1.0], 0.85 * rim);
                    if d < 0.25 * r {
                        out = blend(out, [1.0, 1.0, 1.0], 0.3);
                    }
                    out
                });
            }
        }
        ArtifactKind::SpecularSpot => {
            let n = draw_count(&mut rng, cfg.spot_count);
            params.insert("count".into(), n as f64);
            for i in 0..n {
                let sigma = draw(&mut rng, cfg.spot_sigma);
                let (cx, cy) = centre(&mut rng);
                params.insert(format!("sigma_{i}"), sigma);
                stamp(&mut img, cx, cy, 3.0 * sigma, |p, d| {
                    let a = (1.4 * (-d * d / (2.0 * sigma * sigma)).exp()).min(1.0);
                    blend(p, [1.0, 1.0, 1.0], a)
                });
            }
        }
        _ => unreachable!("checked above"),
    }
    img.clamp_unit();
    Ok(ImageSample {
        image: img,
        domain: Domain::Artifact,
        boxes: s.boxes.clone(),
        artifact_meta: Some(ArtifactMeta { kind, params }),
        sample_id: s.sample_id.clone(),
    })
}

/// Applies `f(pixel, distance)` to every pixel whose centre lies within
/// `radius` of `(cx, cy)`.
fn stamp(img: &mut RgbImage, cx: f64, cy: f64, radius: f64, f: impl Fn([f64; 3], f64) -> [f64; 3]) {
    let x0 = (cx - radius).floor().max(0.0) as usize;
    let y0 = (cy - radius).floor().max(0.0) as usize;
    let x1 = ((cx + radius).ceil() as usize).min(img.width());
    let y1 = ((cy + radius).ceil() as usize).min(img.height());
    for y in y0..y1 {
        for x in x0..x1 {
            let d = ((x as f64 + 0.5 - cx).powi(2) + (y as f64 + 0.5 - cy).powi(2)).sqrt();
            if d <= radius {
                let p = img.get(x, y);
                img.set(x, y, f(p, d));
            }
        }
    }
}

pub fn inject_global_artifact(s: &ImageSample, kind: ArtifactKind, rng_seed: u64) -> Result<ImageSample> {
    inject_global_artifact_with(s, kind, rng_seed, &ArtifactConfig::default())
}

/// Whole-image corruption: Gaussian blur, haze or a per-channel affine
/// colour shift.
pub fn inject_global_artifact_with(
    s: &ImageSample,
    kind: ArtifactKind,
    rng_seed: u64,
    cfg: &ArtifactConfig,
) -> Result<ImageSample> {
    require_clean(s)?;
    if kind.is_local() {
        return Err(Error::InvalidParameter(format!("{kind:?} is not a global artifact")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(rng_seed, 0x610ba1));
    let mut params = BTreeMap::new();
    let mut img = match kind {
        ArtifactKind::GlobalBlur => {
            let sigma = draw(&mut rng, cfg.blur_sigma);
            params.insert("sigma".into(), sigma);
            gaussian_blur(&s.image, sigma)
        }
        ArtifactKind::GlobalHaze => {
            let alpha = draw(&mut rng, cfg.haze_alpha);
            let level = draw(&mut rng, cfg.haze_level);
            params.insert("alpha".into(), alpha);
            params.insert("level".into(), level);
            let mut img = s.image.clone();
            for v in img.data_mut() {
                *v = (1.0 - alpha) * *v + alpha * level;
            }
            img
        }
        ArtifactKind::ColorShift => {
            let gain: [f64; 3] = std::array::from_fn(|_| draw(&mut rng, cfg.color_gain));
            let bias: [f64; 3] = std::array::from_fn(|_| draw(&mut rng, cfg.color_bias));
            for c in 0..3 {
                params.insert(format!("gain_{c}"), gain[c]);
                params.insert(format!("bias_{c}"), bias[c]);
            }
            let mut img = s.image.clone();
            for (i, v) in img.data_mut().iter_mut().enumerate() {
                let c = i % 3;
                *v = gain[c] * *v + bias[c];
            }
            img
        }
        _ => unreachable!("checked above"),
    };
    img.clamp_unit();
    Ok(ImageSample {
        image: img,
        domain: Domain::Artifact,
        boxes: s.boxes.clone(),
        artifact_meta: Some(ArtifactMeta { kind, params }),
        sample_id: s.sample_id.clone(),
    })
}

/// Separable Gaussian blur with edge clamping and a 3σ kernel radius.
pub(crate) fn gaussian_blur(src: &RgbImage, sigma: f64) -> RgbImage {
    let radius = (3.0 * sigma).ceil().max(1.0) as isize;
    let mut kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = kernel.iter().sum();
    for k in &mut kernel {
        *k /= total;
    }
    let (w, h) = (src.width() as isize, src.height() as isize);
    let pass = |img: &RgbImage, horizontal: bool| {
        RgbImage::from_fn(img.width(), img.height(), |x, y| {
            let mut acc = [0.0; 3];
            for (j, k) in kernel.iter().enumerate() {
                let o = j as isize - radius;
                let (sx, sy) = if horizontal {
                    ((x as isize + o).clamp(0, w - 1), y as isize)
                } else {
                    (x as isize, (y as isize + o).clamp(0, h - 1))
                };
                let p = img.get(sx as usize, sy as usize);
                for c in 0..3 {
                    acc[c] += k * p[c];
                }
            }
            acc
        })
    };
    let tmp = pass(src, true);
    pass(&tmp, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data_synth::{render_clean_scene, SceneParams};

    fn scene(i: u64) -> ImageSample {
        render_clean_scene(&SceneParams { rng_seed: 3, ..Default::default() }, i).unwrap()
    }

    fn std_dev(v: &[f64]) -> f64 {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
    }

    #[test]
    fn local_artifacts_keep_labels_and_are_deterministic() {
        for kind in [ArtifactKind::Bubble, ArtifactKind::SpecularSpot] {
            let s = scene(1);
            let a = inject_local_artifact(&s, kind, 9).unwrap();
            assert_eq!(a.domain, Domain::Artifact);
            assert_eq!(a.boxes, s.boxes);
            assert_eq!(a.artifact_meta.as_ref().unwrap().kind, kind);
            assert_eq!(a, inject_local_artifact(&s, kind, 9).unwrap());
            a.check_invariants().unwrap();
        }
    }

    #[test]
    fn local_changes_are_spatially_confined() {
        for i in 0..50 {
            let s = scene(i);
            for kind in [ArtifactKind::Bubble, ArtifactKind::SpecularSpot] {
                let a = inject_local_artifact(&s, kind, i * 31 + 1).unwrap();
                let px = s.image.width() * s.image.height();
                let changed = (0..px)
                    .filter(|&p| (0..3).any(|c| a.image.data()[p * 3 + c] != s.image.data()[p * 3 + c]))
                    .count();
                let frac = changed as f64 / px as f64;
                assert!(frac > 0.0 && frac < 0.25, "{kind:?} changed {frac}");
            }
        }
    }

    #[test]
    fn double_injection_is_rejected() {
        let a = inject_local_artifact(&scene(0), ArtifactKind::Bubble, 1).unwrap();
        assert!(matches!(
            inject_global_artifact(&a, ArtifactKind::GlobalHaze, 1),
            Err(Error::AlreadyCorrupted(_))
        ));
        assert!(inject_local_artifact(&a, ArtifactKind::SpecularSpot, 1).is_err());
    }

    #[test]
    fn kinds_must_match_the_injector() {
        assert!(inject_local_artifact(&scene(0), ArtifactKind::GlobalBlur, 1).is_err());
        assert!(inject_global_artifact(&scene(0), ArtifactKind::Bubble, 1).is_err());
    }

    #[test]
    fn vanishing_blur_is_identity() {
        let s = scene(2);
        let cfg = ArtifactConfig {
            blur_sigma: (1e-9, 1e-9),
            ..Default::default()
        };
        let a = inject_global_artifact_with(&s, ArtifactKind::GlobalBlur, 4, &cfg).unwrap();
        for (x, y) in a.image.data().iter().zip(s.image.data()) {
            assert!((x - y).abs() <= 1e-6);
        }
    }

    #[test]
    fn haze_reduces_contrast_and_keeps_boxes() {
        for i in 0..40 {
            let s = scene(i);
            let a = inject_global_artifact(&s, ArtifactKind::GlobalHaze, i).unwrap();
            assert!(std_dev(&a.image.luminance()) < std_dev(&s.image.luminance()));
            assert_eq!(a.boxes, s.boxes);
        }
    }

    #[test]
    fn global_kinds_keep_boxes_and_range() {
        for kind in [ArtifactKind::GlobalBlur, ArtifactKind::ColorShift] {
            let s = scene(4);
            let a = inject_global_artifact(&s, kind, 8).unwrap();
            assert_eq!(a.boxes, s.boxes);
            a.check_invariants().unwrap();
            assert_ne!(a.image, s.image);
        }
    }
}
