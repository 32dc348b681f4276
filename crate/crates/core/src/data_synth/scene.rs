use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{mix_seed, Domain, ImageSample};
use crate::bbox::BBox;
use crate::error::{Error, Result};
use crate::raster::RgbImage;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneParams {
    pub image_size: usize,
    /// Inclusive range of lumens per scene.
    pub lumen_count_range: (usize, usize),
    /// Semi-major axis range in pixels.
    pub lumen_radius_range: (f64, f64),
    /// Typical wavelength of the wall texture in pixels.
    pub wall_texture_scale: f64,
    /// Range of the relative brightness at a lumen's centre; 0 is black,
    /// values near 1 give faint lumens.
    #[serde(default = "default_lumen_depth")]
    pub lumen_depth_range: (f64, f64),
    pub rng_seed: u64,
}

fn default_lumen_depth() -> (f64, f64) {
    SceneParams::default().lumen_depth_range
}

impl Default for SceneParams {
    fn default() -> Self {
        Self {
            image_size: 96,
            lumen_count_range: (1, 3),
            lumen_radius_range: (8.0, 17.0),
            wall_texture_scale: 14.0,
            lumen_depth_range: (0.06, 0.78),
            rng_seed: 0,
        }
    }
}

impl SceneParams {
    pub fn validate(&self) -> Result<()> {
        if self.image_size < 32 {
            return Err(Error::InvalidParameter(format!(
                "image_size {} is below the minimum of 32",
                self.image_size
            )));
        }
        let (cmin, cmax) = self.lumen_count_range;
        if cmin == 0 || cmin > cmax {
            return Err(Error::InvalidParameter(format!(
                "lumen_count_range {:?} must be a nonempty range starting at 1 or more",
                self.lumen_count_range
            )));
        }
        let (dmin, dmax) = self.lumen_depth_range;
        if !(0.0 <= dmin && dmin <= dmax && dmax < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "lumen_depth_range {:?} must lie in [0, 1)",
                self.lumen_depth_range
            )));
        }
        let (rmin, rmax) = self.lumen_radius_range;
        if !(rmin > 0.0 && rmin <= rmax) {
            return Err(Error::InvalidParameter(format!(
                "lumen_radius_range {:?} is empty",
                self.lumen_radius_range
            )));
        }
        if 2.0 * rmax + 4.0 > self.image_size as f64 {
            return Err(Error::InvalidParameter(format!(
                "lumen radius {rmax} does not fit in a {} pixel image",
                self.image_size
            )));
        }
        if !(self.wall_texture_scale > 0.0) {
            return Err(Error::InvalidParameter("wall_texture_scale must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Lumen {
    cx: f64,
    cy: f64,
    a: f64,
    b: f64,
    theta: f64,
    depth: f64,
}

impl Lumen {
    fn bounds(&self) -> BBox {
        let (s, c) = self.theta.sin_cos();
        let hx = (self.a * self.a * c * c + self.b * self.b * s * s).sqrt();
        let hy = (self.a * self.a * s * s + self.b * self.b * c * c).sqrt();
        BBox::new(self.cx - hx, self.cy - hy, self.cx + hx, self.cy + hy)
    }

    /// Normalised elliptical radius of a point; 1 on the boundary.
    fn radius(&self, x: f64, y: f64) -> f64 {
        let (s, c) = self.theta.sin_cos();
        let (dx, dy) = (x - self.cx, y - self.cy);
        let u = dx * c + dy * s;
        let v = -dx * s + dy * c;
        ((u / self.a).powi(2) + (v / self.b).powi(2)).sqrt()
    }
}

struct Wave {
    kx: f64,
    ky: f64,
    phase: f64,
    amp: f64,
}

/// Renders clean-domain scene `index`; a pure function of
/// `(params.rng_seed, index)`.
pub fn render_clean_scene(params: &SceneParams, index: u64) -> Result<ImageSample> {
    params.validate()?;
    let size = params.image_size;
    let sf = size as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(params.rng_seed, index));

    let base = [
        rng.gen_range(0.72..0.92),
        rng.gen_range(0.34..0.50),
        rng.gen_range(0.30..0.44),
    ];
    let waves: Vec<Wave> = (0..5)
        .map(|_| {
            let dir = rng.gen_range(0.0..PI);
            let k = 2.0 * PI / (params.wall_texture_scale * rng.gen_range(0.6..1.6));
            Wave {
                kx: k * dir.cos(),
                ky: k * dir.sin(),
                phase: rng.gen_range(0.0..2.0 * PI),
                amp: rng.gen_range(0.02..0.06),
            }
        })
        .collect();
    let light = (
        sf * rng.gen_range(0.35..0.65),
        sf * rng.gen_range(0.35..0.65),
    );

    let (cmin, cmax) = params.lumen_count_range;
    let wanted = rng.gen_range(cmin..=cmax);
    let (rmin, rmax) = params.lumen_radius_range;
    let (dmin, dmax) = params.lumen_depth_range;
    let mut lumens: Vec<Lumen> = Vec::with_capacity(wanted);
    for _ in 0..wanted {
        for _attempt in 0..60 {
            let a = rng.gen_range(rmin..=rmax);
            let l = Lumen {
                cx: 0.0,
                cy: 0.0,
                a,
                b: a * rng.gen_range(0.65..=1.0),
                theta: rng.gen_range(0.0..PI),
                depth: rng.gen_range(dmin..=dmax),
            };
            let probe = l.bounds();
            let (hx, hy) = (probe.width() / 2.0, probe.height() / 2.0);
            let l = Lumen {
                cx: rng.gen_range(hx + 1.0..sf - hx - 1.0),
                cy: rng.gen_range(hy + 1.0..sf - hy - 1.0),
                ..l
            };
            let bb = l.bounds();
            let grown = BBox::new(bb.x_min - 3.0, bb.y_min - 3.0, bb.x_max + 3.0, bb.y_max + 3.0);
            if lumens.iter().all(|o| grown.iou(&o.bounds()) == 0.0) {
                lumens.push(l);
                break;
            }
        }
    }

    let noise = Normal::new(0.0, 0.03).expect("finite std");
    let mut image = RgbImage::from_fn(size, size, |x, y| {
        let (px, py) = (x as f64 + 0.5, y as f64 + 0.5);
        let tex: f64 = waves
            .iter()
            .map(|w| w.amp * (w.kx * px + w.ky * py + w.phase).sin())
            .sum();
        let r2 = ((px - light.0).powi(2) + (py - light.1).powi(2)) / (sf * sf);
        let vignette = 1.0 - 0.9 * r2;
        let mut shade = 1.0f64;
        for l in &lumens {
            let rho = l.radius(px, py);
            let rim = 1.0 - 0.55 * (1.0 - l.depth);
            let f = if rho < 1.0 {
                l.depth + (rim - l.depth) * rho.powi(3)
            } else if rho < 1.15 {
                let t = (rho - 1.0) / 0.15;
                rim + (1.0 - rim) * t * t * (3.0 - 2.0 * t)
            } else {
                1.0
            };
            shade = shade.min(f);
        }
        std::array::from_fn(|c| base[c] * (1.0 + tex) * vignette * shade)
    });
    for v in image.data_mut() {
        *v += noise.sample(&mut rng);
    }
    image.clamp_unit();

    Ok(ImageSample {
        image,
        domain: Domain::Clean,
        boxes: lumens.iter().map(Lumen::bounds).collect(),
        artifact_meta: None,
        sample_id: format!("scene-{index:06}"),
    })
}
