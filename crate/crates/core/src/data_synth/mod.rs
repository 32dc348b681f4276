//! Synthetic bronchoscopy-like scenes in a clean and an artifact domain.
//!
//! Clean scenes show a textured airway wall with one or more dark, radially
//! shaded elliptical lumens whose tight bounding boxes are the labels.
//! Artifact samples are produced by corrupting freshly rendered clean scenes
//! with a local (bubble, specular spot) or global (blur, haze, colour shift)
//! artifact; corruption never changes the labels.

mod artifacts;
mod dataset;
mod scene;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::bbox::BBox;
use crate::raster::RgbImage;

pub use artifacts::{inject_global_artifact, inject_global_artifact_with, inject_local_artifact,
    inject_local_artifact_with, ArtifactConfig};
pub use dataset::{build_datasets, load_dataset, Dataset, DatasetConfig, DatasetSplits,
    ManifestEntry, Split, SplitCounts, Splits, MANIFEST_VERSION};
pub use scene::{render_clean_scene, SceneParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Clean,
    Artifact,
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Domain::Clean => "clean",
            Domain::Artifact => "artifact",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactKind {
    Bubble,
    SpecularSpot,
    GlobalBlur,
    GlobalHaze,
    ColorShift,
}

impl ArtifactKind {
    pub const ALL: [ArtifactKind; 5] = [
        ArtifactKind::Bubble,
        ArtifactKind::SpecularSpot,
        ArtifactKind::GlobalBlur,
        ArtifactKind::GlobalHaze,
        ArtifactKind::ColorShift,
    ];

    pub fn is_local(self) -> bool {
        matches!(self, ArtifactKind::Bubble | ArtifactKind::SpecularSpot)
    }
}

/// Which artifact was injected and with what drawn parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactMeta {
    pub kind: ArtifactKind,
    pub params: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImageSample {
    pub image: RgbImage,
    pub domain: Domain,
    pub boxes: Vec<BBox>,
    pub artifact_meta: Option<ArtifactMeta>,
    pub sample_id: String,
}

impl ImageSample {
    /// Checks the box, domain and intensity invariants.
    pub fn check_invariants(&self) -> Result<(), String> {
        let (w, h) = (self.image.width() as f64, self.image.height() as f64);
        for b in &self.boxes {
            if !b.within(w, h) {
                return Err(format!("{}: box {b:?} outside {w}x{h}", self.sample_id));
            }
        }
        if self.domain == Domain::Clean && self.artifact_meta.is_some() {
            return Err(format!("{}: clean sample carries artifact metadata", self.sample_id));
        }
        if self.image.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(format!("{}: intensity outside [0, 1]", self.sample_id));
        }
        Ok(())
    }
}

/// SplitMix64 finaliser; used to derive independent per-sample seeds.
pub(crate) fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
