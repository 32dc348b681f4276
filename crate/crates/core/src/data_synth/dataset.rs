use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::artifacts::{inject_global_artifact_with, inject_local_artifact_with, ArtifactConfig};
use super::scene::{render_clean_scene, SceneParams};
use super::{mix_seed, ArtifactKind, ArtifactMeta, Domain, ImageSample};
use crate::bbox::BBox;
use crate::error::{Error, Result};
use crate::raster::RgbImage;

pub const MANIFEST_FORMAT: &str = "cdfi-dataset";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub clean_count: usize,
    pub artifact_count: usize,
    pub master_seed: u64,
    /// Scene parameters; `rng_seed` is ignored and derived from `master_seed`.
    pub scene: SceneParams,
    pub artifacts: ArtifactConfig,
    /// Artifact kinds drawn uniformly for ADD samples.
    pub kinds: Vec<ArtifactKind>,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        Self {
            clean_count: 600,
            artifact_count: 400,
            master_seed: 2022,
            scene: SceneParams::default(),
            artifacts: ArtifactConfig::default(),
            kinds: ArtifactKind::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Splits {
    pub train: Vec<ImageSample>,
    pub val: Vec<ImageSample>,
    pub test: Vec<ImageSample>,
}

impl Splits {
    pub fn get(&self, split: Split) -> &[ImageSample] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    pub fn counts(&self) -> [usize; 3] {
        [self.train.len(), self.val.len(), self.test.len()]
    }

    pub fn len(&self) -> usize {
        self.train.len() + self.val.len() + self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Cuts an index-ordered sequence 3:1:1 (train and val rounded down).
    fn partition(samples: Vec<ImageSample>) -> Self {
        let n = samples.len();
        let n_train = 3 * n / 5;
        let n_val = n / 5;
        let mut it = samples.into_iter();
        let train = it.by_ref().take(n_train).collect();
        let val = it.by_ref().take(n_val).collect();
        let test = it.collect();
        Self { train, val, test }
    }

    fn union(a: &Splits, b: &Splits) -> Self {
        let cat = |x: &[ImageSample], y: &[ImageSample]| x.iter().chain(y).cloned().collect();
        Self {
            train: cat(&a.train, &b.train),
            val: cat(&a.val, &b.val),
            test: cat(&a.test, &b.test),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub cdd: [usize; 3],
    pub add: [usize; 3],
    pub tdd: [usize; 3],
}

/// Clean-only (CDD), artifact-only (ADD) and union (TDD) datasets.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplits {
    pub cdd: Splits,
    pub add: Splits,
    pub tdd: Splits,
    pub counts: SplitCounts,
    pub image_size: usize,
}

/// Generates all three datasets as a pure function of `config`.
///
/// CDD scenes and the clean sources of ADD samples come from independent
/// scene streams, so no ADD image shares a layout with a CDD image.
pub fn build_datasets(config: &DatasetConfig) -> Result<DatasetSplits> {
    if config.clean_count == 0 || config.artifact_count == 0 {
        return Err(Error::InvalidParameter(
            "clean_count and artifact_count must both be positive".into(),
        ));
    }
    if config.kinds.is_empty() {
        return Err(Error::InvalidParameter("no artifact kinds configured".into()));
    }
    let clean_scene = SceneParams {
        rng_seed: mix_seed(config.master_seed, 1),
        ..config.scene.clone()
    };
    let source_scene = SceneParams {
        rng_seed: mix_seed(config.master_seed, 2),
        ..config.scene.clone()
    };
    let artifact_stream = mix_seed(config.master_seed, 3);

    let mut clean = Vec::with_capacity(config.clean_count);
    for i in 0..config.clean_count {
        let mut s = render_clean_scene(&clean_scene, i as u64)?;
        s.image.quantize();
        s.sample_id = format!("cdd-{i:06}");
        clean.push(s);
    }

    let mut corrupted = Vec::with_capacity(config.artifact_count);
    for j in 0..config.artifact_count {
        let src = render_clean_scene(&source_scene, j as u64)?;
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(artifact_stream, j as u64));
        let kind = config.kinds[rng.gen_range(0..config.kinds.len())];
        let seed: u64 = rng.gen();
        let mut s = if kind.is_local() {
            inject_local_artifact_with(&src, kind, seed, &config.artifacts)?
        } else {
            inject_global_artifact_with(&src, kind, seed, &config.artifacts)?
        };
        s.image.quantize();
        s.sample_id = format!("add-{j:06}");
        corrupted.push(s);
    }

    let cdd = Splits::partition(clean);
    let add = Splits::partition(corrupted);
    let tdd = Splits::union(&cdd, &add);
    let counts = SplitCounts {
        cdd: cdd.counts(),
        add: add.counts(),
        tdd: tdd.counts(),
    };
    Ok(DatasetSplits {
        cdd,
        add,
        tdd,
        counts,
        image_size: config.scene.image_size,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub sample_id: String,
    /// Image path relative to the dataset root.
    pub file: String,
    pub domain: Domain,
    pub boxes: Vec<BBox>,
    pub artifact_meta: Option<ArtifactMeta>,
    pub split: Split,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Manifest {
    format: String,
    version: u32,
    name: String,
    image_size: usize,
    samples: Vec<ManifestEntry>,
}

/// A dataset loaded back from disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub image_size: usize,
    pub splits: Splits,
}

impl DatasetSplits {
    /// Writes `images/<sample_id>.png` plus `cdd.json`, `add.json` and
    /// `tdd.json` manifests under `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        let images = dir.join("images");
        fs::create_dir_all(&images)?;
        for s in Split::ALL
            .iter()
            .flat_map(|&sp| self.cdd.get(sp).iter().chain(self.add.get(sp)))
        {
            s.image.save_png(&images.join(format!("{}.png", s.sample_id)))?;
        }
        for (name, splits) in [("cdd", &self.cdd), ("add", &self.add), ("tdd", &self.tdd)] {
            let samples = Split::ALL
                .iter()
                .flat_map(|&sp| {
                    splits.get(sp).iter().map(move |s| ManifestEntry {
                        sample_id: s.sample_id.clone(),
                        file: format!("images/{}.png", s.sample_id),
                        domain: s.domain,
                        boxes: s.boxes.clone(),
                        artifact_meta: s.artifact_meta.clone(),
                        split: sp,
                    })
                })
                .collect();
            let manifest = Manifest {
                format: MANIFEST_FORMAT.into(),
                version: MANIFEST_VERSION,
                name: name.into(),
                image_size: self.image_size,
                samples,
            };
            let text = serde_json::to_string_pretty(&manifest)?;
            fs::write(dir.join(format!("{name}.json")), text + "\n")?;
        }
        Ok(())
    }
}

/// Loads dataset `name` (`cdd`, `add` or `tdd`) written by
/// [`DatasetSplits::write_to`].
pub fn load_dataset(dir: &Path, name: &str) -> Result<Dataset> {
    let path = dir.join(format!("{name}.json"));
    if !path.exists() {
        return Err(Error::Missing(path));
    }
    let manifest: Manifest = serde_json::from_str(&fs::read_to_string(&path)?)?;
    if manifest.format != MANIFEST_FORMAT {
        return Err(Error::Config(format!("{} is not a dataset manifest", path.display())));
    }
    if manifest.version != MANIFEST_VERSION {
        return Err(Error::Version {
            what: "dataset manifest",
            found: manifest.version,
            expected: MANIFEST_VERSION,
        });
    }
    let mut splits = Splits::default();
    for e in manifest.samples {
        let image = RgbImage::load_png(&dir.join(&e.file))?;
        let sample = ImageSample {
            image,
            domain: e.domain,
            boxes: e.boxes,
            artifact_meta: e.artifact_meta,
            sample_id: e.sample_id,
        };
        match e.split {
            Split::Train => splits.train.push(sample),
            Split::Val => splits.val.push(sample),
            Split::Test => splits.test.push(sample),
        }
    }
    Ok(Dataset {
        name: manifest.name,
        image_size: manifest.image_size,
        splits,
    })
}

#[cfg(test)]
mod tests {
    use std::collections::HashSet;

    use super::*;

    fn small(clean: usize, artifact: usize) -> DatasetConfig {
        DatasetConfig {
            clean_count: clean,
            artifact_count: artifact,
            master_seed: 5,
            scene: SceneParams {
                image_size: 48,
                lumen_radius_range: (5.0, 9.0),
                ..Default::default()
            },
            ..Default::default()
        }
    }

    #[test]
    fn split_arithmetic() {
        let d = build_datasets(&small(300, 200)).unwrap();
        assert_eq!(d.counts.cdd, [180, 60, 60]);
        assert_eq!(d.counts.add, [120, 40, 40]);
        assert_eq!(d.counts.tdd, [300, 100, 100]);
        assert_eq!(d.tdd.len(), 500);
    }

    #[test]
    fn tdd_is_the_union_and_splits_are_disjoint() {
        let d = build_datasets(&small(12, 9)).unwrap();
        for sp in Split::ALL {
            let union: HashSet<&str> = d
                .cdd
                .get(sp)
                .iter()
                .chain(d.add.get(sp))
                .map(|s| s.sample_id.as_str())
                .collect();
            let tdd: HashSet<&str> = d.tdd.get(sp).iter().map(|s| s.sample_id.as_str()).collect();
            assert_eq!(union, tdd);
        }
        for ds in [&d.cdd, &d.add, &d.tdd] {
            let mut seen = HashSet::new();
            for sp in Split::ALL {
                for s in ds.get(sp) {
                    assert!(seen.insert(s.sample_id.clone()));
                }
            }
        }
        for sp in Split::ALL {
            assert!(d.add.get(sp).iter().all(|s| s.artifact_meta.is_some()));
            assert!(d.cdd.get(sp).iter().all(|s| s.domain == Domain::Clean));
        }
    }

    #[test]
    fn zero_counts_rejected() {
        assert!(build_datasets(&small(0, 5)).is_err());
        assert!(build_datasets(&small(5, 0)).is_err());
    }

    #[test]
    fn disk_round_trip_and_byte_identical_manifests() {
        let cfg = small(10, 5);
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let d = build_datasets(&cfg).unwrap();
        d.write_to(a.path()).unwrap();
        build_datasets(&cfg).unwrap().write_to(b.path()).unwrap();
        for name in ["cdd", "add", "tdd"] {
            let fa = fs::read(a.path().join(format!("{name}.json"))).unwrap();
            let fb = fs::read(b.path().join(format!("{name}.json"))).unwrap();
            assert_eq!(fa, fb);
        }
        let loaded = load_dataset(a.path(), "tdd").unwrap();
        assert_eq!(loaded.splits, d.tdd);
        assert!(matches!(load_dataset(a.path(), "nope"), Err(Error::Missing(_))));
    }
}
