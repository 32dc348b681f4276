use std::fs;
use std::path::Path;

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{Arm, RunConfig};
use super::network::Network;
use crate::error::{Error, Result};
use crate::params::ParamStore;

pub const CHECKPOINT_FORMAT: &str = "cdfi-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Position of a ChaCha8 stream, enough to resume it exactly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    /// 32-byte seed, hex encoded.
    pub seed: String,
    /// Word position in the stream, decimal.
    pub word_pos: String,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: rng.get_seed().iter().map(|b| format!("{b:02x}")).collect(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    pub fn restore(&self) -> Result<ChaCha8Rng> {
        use rand::SeedableRng;
        let bad = || Error::Config(format!("malformed rng state {self:?}"));
        if self.seed.len() != 64 {
            return Err(bad());
        }
        let mut seed = [0u8; 32];
        for (i, b) in seed.iter_mut().enumerate() {
            *b = u8::from_str_radix(&self.seed[2 * i..2 * i + 2], 16).map_err(|_| bad())?;
        }
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_word_pos(self.word_pos.parse().map_err(|_| bad())?);
        Ok(rng)
    }
}

/// Self-describing JSON record of a trained model: parameters by name,
/// anchor priors, the full run configuration and its hash, and the data
/// RNG position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub arm: Arm,
    pub config_hash: String,
    pub config: RunConfig,
    pub anchors: Vec<(f64, f64)>,
    pub epoch: usize,
    pub params: ParamStore,
    pub rng: RngState,
}

impl Checkpoint {
    pub fn new(config: &RunConfig, anchors: Vec<(f64, f64)>, epoch: usize, params: ParamStore, rng: &ChaCha8Rng) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            arm: config.arm,
            config_hash: config.hash(),
            config: config.clone(),
            anchors,
            epoch,
            params,
            rng: RngState::capture(rng),
        }
    }

    pub fn network(&self) -> Result<Network> {
        Network::new(&self.config, self.anchors.clone())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            fs::create_dir_all(dir)?;
        }
        fs::write(path, serde_json::to_string(self)? + "\n")?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::Missing(path.to_path_buf()));
        }
        let ckpt: Self = serde_json::from_str(&fs::read_to_string(path)?)?;
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(Error::Config(format!("{} is not a checkpoint", path.display())));
        }
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(Error::Version {
                what: "checkpoint",
                found: ckpt.version,
                expected: CHECKPOINT_VERSION,
            });
        }
        if ckpt.config_hash != ckpt.config.hash() {
            return Err(Error::Config(format!(
                "checkpoint {} does not match its recorded configuration",
                path.display()
            )));
        }
        Ok(ckpt)
    }
}

#[cfg(test)]
mod tests {
    use rand::{RngCore, SeedableRng};

    use super::*;

    #[test]
    fn rng_state_resumes_the_stream() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..37 {
            rng.next_u32();
        }
        let state = RngState::capture(&rng);
        let mut resumed = state.restore().unwrap();
        for _ in 0..10 {
            assert_eq!(rng.next_u64(), resumed.next_u64());
        }
    }

    #[test]
    fn save_load_round_trip_and_missing_file() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = RunConfig::desk().with_arm(Arm::AdainOnly);
        let net = Network::new(&cfg, vec![(10.0, 10.0), (20.0, 20.0), (30.0, 30.0)]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut store = ParamStore::new();
        net.init(&mut store, &mut rng);
        assert!(store.names().all(|n| !n.starts_with("qfc/")));
        let ckpt = Checkpoint::new(&cfg, net.head.spec.anchors.clone(), 3, store, &rng);
        let path = dir.path().join("ck.json");
        ckpt.save(&path).unwrap();
        assert_eq!(Checkpoint::load(&path).unwrap(), ckpt);
        assert!(matches!(Checkpoint::load(&dir.path().join("none.json")), Err(Error::Missing(_))));
    }
}
