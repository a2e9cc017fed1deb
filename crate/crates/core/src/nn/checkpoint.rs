//! JSON checkpoints: a format version, one or more networks (config plus
//! parameters in layer order, weight then bias, row-major) and free-form
//! metadata. Floats round-trip bitwise.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::mlp::Mlp;
use crate::error::{Error, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format_version: u32,
    pub members: Vec<Mlp>,
    #[serde(default)]
    pub metadata: serde_json::Value,
}

impl Checkpoint {
    pub fn new(members: Vec<Mlp>, metadata: serde_json::Value) -> Self {
        Self {
            format_version: CHECKPOINT_VERSION,
            members,
            metadata,
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, serde_json::to_string(self)?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        if !path.exists() {
            return Err(Error::MissingFile(path.to_path_buf()));
        }
        let ck: Checkpoint = serde_json::from_str(&fs::read_to_string(path)?)?;
        if ck.format_version != CHECKPOINT_VERSION {
            return Err(Error::Config(format!(
                "checkpoint format {} is not supported (expected {CHECKPOINT_VERSION})",
                ck.format_version
            )));
        }
        let members = ck
            .members
            .into_iter()
            .map(|m| Mlp::from_params(m.config().clone(), m.params().to_vec()))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { members, ..ck })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::mlp::{HeadKind, MlpConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn round_trips_bitwise() {
        let cfg = MlpConfig {
            input_dim: 2,
            hidden_sizes: vec![7],
            activation: Default::default(),
            head: HeadKind::NormalWishart,
            output_dim: 2,
        };
        let net = Mlp::new(cfg, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let ck = Checkpoint::new(vec![net.clone(), net], serde_json::json!({"kind": "test"}));
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ck.json");
        ck.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        assert_eq!(back, ck);
        for (a, b) in back.members[0].params().iter().zip(ck.members[0].params()) {
            for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        assert!(matches!(
            Checkpoint::load(&dir.path().join("nope.json")),
            Err(Error::MissingFile(_))
        ));
    }
}
