use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::network::QuantNetwork;
use super::QnnError;
use crate::dataset::FeatureStats;

pub const CHECKPOINT_FORMAT: &str = "logicnn-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

/// Trained model as pretty-printed JSON.
///
/// Floats are written in shortest round-trip form, so reading and rewriting a
/// checkpoint reproduces it byte for byte.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub seed: u64,
    /// True when no layer carries batch-norm parameters.
    pub folded: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_stats: Option<FeatureStats>,
    pub network: QuantNetwork,
}

impl Checkpoint {
    pub fn new(network: QuantNetwork, seed: u64, feature_stats: Option<FeatureStats>) -> Self {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_owned(),
            version: CHECKPOINT_VERSION,
            seed,
            folded: network.is_folded(),
            feature_stats,
            network,
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("checkpoint serializes");
        s.push('\n');
        s
    }

    pub fn from_text(text: &str) -> Result<Self, QnnError> {
        let ck: Checkpoint =
            serde_json::from_str(text).map_err(|e| QnnError::Checkpoint(e.to_string()))?;
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(QnnError::Checkpoint(format!(
                "unsupported checkpoint {} v{}",
                ck.format, ck.version
            )));
        }
        if ck.folded != ck.network.is_folded() {
            return Err(QnnError::Checkpoint(
                "folded flag disagrees with batch-norm parameters".into(),
            ));
        }
        ck.network.check_shapes()?;
        Ok(ck)
    }

    pub fn write(&self, path: &Path) -> Result<(), QnnError> {
        std::fs::write(path, self.to_text())
            .map_err(|e| QnnError::Checkpoint(format!("{}: {e}", path.display())))
    }

    pub fn read(path: &Path) -> Result<Self, QnnError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| QnnError::Checkpoint(format!("{}: {e}", path.display())))?;
        Self::from_text(&text)
    }

    /// Short content hash identifying this exact network.
    pub fn fingerprint(&self) -> String {
        network_fingerprint(&self.network)
    }
}

pub fn network_fingerprint(net: &QuantNetwork) -> String {
    let json = serde_json::to_string(net).expect("network serializes");
    let digest = Sha256::digest(json.as_bytes());
    hex::encode(&digest[..8])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qnn::{Activation, Architecture, LayerSpec};

    fn net() -> QuantNetwork {
        let arch = Architecture {
            inputs: 3,
            input_quant: Activation::SymmetricPact {
                bits: 2,
                alpha: 1.7,
            },
            layers: vec![
                LayerSpec {
                    width: 4,
                    activation: Activation::Pact {
                        bits: 2,
                        alpha: 0.3,
                    },
                    batch_norm: true,
                },
                LayerSpec {
                    width: 2,
                    activation: Activation::SignedFixed {
                        bits: 8,
                        scale: 0.013,
                    },
                    batch_norm: false,
                },
            ],
        };
        let mut n = QuantNetwork::new(&arch, 42).unwrap();
        n.layers[0].mask[1][2] = false;
        n.layers[0].apply_mask();
        n
    }

    #[test]
    fn write_read_write_is_byte_identical() {
        let ck = Checkpoint::new(net(), 42, None);
        let text = ck.to_text();
        let back = Checkpoint::from_text(&text).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn fingerprint_tracks_content() {
        let a = Checkpoint::new(net(), 1, None);
        let mut other = net();
        other.layers[1].bias[0] += 1e-12;
        let b = Checkpoint::new(other, 1, None);
        assert_ne!(a.fingerprint(), b.fingerprint());
        assert_eq!(
            a.fingerprint(),
            Checkpoint::new(net(), 7, None).fingerprint()
        );
    }

    #[test]
    fn rejects_inconsistent_folded_flag() {
        let mut ck = Checkpoint::new(net(), 1, None);
        ck.folded = true;
        assert!(Checkpoint::from_text(&ck.to_text()).is_err());
    }
}
