#![allow(dead_code)]

use logicnn::dataset::{make_blobs, split, standardize, BlobSpec, Dataset};
use logicnn::qnn::{Activation, Architecture, LayerSpec};

/// Standardized train/test blobs.
pub fn blobs(features: usize, classes: usize, samples: usize, seed: u64) -> (Dataset, Dataset) {
    let ds = make_blobs(&BlobSpec {
        samples,
        features,
        classes,
        separation: 2.5,
        spread: 1.0,
        seed,
    })
    .unwrap();
    let (tr, te) = split(&ds, 0.75, seed).unwrap();
    let (tr, others, _) = standardize(&tr, &[te]).unwrap();
    (tr, others.into_iter().next().unwrap())
}

/// Hidden layers with `bits`-bit PACT activations, symmetric input quantizer,
/// identity classifier.
pub fn mlp(
    inputs: usize,
    hidden: &[usize],
    classes: usize,
    bits: u32,
    batch_norm: bool,
) -> Architecture {
    let mut layers: Vec<LayerSpec> = hidden
        .iter()
        .map(|&width| LayerSpec {
            width,
            activation: Activation::Pact { bits, alpha: 2.0 },
            batch_norm,
        })
        .collect();
    layers.push(LayerSpec {
        width: classes,
        activation: Activation::Identity,
        batch_norm: false,
    });
    Architecture {
        inputs,
        input_quant: Activation::SymmetricPact { bits, alpha: 2.0 },
        layers,
    }
}

/// 16 inputs, widths [16, 16, 4], F=3, 2-bit activations, 4-class blobs.
pub const THREE_LAYER_TASK: &str = r#"
seed = 2024

[dataset]
kind = "blobs"
samples = 2000
features = 16
classes = 4
separation = 1.0

[architecture]
input = { kind = "symmetric_pact", bits = 2, alpha = 2.0 }
layers = [
  { width = 16, activation = { kind = "pact", bits = 2, alpha = 2.0 }, batch_norm = true },
  { width = 16, activation = { kind = "pact", bits = 2, alpha = 2.0 }, batch_norm = true },
  { width = 4, activation = { kind = "identity" } },
]

[training]
epochs = 15
batch_size = 32

[fcp]
fanin = 3
method = "gradual"
duration = 600
prune_every = 10
fine_tune_epochs = 10

[compile]
verify_samples = 10000
"#;
