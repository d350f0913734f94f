use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::activation::Activation;
use super::QnnError;
use crate::dataset::Dataset;

/// Per-neuron batch normalization in inference form.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BatchNorm {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub eps: f64,
}

impl BatchNorm {
    pub fn identity(width: usize, eps: f64) -> Self {
        BatchNorm {
            gamma: vec![1.0; width],
            beta: vec![0.0; width],
            running_mean: vec![0.0; width],
            running_var: vec![1.0; width],
            eps,
        }
    }

    #[inline]
    pub fn apply(&self, neuron: usize, z: f64) -> f64 {
        self.gamma[neuron] * (z - self.running_mean[neuron])
            / (self.running_var[neuron] + self.eps).sqrt()
            + self.beta[neuron]
    }
}

/// One fully connected layer with a fanin mask and an output quantizer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantLayer {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bn: Option<BatchNorm>,
    #[serde(with = "mask_rows")]
    pub mask: Vec<Vec<bool>>,
    pub activation: Activation,
}

impl QuantLayer {
    pub fn inputs(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    pub fn outputs(&self) -> usize {
        self.weights.len()
    }

    /// Surviving input indices of one neuron, ascending.
    pub fn fanin(&self, neuron: usize) -> Vec<usize> {
        self.mask[neuron]
            .iter()
            .enumerate()
            .filter_map(|(j, &m)| m.then_some(j))
            .collect()
    }

    pub fn max_fanin(&self) -> usize {
        self.mask
            .iter()
            .map(|row| row.iter().filter(|&&m| m).count())
            .max()
            .unwrap_or(0)
    }

    /// Pre-activation of `neuron` with input values supplied by `x`.
    ///
    /// Sums the unmasked products in ascending input order, adds the bias and
    /// applies batch norm when present. `x` is only called for unmasked
    /// inputs. Both the reference forward pass and truth-table extraction go
    /// through this function, which keeps them bit-identical.
    #[inline]
    pub fn preactivation(&self, neuron: usize, x: impl Fn(usize) -> f64) -> f64 {
        let w = &self.weights[neuron];
        let mut acc = 0.0;
        for (j, &keep) in self.mask[neuron].iter().enumerate() {
            if keep {
                acc += w[j] * x(j);
            }
        }
        let z = acc + self.bias[neuron];
        match &self.bn {
            Some(bn) => bn.apply(neuron, z),
            None => z,
        }
    }

    /// Zero every weight outside the mask.
    pub fn apply_mask(&mut self) {
        for (row, mrow) in self.weights.iter_mut().zip(&self.mask) {
            for (w, &m) in row.iter_mut().zip(mrow) {
                if !m {
                    *w = 0.0;
                }
            }
        }
    }
}

/// Absorbs batch norm into the affine weights:
/// `s = gamma / sqrt(var + eps)`, `w' = s·w`, `b' = s·(b − mean) + beta`.
pub fn fold_batchnorm(layer: &QuantLayer) -> Result<QuantLayer, QnnError> {
    let Some(bn) = &layer.bn else {
        return Ok(layer.clone());
    };
    let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
    if !(finite(&bn.gamma)
        && finite(&bn.beta)
        && finite(&bn.running_mean)
        && finite(&bn.running_var)
        && bn.eps.is_finite())
        || bn.running_var.iter().any(|&v| v < 0.0)
    {
        return Err(QnnError::BadBatchNorm);
    }
    let mut out = layer.clone();
    out.bn = None;
    for j in 0..layer.outputs() {
        let s = bn.gamma[j] / (bn.running_var[j] + bn.eps).sqrt();
        out.weights[j].iter_mut().for_each(|w| *w *= s);
        out.bias[j] = s * (layer.bias[j] - bn.running_mean[j]) + bn.beta[j];
    }
    Ok(out)
}

/// Shape of one layer for construction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    pub width: usize,
    pub activation: Activation,
    #[serde(default)]
    pub batch_norm: bool,
}

/// Full network shape.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub inputs: usize,
    pub input_quant: Activation,
    pub layers: Vec<LayerSpec>,
}

/// Layer stack with an input quantizer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuantNetwork {
    pub input_quant: Activation,
    pub layers: Vec<QuantLayer>,
    pub num_classes: usize,
}

/// Everything [`QuantNetwork::forward`] observed for one sample.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace {
    pub class: usize,
    pub input_levels: Vec<i64>,
    /// Integer levels per layer; empty for an unquantized layer.
    pub layer_levels: Vec<Vec<i64>>,
    /// Classifier pre-activations.
    pub scores: Vec<f64>,
}

/// Index of the first maximum.
pub fn argmax_first<T: PartialOrd + Copy>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

impl QuantNetwork {
    /// Random initialization: uniform weights with variance `1/fanin`, zero
    /// bias, identity batch norm, full masks.
    pub fn new(arch: &Architecture, seed: u64) -> Result<Self, QnnError> {
        if arch.layers.is_empty() {
            return Err(QnnError::Config("network needs at least one layer".into()));
        }
        arch.input_quant.validate().map_err(QnnError::Config)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_1a7e);
        let mut fan_in = arch.inputs;
        let mut layers = Vec::with_capacity(arch.layers.len());
        for spec in &arch.layers {
            spec.activation.validate().map_err(QnnError::Config)?;
            if spec.width == 0 {
                return Err(QnnError::Config("layer width must be positive".into()));
            }
            let bound = (3.0 / fan_in as f64).sqrt();
            let weights = (0..spec.width)
                .map(|_| (0..fan_in).map(|_| rng.gen_range(-bound..bound)).collect())
                .collect();
            layers.push(QuantLayer {
                weights,
                bias: vec![0.0; spec.width],
                bn: spec
                    .batch_norm
                    .then(|| BatchNorm::identity(spec.width, 1e-5)),
                mask: vec![vec![true; fan_in]; spec.width],
                activation: spec.activation.clone(),
            });
            fan_in = spec.width;
        }
        Ok(QuantNetwork {
            input_quant: arch.input_quant.clone(),
            num_classes: fan_in,
            layers,
        })
    }

    pub fn num_inputs(&self) -> usize {
        self.layers.first().map_or(0, QuantLayer::inputs)
    }

    /// Quantizer feeding layer `layer`.
    pub fn input_activation(&self, layer: usize) -> &Activation {
        if layer == 0 {
            &self.input_quant
        } else {
            &self.layers[layer - 1].activation
        }
    }

    pub fn is_folded(&self) -> bool {
        self.layers.iter().all(|l| l.bn.is_none())
    }

    pub fn fold_all(&self) -> Result<QuantNetwork, QnnError> {
        let layers = self
            .layers
            .iter()
            .map(fold_batchnorm)
            .collect::<Result<Vec<_>, _>>()?;
        Ok(QuantNetwork {
            layers,
            ..self.clone()
        })
    }

    pub fn check_shapes(&self) -> Result<(), QnnError> {
        let mut width = self.num_inputs();
        for (i, l) in self.layers.iter().enumerate() {
            let bad = l.inputs() != width
                || l.bias.len() != l.outputs()
                || l.mask.len() != l.outputs()
                || l.weights.iter().any(|r| r.len() != width)
                || l.mask.iter().any(|r| r.len() != width)
                || l.bn.as_ref().is_some_and(|bn| {
                    [&bn.gamma, &bn.beta, &bn.running_mean, &bn.running_var]
                        .iter()
                        .any(|v| v.len() != l.outputs())
                });
            if bad {
                return Err(QnnError::Shape(format!(
                    "layer {i} has inconsistent dimensions"
                )));
            }
            width = l.outputs();
        }
        if width != self.num_classes {
            return Err(QnnError::Shape(format!(
                "last layer width {width} != num_classes {}",
                self.num_classes
            )));
        }
        Ok(())
    }

    /// Reference semantics: quantize inputs, then each layer computes
    /// `act((W⊙mask)·x̂ + b)` over dequantized levels. The class is the first
    /// argmax of the classifier levels (or raw scores when unquantized).
    pub fn forward(&self, x: &[f64]) -> Result<ForwardTrace, QnnError> {
        if x.len() != self.num_inputs() {
            return Err(QnnError::DimensionMismatch {
                expected: self.num_inputs(),
                found: x.len(),
            });
        }
        let input_levels: Vec<i64>;
        let mut values: Vec<f64>;
        if self.input_quant.is_quantized() {
            input_levels = x.iter().map(|&v| self.input_quant.quantize(v)).collect();
            values = input_levels
                .iter()
                .map(|&l| self.input_quant.dequantize(l))
                .collect();
        } else {
            input_levels = Vec::new();
            values = x.to_vec();
        }
        let mut layer_levels = Vec::with_capacity(self.layers.len());
        let mut scores = Vec::new();
        for layer in &self.layers {
            let pre: Vec<f64> = (0..layer.outputs())
                .map(|j| layer.preactivation(j, |i| values[i]))
                .collect();
            if layer.activation.is_quantized() {
                let levels: Vec<i64> = pre.iter().map(|&z| layer.activation.quantize(z)).collect();
                values = levels
                    .iter()
                    .map(|&l| layer.activation.dequantize(l))
                    .collect();
                layer_levels.push(levels);
            } else {
                values = pre.clone();
                layer_levels.push(Vec::new());
            }
            scores = pre;
        }
        let class = match layer_levels.last() {
            Some(levels) if !levels.is_empty() => argmax_first(levels),
            _ => argmax_first(&scores),
        };
        Ok(ForwardTrace {
            class,
            input_levels,
            layer_levels,
            scores,
        })
    }

    pub fn predict(&self, x: &[f64]) -> Result<usize, QnnError> {
        self.forward(x).map(|t| t.class)
    }

    /// Replaces the classifier's activation by signed fixed point whose range
    /// covers the largest |pre-activation| seen on `data`.
    pub fn calibrate_output(&mut self, data: &Dataset, bits: u32) -> Result<f64, QnnError> {
        if data.is_empty() {
            return Err(QnnError::EmptyDataset);
        }
        if !(2..=16).contains(&bits) {
            return Err(QnnError::Config(format!(
                "output bits must be in 2..=16, got {bits}"
            )));
        }
        let last = self.layers.len() - 1;
        self.layers[last].activation = Activation::Identity;
        let mut max_abs: f64 = 0.0;
        for x in &data.features {
            let t = self.forward(x)?;
            for s in t.scores {
                max_abs = max_abs.max(s.abs());
            }
        }
        let max_level = ((1i64 << (bits - 1)) - 1) as f64;
        let scale = if max_abs > 0.0 {
            max_abs / max_level
        } else {
            1.0
        };
        self.layers[last].activation = Activation::SignedFixed { bits, scale };
        Ok(scale)
    }
}

/// Fraction of samples classified correctly.
pub fn evaluate(net: &QuantNetwork, data: &Dataset) -> Result<f64, QnnError> {
    if data.is_empty() {
        return Err(QnnError::EmptyDataset);
    }
    let mut correct = 0usize;
    for (x, &y) in data.features.iter().zip(&data.labels) {
        if net.predict(x)? == y {
            correct += 1;
        }
    }
    Ok(correct as f64 / data.len() as f64)
}

/// Masks serialize as one `0`/`1` string per neuron.
mod mask_rows {
    use serde::de::Error;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(mask: &[Vec<bool>], s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<String> = mask
            .iter()
            .map(|r| r.iter().map(|&b| if b { '1' } else { '0' }).collect())
            .collect();
        s.collect_seq(rows)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<bool>>, D::Error> {
        let rows: Vec<String> = Vec::deserialize(d)?;
        rows.iter()
            .map(|r| {
                r.chars()
                    .map(|c| match c {
                        '0' => Ok(false),
                        '1' => Ok(true),
                        other => Err(D::Error::custom(format!("bad mask character {other:?}"))),
                    })
                    .collect()
            })
            .collect()
    }
}
