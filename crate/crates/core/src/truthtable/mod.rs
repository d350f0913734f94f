//! Exhaustive enumeration of neurons into single-output truth tables.
//!
//! Variable layout: surviving input `i` of a neuron (ascending source index)
//! with wire width `bits` occupies table variables `i*bits .. i*bits + bits`,
//! least significant bit first. In PLA text the leftmost column is the highest
//! variable.

mod pla;

pub use pla::{read_pla, write_cover_pla, write_pla, PlaError};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::qnn::{Activation, QuantLayer, QuantNetwork};

/// Default limit on variables per table.
pub const DEFAULT_MAX_TABLE_INPUTS: usize = 12;
/// Absolute limit; extraction refuses anything wider.
pub const HARD_MAX_TABLE_INPUTS: usize = 20;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TruthTableError {
    #[error("layer {layer} neuron {neuron}: {inputs} table inputs exceed the limit of {max}")]
    Infeasible {
        layer: usize,
        neuron: usize,
        inputs: usize,
        max: usize,
    },
    #[error("layer {layer} still carries batch-norm parameters; fold them first")]
    UnfoldedBatchNorm { layer: usize },
    #[error("layer {layer}: {what} is not quantized")]
    NotQuantized { layer: usize, what: &'static str },
    #[error("no such neuron: layer {layer} neuron {neuron}")]
    NoSuchNeuron { layer: usize, neuron: usize },
    #[error("minterm {minterm} out of range for {num_inputs} inputs")]
    MintermOutOfRange { minterm: u32, num_inputs: usize },
}

/// Which upstream wire drives a table variable.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InputLabel {
    /// Index of the source neuron (or input feature for layer 0).
    pub source: usize,
    /// Bit position within the source's encoded level.
    pub bit: u32,
}

/// Completely specified single-output function; the OFF-set is the complement
/// of `on_set`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TruthTable {
    num_inputs: usize,
    on_set: Vec<u32>,
    pub name: String,
    pub input_labels: Vec<InputLabel>,
}

impl TruthTable {
    /// Sorts and deduplicates `on_set`.
    pub fn new(num_inputs: usize, mut on_set: Vec<u32>) -> Result<Self, TruthTableError> {
        on_set.sort_unstable();
        on_set.dedup();
        if let Some(&m) = on_set.last() {
            if num_inputs >= 32 || (m as u64) >= (1u64 << num_inputs) {
                return Err(TruthTableError::MintermOutOfRange {
                    minterm: m,
                    num_inputs,
                });
            }
        }
        Ok(TruthTable {
            num_inputs,
            on_set,
            name: String::new(),
            input_labels: Vec::new(),
        })
    }

    pub fn num_inputs(&self) -> usize {
        self.num_inputs
    }

    /// Ascending ON minterms.
    pub fn on_set(&self) -> &[u32] {
        &self.on_set
    }

    pub fn contains(&self, minterm: u32) -> bool {
        self.on_set.binary_search(&minterm).is_ok()
    }

    pub fn off_set(&self) -> Vec<u32> {
        let mut on = self.on_set.iter().peekable();
        (0..1u32 << self.num_inputs)
            .filter(|m| {
                if on.peek() == Some(&m) {
                    on.next();
                    false
                } else {
                    true
                }
            })
            .collect()
    }
}

/// All tables of one neuron, one per output bit, LSB first.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NeuronTables {
    pub layer: usize,
    pub neuron: usize,
    pub tables: Vec<TruthTable>,
}

pub fn table_name(layer: usize, neuron: usize, bit: usize) -> String {
    format!("{layer}_{neuron}_{bit}")
}

/// A neuron viewed as a function from packed input codes to its output code.
pub struct NeuronFunction<'a> {
    layer: &'a QuantLayer,
    neuron: usize,
    fanin: Vec<usize>,
    in_act: &'a Activation,
    in_bits: u32,
    out_act: &'a Activation,
    out_bits: u32,
    /// Dequantized value of every input code.
    code_values: Vec<f64>,
}

impl<'a> NeuronFunction<'a> {
    pub fn new(
        net: &'a QuantNetwork,
        layer_idx: usize,
        neuron: usize,
        max_inputs: usize,
    ) -> Result<Self, TruthTableError> {
        let layer = net
            .layers
            .get(layer_idx)
            .filter(|l| neuron < l.outputs())
            .ok_or(TruthTableError::NoSuchNeuron {
                layer: layer_idx,
                neuron,
            })?;
        if layer.bn.is_some() {
            return Err(TruthTableError::UnfoldedBatchNorm { layer: layer_idx });
        }
        let in_act = net.input_activation(layer_idx);
        let in_bits = in_act.bits().ok_or(TruthTableError::NotQuantized {
            layer: layer_idx,
            what: "input",
        })?;
        let out_act = &layer.activation;
        let out_bits = out_act.bits().ok_or(TruthTableError::NotQuantized {
            layer: layer_idx,
            what: "output",
        })?;
        let fanin = layer.fanin(neuron);
        let inputs = fanin.len() * in_bits as usize;
        let max = max_inputs.min(HARD_MAX_TABLE_INPUTS);
        if inputs > max {
            return Err(TruthTableError::Infeasible {
                layer: layer_idx,
                neuron,
                inputs,
                max,
            });
        }
        let code_values = (0..1u32 << in_bits)
            .map(|c| in_act.dequantize(in_act.decode(c)))
            .collect();
        Ok(NeuronFunction {
            layer,
            neuron,
            fanin,
            in_act,
            in_bits,
            out_act,
            out_bits,
            code_values,
        })
    }

    pub fn num_inputs(&self) -> usize {
        self.fanin.len() * self.in_bits as usize
    }

    pub fn output_bits(&self) -> usize {
        self.out_bits as usize
    }

    pub fn fanin(&self) -> &[usize] {
        &self.fanin
    }

    pub fn input_labels(&self) -> Vec<InputLabel> {
        self.fanin
            .iter()
            .flat_map(|&source| (0..self.in_bits).map(move |bit| InputLabel { source, bit }))
            .collect()
    }

    /// Input codes packed in minterm `m`, one per surviving input.
    pub fn input_codes(&self, m: u32) -> Vec<u32> {
        let mask = (1u32 << self.in_bits) - 1;
        (0..self.fanin.len())
            .map(|i| (m >> (i as u32 * self.in_bits)) & mask)
            .collect()
    }

    /// Input levels packed in minterm `m`.
    pub fn input_levels(&self, m: u32) -> Vec<i64> {
        self.input_codes(m)
            .into_iter()
            .map(|c| self.in_act.decode(c))
            .collect()
    }

    /// Output level at minterm `m`, computed exactly as the forward pass does.
    pub fn level(&self, m: u32) -> i64 {
        let mut values = vec![0.0; self.layer.inputs()];
        for (&j, code) in self.fanin.iter().zip(self.input_codes(m)) {
            values[j] = self.code_values[code as usize];
        }
        let pre = self.layer.preactivation(self.neuron, |j| values[j]);
        self.out_act.quantize(pre)
    }

    /// Encoded output at minterm `m`.
    pub fn code(&self, m: u32) -> u32 {
        self.out_act.encode(self.level(m))
    }
}

/// Enumerates every input combination of one neuron; returns one table per
/// output bit, all sharing the same input labels.
pub fn extract_neuron(
    net: &QuantNetwork,
    layer: usize,
    neuron: usize,
    max_inputs: usize,
) -> Result<Vec<TruthTable>, TruthTableError> {
    let f = NeuronFunction::new(net, layer, neuron, max_inputs)?;
    let n = f.num_inputs();
    let mut on_sets: Vec<Vec<u32>> = vec![Vec::new(); f.output_bits()];
    for m in 0..1u32 << n {
        let code = f.code(m);
        for (b, set) in on_sets.iter_mut().enumerate() {
            if code & (1 << b) != 0 {
                set.push(m);
            }
        }
    }
    let labels = f.input_labels();
    Ok(on_sets
        .into_iter()
        .enumerate()
        .map(|(b, on_set)| TruthTable {
            num_inputs: n,
            on_set,
            name: table_name(layer, neuron, b),
            input_labels: labels.clone(),
        })
        .collect())
}

/// Extracts every neuron of every layer; neurons are processed in parallel and
/// returned in (layer, neuron) order.
pub fn extract_network(
    net: &QuantNetwork,
    max_inputs: usize,
) -> Result<Vec<Vec<NeuronTables>>, TruthTableError> {
    let jobs: Vec<(usize, usize)> = net
        .layers
        .iter()
        .enumerate()
        .flat_map(|(l, layer)| (0..layer.outputs()).map(move |j| (l, j)))
        .collect();
    let results: Vec<Result<NeuronTables, TruthTableError>> = jobs
        .par_iter()
        .map(|&(layer, neuron)| {
            extract_neuron(net, layer, neuron, max_inputs).map(|tables| NeuronTables {
                layer,
                neuron,
                tables,
            })
        })
        .collect();
    let mut out: Vec<Vec<NeuronTables>> = net.layers.iter().map(|_| Vec::new()).collect();
    for r in results {
        let nt = r?;
        out[nt.layer].push(nt);
    }
    Ok(out)
}

/// Checks that every neuron of every layer fits within `max_inputs` table
/// variables without doing any enumeration.
pub fn check_feasible(net: &QuantNetwork, max_inputs: usize) -> Result<(), TruthTableError> {
    for (l, layer) in net.layers.iter().enumerate() {
        for j in 0..layer.outputs() {
            NeuronFunction::new(net, l, j, max_inputs)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qnn::QuantLayer;

    fn one_layer(weights: Vec<f64>, bias: f64) -> QuantNetwork {
        let n = weights.len();
        QuantNetwork {
            input_quant: Activation::BipolarSign,
            num_classes: 1,
            layers: vec![QuantLayer {
                weights: vec![weights],
                bias: vec![bias],
                bn: None,
                mask: vec![vec![true; n]],
                activation: Activation::BipolarSign,
            }],
        }
    }

    #[test]
    fn and_or_not_neurons() {
        let t = extract_neuron(&one_layer(vec![1.0, 1.0], -0.5), 0, 0, 12).unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t[0].on_set(), &[3]);
        assert_eq!(t[0].name, "0_0_0");
        let t = extract_neuron(&one_layer(vec![1.0, 1.0], 0.5), 0, 0, 12).unwrap();
        assert_eq!(t[0].on_set(), &[1, 2, 3]);
        let t = extract_neuron(&one_layer(vec![-1.0], 0.0), 0, 0, 12).unwrap();
        assert_eq!(t[0].on_set(), &[0]);
    }

    #[test]
    fn labels_follow_surviving_inputs() {
        let mut net = one_layer(vec![1.0, 2.0, 3.0], 0.0);
        net.input_quant = Activation::SymmetricPact {
            bits: 2,
            alpha: 1.0,
        };
        net.layers[0].mask[0] = vec![true, false, true];
        let t = extract_neuron(&net, 0, 0, 12).unwrap();
        assert_eq!(t[0].num_inputs(), 4);
        let labels: Vec<(usize, u32)> = t[0]
            .input_labels
            .iter()
            .map(|l| (l.source, l.bit))
            .collect();
        assert_eq!(labels, vec![(0, 0), (0, 1), (2, 0), (2, 1)]);
    }

    #[test]
    fn multi_bit_outputs_share_inputs() {
        let mut net = one_layer(vec![1.0, -0.5], 0.2);
        net.layers[0].activation = Activation::Pact {
            bits: 3,
            alpha: 2.0,
        };
        let t = extract_neuron(&net, 0, 0, 12).unwrap();
        assert_eq!(t.len(), 3);
        assert!(t.windows(2).all(|w| w[0].input_labels == w[1].input_labels));
        assert_eq!(t[2].name, "0_0_2");
    }

    #[test]
    fn refuses_infeasible_and_unfolded() {
        let net = one_layer(vec![1.0; 5], 0.0);
        assert_eq!(
            extract_neuron(&net, 0, 0, 4),
            Err(TruthTableError::Infeasible {
                layer: 0,
                neuron: 0,
                inputs: 5,
                max: 4
            })
        );
        let mut net = one_layer(vec![1.0; 2], 0.0);
        net.layers[0].bn = Some(crate::qnn::BatchNorm::identity(1, 0.0));
        assert_eq!(
            extract_neuron(&net, 0, 0, 12),
            Err(TruthTableError::UnfoldedBatchNorm { layer: 0 })
        );
        let mut net = one_layer(vec![1.0; 2], 0.0);
        net.layers[0].activation = Activation::Identity;
        assert!(matches!(
            extract_neuron(&net, 0, 0, 12),
            Err(TruthTableError::NotQuantized { .. })
        ));
    }

    #[test]
    fn hard_cap_applies() {
        let net = one_layer(vec![1.0; 21], 0.0);
        assert!(matches!(
            extract_neuron(&net, 0, 0, 30),
            Err(TruthTableError::Infeasible { max: 20, .. })
        ));
    }

    #[test]
    fn network_error_names_neuron() {
        let mut net = QuantNetwork {
            input_quant: Activation::BipolarSign,
            num_classes: 3,
            layers: vec![
                QuantLayer {
                    weights: vec![vec![1.0; 4]; 4],
                    bias: vec![0.0; 4],
                    bn: None,
                    mask: vec![vec![true, true, false, false]; 4],
                    activation: Activation::BipolarSign,
                },
                QuantLayer {
                    weights: vec![vec![1.0; 4]; 3],
                    bias: vec![0.0; 3],
                    bn: None,
                    mask: vec![vec![true, true, false, false]; 3],
                    activation: Activation::BipolarSign,
                },
            ],
        };
        let tables = extract_network(&net, 2).unwrap();
        assert_eq!(
            tables
                .iter()
                .flatten()
                .map(|n| n.tables.len())
                .sum::<usize>(),
            7
        );
        net.layers[1].mask[2] = vec![true; 4];
        assert_eq!(
            extract_network(&net, 2),
            Err(TruthTableError::Infeasible {
                layer: 1,
                neuron: 2,
                inputs: 4,
                max: 2
            })
        );
    }

    #[test]
    fn off_set_is_complement() {
        let t = TruthTable::new(3, vec![5, 1, 5]).unwrap();
        assert_eq!(t.on_set(), &[1, 5]);
        assert_eq!(t.off_set(), vec![0, 2, 3, 4, 6, 7]);
        assert!(TruthTable::new(2, vec![4]).is_err());
    }
}
