//! Equivalence checks between a quantized network and its compiled logic.

use std::fmt::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Dataset;
use crate::netlist::{Netlist, NetlistError, NeuronLogic};
use crate::qnn::{Activation, QnnError, QuantNetwork};
use crate::truthtable::{NeuronFunction, TruthTableError, HARD_MAX_TABLE_INPUTS};
use crate::twolevel::Cover;

/// Tables up to this many inputs are checked on every minterm.
pub const EXHAUSTIVE_LIMIT: usize = 12;
/// Minterms sampled for wider tables.
pub const RANDOM_MINTERMS: usize = 10_000;
/// End-to-end witnesses kept in a report.
pub const MAX_WITNESSES: usize = 10;

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Table(#[from] TruthTableError),
    #[error(transparent)]
    Network(#[from] QnnError),
    #[error(transparent)]
    Netlist(#[from] NetlistError),
    #[error("layer {layer} neuron {neuron}: expected {expected} covers, got {found}")]
    MissingCovers {
        layer: usize,
        neuron: usize,
        expected: usize,
        found: usize,
    },
    #[error(
        "layer {layer} neuron {neuron} bit {bit}: cover width {found}, table has {expected} inputs"
    )]
    CoverWidth {
        layer: usize,
        neuron: usize,
        bit: usize,
        expected: usize,
        found: usize,
    },
    #[error("netlist has {found} primary inputs, network needs {expected}")]
    InputMismatch { expected: usize, found: usize },
    #[error("dataset is empty")]
    EmptyDataset,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeuronWitness {
    pub minterm: u32,
    /// Levels of the surviving inputs, in ascending source order.
    pub input_levels: Vec<i64>,
    pub expected: bool,
    pub found: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BitCheck {
    pub bit: usize,
    pub checked: u64,
    pub mismatches: u64,
    /// First mismatching minterm in checking order.
    pub witness: Option<NeuronWitness>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct NeuronCheck {
    pub layer: usize,
    pub neuron: usize,
    pub exhaustive: bool,
    pub bits: Vec<BitCheck>,
}

impl NeuronCheck {
    pub fn passed(&self) -> bool {
        self.bits.iter().all(|b| b.mismatches == 0)
    }
}

fn neuron_seed(seed: u64, layer: usize, neuron: usize) -> u64 {
    seed ^ ((layer as u64) << 40) ^ ((neuron as u64) << 8) ^ 0x9e37_79b9_7f4a_7c15
}

/// Compares each bit's cover with direct evaluation of the neuron, on every
/// minterm for up to [`EXHAUSTIVE_LIMIT`] inputs and on [`RANDOM_MINTERMS`]
/// seeded random minterms beyond that.
pub fn check_neuron(
    net: &QuantNetwork,
    layer: usize,
    neuron: usize,
    covers: &[Cover],
    seed: u64,
) -> Result<NeuronCheck, VerifyError> {
    let f = NeuronFunction::new(net, layer, neuron, HARD_MAX_TABLE_INPUTS)?;
    let n = f.num_inputs();
    let bits = f.output_bits();
    if covers.len() != bits {
        return Err(VerifyError::MissingCovers {
            layer,
            neuron,
            expected: bits,
            found: covers.len(),
        });
    }
    for (bit, c) in covers.iter().enumerate() {
        if c.width() != n {
            return Err(VerifyError::CoverWidth {
                layer,
                neuron,
                bit,
                expected: n,
                found: c.width(),
            });
        }
    }
    let exhaustive = n <= EXHAUSTIVE_LIMIT;
    let minterms: Vec<u32> = if exhaustive {
        (0..1u32 << n).collect()
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(neuron_seed(seed, layer, neuron));
        (0..RANDOM_MINTERMS)
            .map(|_| rng.gen_range(0..1u32 << n))
            .collect()
    };
    let mut checks: Vec<BitCheck> = (0..bits)
        .map(|bit| BitCheck {
            bit,
            checked: 0,
            mismatches: 0,
            witness: None,
        })
        .collect();
    for &m in &minterms {
        let code = f.code(m);
        for (bit, check) in checks.iter_mut().enumerate() {
            let expected = code >> bit & 1 == 1;
            let found = covers[bit].contains_minterm(m);
            check.checked += 1;
            if expected != found {
                check.mismatches += 1;
                if check.witness.is_none() {
                    check.witness = Some(NeuronWitness {
                        minterm: m,
                        input_levels: f.input_levels(m),
                        expected,
                        found,
                    });
                }
            }
        }
    }
    Ok(NeuronCheck {
        layer,
        neuron,
        exhaustive,
        bits: checks,
    })
}

/// [`check_neuron`] for every neuron, in parallel, ordered by (layer, neuron).
pub fn check_all_neurons(
    net: &QuantNetwork,
    logic: &[NeuronLogic],
    seed: u64,
) -> Result<Vec<NeuronCheck>, VerifyError> {
    let mut results = logic
        .par_iter()
        .map(|l| check_neuron(net, l.layer, l.neuron, &l.covers, seed))
        .collect::<Result<Vec<_>, _>>()?;
    results.sort_by_key(|c| (c.layer, c.neuron));
    Ok(results)
}

/// Classes computed by the netlist's `class_<b>` outputs. A netlist without
/// class outputs (one class) always answers 0.
pub fn netlist_classes(
    nl: &Netlist,
    input_quant: &Activation,
    features: &[Vec<f64>],
) -> Result<Vec<usize>, VerifyError> {
    let bits = input_quant
        .bits()
        .ok_or(VerifyError::Table(TruthTableError::NotQuantized {
            layer: 0,
            what: "input",
        }))? as usize;
    let class_outputs: Vec<(usize, usize)> = nl
        .outputs
        .iter()
        .enumerate()
        .filter_map(|(pos, o)| {
            o.name
                .strip_prefix("class_")
                .and_then(|b| b.parse::<usize>().ok())
                .map(|b| (b, pos))
        })
        .collect();
    let mut classes = Vec::with_capacity(features.len());
    for chunk in features.chunks(64) {
        let mut words = vec![0u64; nl.inputs.len()];
        for (lane, x) in chunk.iter().enumerate() {
            if x.len() * bits != nl.inputs.len() {
                return Err(VerifyError::InputMismatch {
                    expected: x.len() * bits,
                    found: nl.inputs.len(),
                });
            }
            for (i, &v) in x.iter().enumerate() {
                let code = input_quant.encode(input_quant.quantize(v));
                for p in 0..bits {
                    words[i * bits + p] |= ((code >> p & 1) as u64) << lane;
                }
            }
        }
        let outs = nl.simulate_words(&words)?;
        for lane in 0..chunk.len() {
            let class = class_outputs.iter().fold(0usize, |acc, &(b, pos)| {
                acc | ((outs[pos] >> lane & 1) as usize) << b
            });
            classes.push(class);
        }
    }
    Ok(classes)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EndToEndWitness {
    pub sample: usize,
    pub input_levels: Vec<i64>,
    pub expected: usize,
    pub found: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EndToEndCheck {
    pub samples: usize,
    pub mismatches: usize,
    pub witnesses: Vec<EndToEndWitness>,
    pub warning: Option<String>,
}

impl EndToEndCheck {
    pub fn passed(&self) -> bool {
        self.mismatches == 0
    }
}

/// Draws `samples` standard-normal input vectors and compares the network's
/// class with the netlist's.
pub fn check_end_to_end(
    net: &QuantNetwork,
    nl: &Netlist,
    samples: usize,
    seed: u64,
) -> Result<EndToEndCheck, VerifyError> {
    let bits = net
        .input_quant
        .bits()
        .ok_or(VerifyError::Table(TruthTableError::NotQuantized {
            layer: 0,
            what: "input",
        }))? as usize;
    let expected_inputs = net.num_inputs() * bits;
    if nl.inputs.len() != expected_inputs {
        return Err(VerifyError::InputMismatch {
            expected: expected_inputs,
            found: nl.inputs.len(),
        });
    }
    if samples == 0 {
        log::warn!("end-to-end check with zero samples passes vacuously");
        return Ok(EndToEndCheck {
            samples: 0,
            mismatches: 0,
            witnesses: Vec::new(),
            warning: Some("zero samples requested; pass is vacuous".into()),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs: Vec<Vec<f64>> = (0..samples)
        .map(|_| {
            (0..net.num_inputs())
                .map(|_| rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect();
    let found = netlist_classes(nl, &net.input_quant, &inputs)?;
    let expected = inputs
        .par_iter()
        .map(|x| net.forward(x).map(|t| (t.class, t.input_levels)))
        .collect::<Result<Vec<_>, _>>()?;
    let mut check = EndToEndCheck {
        samples,
        mismatches: 0,
        witnesses: Vec::new(),
        warning: None,
    };
    for (sample, ((class, levels), &got)) in expected.into_iter().zip(&found).enumerate() {
        if class != got {
            check.mismatches += 1;
            if check.witnesses.len() < MAX_WITNESSES {
                check.witnesses.push(EndToEndWitness {
                    sample,
                    input_levels: levels,
                    expected: class,
                    found: got,
                });
            }
        }
    }
    Ok(check)
}

/// Fraction of `data` the netlist classifies correctly.
pub fn logic_accuracy(
    nl: &Netlist,
    data: &Dataset,
    input_quant: &Activation,
) -> Result<f64, VerifyError> {
    if data.is_empty() {
        return Err(VerifyError::EmptyDataset);
    }
    let classes = netlist_classes(nl, input_quant, &data.features)?;
    let correct = classes
        .iter()
        .zip(&data.labels)
        .filter(|(a, b)| a == b)
        .count();
    Ok(correct as f64 / data.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EquivalenceReport {
    pub neurons: Vec<NeuronCheck>,
    pub end_to_end: Option<EndToEndCheck>,
    pub logic_accuracy: Option<f64>,
    pub network_accuracy: Option<f64>,
}

impl EquivalenceReport {
    pub fn passed(&self) -> bool {
        self.neurons.iter().all(NeuronCheck::passed)
            && self.end_to_end.as_ref().is_none_or(EndToEndCheck::passed)
            && match (self.logic_accuracy, self.network_accuracy) {
                (Some(a), Some(b)) => a == b,
                _ => true,
            }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let failed: Vec<&NeuronCheck> = self.neurons.iter().filter(|n| !n.passed()).collect();
        let minterms: u64 = self
            .neurons
            .iter()
            .flat_map(|n| &n.bits)
            .map(|b| b.checked)
            .sum();
        writeln!(
            s,
            "neurons: {} checked, {} failed, {} minterm checks",
            self.neurons.len(),
            failed.len(),
            minterms
        )
        .unwrap();
        for n in failed {
            for b in n.bits.iter().filter(|b| b.mismatches > 0) {
                let w = b.witness.as_ref().expect("mismatch has a witness");
                writeln!(
                    s,
                    "  FAIL layer {} neuron {} bit {}: {} mismatches, first at minterm {} (levels {:?}), expected {} got {}",
                    n.layer, n.neuron, b.bit, b.mismatches, w.minterm, w.input_levels,
                    w.expected as u8, w.found as u8
                )
                .unwrap();
            }
        }
        if let Some(e) = &self.end_to_end {
            writeln!(
                s,
                "end-to-end: {} samples, {} mismatches",
                e.samples, e.mismatches
            )
            .unwrap();
            if let Some(w) = &e.warning {
                writeln!(s, "  warning: {w}").unwrap();
            }
            for w in &e.witnesses {
                writeln!(
                    s,
                    "  FAIL sample {}: levels {:?}, network class {}, logic class {}",
                    w.sample, w.input_levels, w.expected, w.found
                )
                .unwrap();
            }
        }
        if let (Some(l), Some(n)) = (self.logic_accuracy, self.network_accuracy) {
            writeln!(s, "accuracy: logic {l:.4}, network {n:.4}").unwrap();
        }
        writeln!(s, "result: {}", if self.passed() { "PASS" } else { "FAIL" }).unwrap();
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netlist::build_netlist;
    use crate::qnn::QuantLayer;
    use crate::truthtable::extract_neuron;

    fn and_net() -> QuantNetwork {
        QuantNetwork {
            input_quant: Activation::BipolarSign,
            num_classes: 1,
            layers: vec![QuantLayer {
                weights: vec![vec![1.0, 1.0]],
                bias: vec![-0.5],
                bn: None,
                mask: vec![vec![true; 2]],
                activation: Activation::BipolarSign,
            }],
        }
    }

    #[test]
    fn and_cover_passes() {
        let cover = Cover::parse(2, &["11"]).unwrap();
        let r = check_neuron(&and_net(), 0, 0, &[cover], 0).unwrap();
        assert!(r.passed() && r.exhaustive);
        assert_eq!(r.bits[0].checked, 4);
    }

    #[test]
    fn flipped_minterm_is_the_witness() {
        let cover = Cover::parse(2, &["11", "01"]).unwrap();
        let r = check_neuron(&and_net(), 0, 0, &[cover], 0).unwrap();
        assert!(!r.passed());
        let w = r.bits[0].witness.as_ref().unwrap();
        assert_eq!(w.minterm, 1);
        assert_eq!(w.input_levels, vec![1, -1]);
        assert!(!w.expected && w.found);
    }

    #[test]
    fn every_bit_is_checked() {
        let mut net = and_net();
        net.input_quant = Activation::Pact {
            bits: 2,
            alpha: 3.0,
        };
        net.layers[0].activation = Activation::Pact {
            bits: 2,
            alpha: 3.0,
        };
        net.layers[0].bias = vec![0.0];
        let tables = extract_neuron(&net, 0, 0, 12).unwrap();
        let mut covers: Vec<Cover> = tables
            .iter()
            .map(|t| Cover::from_minterms(4, t.on_set().iter().copied()))
            .collect();
        let r = check_neuron(&net, 0, 0, &covers, 0).unwrap();
        assert!(r.passed());
        assert_eq!(r.bits.len(), 2);
        assert!(r.bits.iter().all(|b| b.checked == 16));
        covers[1] = Cover::empty(4);
        let r = check_neuron(&net, 0, 0, &covers, 0).unwrap();
        assert!(r.bits[0].mismatches == 0 && r.bits[1].mismatches > 0);
    }

    #[test]
    fn missing_bits_are_an_error() {
        assert!(matches!(
            check_neuron(&and_net(), 0, 0, &[], 0),
            Err(VerifyError::MissingCovers { .. })
        ));
    }

    fn two_class_net() -> QuantNetwork {
        QuantNetwork {
            input_quant: Activation::BipolarSign,
            num_classes: 2,
            layers: vec![QuantLayer {
                weights: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
                bias: vec![0.0, 0.0],
                bn: None,
                mask: vec![vec![true, false], vec![false, true]],
                activation: Activation::BipolarSign,
            }],
        }
    }

    fn compile(net: &QuantNetwork) -> Netlist {
        let logic: Vec<NeuronLogic> = (0..net.layers[0].outputs())
            .map(|j| {
                let tables = extract_neuron(net, 0, j, 12).unwrap();
                NeuronLogic {
                    layer: 0,
                    neuron: j,
                    input_labels: tables[0].input_labels.clone(),
                    covers: tables
                        .iter()
                        .map(|t| Cover::from_minterms(t.num_inputs(), t.on_set().iter().copied()))
                        .collect(),
                }
            })
            .collect();
        build_netlist(net, &logic, 6, false).unwrap()
    }

    #[test]
    fn end_to_end_pass_and_vacuous() {
        let net = two_class_net();
        let nl = compile(&net);
        let r = check_end_to_end(&net, &nl, 500, 1).unwrap();
        assert!(r.passed() && r.warning.is_none());
        let r = check_end_to_end(&net, &nl, 0, 1).unwrap();
        assert!(r.passed() && r.warning.is_some());
    }

    #[test]
    fn constant_logic_accuracy() {
        let net = two_class_net();
        let mut nl = compile(&net);
        let zero = nl.add_constant(false, "zero".into(), "test");
        for o in nl
            .outputs
            .iter_mut()
            .filter(|o| o.name.starts_with("class_"))
        {
            o.net = zero;
        }
        let data = Dataset::new(vec![vec![0.5, 0.5], vec![-0.5, 0.5]], vec![0, 1], 2).unwrap();
        assert_eq!(logic_accuracy(&nl, &data, &net.input_quant).unwrap(), 0.5);
        let empty = Dataset {
            features: vec![],
            labels: vec![],
            num_classes: 2,
            feature_names: None,
        };
        assert!(matches!(
            logic_accuracy(&nl, &empty, &net.input_quant),
            Err(VerifyError::EmptyDataset)
        ));
    }
}
