//! LUT netlists: technology mapping of minimized covers, assembly of a whole
//! network with an argmax tree, simulation, Verilog emission and cost reports.
//!
//! Net ids are dense: primary inputs take `0..inputs.len()`, node `k` drives
//! net `inputs.len() + k`. Nodes only read lower-numbered nets, so the node
//! list is already in topological order.

mod build;
mod mapper;
mod report;
mod verilog;

pub use build::{build_netlist, NeuronLogic};
pub use mapper::{map_cover, map_cover_into, MAX_LUT_SIZE, MIN_LUT_SIZE};
pub use report::{report, CostReport, GroupCost};
pub use verilog::emit_verilog;

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const NETLIST_FORMAT: &str = "logicnn-netlist";
pub const NETLIST_VERSION: u32 = 1;

pub type NetId = usize;

#[derive(Debug, Error)]
pub enum NetlistError {
    #[error("LUT size {0} outside the supported range {MIN_LUT_SIZE}..={MAX_LUT_SIZE}")]
    LutSize(usize),
    #[error("cover has zero inputs")]
    ZeroWidth,
    #[error("cover of width {found} does not match {expected} input nets")]
    WidthMismatch { expected: usize, found: usize },
    #[error("no cover for layer {layer}, neuron {neuron}, bit {bit}")]
    MissingCover {
        layer: usize,
        neuron: usize,
        bit: usize,
    },
    #[error(
        "layer {layer}, neuron {neuron}: input label refers to missing source {input} bit {bit}"
    )]
    DanglingInput {
        layer: usize,
        neuron: usize,
        input: usize,
        bit: u32,
    },
    #[error("layer {layer} is not quantized; cannot build logic for it")]
    NotQuantized { layer: usize },
    #[error("expected {expected} input bits, got {found}")]
    InputWidth { expected: usize, found: usize },
    #[error("invalid netlist: {0}")]
    Invalid(String),
    #[error("netlist I/O: {0}")]
    Io(#[from] std::io::Error),
    #[error("netlist parse: {0}")]
    Parse(String),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NodeKind {
    /// `mask` bit `m` is the output when input `k` carries bit `k` of `m`.
    Lut {
        inputs: Vec<NetId>,
        mask: u64,
    },
    Register {
        input: NetId,
        stage: usize,
    },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub name: String,
    /// Cost-report bucket, e.g. `layer0` or `argmax`.
    pub group: String,
    #[serde(flatten)]
    pub kind: NodeKind,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Output {
    pub name: String,
    pub net: NetId,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Netlist {
    pub format: String,
    pub version: u32,
    pub lut_size: usize,
    pub inputs: Vec<String>,
    pub nodes: Vec<Node>,
    pub outputs: Vec<Output>,
    /// Fingerprint of the network the netlist was built from, if any.
    #[serde(default)]
    pub source_fingerprint: Option<String>,
}

/// Mask of the `k`-input function `f`.
pub(crate) fn lut_mask(k: usize, f: impl Fn(u32) -> bool) -> u64 {
    (0..1u32 << k)
        .filter(|&m| f(m))
        .fold(0u64, |acc, m| acc | 1 << m)
}

fn full_lut_mask(k: usize) -> u64 {
    if k >= 6 {
        u64::MAX
    } else {
        (1u64 << (1 << k)) - 1
    }
}

impl Netlist {
    pub fn new(lut_size: usize, inputs: Vec<String>) -> Result<Self, NetlistError> {
        if !(MIN_LUT_SIZE..=MAX_LUT_SIZE).contains(&lut_size) {
            return Err(NetlistError::LutSize(lut_size));
        }
        Ok(Netlist {
            format: NETLIST_FORMAT.to_owned(),
            version: NETLIST_VERSION,
            lut_size,
            inputs,
            nodes: Vec::new(),
            outputs: Vec::new(),
            source_fingerprint: None,
        })
    }

    pub fn num_nets(&self) -> usize {
        self.inputs.len() + self.nodes.len()
    }

    pub fn node_net(&self, index: usize) -> NetId {
        self.inputs.len() + index
    }

    pub fn node_of(&self, net: NetId) -> Option<&Node> {
        net.checked_sub(self.inputs.len())
            .and_then(|k| self.nodes.get(k))
    }

    pub fn net_name(&self, net: NetId) -> &str {
        match self.node_of(net) {
            Some(node) => &node.name,
            None => &self.inputs[net],
        }
    }

    /// Appends a LUT; `mask` bits above `2^inputs` are cleared.
    pub fn add_lut(&mut self, inputs: Vec<NetId>, mask: u64, name: String, group: &str) -> NetId {
        debug_assert!(!inputs.is_empty() && inputs.len() <= self.lut_size);
        debug_assert!(inputs.iter().all(|&n| n < self.num_nets()));
        let mask = mask & full_lut_mask(inputs.len());
        self.nodes.push(Node {
            name,
            group: group.to_owned(),
            kind: NodeKind::Lut { inputs, mask },
        });
        self.num_nets() - 1
    }

    pub fn add_register(&mut self, input: NetId, stage: usize, name: String, group: &str) -> NetId {
        debug_assert!(input < self.num_nets());
        self.nodes.push(Node {
            name,
            group: group.to_owned(),
            kind: NodeKind::Register { input, stage },
        });
        self.num_nets() - 1
    }

    /// A 1-input LUT that ignores its input.
    pub fn add_constant(&mut self, value: bool, name: String, group: &str) -> NetId {
        let mask = if value { 0b11 } else { 0 };
        self.add_lut(vec![0], mask, name, group)
    }

    pub fn add_output(&mut self, name: String, net: NetId) {
        self.outputs.push(Output { name, net });
    }

    pub fn lut_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n.kind, NodeKind::Lut { .. }))
            .count()
    }

    pub fn ff_count(&self) -> usize {
        self.nodes.len() - self.lut_count()
    }

    /// Register output nets grouped by stage, stages ascending.
    pub fn register_stages(&self) -> Vec<Vec<NetId>> {
        let mut stages: Vec<Vec<NetId>> = Vec::new();
        for (k, node) in self.nodes.iter().enumerate() {
            if let NodeKind::Register { stage, .. } = node.kind {
                if stages.len() <= stage {
                    stages.resize(stage + 1, Vec::new());
                }
                stages[stage].push(self.node_net(k));
            }
        }
        stages
    }

    pub fn is_registered(&self) -> bool {
        self.nodes
            .iter()
            .any(|n| matches!(n.kind, NodeKind::Register { .. }))
    }

    /// Checks ids, LUT arities, mask widths and name uniqueness.
    pub fn validate(&self) -> Result<(), NetlistError> {
        let bad = |msg: String| Err(NetlistError::Invalid(msg));
        if self.format != NETLIST_FORMAT || self.version != NETLIST_VERSION {
            return bad(format!(
                "unsupported format {} v{}",
                self.format, self.version
            ));
        }
        if !(MIN_LUT_SIZE..=MAX_LUT_SIZE).contains(&self.lut_size) {
            return Err(NetlistError::LutSize(self.lut_size));
        }
        if self.inputs.is_empty() {
            return bad("netlist has no primary inputs".into());
        }
        let mut names = HashSet::new();
        for name in self.inputs.iter().chain(self.nodes.iter().map(|n| &n.name)) {
            if !names.insert(name.as_str()) {
                return bad(format!("duplicate net name {name}"));
            }
        }
        for (k, node) in self.nodes.iter().enumerate() {
            let net = self.node_net(k);
            match &node.kind {
                NodeKind::Lut { inputs, mask } => {
                    if inputs.is_empty() || inputs.len() > self.lut_size {
                        return bad(format!("LUT {} has {} inputs", node.name, inputs.len()));
                    }
                    if let Some(&i) = inputs.iter().find(|&&i| i >= net) {
                        return bad(format!(
                            "LUT {} reads net {i} that is not earlier",
                            node.name
                        ));
                    }
                    if mask & !full_lut_mask(inputs.len()) != 0 {
                        return bad(format!("LUT {} mask wider than its table", node.name));
                    }
                }
                NodeKind::Register { input, .. } => {
                    if *input >= net {
                        return bad(format!("register {} reads a later net", node.name));
                    }
                }
            }
        }
        for out in &self.outputs {
            if !names.insert(out.name.as_str()) {
                return bad(format!(
                    "output name {} clashes with another name",
                    out.name
                ));
            }
            if out.net >= self.num_nets() {
                return bad(format!(
                    "output {} refers to missing net {}",
                    out.name, out.net
                ));
            }
        }
        Ok(())
    }

    /// Bit-parallel evaluation: bit `w` of each input word is sample `w`.
    /// Registers are transparent.
    pub fn simulate_words(&self, inputs: &[u64]) -> Result<Vec<u64>, NetlistError> {
        if inputs.len() != self.inputs.len() {
            return Err(NetlistError::InputWidth {
                expected: self.inputs.len(),
                found: inputs.len(),
            });
        }
        let mut values = Vec::with_capacity(self.num_nets());
        values.extend_from_slice(inputs);
        for node in &self.nodes {
            let v = match &node.kind {
                NodeKind::Lut { inputs, mask } => {
                    let words: Vec<u64> = inputs.iter().map(|&i| values[i]).collect();
                    eval_lut(*mask, &words)
                }
                NodeKind::Register { input, .. } => values[*input],
            };
            values.push(v);
        }
        Ok(self.outputs.iter().map(|o| values[o.net]).collect())
    }

    pub fn simulate(&self, inputs: &[bool]) -> Result<Vec<bool>, NetlistError> {
        let words: Vec<u64> = inputs.iter().map(|&b| b as u64).collect();
        Ok(self
            .simulate_words(&words)?
            .into_iter()
            .map(|w| w & 1 == 1)
            .collect())
    }

    pub fn to_text(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("netlist serializes");
        s.push('\n');
        s
    }

    pub fn from_text(text: &str) -> Result<Self, NetlistError> {
        let nl: Netlist =
            serde_json::from_str(text).map_err(|e| NetlistError::Parse(e.to_string()))?;
        nl.validate()?;
        Ok(nl)
    }

    pub fn write(&self, path: &Path) -> Result<(), NetlistError> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self, NetlistError> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

/// Shannon expansion on the highest input, 64 samples at a time.
fn eval_lut(mask: u64, inputs: &[u64]) -> u64 {
    fn go(mask: u64, inputs: &[u64], offset: u32) -> u64 {
        match inputs.split_last() {
            None => {
                if mask >> offset & 1 == 1 {
                    u64::MAX
                } else {
                    0
                }
            }
            Some((&x, rest)) => {
                let half = 1u32 << rest.len();
                let lo = go(mask, rest, offset);
                let hi = go(mask, rest, offset + half);
                (x & hi) | (!x & lo)
            }
        }
    }
    go(mask, inputs, 0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn and_netlist() -> Netlist {
        let mut nl = Netlist::new(6, vec!["a".into(), "b".into()]).unwrap();
        let f = nl.add_lut(vec![0, 1], 0b1000, "f".into(), "layer0");
        nl.add_output("y".into(), f);
        nl
    }

    #[test]
    fn and_lut_simulates() {
        let nl = and_netlist();
        assert_eq!(nl.simulate(&[true, true]).unwrap(), vec![true]);
        assert_eq!(nl.simulate(&[true, false]).unwrap(), vec![false]);
        assert_eq!(nl.simulate(&[false, true]).unwrap(), vec![false]);
    }

    #[test]
    fn constant_lut_is_constant() {
        let mut nl = Netlist::new(6, vec!["a".into()]).unwrap();
        let z = nl.add_constant(false, "zero".into(), "g");
        let o = nl.add_constant(true, "one".into(), "g");
        nl.add_output("z".into(), z);
        nl.add_output("o".into(), o);
        for a in [false, true] {
            assert_eq!(nl.simulate(&[a]).unwrap(), vec![false, true]);
        }
    }

    #[test]
    fn width_mismatch_is_an_error() {
        assert!(matches!(
            and_netlist().simulate(&[true]),
            Err(NetlistError::InputWidth {
                expected: 2,
                found: 1
            })
        ));
    }

    #[test]
    fn word_simulation_matches_mask() {
        // 3-input majority
        let mask = lut_mask(3, |m| m.count_ones() >= 2);
        let mut nl = Netlist::new(3, vec!["a".into(), "b".into(), "c".into()]).unwrap();
        let f = nl.add_lut(vec![0, 1, 2], mask, "maj".into(), "g");
        nl.add_output("y".into(), f);
        let words = [0b1010_1010u64, 0b1100_1100, 0b1111_0000];
        let out = nl.simulate_words(&words).unwrap()[0];
        for lane in 0..8 {
            let ones = (0..3).filter(|&i| words[i] >> lane & 1 == 1).count();
            assert_eq!(out >> lane & 1 == 1, ones >= 2);
        }
    }

    #[test]
    fn round_trip_and_validation() {
        let mut nl = and_netlist();
        nl.source_fingerprint = Some("abc".into());
        let back = Netlist::from_text(&nl.to_text()).unwrap();
        assert_eq!(back, nl);
        let mut broken = nl.clone();
        broken.nodes[0].kind = NodeKind::Lut {
            inputs: vec![0, 2],
            mask: 1,
        };
        assert!(matches!(broken.validate(), Err(NetlistError::Invalid(_))));
        let mut dup = nl;
        dup.nodes[0].name = "a".into();
        assert!(dup.validate().is_err());
    }

    #[test]
    fn lut_size_range() {
        assert!(matches!(
            Netlist::new(1, vec![]),
            Err(NetlistError::LutSize(1))
        ));
        assert!(matches!(
            Netlist::new(7, vec![]),
            Err(NetlistError::LutSize(7))
        ));
    }
}
