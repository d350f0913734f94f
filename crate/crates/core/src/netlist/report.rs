//! Pre-synthesis cost estimates.

use std::collections::BTreeMap;
use std::fmt::Write;

use serde::{Deserialize, Serialize};

use super::{Netlist, NodeKind};

pub const ESTIMATE_NOTE: &str = "pre-synthesis estimate";

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupCost {
    pub luts: usize,
    pub ffs: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostReport {
    pub note: String,
    pub lut_size: usize,
    pub lut_count: usize,
    pub ff_count: usize,
    /// Longest chain of LUTs between registers or ports.
    pub depth: usize,
    /// Register stages a sample passes through.
    pub latency_cycles: usize,
    pub groups: BTreeMap<String, GroupCost>,
}

pub fn report(nl: &Netlist) -> CostReport {
    let mut level = vec![0usize; nl.num_nets()];
    let mut depth = 0;
    let mut groups: BTreeMap<String, GroupCost> = BTreeMap::new();
    for (k, node) in nl.nodes.iter().enumerate() {
        let net = nl.node_net(k);
        let entry = groups.entry(node.group.clone()).or_default();
        match &node.kind {
            NodeKind::Lut { inputs, .. } => {
                level[net] = 1 + inputs.iter().map(|&i| level[i]).max().unwrap_or(0);
                depth = depth.max(level[net]);
                entry.luts += 1;
            }
            NodeKind::Register { .. } => entry.ffs += 1,
        }
    }
    CostReport {
        note: ESTIMATE_NOTE.to_owned(),
        lut_size: nl.lut_size,
        lut_count: nl.lut_count(),
        ff_count: nl.ff_count(),
        depth,
        latency_cycles: nl
            .register_stages()
            .iter()
            .filter(|s| !s.is_empty())
            .count(),
        groups,
    }
}

impl CostReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Human-readable table.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        writeln!(s, "Cost report ({}, K = {})", self.note, self.lut_size).unwrap();
        writeln!(s, "{:<12} {:>8} {:>8}", "group", "LUTs", "FFs").unwrap();
        for (name, g) in &self.groups {
            writeln!(s, "{:<12} {:>8} {:>8}", name, g.luts, g.ffs).unwrap();
        }
        writeln!(
            s,
            "{:<12} {:>8} {:>8}",
            "total", self.lut_count, self.ff_count
        )
        .unwrap();
        writeln!(s, "logic depth: {} LUT levels", self.depth).unwrap();
        writeln!(s, "latency: {} cycles", self.latency_cycles).unwrap();
        s
    }
}
