//! Structural Verilog: one module, LUTs as sum-of-products assigns.

use std::fmt::Write;

use super::{NetId, Netlist, NodeKind};
use crate::twolevel::exact_minimize;

fn identifier(name: &str) -> String {
    let mut s: String = name
        .chars()
        .map(|c| {
            if c.is_ascii_alphanumeric() || c == '_' {
                c
            } else {
                '_'
            }
        })
        .collect();
    if !s.starts_with(|c: char| c.is_ascii_alphabetic() || c == '_') {
        s.insert(0, '_');
    }
    s
}

fn sop(nl: &Netlist, inputs: &[NetId], mask: u64) -> String {
    let k = inputs.len();
    let on: Vec<u32> = (0..1u32 << k).filter(|&m| mask >> m & 1 == 1).collect();
    let cover = exact_minimize(k, &on, &[]).expect("LUT width is within exact range");
    if cover.is_empty() {
        return "1'b0".into();
    }
    let terms: Vec<String> = cover
        .cubes()
        .iter()
        .map(|cube| {
            let lits: Vec<String> = (0..k)
                .filter(|&v| cube.care() >> v & 1 == 1)
                .map(|v| {
                    let name = identifier(nl.net_name(inputs[v]));
                    if cube.value() >> v & 1 == 1 {
                        name
                    } else {
                        format!("~{name}")
                    }
                })
                .collect();
            match lits.len() {
                0 => "1'b1".to_owned(),
                1 => lits.into_iter().next().unwrap(),
                _ => format!("({})", lits.join(" & ")),
            }
        })
        .collect();
    terms.join(" | ")
}

/// Emits `nl` as a single module. A `clk` port is added when the netlist has
/// registers. Identical netlists give identical text.
pub fn emit_verilog(nl: &Netlist, module_name: &str) -> String {
    let mut s = String::new();
    let registered = nl.is_registered();
    writeln!(
        s,
        "// LUT netlist, K = {}, {} LUTs, {} registers ({})",
        nl.lut_size,
        nl.lut_count(),
        nl.ff_count(),
        super::report::ESTIMATE_NOTE
    )
    .unwrap();
    if let Some(fp) = &nl.source_fingerprint {
        writeln!(s, "// source network {fp}").unwrap();
    }
    writeln!(s, "module {} (", identifier(module_name)).unwrap();
    let mut ports: Vec<String> = Vec::new();
    if registered {
        ports.push("input wire clk".into());
    }
    ports.extend(
        nl.inputs
            .iter()
            .map(|n| format!("input wire {}", identifier(n))),
    );
    ports.extend(
        nl.outputs
            .iter()
            .map(|o| format!("output wire {}", identifier(&o.name))),
    );
    writeln!(s, "    {}", ports.join(",\n    ")).unwrap();
    writeln!(s, ");").unwrap();

    for node in &nl.nodes {
        let kw = match node.kind {
            NodeKind::Lut { .. } => "wire",
            NodeKind::Register { .. } => "reg",
        };
        writeln!(s, "    {kw} {};", identifier(&node.name)).unwrap();
    }
    writeln!(s).unwrap();
    for node in &nl.nodes {
        if let NodeKind::Lut { inputs, mask } = &node.kind {
            writeln!(
                s,
                "    assign {} = {};",
                identifier(&node.name),
                sop(nl, inputs, *mask)
            )
            .unwrap();
        }
    }
    for (stage, nets) in nl.register_stages().iter().enumerate() {
        if nets.is_empty() {
            continue;
        }
        writeln!(s).unwrap();
        writeln!(s, "    // register stage {stage}").unwrap();
        writeln!(s, "    always @(posedge clk) begin").unwrap();
        for &net in nets {
            let node = nl.node_of(net).expect("register net");
            if let NodeKind::Register { input, .. } = node.kind {
                writeln!(
                    s,
                    "        {} <= {};",
                    identifier(&node.name),
                    identifier(nl.net_name(input))
                )
                .unwrap();
            }
        }
        writeln!(s, "    end").unwrap();
    }
    writeln!(s).unwrap();
    for out in &nl.outputs {
        writeln!(
            s,
            "    assign {} = {};",
            identifier(&out.name),
            identifier(nl.net_name(out.net))
        )
        .unwrap();
    }
    writeln!(s, "endmodule").unwrap();
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn and_netlist(pipeline: bool) -> Netlist {
        let mut nl = Netlist::new(6, vec!["a".into(), "b".into()]).unwrap();
        let mut f = nl.add_lut(vec![0, 1], 0b1000, "f".into(), "layer0");
        if pipeline {
            f = nl.add_register(f, 0, "f_q".into(), "layer0");
        }
        nl.add_output("y".into(), f);
        nl
    }

    #[test]
    fn and_gate_assign() {
        let v = emit_verilog(&and_netlist(false), "top");
        assert!(v.contains("assign f = (a & b);"), "{v}");
        assert!(!v.contains("clk"));
        assert!(v.contains("module top ("));
        assert!(v.trim_end().ends_with("endmodule"));
    }

    #[test]
    fn registers_and_clock() {
        let nl = and_netlist(true);
        let v = emit_verilog(&nl, "top");
        assert!(v.contains("input wire clk"));
        assert_eq!(v.matches("    reg ").count(), nl.ff_count());
        assert!(v.contains("f_q <= f;"));
        assert!(v.contains("assign y = f_q;"));
    }

    #[test]
    fn constants_and_inversions() {
        let mut nl = Netlist::new(6, vec!["a".into(), "b".into()]).unwrap();
        let z = nl.add_constant(false, "z".into(), "g");
        let o = nl.add_constant(true, "o".into(), "g");
        let x = nl.add_lut(vec![0, 1], 0b0110, "x".into(), "g");
        for (n, net) in [("p", z), ("q", o), ("r", x)] {
            nl.add_output(n.into(), net);
        }
        let v = emit_verilog(&nl, "1bad-name");
        assert!(v.contains("module _1bad_name ("));
        assert!(v.contains("assign z = 1'b0;"));
        assert!(v.contains("assign o = 1'b1;"));
        assert!(v.contains("assign x = (a & ~b) | (~a & b);"), "{v}");
    }

    #[test]
    fn deterministic() {
        let nl = and_netlist(true);
        assert_eq!(emit_verilog(&nl, "m"), emit_verilog(&nl.clone(), "m"));
    }
}
