mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use logicnn::config::CompileConfig;
use logicnn::netlist::{emit_verilog, NodeKind};
use logicnn::pipeline::compile_network;
use logicnn::pruning::{apply_gradual_fcp, FcpConfig};
use logicnn::qnn::{evaluate, train, QuantNetwork, TrainConfig};
use logicnn::truthtable::extract_network;
use logicnn::twolevel::{Cover, Cube};
use logicnn::verify::{check_end_to_end, check_neuron, logic_accuracy, MAX_WITNESSES};

/// Trained, pruned to F=3, folded and calibrated: 6 inputs, widths [6, 3].
fn small_network() -> (QuantNetwork, logicnn::dataset::Dataset) {
    let (tr, te) = common::blobs(6, 3, 450, 71);
    let net = QuantNetwork::new(&common::mlp(6, &[6], 3, 2, true), 72).unwrap();
    let hyper = TrainConfig {
        epochs: 6,
        batch_size: 32,
        seed: 73,
        ..TrainConfig::default()
    };
    let base = train(&net, &tr, &te, &hyper).unwrap();
    let mut fcp = FcpConfig::gradual(3);
    fcp.duration = 60;
    fcp.fine_tune_epochs = 2;
    let pruned = apply_gradual_fcp(&base.net, &tr, &te, &fcp, &hyper, 12).unwrap();
    let mut net = pruned.net.fold_all().unwrap();
    net.calibrate_output(&tr, 8).unwrap();
    (net, te)
}

#[test]
fn extracted_tables_match_forward_pass() {
    let (net, _) = small_network();
    let tables = extract_network(&net, 12).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    for _ in 0..1000 {
        let x: Vec<f64> = (0..6).map(|_| StandardNormal.sample(&mut rng)).collect();
        let trace = net.forward(&x).unwrap();
        for (l, neurons) in tables.iter().enumerate() {
            let in_act = net.input_activation(l);
            let sources = if l == 0 {
                &trace.input_levels
            } else {
                &trace.layer_levels[l - 1]
            };
            let out_act = &net.layers[l].activation;
            for nt in neurons {
                let labels = &nt.tables[0].input_labels;
                let minterm: u32 = labels
                    .iter()
                    .enumerate()
                    .map(|(k, lab)| ((in_act.encode(sources[lab.source]) >> lab.bit) & 1) << k)
                    .sum();
                let code: u32 = nt
                    .tables
                    .iter()
                    .enumerate()
                    .map(|(b, t)| (t.contains(minterm) as u32) << b)
                    .sum();
                assert_eq!(
                    out_act.decode(code),
                    trace.layer_levels[l][nt.neuron],
                    "layer {l} neuron {}",
                    nt.neuron
                );
            }
        }
    }
}

#[test]
fn logic_accuracy_equals_network_accuracy() {
    let (net, te) = small_network();
    let compiled = compile_network(&net, &CompileConfig::default()).unwrap();
    let logic = logic_accuracy(&compiled.netlist, &te, &net.input_quant).unwrap();
    assert_eq!(logic, evaluate(&net, &te).unwrap());
    assert!(check_end_to_end(&net, &compiled.netlist, 5000, 3)
        .unwrap()
        .passed());
}

#[test]
fn corrupted_cover_is_caught_with_witness() {
    let (net, _) = small_network();
    let compiled = compile_network(&net, &CompileConfig::default()).unwrap();
    let logic = &compiled.logic[0];
    let mut covers = logic.covers.clone();
    let n = covers[0].width();
    // add minterm 0 if absent, otherwise drop everything
    let corrupted = if covers[0].contains_minterm(0) {
        Cover::empty(n)
    } else {
        let mut c = covers[0].clone();
        c.push(Cube::from_minterm(n, 0));
        c
    };
    covers[0] = corrupted;
    let check = check_neuron(&net, logic.layer, logic.neuron, &covers, 5).unwrap();
    assert!(check.exhaustive && !check.passed());
    let bit0 = &check.bits[0];
    assert!(bit0.mismatches > 0);
    let w = bit0.witness.as_ref().unwrap();
    assert_ne!(w.expected, w.found);
    assert!(check.bits[1..].iter().all(|b| b.mismatches == 0));
}

#[test]
fn corrupted_netlist_is_caught_end_to_end() {
    let (net, _) = small_network();
    let mut nl = compile_network(&net, &CompileConfig::default())
        .unwrap()
        .netlist;
    let out = nl.outputs.iter().find(|o| o.name == "class_0").unwrap().net;
    let node = out - nl.inputs.len();
    let NodeKind::Lut { inputs, mask } = &mut nl.nodes[node].kind else {
        panic!("class bit is not a LUT");
    };
    *mask ^= u64::MAX >> (64 - (1 << inputs.len()));
    let check = check_end_to_end(&net, &nl, 2000, 3).unwrap();
    assert_eq!(check.mismatches, 2000);
    assert_eq!(check.witnesses.len(), MAX_WITNESSES);
    assert!(check.witnesses.iter().all(|w| w.expected != w.found));
}

#[test]
fn pipelined_verilog_declares_one_reg_per_flip_flop() {
    let (net, _) = small_network();
    let opts = CompileConfig {
        pipeline: true,
        ..CompileConfig::default()
    };
    let nl = compile_network(&net, &opts).unwrap().netlist;
    assert!(nl.ff_count() > 0);
    let v = emit_verilog(&nl, "top");
    assert_eq!(v.matches("\n    reg ").count(), nl.ff_count());
    assert!(v.contains("input wire clk"));
    assert_eq!(
        v.matches("always @(posedge clk)").count(),
        nl.register_stages().len()
    );

    let comb = CompileConfig {
        pipeline: false,
        ..opts
    };
    let nl = compile_network(&net, &comb).unwrap().netlist;
    assert_eq!(nl.ff_count(), 0);
    assert!(!emit_verilog(&nl, "top").contains("clk"));
}
