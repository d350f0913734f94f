//! Whole-network assembly: per-neuron covers, layer registers, argmax tree.

use std::collections::HashMap;

use super::{lut_mask, map_cover_into, NetId, Netlist, NetlistError};
use crate::qnn::{network_fingerprint, QuantNetwork};
use crate::truthtable::InputLabel;
use crate::twolevel::{espresso_minimize, Cover};

/// Minimized logic of one neuron: one cover per output bit over the variables
/// described by `input_labels`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NeuronLogic {
    pub layer: usize,
    pub neuron: usize,
    pub input_labels: Vec<InputLabel>,
    pub covers: Vec<Cover>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Signal {
    Const(bool),
    Net(NetId),
}

struct Synth<'a> {
    nl: &'a mut Netlist,
    group: &'static str,
    next: usize,
}

impl Synth<'_> {
    fn fresh(&mut self, what: &str) -> String {
        self.next += 1;
        format!("{}_{}{}", self.group, what, self.next - 1)
    }

    /// Logic for `f` over `inputs` (bit `i` of the argument is `inputs[i]`).
    /// Constants are folded, unused inputs dropped and buffers elided.
    fn function(
        &mut self,
        what: &str,
        inputs: &[Signal],
        f: impl Fn(u32) -> bool,
    ) -> Result<Signal, NetlistError> {
        let mut nets: Vec<NetId> = Vec::new();
        let mut fixed = 0u32;
        let mut slot: Vec<Option<usize>> = Vec::with_capacity(inputs.len());
        for (i, s) in inputs.iter().enumerate() {
            match *s {
                Signal::Const(v) => {
                    fixed |= (v as u32) << i;
                    slot.push(None);
                }
                Signal::Net(n) => {
                    let pos = nets.iter().position(|&x| x == n).unwrap_or_else(|| {
                        nets.push(n);
                        nets.len() - 1
                    });
                    slot.push(Some(pos));
                }
            }
        }
        let over_nets = |m: u32| {
            let mut arg = fixed;
            for (i, s) in slot.iter().enumerate() {
                if let Some(p) = s {
                    arg |= (m >> p & 1) << i;
                }
            }
            f(arg)
        };
        let u = nets.len();
        let table: Vec<bool> = (0..1u32 << u).map(over_nets).collect();
        let used: Vec<usize> = (0..u)
            .filter(|&v| (0..1u32 << u).any(|m| table[m as usize] != table[(m ^ 1 << v) as usize]))
            .collect();
        let reduced = |m: u32| {
            let full = used
                .iter()
                .enumerate()
                .fold(0u32, |acc, (i, &v)| acc | (m >> i & 1) << v);
            table[full as usize]
        };
        let used_nets: Vec<NetId> = used.iter().map(|&v| nets[v]).collect();
        match used_nets.len() {
            0 => return Ok(Signal::Const(table[0])),
            1 if reduced(1) && !reduced(0) => return Ok(Signal::Net(used_nets[0])),
            _ => {}
        }
        let name = self.fresh(what);
        if used_nets.len() <= self.nl.lut_size {
            let mask = lut_mask(used_nets.len(), reduced);
            return Ok(Signal::Net(
                self.nl.add_lut(used_nets, mask, name, self.group),
            ));
        }
        let w = used_nets.len();
        let on: Vec<u32> = (0..1u32 << w).filter(|&m| reduced(m)).collect();
        let off: Vec<u32> = (0..1u32 << w).filter(|&m| !reduced(m)).collect();
        let cover = espresso_minimize(&Cover::from_minterms(w, on), &Cover::from_minterms(w, off))
            .expect("on and off sets are disjoint");
        let net = map_cover_into(self.nl, &cover, &used_nets, &name, self.group)?;
        Ok(Signal::Net(net))
    }

    fn materialize(&mut self, s: Signal, name: String) -> NetId {
        match s {
            Signal::Net(n) => n,
            Signal::Const(v) => self.nl.add_constant(v, name, self.group),
        }
    }
}

fn bits_value(m: u32, offset: u32, count: u32) -> u32 {
    (m >> offset) & ((1 << count) - 1)
}

/// `b > a` for codes given LSB first; two's complement when `signed`.
fn greater(
    syn: &mut Synth<'_>,
    a: &[Signal],
    b: &[Signal],
    signed: bool,
) -> Result<Signal, NetlistError> {
    let width = a.len();
    let k = syn.nl.lut_size;
    let chunk = (k / 2).max(1);
    // per chunk, LSB first: (b > a, b == a); the lowest chunk's equality is never needed
    let mut pairs: Vec<(Signal, Option<Signal>)> = Vec::new();
    let mut lo = 0;
    while lo < width {
        let hi = (lo + chunk).min(width);
        let c = (hi - lo) as u32;
        let flip = if signed && hi == width {
            1u32 << (c - 1)
        } else {
            0
        };
        let inputs: Vec<Signal> = a[lo..hi].iter().chain(&b[lo..hi]).copied().collect();
        let gt = syn.function("gt", &inputs, |m| {
            bits_value(m, c, c) ^ flip > bits_value(m, 0, c) ^ flip
        })?;
        let eq = if lo == 0 {
            None
        } else {
            Some(syn.function("eq", &inputs, |m| {
                bits_value(m, c, c) == bits_value(m, 0, c)
            })?)
        };
        pairs.push((gt, eq));
        lo = hi;
    }
    while pairs.len() > 1 {
        let mut next = Vec::new();
        let mut start = 0;
        while start < pairs.len() {
            // grow the block while its signals fit one LUT, at least two pairs
            let mut end = start + 1;
            let mut used = 1 + pairs[start].1.is_some() as usize;
            while end < pairs.len() {
                let extra = 2;
                if end - start >= 2 && used + extra > k {
                    break;
                }
                used += extra;
                end += 1;
            }
            let block = &pairs[start..end];
            let mut inputs = Vec::new();
            for &(gt, eq) in block {
                inputs.push(gt);
                inputs.push(eq.unwrap_or(Signal::Const(false)));
            }
            let n = block.len();
            let gt = syn.function("gt", &inputs, |m| {
                let mut result = false;
                for p in 0..n {
                    let g = m >> (2 * p) & 1 == 1;
                    let e = m >> (2 * p + 1) & 1 == 1;
                    result = g || (e && result);
                }
                result
            })?;
            let eq = if start == 0 {
                None
            } else {
                let eqs: Vec<Signal> = block
                    .iter()
                    .map(|&(_, e)| e.expect("upper chunks"))
                    .collect();
                Some(syn.function("eq", &eqs, |m| m == (1 << n) - 1)?)
            };
            next.push((gt, eq));
            start = end;
        }
        pairs = next;
    }
    Ok(pairs[0].0)
}

struct Candidate {
    index: Vec<Signal>,
    score: Vec<Signal>,
}

fn mux(
    syn: &mut Synth<'_>,
    sel: Signal,
    a: &[Signal],
    b: &[Signal],
) -> Result<Vec<Signal>, NetlistError> {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            syn.function("mux", &[sel, x, y], |m| {
                if m & 1 == 1 {
                    m >> 2 & 1 == 1
                } else {
                    m >> 1 & 1 == 1
                }
            })
        })
        .collect()
}

/// Index bits of the first maximal score. Pairs are reduced level by level;
/// the right candidate wins only when strictly greater, so ties resolve to
/// the lower index.
fn argmax_tree(
    syn: &mut Synth<'_>,
    scores: Vec<Vec<Signal>>,
    signed: bool,
) -> Result<Vec<Signal>, NetlistError> {
    let classes = scores.len();
    let index_bits = (usize::BITS - (classes - 1).leading_zeros()) as usize;
    let mut round: Vec<Candidate> = scores
        .into_iter()
        .enumerate()
        .map(|(j, score)| Candidate {
            index: (0..index_bits)
                .map(|b| Signal::Const(j >> b & 1 == 1))
                .collect(),
            score,
        })
        .collect();
    while round.len() > 1 {
        let last_level = round.len() <= 2;
        let mut next = Vec::with_capacity(round.len().div_ceil(2));
        let mut it = round.into_iter();
        while let Some(left) = it.next() {
            let Some(right) = it.next() else {
                next.push(left);
                break;
            };
            let sel = greater(syn, &left.score, &right.score, signed)?;
            let index = mux(syn, sel, &left.index, &right.index)?;
            let score = if last_level {
                Vec::new()
            } else {
                mux(syn, sel, &left.score, &right.score)?
            };
            next.push(Candidate { index, score });
        }
        round = next;
    }
    Ok(round.pop().map(|c| c.index).unwrap_or_default())
}

/// Assembles the whole network.
///
/// Primary inputs are `x<i>_<bit>`; neuron bit `b` of neuron `j` in layer `l`
/// is the LUT `l<l>_n<j>_b<b>`, registered as `..._q` after every layer when
/// `pipeline` is set. Outputs are the classifier bits `y<j>_<b>` followed by
/// the argmax index bits `class_<b>`.
pub fn build_netlist(
    net: &QuantNetwork,
    logic: &[NeuronLogic],
    lut_size: usize,
    pipeline: bool,
) -> Result<Netlist, NetlistError> {
    let in_bits = net
        .input_quant
        .bits()
        .ok_or(NetlistError::NotQuantized { layer: 0 })? as usize;
    let names = (0..net.num_inputs())
        .flat_map(|i| (0..in_bits).map(move |p| format!("x{i}_{p}")))
        .collect();
    let mut nl = Netlist::new(lut_size, names)?;
    nl.source_fingerprint = Some(network_fingerprint(net));
    let by_neuron: HashMap<(usize, usize), &NeuronLogic> =
        logic.iter().map(|n| ((n.layer, n.neuron), n)).collect();

    let mut prev: Vec<Vec<NetId>> = (0..net.num_inputs())
        .map(|i| (0..in_bits).map(|p| i * in_bits + p).collect())
        .collect();
    for (l, layer) in net.layers.iter().enumerate() {
        let bits = layer
            .activation
            .bits()
            .ok_or(NetlistError::NotQuantized { layer: l })? as usize;
        let group = format!("layer{l}");
        let mut current = Vec::with_capacity(layer.outputs());
        for j in 0..layer.outputs() {
            let missing = |bit| NetlistError::MissingCover {
                layer: l,
                neuron: j,
                bit,
            };
            let logic = by_neuron.get(&(l, j)).ok_or_else(|| missing(0))?;
            if logic.covers.len() < bits {
                return Err(missing(logic.covers.len()));
            }
            let nets = logic
                .input_labels
                .iter()
                .map(|lab| {
                    prev.get(lab.source)
                        .and_then(|v| v.get(lab.bit as usize))
                        .copied()
                        .ok_or(NetlistError::DanglingInput {
                            layer: l,
                            neuron: j,
                            input: lab.source,
                            bit: lab.bit,
                        })
                })
                .collect::<Result<Vec<_>, _>>()?;
            let mut outs = Vec::with_capacity(bits);
            for (b, cover) in logic.covers.iter().take(bits).enumerate() {
                let name = format!("l{l}_n{j}_b{b}");
                let out = if cover.width() == 0 && nets.is_empty() {
                    nl.add_constant(!cover.is_empty(), name, &group)
                } else {
                    if cover.width() != nets.len() {
                        return Err(NetlistError::WidthMismatch {
                            expected: nets.len(),
                            found: cover.width(),
                        });
                    }
                    map_cover_into(&mut nl, cover, &nets, &name, &group)?
                };
                outs.push(out);
            }
            current.push(outs);
        }
        if pipeline {
            for (j, outs) in current.iter_mut().enumerate() {
                for (b, net_id) in outs.iter_mut().enumerate() {
                    *net_id = nl.add_register(*net_id, l, format!("l{l}_n{j}_b{b}_q"), &group);
                }
            }
        }
        prev = current;
    }

    for (j, outs) in prev.iter().enumerate() {
        for (b, &n) in outs.iter().enumerate() {
            nl.add_output(format!("y{j}_{b}"), n);
        }
    }
    if prev.len() >= 2 {
        let signed = net
            .layers
            .last()
            .is_some_and(|l| l.activation.signed_encoding());
        let scores = prev
            .iter()
            .map(|outs| outs.iter().map(|&n| Signal::Net(n)).collect())
            .collect();
        let mut syn = Synth {
            nl: &mut nl,
            group: "argmax",
            next: 0,
        };
        let index = argmax_tree(&mut syn, scores, signed)?;
        let nets: Vec<NetId> = index
            .into_iter()
            .enumerate()
            .map(|(b, s)| syn.materialize(s, format!("argmax_const{b}")))
            .collect();
        for (b, n) in nets.into_iter().enumerate() {
            nl.add_output(format!("class_{b}"), n);
        }
    }
    nl.validate()?;
    Ok(nl)
}
