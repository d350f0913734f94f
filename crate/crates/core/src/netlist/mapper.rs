//! Sum-of-products decomposition of a cover onto K-input LUTs.

use super::{lut_mask, NetId, Netlist, NetlistError};
use crate::twolevel::Cover;

pub const MIN_LUT_SIZE: usize = 2;
pub const MAX_LUT_SIZE: usize = 6;

/// A product of literals over nets; `true` means the positive literal.
#[derive(Clone, Debug)]
struct Product {
    lits: Vec<(NetId, bool)>,
}

impl Product {
    fn nets(&self) -> impl Iterator<Item = NetId> + '_ {
        self.lits.iter().map(|&(n, _)| n)
    }

    fn eval(&self, value: impl Fn(NetId) -> bool) -> bool {
        self.lits.iter().all(|&(n, pol)| value(n) == pol)
    }
}

struct Namer<'a> {
    base: &'a str,
    next: usize,
}

impl Namer<'_> {
    fn fresh(&mut self) -> String {
        self.next += 1;
        format!("{}_t{}", self.base, self.next - 1)
    }
}

/// LUT over `nets` computing the OR of `items`.
fn materialize(nl: &mut Netlist, items: &[Product], name: String, group: &str) -> NetId {
    let mut nets: Vec<NetId> = items.iter().flat_map(|p| p.nets()).collect();
    nets.sort_unstable();
    nets.dedup();
    let mask = lut_mask(nets.len(), |m| {
        let value = |n: NetId| {
            let pos = nets.binary_search(&n).expect("net in union");
            m >> pos & 1 == 1
        };
        items.iter().any(|p| p.eval(value))
    });
    nl.add_lut(nets, mask, name, group)
}

fn union_len(a: &[NetId], b: &Product) -> usize {
    a.len() + b.nets().filter(|n| !a.contains(n)).count()
}

/// Maps `cover` (variable `v` driven by `nets[v]`) into `nl` and returns the
/// net carrying its function. The final LUT is named `name`; helpers get
/// `name_t<k>`.
///
/// Functions whose support fits in one LUT become that LUT. Otherwise cubes
/// wider than K are AND-reduced K literals at a time, and products are packed
/// first-fit into OR LUTs whose input union stays within K, repeating until a
/// single net remains.
pub fn map_cover_into(
    nl: &mut Netlist,
    cover: &Cover,
    nets: &[NetId],
    name: &str,
    group: &str,
) -> Result<NetId, NetlistError> {
    let n = cover.width();
    if n == 0 {
        return Err(NetlistError::ZeroWidth);
    }
    if nets.len() != n {
        return Err(NetlistError::WidthMismatch {
            expected: nets.len(),
            found: n,
        });
    }
    let k = nl.lut_size;
    let support_mask = cover.cubes().iter().fold(0u32, |acc, c| acc | c.care());
    let support: Vec<usize> = (0..n).filter(|&v| support_mask >> v & 1 == 1).collect();
    if support.is_empty() {
        return Ok(nl.add_constant(!cover.is_empty(), name.to_owned(), group));
    }
    if support.len() <= k {
        let mask = lut_mask(support.len(), |m| {
            let full = support
                .iter()
                .enumerate()
                .fold(0u32, |acc, (i, &v)| acc | (m >> i & 1) << v);
            cover.contains_minterm(full)
        });
        let inputs = support.iter().map(|&v| nets[v]).collect();
        return Ok(nl.add_lut(inputs, mask, name.to_owned(), group));
    }

    let mut namer = Namer {
        base: name,
        next: 0,
    };
    let mut items: Vec<Product> = Vec::with_capacity(cover.len());
    for cube in cover.cubes() {
        let mut lits: Vec<(NetId, bool)> = (0..n)
            .filter(|&v| cube.care() >> v & 1 == 1)
            .map(|v| (nets[v], cube.value() >> v & 1 == 1))
            .collect();
        while lits.len() > k {
            let rest = lits.split_off(k);
            let and = materialize(nl, &[Product { lits }], namer.fresh(), group);
            lits = std::iter::once((and, true)).chain(rest).collect();
        }
        items.push(Product { lits });
    }

    loop {
        let mut order: Vec<usize> = (0..items.len()).collect();
        order.sort_by(|&a, &b| items[b].lits.len().cmp(&items[a].lits.len()));
        let mut groups: Vec<(Vec<NetId>, Vec<usize>)> = Vec::new();
        for i in order {
            let slot = groups
                .iter_mut()
                .find(|(nets, _)| union_len(nets, &items[i]) <= k);
            match slot {
                Some((nets, members)) => {
                    for net in items[i].nets() {
                        if !nets.contains(&net) {
                            nets.push(net);
                        }
                    }
                    members.push(i);
                }
                None => groups.push((items[i].nets().collect(), vec![i])),
            }
        }
        if groups.len() == 1 {
            let members: Vec<Product> = groups[0].1.iter().map(|&i| items[i].clone()).collect();
            return Ok(materialize(nl, &members, name.to_owned(), group));
        }
        let mut next = Vec::with_capacity(groups.len());
        for (_, members) in groups {
            if let [only] = members[..] {
                if matches!(items[only].lits[..], [(_, true)]) {
                    next.push(items[only].clone());
                    continue;
                }
            }
            let members: Vec<Product> = members.iter().map(|&i| items[i].clone()).collect();
            let net = materialize(nl, &members, namer.fresh(), group);
            next.push(Product {
                lits: vec![(net, true)],
            });
        }
        items = next;
    }
}

/// Maps a cover into a fresh netlist with inputs `x0..` and output `f`.
pub fn map_cover(cover: &Cover, lut_size: usize) -> Result<Netlist, NetlistError> {
    if cover.width() == 0 {
        return Err(NetlistError::ZeroWidth);
    }
    let inputs = (0..cover.width()).map(|i| format!("x{i}")).collect();
    let mut nl = Netlist::new(lut_size, inputs)?;
    let nets: Vec<NetId> = (0..cover.width()).collect();
    let out = map_cover_into(&mut nl, cover, &nets, "f", "cover")?;
    nl.add_output("y".into(), out);
    Ok(nl)
}
