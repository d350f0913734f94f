use std::collections::{BTreeSet, HashSet};

use super::cover::Cover;
use super::covering::{minimum_cover, BitSet};
use super::cube::Cube;
use super::TwoLevelError;
use crate::truthtable::TruthTable;

/// Widest function the exact minimizer accepts.
pub const QM_MAX_INPUTS: usize = 12;

/// All prime implicants of `on ∪ dc`, by repeated merging of cube pairs that
/// differ in exactly one specified variable. Sorted in cube order.
pub fn prime_implicants(width: usize, on: &[u32], dc: &[u32]) -> Vec<Cube> {
    let mut current: HashSet<Cube> = on
        .iter()
        .chain(dc)
        .map(|&m| Cube::from_minterm(width, m))
        .collect();
    let mut primes: BTreeSet<Cube> = BTreeSet::new();
    while !current.is_empty() {
        let mut next: HashSet<Cube> = HashSet::new();
        let mut merged: HashSet<Cube> = HashSet::new();
        for cube in &current {
            let mut care = cube.care();
            while care != 0 {
                let bit = care & care.wrapping_neg();
                care &= care - 1;
                let partner = Cube::from_masks(width, cube.care(), cube.value() ^ bit);
                if current.contains(&partner) {
                    next.insert(cube.raise(bit));
                    merged.insert(*cube);
                }
            }
        }
        primes.extend(current.iter().filter(|c| !merged.contains(c)));
        current = next;
    }
    primes.into_iter().collect()
}

/// Exact minimum-cube cover of `on`, with `dc` minterms free to cover.
///
/// Ties among minimum covers resolve to the lexicographically smallest sorted
/// cube list.
pub fn exact_minimize(width: usize, on: &[u32], dc: &[u32]) -> Result<Cover, TwoLevelError> {
    if width > QM_MAX_INPUTS {
        return Err(TwoLevelError::TooWide {
            width,
            max: QM_MAX_INPUTS,
        });
    }
    let mut on: Vec<u32> = on.to_vec();
    on.sort_unstable();
    on.dedup();
    if on.is_empty() {
        return Ok(Cover::empty(width));
    }
    let primes = prime_implicants(width, &on, dc);
    let columns: Vec<BitSet> = primes
        .iter()
        .map(|p| {
            let mut rows = BitSet::new(on.len());
            for (r, &m) in on.iter().enumerate() {
                if p.contains_minterm(m) {
                    rows.insert(r);
                }
            }
            rows
        })
        .collect();
    let chosen = minimum_cover(on.len(), &columns).expect("primes cover every ON minterm");
    Cover::new(width, chosen.into_iter().map(|i| primes[i]).collect())
}

/// Exact minimum cover of a completely specified table.
pub fn qm_minimize(table: &TruthTable) -> Result<Cover, TwoLevelError> {
    exact_minimize(table.num_inputs(), table.on_set(), &[])
}
