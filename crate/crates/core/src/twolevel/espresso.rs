//! Heuristic minimization by iterated EXPAND, IRREDUNDANT and REDUCE against
//! an explicit OFF-set.

use super::cover::{Cost, Cover};
use super::cube::Cube;
use super::TwoLevelError;
use crate::truthtable::TruthTable;

/// Largest width for which dense minterm bitmaps are built.
const DENSE_MAX_WIDTH: usize = 16;

/// Answers "does this cube touch the OFF-set?".
struct Blocker<'a> {
    cubes: &'a [Cube],
    dense: Option<Vec<bool>>,
}

impl<'a> Blocker<'a> {
    fn new(offset: &'a Cover) -> Self {
        let dense = (offset.width() <= DENSE_MAX_WIDTH).then(|| offset.truth_vector());
        Blocker {
            cubes: offset.cubes(),
            dense,
        }
    }

    fn hits(&self, cube: &Cube) -> bool {
        match &self.dense {
            Some(bits) if cube.minterm_count() <= self.cubes.len() as u64 => {
                cube.minterms().any(|m| bits[m as usize])
            }
            _ => self.cubes.iter().any(|o| o.intersects(cube)),
        }
    }
}

/// Coverage counters over the required (ON) minterms.
struct OnsetCounts {
    minterms: Vec<u32>,
    member: Vec<bool>,
    counts: Vec<u32>,
}

impl OnsetCounts {
    fn new(onset: &Cover) -> Self {
        let member = onset.truth_vector();
        let minterms = member
            .iter()
            .enumerate()
            .filter_map(|(m, &on)| on.then_some(m as u32))
            .collect();
        OnsetCounts {
            minterms,
            counts: vec![0; member.len()],
            member,
        }
    }

    /// ON minterms inside `cube`.
    fn within(&self, cube: &Cube) -> Vec<u32> {
        if cube.minterm_count() <= self.minterms.len() as u64 {
            cube.minterms()
                .filter(|&m| self.member[m as usize])
                .collect()
        } else {
            self.minterms
                .iter()
                .copied()
                .filter(|&m| cube.contains_minterm(m))
                .collect()
        }
    }

    fn add(&mut self, cube: &Cube) {
        for m in self.within(cube) {
            self.counts[m as usize] += 1;
        }
    }

    fn remove(&mut self, cube: &Cube) {
        for m in self.within(cube) {
            self.counts[m as usize] -= 1;
        }
    }
}

fn canonical(cubes: &[Cube]) -> Vec<Cube> {
    let mut out = cubes.to_vec();
    out.sort_by(|a, b| b.num_dashes().cmp(&a.num_dashes()).then_with(|| a.cmp(b)));
    out.dedup();
    out
}

/// Rejects overlapping ON/OFF specifications with a witness minterm.
fn check_disjoint(onset: &Cover, offset: &Cover) -> Result<(), TwoLevelError> {
    if onset.width() != offset.width() {
        return Err(TwoLevelError::WidthMismatch {
            expected: onset.width(),
            found: offset.width(),
        });
    }
    for a in onset.cubes() {
        for b in offset.cubes() {
            if a.intersects(b) {
                // lowest minterm in the intersection
                return Err(TwoLevelError::Overlap {
                    minterm: a.value() | b.value(),
                });
            }
        }
    }
    Ok(())
}

/// Grows one cube into a prime against the blocker.
///
/// First absorbs other cubes of the cover by supercube moves that stay off the
/// OFF-set, preferring the move that swallows the most cubes. The remaining
/// literals are then raised one at a time, fewest potential blockers first.
fn expand_cube(mut cube: Cube, others: &[Cube], blocker: &Blocker, offset: &[Cube]) -> Cube {
    let mut live: Vec<Cube> = others
        .iter()
        .copied()
        .filter(|d| !cube.contains(d))
        .collect();
    loop {
        let mut best: Option<(usize, u32, Cube)> = None;
        for d in &live {
            let sup = cube.supercube(d);
            if blocker.hits(&sup) {
                continue;
            }
            let swallowed = live.iter().filter(|e| sup.contains(e)).count();
            let better = match &best {
                None => true,
                Some((n, lits, _)) => {
                    swallowed > *n || (swallowed == *n && sup.num_literals() > *lits)
                }
            };
            if better {
                best = Some((swallowed, sup.num_literals(), sup));
            }
        }
        match best {
            Some((_, _, sup)) => {
                cube = sup;
                live.retain(|d| !cube.contains(d));
            }
            None => break,
        }
    }

    let mut vars: Vec<(usize, usize)> = (0..cube.width())
        .filter(|&v| cube.care() & (1 << v) != 0)
        .map(|v| {
            let blockers = offset
                .iter()
                .filter(|o| cube.conflicts(o) & (1 << v) != 0)
                .count();
            (blockers, v)
        })
        .collect();
    vars.sort_unstable();
    for (_, v) in vars {
        let raised = cube.raise(1 << v);
        if !blocker.hits(&raised) {
            cube = raised;
        }
    }
    cube
}

/// Expands every cube to a prime that avoids `offset`, dropping cubes covered
/// by an expanded one.
pub fn expand(cover: &Cover, offset: &Cover) -> Cover {
    let blocker = Blocker::new(offset);
    let mut pending: Vec<Option<Cube>> = canonical(cover.cubes()).into_iter().map(Some).collect();
    let mut result: Vec<Cube> = Vec::new();
    for i in 0..pending.len() {
        let Some(cube) = pending[i] else { continue };
        if result.iter().any(|r| r.contains(&cube)) {
            continue;
        }
        let rest: Vec<Cube> = pending[i + 1..].iter().flatten().copied().collect();
        let grown = expand_cube(cube, &rest, &blocker, offset.cubes());
        for slot in pending[i + 1..].iter_mut() {
            if matches!(slot, Some(c) if grown.contains(c)) {
                *slot = None;
            }
        }
        if !result.contains(&grown) {
            result.push(grown);
        }
    }
    Cover::new(cover.width(), result).expect("widths preserved")
}

/// Drops cubes, smallest first, while the rest still cover `onset`.
pub fn irredundant(cover: &Cover, onset: &Cover) -> Cover {
    let mut counts = OnsetCounts::new(onset);
    let cubes = canonical(cover.cubes());
    for c in &cubes {
        counts.add(c);
    }
    let mut keep = vec![true; cubes.len()];
    for i in (0..cubes.len()).rev() {
        let inside = counts.within(&cubes[i]);
        if inside.iter().all(|&m| counts.counts[m as usize] >= 2) {
            for m in inside {
                counts.counts[m as usize] -= 1;
            }
            keep[i] = false;
        }
    }
    let kept = cubes
        .into_iter()
        .zip(keep)
        .filter_map(|(c, k)| k.then_some(c))
        .collect();
    Cover::new(cover.width(), kept).expect("widths preserved")
}

/// Shrinks each cube, largest first, to the supercube of the ON minterms only it
/// covers. Cubes with no such minterm disappear.
pub fn reduce(cover: &Cover, onset: &Cover) -> Cover {
    let mut counts = OnsetCounts::new(onset);
    let mut cubes = canonical(cover.cubes());
    for c in &cubes {
        counts.add(c);
    }
    let mut out: Vec<Option<Cube>> = Vec::with_capacity(cubes.len());
    for cube in cubes.drain(..) {
        let inside = counts.within(&cube);
        let unique: Vec<u32> = inside
            .iter()
            .copied()
            .filter(|&m| counts.counts[m as usize] == 1)
            .collect();
        counts.remove(&cube);
        let Some((&first, rest)) = unique.split_first() else {
            out.push(None);
            continue;
        };
        let mut shrunk = Cube::from_minterm(cube.width(), first);
        for &m in rest {
            shrunk = shrunk.supercube(&Cube::from_minterm(cube.width(), m));
        }
        counts.add(&shrunk);
        out.push(Some(shrunk));
    }
    Cover::new(cover.width(), out.into_iter().flatten().collect()).expect("widths preserved")
}

/// Minimizes and also returns the cost after the initial pass and after every
/// accepted improvement round.
pub fn espresso_trace(
    onset: &Cover,
    dcset: &Cover,
    offset: &Cover,
) -> Result<(Cover, Vec<Cost>), TwoLevelError> {
    check_disjoint(onset, offset)?;
    check_disjoint(dcset, offset)?;

    let mut current = irredundant(&expand(onset, offset), onset);
    let mut costs = vec![current.cost()];
    loop {
        let candidate = irredundant(&expand(&reduce(&current, onset), offset), onset);
        if candidate.cost() < current.cost() {
            current = candidate;
            costs.push(current.cost());
        } else {
            break;
        }
    }
    let mut last = irredundant(&expand(&current, offset), onset);
    if last.cost() > current.cost() {
        last = current;
    }
    let mut cubes = last.into_cubes();
    cubes.sort_by(|a, b| b.num_dashes().cmp(&a.num_dashes()).then_with(|| a.cmp(b)));
    Ok((Cover::new(onset.width(), cubes)?, costs))
}

/// Heuristic two-level minimization of `onset` against `offset`.
pub fn espresso_minimize(onset: &Cover, offset: &Cover) -> Result<Cover, TwoLevelError> {
    espresso_minimize_dc(onset, &Cover::empty(onset.width()), offset)
}

/// Like [`espresso_minimize`] with an explicit don't-care set that may be
/// covered but is never required.
pub fn espresso_minimize_dc(
    onset: &Cover,
    dcset: &Cover,
    offset: &Cover,
) -> Result<Cover, TwoLevelError> {
    espresso_trace(onset, dcset, offset).map(|(c, _)| c)
}

/// Minimizes a completely specified table: OFF-set is the complement.
pub fn minimize_table(table: &TruthTable) -> Result<Cover, TwoLevelError> {
    let n = table.num_inputs();
    let onset = Cover::from_minterms(n, table.on_set().iter().copied());
    let offset = Cover::from_minterms(n, onset.complement_minterms());
    espresso_minimize(&onset, &offset)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn strs(c: &Cover) -> Vec<String> {
        c.cubes().iter().map(|c| c.to_string()).collect()
    }

    fn minterms(width: usize, ms: &[u32]) -> Cover {
        Cover::from_minterms(width, ms.iter().copied())
    }

    #[test]
    fn expand_without_blockers_reaches_universe() {
        let c = Cover::parse(2, &["11"]).unwrap();
        assert_eq!(strs(&expand(&c, &Cover::empty(2))), vec!["--"]);
    }

    #[test]
    fn expand_respects_single_blocker() {
        // "01" is minterm 1; OFF {0} blocks raising variable 0, variable 1 is free
        let c = Cover::parse(2, &["01"]).unwrap();
        let off = Cover::parse(2, &["00"]).unwrap();
        let e = expand(&c, &off);
        assert_eq!(strs(&e), vec!["-1"]);
        let on: Vec<u32> = e.minterms();
        assert_eq!(on, vec![1, 3]);
        assert!(!on.contains(&0));
    }

    #[test]
    fn expand_keeps_primes() {
        let c = Cover::parse(3, &["1-1"]).unwrap();
        let off = minterms(3, &[0, 1, 2, 3, 4, 6]);
        assert_eq!(strs(&expand(&c, &off)), vec!["1-1"]);
    }

    #[test]
    fn irredundant_drops_duplicate_and_consensus() {
        let on = minterms(3, &[3, 5, 6, 7]);
        let c = Cover::parse(3, &["-11", "1-1", "11-", "11-"]).unwrap();
        assert_eq!(irredundant(&c, &on).len(), 3);
        // a·b + b·c + a·c with extra consensus cube "111"
        let c = Cover::parse(3, &["-11", "1-1", "11-", "111"]).unwrap();
        let r = irredundant(&c, &on);
        assert_eq!(strs(&r), vec!["-11", "1-1", "11-"]);
    }

    #[test]
    fn irredundant_leaves_minimum_alone() {
        let on = minterms(3, &[3, 5, 6, 7]);
        let c = Cover::parse(3, &["-11", "1-1", "11-"]).unwrap();
        assert_eq!(irredundant(&c, &on), c);
    }

    #[test]
    fn reduce_shrinks_to_unique_minterms() {
        let on = minterms(2, &[0, 1, 2, 3]);
        let c = Cover::parse(2, &["--", "1-"]).unwrap();
        let r = reduce(&c, &on);
        assert_eq!(strs(&r), vec!["0-", "1-"]);
        assert_eq!(r.minterms(), vec![0, 1, 2, 3]);
    }

    #[test]
    fn reduce_fixed_points() {
        let on = minterms(3, &[5]);
        let c = Cover::parse(3, &["101"]).unwrap();
        assert_eq!(reduce(&c, &on), c);
        let on = minterms(2, &[2, 3]);
        let c = Cover::parse(2, &["1-"]).unwrap();
        assert_eq!(reduce(&c, &on), c);
    }

    #[test]
    fn espresso_x0_from_two_minterms() {
        let on = minterms(2, &[1, 3]);
        let off = minterms(2, &[0, 2]);
        let r = espresso_minimize(&on, &off).unwrap();
        assert_eq!(strs(&r), vec!["-1"]);
    }

    #[test]
    fn espresso_carry_from_minterms() {
        let on = minterms(3, &[3, 5, 6, 7]);
        let off = minterms(3, &[0, 1, 2, 4]);
        let r = espresso_minimize(&on, &off).unwrap();
        assert_eq!(r.len(), 3);
        assert_eq!(r.minterms(), vec![3, 5, 6, 7]);
    }

    #[test]
    fn espresso_prime_is_fixed_point() {
        let on = Cover::parse(3, &["1--"]).unwrap();
        let off = Cover::parse(3, &["0--"]).unwrap();
        assert_eq!(espresso_minimize(&on, &off).unwrap(), on);
    }

    #[test]
    fn overlap_reports_witness() {
        let on = Cover::parse(3, &["1-1"]).unwrap();
        let off = Cover::parse(3, &["-11"]).unwrap();
        match espresso_minimize(&on, &off) {
            Err(TwoLevelError::Overlap { minterm }) => assert_eq!(minterm, 7),
            other => panic!("expected overlap, got {other:?}"),
        }
    }

    #[test]
    fn dont_cares_are_usable_but_optional() {
        // ON {1}, DC {3}, OFF {0, 2}
        let on = minterms(2, &[1]);
        let dc = minterms(2, &[3]);
        let off = minterms(2, &[0, 2]);
        let r = espresso_minimize_dc(&on, &dc, &off).unwrap();
        assert_eq!(strs(&r), vec!["-1"]);
    }
}
