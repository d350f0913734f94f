//! Exact unate covering: pick the fewest columns whose rows cover every row.
//!
//! Columns are identified by index and the index order doubles as the tie-break
//! order: among all minimum covers the solver returns the one whose sorted index
//! list is lexicographically smallest.

#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct BitSet {
    words: Vec<u64>,
}

impl BitSet {
    pub fn new(len: usize) -> Self {
        BitSet {
            words: vec![0; len.div_ceil(64)],
        }
    }

    #[inline]
    pub fn insert(&mut self, i: usize) {
        self.words[i / 64] |= 1 << (i % 64);
    }

    #[inline]
    pub fn remove(&mut self, i: usize) {
        self.words[i / 64] &= !(1 << (i % 64));
    }

    #[inline]
    #[cfg(test)]
    pub fn contains(&self, i: usize) -> bool {
        self.words[i / 64] & (1 << (i % 64)) != 0
    }

    pub fn is_empty(&self) -> bool {
        self.words.iter().all(|&w| w == 0)
    }

    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn intersects(&self, other: &BitSet) -> bool {
        self.words.iter().zip(&other.words).any(|(a, b)| a & b != 0)
    }

    /// `self ∩ mask ⊆ other`
    pub fn subset_within(&self, other: &BitSet, mask: &BitSet) -> bool {
        self.words
            .iter()
            .zip(&other.words)
            .zip(&mask.words)
            .all(|((a, b), m)| a & m & !b == 0)
    }

    pub fn difference_with(&mut self, other: &BitSet) {
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a &= !b;
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(wi, &w)| {
            let mut w = w;
            std::iter::from_fn(move || {
                if w == 0 {
                    None
                } else {
                    let b = w.trailing_zeros() as usize;
                    w &= w - 1;
                    Some(wi * 64 + b)
                }
            })
        })
    }
}

#[derive(Clone)]
struct State {
    uncovered: BitSet,
    active: Vec<usize>,
    chosen: Vec<usize>,
}

struct Problem<'a> {
    num_rows: usize,
    num_cols: usize,
    cols: &'a [BitSet],
}

impl Problem<'_> {
    /// Candidate columns per uncovered row, restricted to `active`.
    fn row_columns(&self, state: &State, active: &[usize]) -> Vec<(usize, BitSet)> {
        let mut rows: Vec<(usize, BitSet)> = state
            .uncovered
            .iter()
            .map(|r| (r, BitSet::new(self.num_cols)))
            .collect();
        let mut index = vec![usize::MAX; self.num_rows];
        for (i, (r, _)) in rows.iter().enumerate() {
            index[*r] = i;
        }
        for &c in active {
            for r in self.cols[c].iter() {
                if index[r] != usize::MAX {
                    rows[index[r]].1.insert(c);
                }
            }
        }
        rows
    }

    /// Essential columns, row dominance and ordered column dominance, repeated to
    /// a fixed point. Every step keeps the lexicographically smallest minimum
    /// cover reachable. Returns `false` when some row cannot be covered.
    fn reduce(&self, state: &mut State) -> bool {
        loop {
            let uncovered = &state.uncovered;
            state.active.retain(|&c| self.cols[c].intersects(uncovered));
            if state.uncovered.is_empty() {
                return true;
            }
            let rows = self.row_columns(state, &state.active);

            if rows.iter().any(|(_, cs)| cs.is_empty()) {
                return false;
            }
            let mut essentials: Vec<usize> = rows
                .iter()
                .filter(|(_, cs)| cs.count() == 1)
                .map(|(_, cs)| cs.iter().next().unwrap())
                .collect();
            if !essentials.is_empty() {
                essentials.sort_unstable();
                essentials.dedup();
                for c in essentials {
                    state.chosen.push(c);
                    state.uncovered.difference_with(&self.cols[c]);
                }
                state.active.retain(|c| !state.chosen.contains(c));
                continue;
            }

            let mut changed = false;

            // a row whose candidates include another row's candidates is implied
            let full_cols = {
                let mut all = BitSet::new(self.num_cols);
                for &c in &state.active {
                    all.insert(c);
                }
                all
            };
            let mut dropped = vec![false; rows.len()];
            for i in 0..rows.len() {
                if dropped[i] {
                    continue;
                }
                for j in 0..rows.len() {
                    if i == j || dropped[j] {
                        continue;
                    }
                    // rows[i] ⊆ rows[j] → drop j (equal sets keep the first)
                    if rows[i].1.subset_within(&rows[j].1, &full_cols)
                        && (rows[i].1 != rows[j].1 || i < j)
                    {
                        dropped[j] = true;
                    }
                }
            }
            for (i, (r, _)) in rows.iter().enumerate() {
                if dropped[i] {
                    state.uncovered.remove(*r);
                    changed = true;
                }
            }

            // column c is dominated by an earlier-ordered column d covering a superset
            let mut keep = vec![true; state.active.len()];
            for (ci, &c) in state.active.iter().enumerate() {
                for (di, &d) in state.active.iter().enumerate() {
                    if di == ci || !keep[di] || d > c {
                        continue;
                    }
                    if self.cols[c].subset_within(&self.cols[d], &state.uncovered) {
                        keep[ci] = false;
                        break;
                    }
                }
            }
            if keep.iter().any(|k| !k) {
                let mut it = keep.iter();
                state.active.retain(|_| *it.next().unwrap());
                changed = true;
            }

            if !changed {
                return true;
            }
        }
    }

    /// Lower bound on the columns still needed: the larger of a greedy set of
    /// rows pairwise sharing no column and a greedy feasible dual of the LP
    /// relaxation. `None` when some row has no candidate.
    fn lower_bound(&self, state: &State, active: &[usize]) -> Option<usize> {
        let mut rows = self.row_columns(state, active);
        if rows.iter().any(|(_, cs)| cs.is_empty()) {
            return None;
        }
        rows.sort_by_key(|(r, cs)| (cs.count(), *r));
        let mut taken: Vec<&BitSet> = Vec::new();
        for (_, cs) in &rows {
            if taken.iter().all(|t| !t.intersects(cs)) {
                taken.push(cs);
            }
        }
        let mut slack = vec![1.0f64; self.num_cols];
        let mut dual = 0.0;
        for (_, cs) in &rows {
            let y = cs.iter().map(|c| slack[c]).fold(f64::INFINITY, f64::min);
            if y > 0.0 {
                for c in cs.iter() {
                    slack[c] -= y;
                }
                dual += y;
            }
        }
        Some(taken.len().max((dual - 1e-9).ceil() as usize))
    }

    fn greedy(&self, state: &State) -> Vec<usize> {
        let mut uncovered = state.uncovered.clone();
        let mut picked = Vec::new();
        while !uncovered.is_empty() {
            let best = state
                .active
                .iter()
                .copied()
                .max_by_key(|&c| {
                    let mut s = self.cols[c].clone();
                    s.words
                        .iter_mut()
                        .zip(&uncovered.words)
                        .for_each(|(a, b)| *a &= b);
                    (s.count(), std::cmp::Reverse(c))
                })
                .expect("reduced problem is feasible");
            uncovered.difference_with(&self.cols[best]);
            picked.push(best);
        }
        picked
    }

    /// Optimum of the LP relaxation, computed as the packing dual
    /// `max Σy` subject to `Σ_{r∈c} y_r ≤ 1` for every column, by the simplex
    /// method from the origin. Every iterate is dual feasible, so the value is
    /// a lower bound even when the iteration cap stops the solve early.
    fn lp_bound(&self, rows: &[(usize, BitSet)], active: &[usize]) -> f64 {
        const EPS: f64 = 1e-9;
        let m = rows.len();
        let n = active.len();
        let width = m + n + 1;
        let mut slot = vec![usize::MAX; self.num_cols];
        for (i, &c) in active.iter().enumerate() {
            slot[c] = i;
        }
        let mut t = vec![0.0f64; n * width];
        for (r, (_, cs)) in rows.iter().enumerate() {
            for c in cs.iter() {
                t[slot[c] * width + r] = 1.0;
            }
        }
        for i in 0..n {
            t[i * width + m + i] = 1.0;
            t[i * width + m + n] = 1.0;
        }
        let mut z = vec![0.0f64; width];
        z[..m].fill(-1.0);
        let mut basis: Vec<usize> = (m..m + n).collect();
        for _ in 0..20 * (m + n) {
            let Some(enter) = (0..m + n)
                .filter(|&j| z[j] < -EPS)
                .min_by(|&a, &b| z[a].total_cmp(&z[b]).then(a.cmp(&b)))
            else {
                break;
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..n {
                let a = t[i * width + enter];
                if a > EPS {
                    let ratio = t[i * width + m + n] / a;
                    let better = match leave {
                        None => true,
                        Some((l, best)) => {
                            ratio < best - EPS || (ratio <= best + EPS && basis[i] < basis[l])
                        }
                    };
                    if better {
                        leave = Some((i, ratio));
                    }
                }
            }
            let Some((p, _)) = leave else {
                break;
            };
            let pivot = t[p * width + enter];
            for v in &mut t[p * width..(p + 1) * width] {
                *v /= pivot;
            }
            let (before, rest) = t.split_at_mut(p * width);
            let (prow, after) = rest.split_at_mut(width);
            for row in before
                .chunks_mut(width)
                .chain(after.chunks_mut(width))
                .chain(std::iter::once(&mut z[..]))
            {
                let f = row[enter];
                if f != 0.0 {
                    for (v, &q) in row.iter_mut().zip(prow.iter()) {
                        *v -= f * q;
                    }
                }
            }
            basis[p] = enter;
        }
        z[m + n]
    }

    /// Branch and bound for the minimum number of further columns; `best`
    /// and `witness` hold the smallest complete cover found so far.
    fn min_size(&self, mut state: State, best: &mut usize, witness: &mut Vec<usize>) {
        if !self.reduce(&mut state) {
            return;
        }
        if state.uncovered.is_empty() {
            if state.chosen.len() < *best {
                *best = state.chosen.len();
                *witness = state.chosen;
            }
            return;
        }
        let Some(lb) = self.lower_bound(&state, &state.active) else {
            return;
        };
        if state.chosen.len() + lb >= *best {
            return;
        }
        let rows = self.row_columns(&state, &state.active);
        let lp = (self.lp_bound(&rows, &state.active) - 1e-6).ceil() as usize;
        if state.chosen.len() + lp >= *best {
            return;
        }
        let (_, branch) = rows
            .iter()
            .min_by_key(|(r, cs)| (cs.count(), *r))
            .expect("uncovered rows exist");
        for c in branch.iter() {
            let mut next = state.clone();
            next.chosen.push(c);
            next.uncovered.difference_with(&self.cols[c]);
            next.active.retain(|&x| x != c);
            self.min_size(next, best, witness);
            // later siblings may assume c is not used
            state.active.retain(|&x| x != c);
        }
    }

    /// A cover of the rows still uncovered in `state` with at most `budget`
    /// further columns, if one exists.
    fn fits(&self, mut state: State, budget: usize) -> Option<Vec<usize>> {
        state.chosen.clear();
        let mut best = budget + 1;
        let mut witness = Vec::new();
        self.min_size(state, &mut best, &mut witness);
        (best <= budget).then_some(witness)
    }

    /// Decides columns in index order, keeping each one exactly when a cover of
    /// size `target` still exists with it; the result is the lexicographically
    /// smallest such cover. `witness` is a cover of size `target` and stays a
    /// cover consistent with every decision made so far.
    fn lex_first(&self, mut state: State, target: usize, mut witness: Vec<usize>) -> Vec<usize> {
        let mut picked = Vec::new();
        let order = state.active.clone();
        for c in order {
            if state.uncovered.is_empty() {
                break;
            }
            if !self.cols[c].intersects(&state.uncovered) {
                state.active.retain(|&x| x != c);
                continue;
            }
            let mut with = state.clone();
            with.uncovered.difference_with(&self.cols[c]);
            with.active.retain(|&x| x != c);
            if witness.contains(&c) {
                witness.retain(|&x| x != c);
                picked.push(c);
                state = with;
                continue;
            }
            match self.fits(with.clone(), target - picked.len() - 1) {
                Some(w) => {
                    witness = w;
                    picked.push(c);
                    state = with;
                }
                None => state.active.retain(|&x| x != c),
            }
        }
        debug_assert!(
            state.uncovered.is_empty(),
            "a cover of the optimal size must exist"
        );
        picked
    }
}

/// Minimum cover of rows `0..num_rows` by `cols`. Returns sorted column indices,
/// or `None` when some row is in no column.
pub(crate) fn minimum_cover(num_rows: usize, cols: &[BitSet]) -> Option<Vec<usize>> {
    let problem = Problem {
        num_rows,
        num_cols: cols.len(),
        cols,
    };
    let mut uncovered = BitSet::new(problem.num_rows);
    for r in 0..num_rows {
        uncovered.insert(r);
    }
    let mut root = State {
        uncovered,
        active: (0..cols.len()).collect(),
        chosen: Vec::new(),
    };
    if !problem.reduce(&mut root) {
        return None;
    }
    if root.uncovered.is_empty() {
        root.chosen.sort_unstable();
        return Some(root.chosen);
    }
    let core = State {
        uncovered: root.uncovered.clone(),
        active: root.active.clone(),
        chosen: Vec::new(),
    };
    // the greedy cover is an upper bound; search for strictly fewer
    let mut witness = problem.greedy(&core);
    let mut best = witness.len();
    problem.min_size(core.clone(), &mut best, &mut witness);
    let mut all = root.chosen;
    all.extend(problem.lex_first(core, best, witness));
    all.sort_unstable();
    Some(all)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cols(num_rows: usize, sets: &[&[usize]]) -> Vec<BitSet> {
        sets.iter()
            .map(|rows| {
                let mut b = BitSet::new(num_rows);
                rows.iter().for_each(|&r| b.insert(r));
                b
            })
            .collect()
    }

    fn brute(num_rows: usize, cols: &[BitSet]) -> Vec<usize> {
        let n = cols.len();
        let mut best: Option<Vec<usize>> = None;
        for mask in 0u32..(1 << n) {
            let chosen: Vec<usize> = (0..n).filter(|i| mask & (1 << i) != 0).collect();
            let covered = (0..num_rows).all(|r| chosen.iter().any(|&c| cols[c].contains(r)));
            if !covered {
                continue;
            }
            best = match best {
                None => Some(chosen),
                Some(b) if chosen.len() < b.len() || (chosen.len() == b.len() && chosen < b) => {
                    Some(chosen)
                }
                Some(b) => Some(b),
            };
        }
        best.unwrap()
    }

    #[test]
    fn cyclic_core_picks_lexicographically_first() {
        // 6 rows in a cycle, each column covers two neighbours
        let c = cols(6, &[&[0, 1], &[1, 2], &[2, 3], &[3, 4], &[4, 5], &[5, 0]]);
        assert_eq!(minimum_cover(6, &c).unwrap(), vec![0, 2, 4]);
    }

    #[test]
    fn uncoverable_row_is_none() {
        let c = cols(3, &[&[0], &[1]]);
        assert!(minimum_cover(3, &c).is_none());
    }

    #[test]
    fn lp_bound_of_odd_cycle_is_fractional() {
        let c = cols(5, &[&[0, 1], &[1, 2], &[2, 3], &[3, 4], &[4, 0]]);
        let problem = Problem {
            num_rows: 5,
            num_cols: 5,
            cols: &c,
        };
        let mut uncovered = BitSet::new(5);
        (0..5).for_each(|r| uncovered.insert(r));
        let state = State {
            uncovered,
            active: (0..5).collect(),
            chosen: Vec::new(),
        };
        let rows = problem.row_columns(&state, &state.active);
        assert!((problem.lp_bound(&rows, &state.active) - 2.5).abs() < 1e-9);
        assert_eq!(minimum_cover(5, &c).unwrap(), vec![0, 1, 3]);
    }

    #[test]
    fn matches_brute_force_on_small_random_instances() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..300 {
            let num_rows = rng.gen_range(1..9);
            let num_cols = rng.gen_range(1..11);
            let sets: Vec<Vec<usize>> = (0..num_cols)
                .map(|_| (0..num_rows).filter(|_| rng.gen_bool(0.35)).collect())
                .collect();
            let refs: Vec<&[usize]> = sets.iter().map(|v| v.as_slice()).collect();
            let c = cols(num_rows, &refs);
            let feasible = (0..num_rows).all(|r| c.iter().any(|s| s.contains(r)));
            let got = minimum_cover(num_rows, &c);
            if !feasible {
                assert!(got.is_none());
                continue;
            }
            assert_eq!(got.unwrap(), brute(num_rows, &c), "sets {sets:?}");
        }
    }
}
