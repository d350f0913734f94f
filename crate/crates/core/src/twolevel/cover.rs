use std::fmt;

use super::cube::{Cube, MAX_WIDTH};
use super::TwoLevelError;

/// Cost of a two-level cover: cube count first, literal count second.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Cost {
    pub cubes: usize,
    pub literals: usize,
}

impl fmt::Display for Cost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} cubes / {} literals", self.cubes, self.literals)
    }
}

/// A sum of products over a common width.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Cover {
    width: usize,
    cubes: Vec<Cube>,
}

impl Cover {
    pub fn empty(width: usize) -> Self {
        assert!(width <= MAX_WIDTH);
        Cover {
            width,
            cubes: Vec::new(),
        }
    }

    pub fn new(width: usize, cubes: Vec<Cube>) -> Result<Self, TwoLevelError> {
        if width > MAX_WIDTH {
            return Err(TwoLevelError::TooWide {
                width,
                max: MAX_WIDTH,
            });
        }
        if let Some(bad) = cubes.iter().find(|c| c.width() != width) {
            return Err(TwoLevelError::WidthMismatch {
                expected: width,
                found: bad.width(),
            });
        }
        Ok(Cover { width, cubes })
    }

    /// One fully specified cube per minterm, in the given order.
    pub fn from_minterms(width: usize, minterms: impl IntoIterator<Item = u32>) -> Self {
        assert!(width <= MAX_WIDTH);
        Cover {
            width,
            cubes: minterms
                .into_iter()
                .map(|m| Cube::from_minterm(width, m))
                .collect(),
        }
    }

    /// Parses cube strings; all must share a width.
    pub fn parse(width: usize, cubes: &[&str]) -> Result<Self, TwoLevelError> {
        let cubes = cubes
            .iter()
            .map(|s| Cube::parse(s))
            .collect::<Result<Vec<_>, _>>()?;
        Cover::new(width, cubes)
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn cubes(&self) -> &[Cube] {
        &self.cubes
    }

    pub fn into_cubes(self) -> Vec<Cube> {
        self.cubes
    }

    pub fn len(&self) -> usize {
        self.cubes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cubes.is_empty()
    }

    pub fn push(&mut self, cube: Cube) {
        assert_eq!(cube.width(), self.width);
        self.cubes.push(cube);
    }

    pub fn cost(&self) -> Cost {
        Cost {
            cubes: self.cubes.len(),
            literals: self.cubes.iter().map(|c| c.num_literals() as usize).sum(),
        }
    }

    pub fn contains_minterm(&self, minterm: u32) -> bool {
        self.cubes.iter().any(|c| c.contains_minterm(minterm))
    }

    /// Dense truth vector of length `2^width`.
    pub fn truth_vector(&self) -> Vec<bool> {
        let mut out = vec![false; 1usize << self.width];
        for cube in &self.cubes {
            for m in cube.minterms() {
                out[m as usize] = true;
            }
        }
        out
    }

    /// Sorted, deduplicated minterms covered by the cover.
    pub fn minterms(&self) -> Vec<u32> {
        self.truth_vector()
            .iter()
            .enumerate()
            .filter_map(|(m, &on)| on.then_some(m as u32))
            .collect()
    }

    /// Minterms of the complement, sorted.
    pub fn complement_minterms(&self) -> Vec<u32> {
        self.truth_vector()
            .iter()
            .enumerate()
            .filter_map(|(m, &on)| (!on).then_some(m as u32))
            .collect()
    }

    pub fn intersects_cube(&self, cube: &Cube) -> bool {
        self.cubes.iter().any(|c| c.intersects(cube))
    }

    /// Sorts cubes by minterm count descending, then lexicographically.
    pub fn sort_canonical(&mut self) {
        self.cubes
            .sort_by(|a, b| b.num_dashes().cmp(&a.num_dashes()).then_with(|| a.cmp(b)));
    }
}

/// Union of minterms covered by `cover`, in ascending order.
pub fn cover_function(cover: &Cover) -> Vec<u32> {
    cover.minterms()
}

impl fmt::Display for Cover {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.cubes.iter().map(|c| c.to_string()).collect();
        write!(f, "{{{}}}", parts.join(", "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tautology_cube_covers_everything() {
        let c = Cover::parse(2, &["--"]).unwrap();
        assert_eq!(cover_function(&c), vec![0, 1, 2, 3]);
    }

    #[test]
    fn left_column_is_variable_one() {
        let c = Cover::parse(2, &["1-"]).unwrap();
        assert_eq!(cover_function(&c), vec![2, 3]);
    }

    #[test]
    fn empty_cover_is_empty_function() {
        assert!(cover_function(&Cover::empty(3)).is_empty());
    }

    #[test]
    fn width_mismatch_rejected() {
        assert!(matches!(
            Cover::parse(3, &["10"]),
            Err(TwoLevelError::WidthMismatch { .. })
        ));
    }

    #[test]
    fn cost_orders_by_cubes_then_literals() {
        let a = Cost {
            cubes: 2,
            literals: 10,
        };
        let b = Cost {
            cubes: 3,
            literals: 1,
        };
        assert!(a < b);
    }
}
