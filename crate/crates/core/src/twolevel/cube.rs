use std::cmp::Ordering;
use std::fmt;

use super::TwoLevelError;

/// Largest cube width the bitmask representation supports.
pub const MAX_WIDTH: usize = 20;

/// One position of a cube.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Literal {
    Zero,
    One,
    Dash,
}

impl Literal {
    fn rank(self) -> u8 {
        // matches ASCII order of the PLA characters '-', '0', '1'
        match self {
            Literal::Dash => 0,
            Literal::Zero => 1,
            Literal::One => 2,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Literal::Zero => '0',
            Literal::One => '1',
            Literal::Dash => '-',
        }
    }
}

/// A product term over `width` variables.
///
/// Variable `v` is specified when bit `v` of `care` is set, in which case bit `v`
/// of `value` holds its polarity. Bits of `value` outside `care` are always zero,
/// so two cubes are equal iff their fields are equal.
///
/// The textual form lists the highest variable index first, so the rightmost
/// character is variable 0.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Cube {
    width: u8,
    care: u32,
    value: u32,
}

impl Cube {
    /// The all-dash cube.
    pub fn universe(width: usize) -> Self {
        assert!(width <= MAX_WIDTH, "cube width {width} exceeds {MAX_WIDTH}");
        Cube {
            width: width as u8,
            care: 0,
            value: 0,
        }
    }

    pub fn from_minterm(width: usize, minterm: u32) -> Self {
        assert!(width <= MAX_WIDTH, "cube width {width} exceeds {MAX_WIDTH}");
        let full = full_mask(width);
        Cube {
            width: width as u8,
            care: full,
            value: minterm & full,
        }
    }

    /// Builds a cube from raw masks. Value bits outside `care` are cleared.
    pub fn from_masks(width: usize, care: u32, value: u32) -> Self {
        assert!(width <= MAX_WIDTH, "cube width {width} exceeds {MAX_WIDTH}");
        let care = care & full_mask(width);
        Cube {
            width: width as u8,
            care,
            value: value & care,
        }
    }

    pub fn parse(text: &str) -> Result<Self, TwoLevelError> {
        let width = text.chars().count();
        if width > MAX_WIDTH {
            return Err(TwoLevelError::TooWide {
                width,
                max: MAX_WIDTH,
            });
        }
        let mut care = 0u32;
        let mut value = 0u32;
        for (pos, ch) in text.chars().enumerate() {
            let var = width - 1 - pos;
            match ch {
                '0' => care |= 1 << var,
                '1' => {
                    care |= 1 << var;
                    value |= 1 << var;
                }
                '-' => {}
                other => return Err(TwoLevelError::BadCubeChar(other)),
            }
        }
        Ok(Cube {
            width: width as u8,
            care,
            value,
        })
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width as usize
    }

    #[inline]
    pub fn care(&self) -> u32 {
        self.care
    }

    #[inline]
    pub fn value(&self) -> u32 {
        self.value
    }

    pub fn literal(&self, var: usize) -> Literal {
        debug_assert!(var < self.width());
        if self.care & (1 << var) == 0 {
            Literal::Dash
        } else if self.value & (1 << var) != 0 {
            Literal::One
        } else {
            Literal::Zero
        }
    }

    pub fn with_literal(mut self, var: usize, lit: Literal) -> Self {
        let bit = 1u32 << var;
        match lit {
            Literal::Dash => {
                self.care &= !bit;
                self.value &= !bit;
            }
            Literal::Zero => {
                self.care |= bit;
                self.value &= !bit;
            }
            Literal::One => {
                self.care |= bit;
                self.value |= bit;
            }
        }
        self
    }

    /// Number of specified (non-dash) positions.
    #[inline]
    pub fn num_literals(&self) -> u32 {
        self.care.count_ones()
    }

    #[inline]
    pub fn num_dashes(&self) -> u32 {
        self.width as u32 - self.num_literals()
    }

    #[inline]
    pub fn minterm_count(&self) -> u64 {
        1u64 << self.num_dashes()
    }

    #[inline]
    pub fn contains_minterm(&self, minterm: u32) -> bool {
        minterm & self.care == self.value
    }

    /// `other ⊆ self`.
    #[inline]
    pub fn contains(&self, other: &Cube) -> bool {
        self.care & !other.care == 0 && other.value & self.care == self.value
    }

    #[inline]
    pub fn intersects(&self, other: &Cube) -> bool {
        self.conflicts(other) == 0
    }

    /// Variables specified in both cubes with opposite polarity.
    #[inline]
    pub fn conflicts(&self, other: &Cube) -> u32 {
        (self.value ^ other.value) & self.care & other.care
    }

    #[inline]
    pub fn distance(&self, other: &Cube) -> u32 {
        self.conflicts(other).count_ones()
    }

    /// Smallest cube containing both.
    #[inline]
    pub fn supercube(&self, other: &Cube) -> Cube {
        let care = self.care & other.care & !(self.value ^ other.value);
        Cube {
            width: self.width,
            care,
            value: self.value & care,
        }
    }

    /// Raise the listed variables to dashes.
    #[inline]
    pub fn raise(&self, vars: u32) -> Cube {
        Cube {
            width: self.width,
            care: self.care & !vars,
            value: self.value & !vars,
        }
    }

    /// Iterates the minterms covered by the cube in ascending order.
    pub fn minterms(&self) -> impl Iterator<Item = u32> + '_ {
        let free = full_mask(self.width()) & !self.care;
        let base = self.value;
        let mut sub: u32 = 0;
        let mut done = false;
        std::iter::from_fn(move || {
            if done {
                return None;
            }
            let out = base | sub;
            // next subset of `free` in increasing order
            sub = sub.wrapping_sub(free) & free;
            if sub == 0 {
                done = true;
            }
            Some(out)
        })
    }
}

#[inline]
pub(crate) fn full_mask(width: usize) -> u32 {
    if width >= 32 {
        u32::MAX
    } else {
        (1u32 << width) - 1
    }
}

impl Ord for Cube {
    /// Lexicographic order of the textual form, with `-` < `0` < `1`.
    fn cmp(&self, other: &Self) -> Ordering {
        self.width.cmp(&other.width).then_with(|| {
            for var in (0..self.width()).rev() {
                let ord = self.literal(var).rank().cmp(&other.literal(var).rank());
                if ord != Ordering::Equal {
                    return ord;
                }
            }
            Ordering::Equal
        })
    }
}

impl PartialOrd for Cube {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for Cube {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for var in (0..self.width()).rev() {
            write!(f, "{}", self.literal(var).as_char())?;
        }
        Ok(())
    }
}
