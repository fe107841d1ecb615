//! Cell sets and coalition structures (partitions of the cell index set).
//!
//! Cells are 0-based indices. A [`CellSet`] is a 64-bit mask, which caps the
//! network at [`MAX_CELLS`] cells.

use std::fmt;

use crate::error::{Error, Result};

pub const MAX_CELLS: usize = 64;

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct CellSet(u64);

impl CellSet {
    pub const EMPTY: CellSet = CellSet(0);

    pub fn from_bits(bits: u64) -> Self {
        CellSet(bits)
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    pub fn singleton(cell: usize) -> Self {
        debug_assert!(cell < MAX_CELLS);
        CellSet(1 << cell)
    }

    /// The set `{0, .., n-1}`.
    pub fn full(n: usize) -> Self {
        debug_assert!(n <= MAX_CELLS);
        if n == MAX_CELLS {
            CellSet(u64::MAX)
        } else {
            CellSet((1u64 << n) - 1)
        }
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn contains(self, cell: usize) -> bool {
        cell < MAX_CELLS && self.0 & (1 << cell) != 0
    }

    pub fn with(self, cell: usize) -> Self {
        CellSet(self.0 | (1 << cell))
    }

    pub fn without(self, cell: usize) -> Self {
        CellSet(self.0 & !(1 << cell))
    }

    pub fn union(self, other: CellSet) -> Self {
        CellSet(self.0 | other.0)
    }

    pub fn difference(self, other: CellSet) -> Self {
        CellSet(self.0 & !other.0)
    }

    pub fn is_disjoint(self, other: CellSet) -> bool {
        self.0 & other.0 == 0
    }

    /// Smallest member, if any.
    pub fn first(self) -> Option<usize> {
        (self.0 != 0).then(|| self.0.trailing_zeros() as usize)
    }

    /// Members in increasing order.
    pub fn iter(self) -> impl Iterator<Item = usize> {
        let mut bits = self.0;
        std::iter::from_fn(move || {
            if bits == 0 {
                None
            } else {
                let i = bits.trailing_zeros() as usize;
                bits &= bits - 1;
                Some(i)
            }
        })
    }
}

impl FromIterator<usize> for CellSet {
    fn from_iter<T: IntoIterator<Item = usize>>(iter: T) -> Self {
        iter.into_iter().fold(CellSet::EMPTY, CellSet::with)
    }
}

impl fmt::Debug for CellSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for CellSet {
    /// `{1 2 5}` with 1-based cell labels.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (n, c) in self.iter().enumerate() {
            if n > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{}", c + 1)?;
        }
        f.write_str("}")
    }
}

/// A partition of `{0, .., I-1}` into nonempty disjoint coalitions.
///
/// Coalitions are kept in canonical order (sorted by smallest member), so
/// coalition ids are stable for a given partition.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct CoalitionStructure {
    assignment: Vec<usize>,
    coalitions: Vec<CellSet>,
}

impl CoalitionStructure {
    pub fn singletons(num_cells: usize) -> Self {
        Self::from_sets_unchecked(num_cells, (0..num_cells).map(CellSet::singleton).collect())
    }

    pub fn grand(num_cells: usize) -> Self {
        Self::from_sets_unchecked(num_cells, vec![CellSet::full(num_cells)])
    }

    /// Builds a structure from its blocks, checking that they partition the cells.
    pub fn from_sets(num_cells: usize, sets: impl IntoIterator<Item = CellSet>) -> Result<Self> {
        if num_cells == 0 || num_cells > MAX_CELLS {
            return Err(Error::Domain(format!(
                "number of cells must be in 1..={MAX_CELLS}, got {num_cells}"
            )));
        }
        let mut seen = CellSet::EMPTY;
        let mut blocks = Vec::new();
        for s in sets {
            if s.is_empty() {
                return Err(Error::Domain("empty coalition".into()));
            }
            if !s.is_disjoint(seen) {
                return Err(Error::Domain(format!("coalition {s} overlaps another")));
            }
            seen = seen.union(s);
            blocks.push(s);
        }
        if seen != CellSet::full(num_cells) {
            return Err(Error::Domain(format!(
                "coalitions cover {seen}, expected all {num_cells} cells"
            )));
        }
        Ok(Self::from_sets_unchecked(num_cells, blocks))
    }

    /// From an assignment vector (cell -> arbitrary label).
    pub fn from_labels(labels: &[usize]) -> Result<Self> {
        let mut sets: Vec<(usize, CellSet)> = Vec::new();
        for (cell, &label) in labels.iter().enumerate() {
            match sets.iter_mut().find(|(l, _)| *l == label) {
                Some((_, s)) => *s = s.with(cell),
                None => sets.push((label, CellSet::singleton(cell))),
            }
        }
        Self::from_sets(labels.len(), sets.into_iter().map(|(_, s)| s))
    }

    fn from_sets_unchecked(num_cells: usize, mut coalitions: Vec<CellSet>) -> Self {
        coalitions.retain(|s| !s.is_empty());
        coalitions.sort_by_key(|s| s.first());
        let mut assignment = vec![0; num_cells];
        for (id, s) in coalitions.iter().enumerate() {
            for c in s.iter() {
                assignment[c] = id;
            }
        }
        CoalitionStructure {
            assignment,
            coalitions,
        }
    }

    pub fn num_cells(&self) -> usize {
        self.assignment.len()
    }

    pub fn coalitions(&self) -> &[CellSet] {
        &self.coalitions
    }

    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn coalition_id(&self, cell: usize) -> usize {
        self.assignment[cell]
    }

    /// The coalition containing `cell`.
    pub fn coalition_of(&self, cell: usize) -> CellSet {
        self.coalitions[self.assignment[cell]]
    }

    /// All cells outside the coalition of `cell`.
    pub fn complement_of(&self, cell: usize) -> CellSet {
        CellSet::full(self.num_cells()).difference(self.coalition_of(cell))
    }

    pub fn max_coalition_size(&self) -> usize {
        self.coalitions.iter().map(|s| s.len()).max().unwrap_or(0)
    }

    pub fn mean_coalition_size(&self) -> f64 {
        self.num_cells() as f64 / self.coalitions.len() as f64
    }

    /// Replaces the blocks, re-canonicalizing. Used by deviations.
    pub(crate) fn rebuild(&self, coalitions: Vec<CellSet>) -> Self {
        Self::from_sets_unchecked(self.num_cells(), coalitions)
    }
}

impl fmt::Debug for CoalitionStructure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self}")
    }
}

impl fmt::Display for CoalitionStructure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (n, s) in self.coalitions.iter().enumerate() {
            if n > 0 {
                f.write_str(",")?;
            }
            write!(f, "{s}")?;
        }
        f.write_str("}")
    }
}

impl serde::Serialize for CellSet {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl serde::Serialize for CoalitionStructure {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cellset_basics() {
        let s: CellSet = [0, 3, 5].into_iter().collect();
        assert_eq!(s.len(), 3);
        assert!(s.contains(3) && !s.contains(4));
        assert_eq!(s.iter().collect::<Vec<_>>(), vec![0, 3, 5]);
        assert_eq!(s.without(3).with(1).to_string(), "{1 2 6}");
        assert_eq!(CellSet::full(64).len(), 64);
        assert_eq!(CellSet::EMPTY.first(), None);
    }

    #[test]
    fn structure_is_canonical() {
        let a = CoalitionStructure::from_labels(&[2, 0, 2, 1]).unwrap();
        let b = CoalitionStructure::from_labels(&[0, 1, 0, 2]).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_string(), "{{1 3},{2},{4}}");
        assert_eq!(a.coalition_id(2), 0);
        assert_eq!(a.complement_of(0), [1, 3].into_iter().collect());
    }

    #[test]
    fn rejects_non_partitions() {
        let s = |v: &[usize]| v.iter().copied().collect::<CellSet>();
        assert!(CoalitionStructure::from_sets(3, [s(&[0, 1]), s(&[1, 2])]).is_err());
        assert!(CoalitionStructure::from_sets(3, [s(&[0, 1])]).is_err());
        assert!(CoalitionStructure::from_sets(3, [s(&[0, 1]), s(&[2]), CellSet::EMPTY]).is_err());
        assert!(CoalitionStructure::from_sets(3, [s(&[0, 1]), s(&[2])]).is_ok());
    }
}
