//! Exhaustive search for the sum-throughput optimal coalition structure.
//!
//! Partitions are generated as restricted growth strings: `a[0] = 0` and
//! `a[i] ≤ max(a[..i]) + 1`, in lexicographic order. A block-size cap is
//! enforced during generation, so capped enumeration never visits the
//! excluded partitions.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::longterm::{max_iia_feasible_size, ThroughputModel};
use crate::structure::{CellSet, CoalitionStructure, MAX_CELLS};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EnumerationBudget {
    pub max_cells: usize,
    pub max_coalition_size: Option<usize>,
}

impl Default for EnumerationBudget {
    fn default() -> Self {
        EnumerationBudget {
            max_cells: 13,
            max_coalition_size: None,
        }
    }
}

/// Iterator over the set partitions of `{0, .., n-1}`.
pub struct Partitions {
    labels: Vec<usize>,
    cap: usize,
    started: bool,
    done: bool,
}

impl Partitions {
    fn new(n: usize, cap: usize) -> Self {
        let mut p = Partitions {
            labels: vec![0; n],
            cap: cap.max(1),
            started: false,
            done: n == 0,
        };
        p.complete_from(0);
        p
    }

    /// Fills `labels[from..]` with the smallest labels that respect the cap.
    fn complete_from(&mut self, from: usize) {
        let n = self.labels.len();
        let mut counts = vec![0usize; n + 1];
        let mut next = 0;
        for &l in &self.labels[..from] {
            counts[l] += 1;
            next = next.max(l + 1);
        }
        for j in from..n {
            let l = (0..=next).find(|&l| counts[l] < self.cap).unwrap_or(next);
            self.labels[j] = l;
            counts[l] += 1;
            next = next.max(l + 1);
        }
    }

    fn advance(&mut self) -> bool {
        let n = self.labels.len();
        for i in (1..n).rev() {
            let mut counts = vec![0usize; n + 1];
            let mut next = 0;
            for &l in &self.labels[..i] {
                counts[l] += 1;
                next = next.max(l + 1);
            }
            if let Some(l) = (self.labels[i] + 1..=next).find(|&l| counts[l] < self.cap) {
                self.labels[i] = l;
                self.complete_from(i + 1);
                return true;
            }
        }
        false
    }
}

impl Iterator for Partitions {
    type Item = CoalitionStructure;

    fn next(&mut self) -> Option<CoalitionStructure> {
        if self.done {
            return None;
        }
        if self.started && !self.advance() {
            self.done = true;
            return None;
        }
        self.started = true;
        Some(CoalitionStructure::from_labels(&self.labels).expect("growth strings are partitions"))
    }
}

/// Every partition of `num_cells` cells exactly once, optionally without blocks
/// larger than the budget's coalition-size cap.
pub fn enumerate_partitions(num_cells: usize, budget: &EnumerationBudget) -> Result<Partitions> {
    if num_cells > budget.max_cells.min(MAX_CELLS) {
        return Err(Error::Budget {
            cells: num_cells,
            cap: budget.max_cells,
        });
    }
    if num_cells == 0 {
        return Err(Error::Domain("need at least one cell".into()));
    }
    Ok(Partitions::new(num_cells, budget.max_coalition_size.unwrap_or(num_cells)))
}

/// The structure maximizing the long-term sum throughput, with its value.
///
/// Unless the model ignores the alignment gate, blocks beyond the largest
/// alignment-feasible size are pruned: such a block contributes nothing, and
/// splitting it into singletons leaves every other block's value unchanged,
/// so a pruned partition is always at least matched by one that is kept.
/// Ties go to the first structure in enumeration order.
pub fn optimal_structure(model: ThroughputModel, budget: &EnumerationBudget) -> Result<(CoalitionStructure, f64)> {
    let n = model.num_cells();
    let mut cap = budget.max_coalition_size.unwrap_or(n);
    if !model.ignore_iia {
        cap = cap.min(max_iia_feasible_size(model.scenario).max(1));
    }
    let pruned = EnumerationBudget {
        max_coalition_size: Some(cap),
        ..*budget
    };
    let mut values: HashMap<CellSet, f64> = HashMap::new();
    let mut best: Option<(CoalitionStructure, f64)> = None;
    for s in enumerate_partitions(n, &pruned)? {
        let v: f64 = s
            .coalitions()
            .iter()
            .map(|&c| *values.entry(c).or_insert_with(|| model.coalition_throughput(c)))
            .sum();
        if best.as_ref().is_none_or(|(_, b)| v > *b) {
            best = Some((s, v));
        }
    }
    Ok(best.expect("at least one partition"))
}
