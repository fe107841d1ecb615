//! Hedonic coalition formation among cells.
//!
//! A cell's utility is the long-term sum throughput of its MSs, zeroed when
//! it would return to a non-singleton coalition it has already left, or once
//! it has exhausted its search budget. Players move by individual attach or
//! supplant deviations that the members of the joined coalition must accept.

mod formation;

pub use formation::{
    is_individually_stable, run_formation, FormationConfig, FormationOutcome, FormationTrace, Proposal, TraceStep,
};

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::longterm::ThroughputModel;
use crate::structure::{CellSet, CoalitionStructure};

/// Per-player state carried through a formation run.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PlayerState {
    /// Coalitions previously left by this player.
    pub history: HashSet<CellSet>,
    pub budget: usize,
    /// Deviation proposals issued so far.
    pub searches: usize,
}

impl PlayerState {
    pub fn new(budget: usize) -> Self {
        PlayerState {
            history: HashSet::new(),
            budget,
            searches: 0,
        }
    }

    /// Whether the history/budget gate lets `coalition` count for this player.
    pub fn admits(&self, coalition: CellSet) -> bool {
        (coalition.len() == 1 || !self.history.contains(&coalition)) && self.searches <= self.budget
    }
}

/// Memoized per-cell throughputs, keyed by the cell's coalition member set.
pub struct Evaluator<'a> {
    model: ThroughputModel<'a>,
    cache: HashMap<(usize, CellSet), f64>,
}

impl<'a> Evaluator<'a> {
    pub fn new(model: ThroughputModel<'a>) -> Self {
        Evaluator {
            model,
            cache: HashMap::new(),
        }
    }

    pub fn model(&self) -> &ThroughputModel<'a> {
        &self.model
    }

    pub fn cell_value(&mut self, cell: usize, coalition: CellSet) -> f64 {
        let model = &self.model;
        *self
            .cache
            .entry((cell, coalition))
            .or_insert_with(|| model.cell_throughput(cell, coalition))
    }

    pub fn utility(&mut self, cell: usize, structure: &CoalitionStructure, state: &PlayerState) -> f64 {
        let coalition = structure.coalition_of(cell);
        if state.admits(coalition) {
            self.cell_value(cell, coalition)
        } else {
            0.0
        }
    }

    pub fn sum_throughput(&mut self, structure: &CoalitionStructure) -> f64 {
        structure
            .coalitions()
            .iter()
            .map(|&c| c.iter().map(|i| self.cell_value(i, c)).sum::<f64>())
            .sum()
    }
}

/// Utility of `cell` under `structure` (uncached).
pub fn utility(cell: usize, structure: &CoalitionStructure, state: &PlayerState, model: &ThroughputModel) -> f64 {
    let coalition = structure.coalition_of(cell);
    if state.admits(coalition) {
        model.cell_throughput(cell, coalition)
    } else {
        0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeviationKind {
    Attach,
    Supplant,
}

impl fmt::Display for DeviationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DeviationKind::Attach => "attach",
            DeviationKind::Supplant => "supplant",
        })
    }
}

/// Which deviations players may use.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DeviationMode {
    AttachOnly,
    AttachOrSupplant,
}

/// An individual deviation. An empty `target` means leaving to a singleton.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Deviation {
    pub player: usize,
    pub target: CellSet,
    pub outcast: Option<usize>,
}

impl Deviation {
    pub fn attach(player: usize, target: CellSet) -> Self {
        Deviation {
            player,
            target,
            outcast: None,
        }
    }

    pub fn supplant(player: usize, target: CellSet, outcast: usize) -> Self {
        Deviation {
            player,
            target,
            outcast: Some(outcast),
        }
    }

    pub fn kind(&self) -> DeviationKind {
        match self.outcast {
            None => DeviationKind::Attach,
            Some(_) => DeviationKind::Supplant,
        }
    }

    /// The coalition the player ends up in.
    pub fn joined(&self) -> CellSet {
        match self.outcast {
            None => self.target.with(self.player),
            Some(q) => self.target.without(q).with(self.player),
        }
    }

    pub fn apply(&self, structure: &CoalitionStructure) -> Result<CoalitionStructure> {
        match self.outcast {
            None => apply_attach(structure, self.player, self.target),
            Some(q) => apply_supplant(structure, self.player, self.target, q),
        }
    }
}

fn check_target(structure: &CoalitionStructure, player: usize, target: CellSet) -> Result<CellSet> {
    if player >= structure.num_cells() {
        return Err(Error::InvalidDeviation(format!("no cell {}", player + 1)));
    }
    let own = structure.coalition_of(player);
    if target == own {
        return Err(Error::InvalidDeviation(format!(
            "cell {} already belongs to {target}",
            player + 1
        )));
    }
    if !target.is_empty() && !structure.coalitions().contains(&target) {
        return Err(Error::InvalidDeviation(format!("{target} is not a coalition of {structure}")));
    }
    Ok(own)
}

/// Player leaves its coalition and joins `target` (empty: becomes a singleton).
pub fn apply_attach(structure: &CoalitionStructure, player: usize, target: CellSet) -> Result<CoalitionStructure> {
    let own = check_target(structure, player, target)?;
    if target.is_empty() && own.len() == 1 {
        return Err(Error::InvalidDeviation(format!(
            "cell {} is already a singleton",
            player + 1
        )));
    }
    let mut blocks: Vec<CellSet> = structure
        .coalitions()
        .iter()
        .copied()
        .filter(|&c| c != own && c != target)
        .collect();
    blocks.push(own.without(player));
    blocks.push(target.with(player));
    Ok(structure.rebuild(blocks))
}

/// Player joins `target` in place of `outcast`, who becomes a singleton.
pub fn apply_supplant(
    structure: &CoalitionStructure,
    player: usize,
    target: CellSet,
    outcast: usize,
) -> Result<CoalitionStructure> {
    let own = check_target(structure, player, target)?;
    if !target.contains(outcast) {
        return Err(Error::InvalidDeviation(format!(
            "outcast {} is not a member of {target}",
            outcast + 1
        )));
    }
    let mut blocks: Vec<CellSet> = structure
        .coalitions()
        .iter()
        .copied()
        .filter(|&c| c != own && c != target)
        .collect();
    blocks.push(own.without(player));
    blocks.push(target.without(outcast).with(player));
    blocks.push(CellSet::singleton(outcast));
    Ok(structure.rebuild(blocks))
}

/// Admissibility of a deviation: the deviator strictly gains and every
/// remaining member of the target coalition (the outcast excepted) weakly
/// gains, each judged with its own history and budget.
pub fn is_admissible(
    deviation: &Deviation,
    structure: &CoalitionStructure,
    states: &[PlayerState],
    evaluator: &mut Evaluator,
) -> Result<bool> {
    let after = deviation.apply(structure)?;
    Ok(admissible_with(deviation, structure, &after, states, evaluator))
}

pub(crate) fn admissible_with(
    deviation: &Deviation,
    before: &CoalitionStructure,
    after: &CoalitionStructure,
    states: &[PlayerState],
    evaluator: &mut Evaluator,
) -> bool {
    let i = deviation.player;
    if evaluator.utility(i, after, &states[i]) <= evaluator.utility(i, before, &states[i]) {
        return false;
    }
    let voters = match deviation.outcast {
        None => deviation.target,
        Some(q) => deviation.target.without(q),
    };
    voters
        .iter()
        .all(|j| evaluator.utility(j, after, &states[j]) >= evaluator.utility(j, before, &states[j]))
}
