//! The sequential formation protocol and the stability certifier.

use std::cmp::Ordering;
use std::fmt::Write as _;

use serde::Serialize;

use super::{admissible_with, Deviation, DeviationKind, DeviationMode, Evaluator, PlayerState};
use crate::longterm::ThroughputModel;
use crate::structure::{CellSet, CoalitionStructure};

#[derive(Clone, Debug)]
pub struct FormationConfig {
    pub mode: DeviationMode,
    /// Per-player search budgets; `None` gives every player `10·I`.
    pub budgets: Option<Vec<usize>>,
    /// Deviations that would create a larger coalition are never considered.
    pub max_coalition_size: Option<usize>,
}

impl Default for FormationConfig {
    fn default() -> Self {
        FormationConfig {
            mode: DeviationMode::AttachOrSupplant,
            budgets: None,
            max_coalition_size: None,
        }
    }
}

impl FormationConfig {
    pub fn attach_only() -> Self {
        FormationConfig {
            mode: DeviationMode::AttachOnly,
            ..Self::default()
        }
    }

    fn initial_states(&self, num_cells: usize) -> Vec<PlayerState> {
        match &self.budgets {
            Some(b) => {
                assert_eq!(b.len(), num_cells, "one budget per cell");
                b.iter().map(|&b| PlayerState::new(b)).collect()
            }
            None => vec![PlayerState::new(10 * num_cells); num_cells],
        }
    }
}

/// One applied deviation.
#[derive(Clone, Debug, Serialize)]
pub struct TraceStep {
    pub player: usize,
    pub kind: DeviationKind,
    /// Coalition joined (before the player entered it); empty for leaving.
    pub target: CellSet,
    pub outcast: Option<usize>,
    pub structure_after: CoalitionStructure,
    pub sum_throughput_after: f64,
}

/// One issued proposal, admissible or not.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct Proposal {
    pub player: usize,
    pub kind: DeviationKind,
    pub target: CellSet,
    pub outcast: Option<usize>,
    /// Deviator utility after the move, as used for sorting.
    pub utility: f64,
    pub accepted: bool,
}

#[derive(Clone, Debug, Default, Serialize)]
pub struct FormationTrace {
    pub steps: Vec<TraceStep>,
    pub proposals: Vec<Proposal>,
    /// Final search counters per player.
    pub searches: Vec<usize>,
}

impl FormationTrace {
    pub fn total_proposals(&self) -> usize {
        self.proposals.len()
    }

    /// Tab-separated log: step, player, kind, target, outcast, sum throughput after.
    /// Cells are 1-based; `-` marks no outcast.
    pub fn to_text(&self) -> String {
        let mut out = String::from("step\tplayer\tkind\ttarget\toutcast\tsum_throughput\n");
        for (n, s) in self.steps.iter().enumerate() {
            let outcast = s.outcast.map_or("-".to_string(), |q| (q + 1).to_string());
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{:.9}",
                n + 1,
                s.player + 1,
                s.kind,
                s.target,
                outcast,
                s.sum_throughput_after
            );
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct FormationOutcome {
    pub structure: CoalitionStructure,
    pub states: Vec<PlayerState>,
    pub trace: FormationTrace,
}

struct Candidate {
    deviation: Deviation,
    after: CoalitionStructure,
    utility: f64,
    /// Coalition id of the target, `usize::MAX` for the empty target.
    target_id: usize,
}

fn candidate_order(a: &Candidate, b: &Candidate) -> Ordering {
    b.utility
        .total_cmp(&a.utility)
        .then(a.target_id.cmp(&b.target_id))
        .then(a.deviation.kind().cmp(&b.deviation.kind()))
        .then(a.deviation.outcast.cmp(&b.deviation.outcast))
}

/// All structurally valid deviations of `player` allowed by `mode` and the size cap.
fn deviations_of(
    structure: &CoalitionStructure,
    player: usize,
    mode: DeviationMode,
    max_size: Option<usize>,
) -> Vec<(Deviation, usize)> {
    let own = structure.coalition_of(player);
    let cap = max_size.unwrap_or(usize::MAX);
    let mut out = Vec::new();
    for (id, &target) in structure.coalitions().iter().enumerate() {
        if target == own {
            continue;
        }
        if target.len() < cap {
            out.push((Deviation::attach(player, target), id));
        }
        if mode == DeviationMode::AttachOrSupplant {
            for q in target.iter() {
                out.push((Deviation::supplant(player, target, q), id));
            }
        }
    }
    if own.len() > 1 {
        out.push((Deviation::attach(player, CellSet::EMPTY), usize::MAX));
    }
    out
}

fn improving_candidates(
    structure: &CoalitionStructure,
    player: usize,
    states: &[PlayerState],
    evaluator: &mut Evaluator,
    config: &FormationConfig,
) -> Vec<Candidate> {
    let current = evaluator.utility(player, structure, &states[player]);
    let mut list: Vec<Candidate> = deviations_of(structure, player, config.mode, config.max_coalition_size)
        .into_iter()
        .filter_map(|(deviation, target_id)| {
            let after = deviation.apply(structure).ok()?;
            let utility = evaluator.utility(player, &after, &states[player]);
            (utility > current).then_some(Candidate {
                deviation,
                after,
                utility,
                target_id,
            })
        })
        .collect();
    list.sort_by(candidate_order);
    list
}

/// Runs the coalition formation protocol from `initial`.
///
/// Players take turns in index order. The player on turn proposes its
/// self-improving deviations best first, counting each proposal against its
/// budget; the first admissible one is applied and the turn order restarts
/// from the first player. The run ends after a full pass with no deviation.
pub fn run_formation(
    initial: CoalitionStructure,
    model: ThroughputModel,
    config: &FormationConfig,
) -> FormationOutcome {
    let n = initial.num_cells();
    let mut evaluator = Evaluator::new(model);
    let mut states = config.initial_states(n);
    let mut structure = initial;
    let mut trace = FormationTrace::default();

    let mut player = 0;
    while player < n {
        let candidates = improving_candidates(&structure, player, &states, &mut evaluator, config);
        let mut moved = false;
        for c in candidates {
            // A proposal past the budget can never be admissible.
            if states[player].searches >= states[player].budget {
                break;
            }
            states[player].searches += 1;
            let accepted = admissible_with(&c.deviation, &structure, &c.after, &states, &mut evaluator);
            trace.proposals.push(Proposal {
                player,
                kind: c.deviation.kind(),
                target: c.deviation.target,
                outcast: c.deviation.outcast,
                utility: c.utility,
                accepted,
            });
            if accepted {
                states[player].history.insert(structure.coalition_of(player));
                structure = c.after;
                trace.steps.push(TraceStep {
                    player,
                    kind: c.deviation.kind(),
                    target: c.deviation.target,
                    outcast: c.deviation.outcast,
                    sum_throughput_after: evaluator.sum_throughput(&structure),
                    structure_after: structure.clone(),
                });
                moved = true;
                break;
            }
        }
        player = if moved { 0 } else { player + 1 };
    }
    trace.searches = states.iter().map(|s| s.searches).collect();
    FormationOutcome {
        structure,
        states,
        trace,
    }
}

/// Whether no player has an admissible deviation, checked exhaustively over
/// every attach target and every supplant (target, outcast) pair allowed by
/// `mode` and the size cap.
pub fn is_individually_stable(
    structure: &CoalitionStructure,
    states: &[PlayerState],
    model: ThroughputModel,
    mode: DeviationMode,
    max_coalition_size: Option<usize>,
) -> bool {
    let mut evaluator = Evaluator::new(model);
    (0..structure.num_cells()).all(|player| {
        deviations_of(structure, player, mode, max_coalition_size)
            .into_iter()
            .all(|(dev, _)| match dev.apply(structure) {
                Ok(after) => !admissible_with(&dev, structure, &after, states, &mut evaluator),
                Err(_) => true,
            })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::longterm::max_iia_feasible_size;
    use crate::netgen::{generate_network, Network, Scenario};

    fn desk(num_cells: usize) -> Scenario {
        Scenario {
            num_cells,
            ms_speed_kmh: 3.0,
            ..Scenario::default()
        }
    }

    fn run(s: &Scenario, net: &Network, config: &FormationConfig) -> FormationOutcome {
        run_formation(CoalitionStructure::singletons(s.num_cells), ThroughputModel::new(s, net), config)
    }

    #[test]
    fn single_cell_is_immediate() {
        let s = desk(1);
        let net = generate_network(&s, 0).unwrap();
        let out = run(&s, &net, &FormationConfig::default());
        assert_eq!(out.structure, CoalitionStructure::singletons(1));
        assert_eq!(out.trace.total_proposals(), 0);
    }

    #[test]
    fn strongly_coupled_pair_merges() {
        let s = Scenario {
            num_cells: 2,
            ..Scenario::default()
        };
        let g = 1e-9;
        let gains = vec![vec![vec![g, g]; 2], vec![vec![g, g]; 2]];
        let net = Network::from_gains(&s, gains, 100_000).unwrap();
        let model = ThroughputModel::new(&s, &net);
        let pair = CellSet::full(2);
        for c in 0..2 {
            assert!(model.cell_throughput(c, pair) > model.cell_throughput(c, CellSet::singleton(c)));
        }
        let out = run(&s, &net, &FormationConfig::default());
        assert_eq!(out.structure, CoalitionStructure::grand(2));
        assert_eq!(out.trace.steps.len(), 1);
    }

    #[test]
    fn output_is_stable_and_trace_consistent() {
        for seed in 0..12 {
            let s = desk(if seed % 2 == 0 { 6 } else { 8 });
            let net = generate_network(&s, seed).unwrap();
            let model = ThroughputModel::new(&s, &net);
            for config in [FormationConfig::default(), FormationConfig::attach_only()] {
                let out = run(&s, &net, &config);
                assert!(is_individually_stable(&out.structure, &out.states, model, config.mode, None));
                assert!(out.structure.max_coalition_size() <= max_iia_feasible_size(&s).max(1));

                let total: usize = out.trace.searches.iter().sum();
                assert_eq!(total, out.trace.total_proposals());
                let budget_sum: usize = out.states.iter().map(|p| p.budget).sum();
                assert!(total <= budget_sum);

                // Replay: each step follows from the previous structure.
                let mut cur = CoalitionStructure::singletons(s.num_cells);
                for step in &out.trace.steps {
                    let dev = Deviation {
                        player: step.player,
                        target: step.target,
                        outcast: step.outcast,
                    };
                    cur = dev.apply(&cur).unwrap();
                    assert_eq!(cur, step.structure_after);
                    assert!((model.sum_throughput(&cur) - step.sum_throughput_after).abs() < 1e-9);
                }
                assert_eq!(cur, out.structure);
            }
        }
    }

    #[test]
    fn proposals_sorted_within_each_turn() {
        let s = desk(8);
        let net = generate_network(&s, 3).unwrap();
        let out = run(&s, &net, &FormationConfig::default());
        // A turn's proposals are consecutive entries for the same player ending
        // at an acceptance or a player change.
        let mut prev: Option<&Proposal> = None;
        for p in &out.trace.proposals {
            if let Some(q) = prev {
                if q.player == p.player && !q.accepted {
                    assert!(q.utility >= p.utility);
                }
            }
            prev = Some(p);
        }
    }

    #[test]
    fn never_rejoins_a_left_coalition() {
        for seed in 0..6 {
            let s = desk(8);
            let net = generate_network(&s, 100 + seed).unwrap();
            let out = run(&s, &net, &FormationConfig::default());
            let mut history = vec![std::collections::HashSet::new(); s.num_cells];
            let mut cur = CoalitionStructure::singletons(s.num_cells);
            for step in &out.trace.steps {
                let joined = step.structure_after.coalition_of(step.player);
                assert!(joined.len() == 1 || !history[step.player].contains(&joined));
                history[step.player].insert(cur.coalition_of(step.player));
                cur = step.structure_after.clone();
            }
            for (h, st) in history.iter().zip(&out.states) {
                assert_eq!(h, &st.history);
            }
        }
    }

    #[test]
    fn history_sets_contain_their_owner_and_obey_the_bound() {
        let s = desk(8);
        let cap = 3;
        for seed in 0..6 {
            let net = generate_network(&s, 200 + seed).unwrap();
            let config = FormationConfig {
                max_coalition_size: Some(cap),
                ..FormationConfig::default()
            };
            let out = run(&s, &net, &config);
            assert!(out.structure.max_coalition_size() <= cap);
            let bound = cap * s.num_cells.pow(cap as u32 - 1);
            for (i, st) in out.states.iter().enumerate() {
                assert!(st.history.iter().all(|c| c.contains(i)));
                assert!(st.history.len() <= bound);
            }
        }
    }

    #[test]
    fn exhausted_budgets_are_vacuously_stable() {
        let s = desk(6);
        let net = generate_network(&s, 9).unwrap();
        let mut states = vec![PlayerState::new(0); 6];
        for st in &mut states {
            st.searches = 1;
        }
        let model = ThroughputModel::new(&s, &net);
        assert!(is_individually_stable(
            &CoalitionStructure::singletons(6),
            &states,
            model,
            DeviationMode::AttachOrSupplant,
            None
        ));
    }

    #[test]
    fn certifier_flags_an_open_attach() {
        let s = Scenario {
            num_cells: 2,
            ..Scenario::default()
        };
        let g = 1e-9;
        let gains = vec![vec![vec![g, g]; 2], vec![vec![g, g]; 2]];
        let net = Network::from_gains(&s, gains, 100_000).unwrap();
        let model = ThroughputModel::new(&s, &net);
        let states = vec![PlayerState::new(20); 2];
        assert!(!is_individually_stable(
            &CoalitionStructure::singletons(2),
            &states,
            model,
            DeviationMode::AttachOnly,
            None
        ));
    }

    #[test]
    fn zero_budget_means_no_proposals() {
        let s = desk(6);
        let net = generate_network(&s, 4).unwrap();
        let config = FormationConfig {
            budgets: Some(vec![0; 6]),
            ..FormationConfig::default()
        };
        let out = run(&s, &net, &config);
        assert!(out.trace.searches.iter().all(|&n| n == 0));
        assert!(out.trace.steps.is_empty());
    }

    #[test]
    fn trace_text_has_one_line_per_step() {
        let s = desk(8);
        let net = generate_network(&s, 5).unwrap();
        let out = run(&s, &net, &FormationConfig::default());
        let text = out.trace.to_text();
        assert_eq!(text.lines().count(), out.trace.steps.len() + 1);
        for line in text.lines().skip(1) {
            assert_eq!(line.split('\t').count(), 6);
        }
    }
}
