//! Closed-form long-term throughput of each MS under a coalition structure.
//!
//! Every cell's throughput depends only on the member set of its own
//! coalition. Phase 1 (time sharing between coalitions) pays the CSI
//! acquisition overhead and is noise limited; phase 2 (spectrum sharing)
//! sees the unmitigated intercoalition interference as extra noise.

mod expint;

pub use expint::{ergodic_rate_nats, exp_integral_e1};

use std::f64::consts::LOG2_E;

use serde::Serialize;

use crate::netgen::{Network, Scenario};
use crate::structure::{CellSet, CoalitionStructure};

/// Per-cell antenna and stream dimensions for the general overhead count.
#[derive(Clone, Debug, PartialEq)]
pub struct CellDims {
    pub bs_antennas: u64,
    /// `(ms_antennas, streams)` for each served MS.
    pub mss: Vec<(u64, u64)>,
}

/// CSI acquisition symbols for an arbitrary (possibly asymmetric) coalition:
/// DL training per cell, UL and effective DL training per MS, and analog
/// feedback of every intracoalition channel.
pub fn csi_overhead_general(cells: &[CellDims]) -> u64 {
    let feedback: u64 = cells.iter().map(|c| c.bs_antennas).sum();
    cells
        .iter()
        .map(|c| {
            c.bs_antennas
                + c.mss
                    .iter()
                    .map(|&(n, d)| n + d + feedback)
                    .sum::<u64>()
        })
        .sum()
}

/// Symmetric-network overhead `(M + K(N+d))|C| + KM|C|²`.
pub fn csi_overhead_symbols(coalition_size: usize, scenario: &Scenario) -> u64 {
    let c = coalition_size as u64;
    let m = scenario.bs_antennas as u64;
    let k = scenario.mss_per_cell as u64;
    let n = scenario.ms_antennas as u64;
    let d = scenario.streams_per_ms as u64;
    (m + k * (n + d)) * c + k * m * c * c
}

/// Symmetric dimensions of `size` cells, for feeding [`csi_overhead_general`].
pub fn symmetric_dims(size: usize, scenario: &Scenario) -> Vec<CellDims> {
    let ms = (scenario.ms_antennas as u64, scenario.streams_per_ms as u64);
    vec![
        CellDims {
            bs_antennas: scenario.bs_antennas as u64,
            mss: vec![ms; scenario.mss_per_cell],
        };
        size
    ]
}

/// Almost-sure feasibility of intracoalition alignment in a symmetric
/// network: `|C| K d <= M + N - d`.
pub fn iia_feasible(coalition_size: usize, scenario: &Scenario) -> bool {
    let lhs = coalition_size * scenario.mss_per_cell * scenario.streams_per_ms;
    lhs + scenario.streams_per_ms <= scenario.bs_antennas + scenario.ms_antennas
}

/// Largest coalition size that passes [`iia_feasible`].
pub fn max_iia_feasible_size(scenario: &Scenario) -> usize {
    (scenario.bs_antennas + scenario.ms_antennas - scenario.streams_per_ms)
        / (scenario.mss_per_cell * scenario.streams_per_ms)
}

/// Symbols of the coherence block given to phase 1, `(1-β) L_c`.
pub fn phase1_symbols(scenario: &Scenario, network: &Network) -> f64 {
    (1.0 - scenario.beta) * network.coherence_symbols as f64
}

/// `|C|/I >= L_t / L_c1`, evaluated as `|C| L_c1 >= L_t I`.
pub fn csi_feasible_raw(coalition_size: usize, num_cells: usize, overhead: u64, phase1_symbols: f64) -> bool {
    coalition_size as f64 * phase1_symbols >= overhead as f64 * num_cells as f64
}

pub fn csi_feasible(coalition_size: usize, scenario: &Scenario, network: &Network) -> bool {
    csi_feasible_raw(
        coalition_size,
        scenario.num_cells,
        csi_overhead_symbols(coalition_size, scenario),
        phase1_symbols(scenario, network),
    )
}

/// `(1-β)(|C|/I - L_t/L_c1)`. Not clamped; negative when CSI infeasible.
pub fn prelog_phase1_raw(beta: f64, coalition_size: usize, num_cells: usize, overhead: u64, phase1_symbols: f64) -> f64 {
    (1.0 - beta) * (coalition_size as f64 / num_cells as f64 - overhead as f64 / phase1_symbols)
}

pub fn prelog_phase1(coalition_size: usize, scenario: &Scenario, network: &Network) -> f64 {
    prelog_phase1_raw(
        scenario.beta,
        coalition_size,
        scenario.num_cells,
        csi_overhead_symbols(coalition_size, scenario),
        phase1_symbols(scenario, network),
    )
}

/// Long-term throughput components of one MS.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ThroughputBreakdown {
    pub alpha1: f64,
    pub alpha2: f64,
    pub rho1: f64,
    pub rho2: f64,
    /// bits/s/Hz
    pub rbar1: f64,
    /// bits/s/Hz
    pub rbar2: f64,
    pub feasible_iia: bool,
    pub feasible_csi: bool,
    /// bits/s/Hz
    pub total: f64,
}

/// Long-term throughput of MS `ms` in `cell` when its cell belongs to `coalition`.
pub fn longterm_throughput(
    cell: usize,
    ms: usize,
    coalition: CellSet,
    scenario: &Scenario,
    network: &Network,
) -> ThroughputBreakdown {
    debug_assert!(coalition.contains(cell));
    let size = coalition.len();
    let d = scenario.streams_per_ms as f64;
    let k = scenario.mss_per_cell as f64;
    let signal = network.gain(cell, ms, cell) * network.powers[cell] / (k * d);
    let outside = CellSet::full(network.num_cells()).difference(coalition);
    let interference: f64 = outside
        .iter()
        .map(|j| network.gain(cell, ms, j) * network.powers[j])
        .sum();
    let rho1 = signal / network.noise;
    let rho2 = signal / (network.noise + interference);
    let rbar1 = d * LOG2_E * ergodic_rate_nats(rho1);
    let rbar2 = d * LOG2_E * ergodic_rate_nats(rho2);
    let alpha1 = prelog_phase1(size, scenario, network);
    let alpha2 = scenario.beta;
    let feasible_iia = iia_feasible(size, scenario);
    let feasible_csi = csi_feasible(size, scenario, network);
    let total = if feasible_iia && feasible_csi {
        alpha1 * rbar1 + alpha2 * rbar2
    } else {
        0.0
    };
    ThroughputBreakdown {
        alpha1,
        alpha2,
        rho1,
        rho2,
        rbar1,
        rbar2,
        feasible_iia,
        feasible_csi,
        total,
    }
}

/// Throughput evaluation bound to one drop.
///
/// `ignore_iia` drops the alignment feasibility gate, which lets clustering
/// target precoders that do not need exact alignment.
#[derive(Clone, Copy, Debug)]
pub struct ThroughputModel<'a> {
    pub scenario: &'a Scenario,
    pub network: &'a Network,
    pub ignore_iia: bool,
}

impl<'a> ThroughputModel<'a> {
    pub fn new(scenario: &'a Scenario, network: &'a Network) -> Self {
        ThroughputModel {
            scenario,
            network,
            ignore_iia: false,
        }
    }

    pub fn ignoring_iia(self) -> Self {
        ThroughputModel {
            ignore_iia: true,
            ..self
        }
    }

    pub fn num_cells(&self) -> usize {
        self.scenario.num_cells
    }

    pub fn ms_throughput(&self, cell: usize, ms: usize, coalition: CellSet) -> f64 {
        let b = longterm_throughput(cell, ms, coalition, self.scenario, self.network);
        if self.ignore_iia && !b.feasible_iia && b.feasible_csi {
            b.alpha1 * b.rbar1 + b.alpha2 * b.rbar2
        } else {
            b.total
        }
    }

    /// Sum over the MSs of `cell`.
    pub fn cell_throughput(&self, cell: usize, coalition: CellSet) -> f64 {
        (0..self.scenario.mss_per_cell)
            .map(|k| self.ms_throughput(cell, k, coalition))
            .sum()
    }

    /// Sum over all MSs of the coalition's cells, members in increasing order.
    pub fn coalition_throughput(&self, coalition: CellSet) -> f64 {
        coalition.iter().map(|i| self.cell_throughput(i, coalition)).sum()
    }

    /// Coalitions in canonical order, each via [`Self::coalition_throughput`].
    pub fn sum_throughput(&self, structure: &CoalitionStructure) -> f64 {
        structure
            .coalitions()
            .iter()
            .map(|&c| self.coalition_throughput(c))
            .sum()
    }
}

/// Sum throughput over all served MSs.
pub fn sum_throughput(structure: &CoalitionStructure, scenario: &Scenario, network: &Network) -> f64 {
    ThroughputModel::new(scenario, network).sum_throughput(structure)
}
