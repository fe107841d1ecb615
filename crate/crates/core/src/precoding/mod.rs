//! Short-term transmit and receive filters.
//!
//! Two families live here: an exact intracoalition alignment constructor
//! (relaxed leakage minimization followed by null-space orthogonalization)
//! and the robust intracoalition WMMSE iteration with its naive variant.
//!
//! Filters are indexed `[cell][ms]`; `V` is `M×d`, `U` is `N×d`. Cells outside
//! the active set carry empty (zero-column) filters.

mod iia;
mod wmmse;

pub use iia::{
    iia_orthogonalize, iia_relaxed_solve, IiaSolution, RelaxedSolution, DEGENERACY_TOL, DEFAULT_RELAXED_ITERS,
    DEFAULT_RELAXED_TOL,
};
pub use wmmse::{
    naive_wmmse, robust_wmmse, IterationRecord, PrecodingSolution, WmmseConfig, WmmseMode, WmmseSolver,
};

use num_complex::Complex64;

use crate::error::Result;
use crate::linalg::hpd_solve;
use crate::netgen::{CMat, ChannelRealization, Network, Scenario};
use crate::structure::CellSet;

pub type Filters = Vec<Vec<CMat>>;

/// Empty filters for every MS, `rows×0`.
pub(crate) fn empty_filters(scenario: &Scenario, rows: usize) -> Filters {
    vec![vec![CMat::zeros(rows, 0); scenario.mss_per_cell]; scenario.num_cells]
}

/// Per MS, the `d` strongest right singular vectors of its direct channel,
/// each scaled to power `P_i/(K_i d)`.
pub fn singular_vector_init(
    channels: &ChannelRealization,
    network: &Network,
    scenario: &Scenario,
    active: CellSet,
) -> Filters {
    let d = scenario.streams_per_ms;
    let k_count = scenario.mss_per_cell;
    let mut v = empty_filters(scenario, scenario.bs_antennas);
    for i in active.iter() {
        let scale = Complex64::from((network.powers[i] / (k_count * d) as f64).sqrt());
        for k in 0..k_count {
            // Right singular vectors of H are eigenvectors of HᴴH.
            let h = channels.get(i, k, i);
            let (_, vecs) = crate::linalg::hermitian_eigen(&(h.adjoint() * h));
            let m = vecs.ncols();
            v[i][k] = CMat::from_fn(m, d, |r, c| vecs[(r, m - 1 - c)] * scale);
        }
    }
    v
}

/// Total transmit power of BS `cell`.
pub fn cell_power(v: &Filters, cell: usize) -> f64 {
    v[cell].iter().map(|x| x.norm_squared()).sum()
}

/// Received covariance at MS `(i, k)` from all active transmitters plus noise.
fn true_covariance(channels: &ChannelRealization, v: &Filters, active: CellSet, noise: f64, i: usize, k: usize) -> CMat {
    let h = channels.get(i, k, i);
    let n = h.nrows();
    let mut phi = CMat::identity(n, n) * Complex64::from(noise);
    for j in active.iter() {
        let hj = channels.get(i, k, j);
        for vjl in &v[j] {
            let hv = hj * vjl;
            phi += &hv * hv.adjoint();
        }
    }
    phi
}

/// MMSE receivers for the true received covariance (the final training stage).
pub fn mmse_receivers(channels: &ChannelRealization, v: &Filters, active: CellSet, noise: f64) -> Result<Filters> {
    let mut u: Filters = v
        .iter()
        .enumerate()
        .map(|(i, cell)| {
            cell.iter()
                .enumerate()
                .map(|(k, _)| CMat::zeros(channels.get(i, k, i).nrows(), 0))
                .collect()
        })
        .collect();
    for i in active.iter() {
        for k in 0..v[i].len() {
            let phi = true_covariance(channels, v, active, noise, i, k);
            u[i][k] = hpd_solve(&phi, &(channels.get(i, k, i) * &v[i][k]))?;
        }
    }
    Ok(u)
}

/// Per-stream rates `log2(1 + SINR)` in bits/s/Hz, treating every other
/// stream of every active transmitter as interference on the realized
/// channels.
pub fn stream_rates(
    channels: &ChannelRealization,
    u: &Filters,
    v: &Filters,
    active: CellSet,
    noise: f64,
) -> Vec<Vec<Vec<f64>>> {
    let mut rates: Vec<Vec<Vec<f64>>> = v.iter().map(|c| vec![Vec::new(); c.len()]).collect();
    for i in active.iter() {
        for k in 0..v[i].len() {
            let uik = &u[i][k];
            let d = uik.ncols();
            let own = uik.adjoint() * channels.get(i, k, i) * &v[i][k];
            let mut interference: Vec<f64> = (0..d).map(|n| uik.column(n).norm_squared() * noise).collect();
            for n in 0..d {
                for m in (0..own.ncols()).filter(|&m| m != n) {
                    interference[n] += own[(n, m)].norm_sqr();
                }
            }
            for j in active.iter() {
                let hj = channels.get(i, k, j);
                let uh = uik.adjoint() * hj;
                for (l, vjl) in v[j].iter().enumerate() {
                    if j == i && l == k {
                        continue;
                    }
                    let g = &uh * vjl;
                    for n in 0..d {
                        interference[n] += g.row(n).norm_squared();
                    }
                }
            }
            rates[i][k] = (0..d)
                .map(|n| {
                    let s = own[(n, n)].norm_sqr();
                    if interference[n] > 0.0 {
                        (1.0 + s / interference[n]).log2()
                    } else {
                        0.0
                    }
                })
                .collect();
        }
    }
    rates
}

/// Sum of [`stream_rates`] over all streams.
pub fn instantaneous_sum_rate(
    channels: &ChannelRealization,
    u: &Filters,
    v: &Filters,
    active: CellSet,
    noise: f64,
) -> f64 {
    stream_rates(channels, u, v, active, noise)
        .iter()
        .flatten()
        .flatten()
        .sum()
}
