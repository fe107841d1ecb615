//! Robust intracoalition WMMSE.
//!
//! Each MS knows its channels to the BSs of its own coalition exactly and only
//! the large-scale gains `γ` towards the rest. The MSE is averaged over the
//! unknown channels, which turns every out-of-coalition precoder into a white
//! interference floor `γ‖V‖²` at the receiver and every out-of-coalition
//! receiver into a diagonal load `γ·Tr(UWUᴴ)` at the transmitter. Block
//! coordinate descent over (U, W, V) then decreases
//! `Σ (w·ē − ln w − 1)` monotonically.
//!
//! The naive variant drops both statistical terms.

use nalgebra::DVector;
use num_complex::Complex64;
use serde::Serialize;

use super::{cell_power, empty_filters, singular_vector_init, stream_rates, Filters};
use crate::error::{Error, Result};
use crate::linalg::{hermitian_eigen, hpd_solve};
use crate::netgen::{CMat, ChannelRealization, Network, Scenario};
use crate::structure::{CellSet, CoalitionStructure};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum WmmseMode {
    Robust,
    Naive,
}

#[derive(Clone, Copy, Debug)]
pub struct WmmseConfig {
    pub mode: WmmseMode,
    pub max_iters: usize,
    /// Stop when the objective's relative change falls below this.
    pub rel_tol: f64,
}

impl Default for WmmseConfig {
    fn default() -> Self {
        WmmseConfig {
            mode: WmmseMode::Robust,
            max_iters: 500,
            rel_tol: 1e-3,
        }
    }
}

const BISECTION_STEPS: usize = 60;

/// Per-iteration log, including the scalars exchanged between coalitions.
#[derive(Clone, Debug, Serialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub objective: f64,
    /// Rates on the realized channels with the current receivers.
    pub sum_rate: f64,
    pub power: Vec<f64>,
    pub mu: Vec<f64>,
    /// `‖V_{jl}‖²_F` per MS.
    pub precoder_norms: Vec<Vec<f64>>,
    /// `Tr(U_{jl} W_{jl} U_{jl}ᴴ)` per MS.
    pub receiver_traces: Vec<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct PrecodingSolution {
    pub v: Filters,
    pub u: Filters,
    /// Diagonal of `W` per MS.
    pub w: Vec<Vec<Vec<f64>>>,
    pub mu: Vec<f64>,
    /// `−log2 ē` per stream.
    pub surrogate_rates: Vec<Vec<Vec<f64>>>,
    /// Per-stream rates on the realized channels with `u`.
    pub rates: Vec<Vec<Vec<f64>>>,
    pub iterations: usize,
    pub converged: bool,
    pub trace: Vec<IterationRecord>,
}

impl PrecodingSolution {
    pub fn sum_rate(&self) -> f64 {
        self.rates.iter().flatten().flatten().sum()
    }

    pub fn surrogate_sum_rate(&self) -> f64 {
        self.surrogate_rates.iter().flatten().flatten().sum()
    }
}

pub struct WmmseSolver<'a> {
    structure: &'a CoalitionStructure,
    channels: &'a ChannelRealization,
    network: &'a Network,
    active: CellSet,
    mode: WmmseMode,
    v: Filters,
    u: Filters,
    w: Vec<Vec<Vec<f64>>>,
    mu: Vec<f64>,
    iterations: usize,
}

impl<'a> WmmseSolver<'a> {
    /// Only cells in `active` transmit and are served. Without `init`, the
    /// strongest-singular-vector precoders are used.
    pub fn new(
        structure: &'a CoalitionStructure,
        channels: &'a ChannelRealization,
        network: &'a Network,
        scenario: &Scenario,
        active: CellSet,
        mode: WmmseMode,
        init: Option<Filters>,
    ) -> Result<Self> {
        let d = scenario.streams_per_ms;
        let v = init.unwrap_or_else(|| singular_vector_init(channels, network, scenario, active));
        for i in active.iter() {
            let p = cell_power(&v, i);
            if p > network.powers[i] * (1.0 + 1e-9) {
                return Err(Error::Domain(format!(
                    "initial precoders of BS {} use power {p}, above {}",
                    i + 1,
                    network.powers[i]
                )));
            }
        }
        let mut u = empty_filters(scenario, scenario.ms_antennas);
        let mut w = vec![vec![Vec::new(); scenario.mss_per_cell]; scenario.num_cells];
        for i in active.iter() {
            for k in 0..scenario.mss_per_cell {
                u[i][k] = CMat::zeros(scenario.ms_antennas, d);
                w[i][k] = vec![1.0; d];
            }
        }
        Ok(WmmseSolver {
            structure,
            channels,
            network,
            active,
            mode,
            v,
            u,
            w,
            mu: vec![0.0; scenario.num_cells],
            iterations: 0,
        })
    }

    pub fn v(&self) -> &Filters {
        &self.v
    }

    pub fn u(&self) -> &Filters {
        &self.u
    }

    pub fn w(&self) -> &Vec<Vec<Vec<f64>>> {
        &self.w
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn power(&self, cell: usize) -> f64 {
        cell_power(&self.v, cell)
    }

    fn inside(&self, i: usize) -> CellSet {
        let c = self.structure.coalition_of(i);
        CellSet::from_bits(c.bits() & self.active.bits())
    }

    fn outside(&self, i: usize) -> CellSet {
        self.active.difference(self.structure.coalition_of(i))
    }

    /// Averaged received covariance `Φ̄` at MS `(i, k)`.
    fn covariance(&self, i: usize, k: usize) -> CMat {
        let n = self.channels.get(i, k, i).nrows();
        let mut floor = self.network.noise;
        if self.mode == WmmseMode::Robust {
            for j in self.outside(i).iter() {
                let g = self.network.gain(i, k, j);
                floor += self.v[j].iter().map(|x| g * x.norm_squared()).sum::<f64>();
            }
        }
        let mut phi = CMat::identity(n, n) * Complex64::from(floor);
        for j in self.inside(i).iter() {
            let h = self.channels.get(i, k, j);
            for vjl in &self.v[j] {
                let hv = h * vjl;
                phi += &hv * hv.adjoint();
            }
        }
        phi
    }

    /// Averaged per-stream MSEs for the current filters.
    pub fn mse(&self) -> Vec<Vec<Vec<f64>>> {
        let mut e = vec![vec![Vec::new(); self.v.first().map_or(0, |c| c.len())]; self.v.len()];
        for i in self.active.iter() {
            for k in 0..self.v[i].len() {
                let phi = self.covariance(i, k);
                let u = &self.u[i][k];
                let uhv = u.adjoint() * self.channels.get(i, k, i) * &self.v[i][k];
                let quad = u.adjoint() * &phi * u;
                e[i][k] = (0..u.ncols())
                    .map(|n| 1.0 - 2.0 * uhv[(n, n)].re + quad[(n, n)].re)
                    .collect();
            }
        }
        e
    }

    /// `Σ (w·ē − ln w − 1)` over all served streams.
    pub fn objective(&self) -> f64 {
        let e = self.mse();
        let mut f = 0.0;
        for i in self.active.iter() {
            for k in 0..self.v[i].len() {
                for (w, e) in self.w[i][k].iter().zip(&e[i][k]) {
                    f += w * e - w.ln() - 1.0;
                }
            }
        }
        f
    }

    /// Receive filters `U = Φ̄⁻¹ H V` and weights `w = 1/ē`.
    pub fn update_receivers(&mut self) -> Result<()> {
        for i in self.active.iter() {
            for k in 0..self.v[i].len() {
                let phi = self.covariance(i, k);
                let hv = self.channels.get(i, k, i) * &self.v[i][k];
                let u = hpd_solve(&phi, &hv)?;
                let g = hv.adjoint() * &u;
                self.w[i][k] = (0..g.ncols())
                    .map(|n| {
                        let e = (1.0 - g[(n, n)].re).max(f64::MIN_POSITIVE);
                        1.0 / e
                    })
                    .collect();
                self.u[i][k] = u;
            }
        }
        Ok(())
    }

    /// Precoders `V = (Γ̄ + μI)⁻¹ Hᴴ U W` with `μ ≥ 0` found by bisection.
    pub fn update_precoders(&mut self) -> Result<()> {
        let mut new_v = self.v.clone();
        for i in self.active.iter() {
            let m = self.channels.get(i, 0, i).ncols();
            let mut gamma = CMat::zeros(m, m);
            for j in self.inside(i).iter() {
                for l in 0..self.v[j].len() {
                    let hu = self.channels.get(j, l, i).adjoint() * &self.u[j][l];
                    gamma += weighted_outer(&hu, &self.w[j][l]);
                }
            }
            if self.mode == WmmseMode::Robust {
                let mut load = 0.0;
                for j in self.outside(i).iter() {
                    for l in 0..self.v[j].len() {
                        load += self.network.gain(j, l, i) * receiver_trace(&self.u[j][l], &self.w[j][l]);
                    }
                }
                for r in 0..m {
                    gamma[(r, r)] += load;
                }
            }
            let targets: Vec<CMat> = (0..self.v[i].len())
                .map(|k| {
                    let mut x = self.channels.get(i, k, i).adjoint() * &self.u[i][k];
                    for (n, w) in self.w[i][k].iter().enumerate() {
                        x.column_mut(n).scale_mut(*w);
                    }
                    x
                })
                .collect();
            let (mu, filters) = power_constrained_solve(&gamma, &targets, self.network.powers[i])
                .map_err(|e| Error::Numeric(format!("BS {}: {e}", i + 1)))?;
            self.mu[i] = mu;
            new_v[i] = filters;
        }
        self.v = new_v;
        Ok(())
    }

    /// One full pass (receivers, weights, precoders); returns the objective.
    pub fn step(&mut self) -> Result<f64> {
        self.update_receivers()?;
        self.update_precoders()?;
        self.iterations += 1;
        Ok(self.objective())
    }

    fn record(&self, objective: f64) -> IterationRecord {
        let rates = stream_rates(self.channels, &self.u, &self.v, self.active, self.network.noise);
        IterationRecord {
            iteration: self.iterations,
            objective,
            sum_rate: rates.iter().flatten().flatten().sum(),
            power: (0..self.v.len()).map(|i| self.power(i)).collect(),
            mu: self.mu.clone(),
            precoder_norms: self.v.iter().map(|c| c.iter().map(|x| x.norm_squared()).collect()).collect(),
            receiver_traces: self
                .u
                .iter()
                .zip(&self.w)
                .map(|(uc, wc)| uc.iter().zip(wc).map(|(u, w)| receiver_trace(u, w)).collect())
                .collect(),
        }
    }

    /// Iterates until the objective settles, then refreshes the receivers
    /// and weights for the final precoders.
    pub fn run(mut self, max_iters: usize, rel_tol: f64) -> Result<PrecodingSolution> {
        let mut trace = Vec::new();
        let mut prev: Option<f64> = None;
        let mut converged = false;
        while self.iterations < max_iters {
            let f = self.step()?;
            trace.push(self.record(f));
            if let Some(p) = prev {
                if (f - p).abs() <= rel_tol * p.abs().max(f64::MIN_POSITIVE) {
                    converged = true;
                    break;
                }
            }
            prev = Some(f);
        }
        self.update_receivers()?;
        let e = self.mse();
        let surrogate_rates = e
            .iter()
            .map(|c| c.iter().map(|s| s.iter().map(|e| -e.log2()).collect()).collect())
            .collect();
        let rates = stream_rates(self.channels, &self.u, &self.v, self.active, self.network.noise);
        Ok(PrecodingSolution {
            v: self.v,
            u: self.u,
            w: self.w,
            mu: self.mu,
            surrogate_rates,
            rates,
            iterations: self.iterations,
            converged,
            trace,
        })
    }
}

fn weighted_outer(x: &CMat, w: &[f64]) -> CMat {
    let mut xw = x.clone();
    for (n, w) in w.iter().enumerate() {
        xw.column_mut(n).scale_mut(*w);
    }
    xw * x.adjoint()
}

fn receiver_trace(u: &CMat, w: &[f64]) -> f64 {
    w.iter().enumerate().map(|(n, w)| w * u.column(n).norm_squared()).sum()
}

/// Solves `(Γ + μI) V_k = X_k` for all `k` with the smallest `μ ≥ 0` that
/// keeps `Σ‖V_k‖² ≤ P`.
fn power_constrained_solve(gamma: &CMat, targets: &[CMat], power: f64) -> std::result::Result<(f64, Vec<CMat>), String> {
    let (lambda, q) = hermitian_eigen(gamma);
    let lmax = lambda.iter().cloned().fold(0.0, f64::max);
    let zero = 1e-12 * lmax;
    let lambda: Vec<f64> = lambda.iter().map(|&l| l.max(0.0)).collect();
    let projected: Vec<CMat> = targets.iter().map(|x| q.adjoint() * x).collect();
    let weight: Vec<f64> = (0..lambda.len())
        .map(|r| projected.iter().map(|y| y.row(r).norm_squared()).sum())
        .collect();
    let total: f64 = weight.iter().sum();
    let build = |inv: &dyn Fn(f64) -> f64| -> Vec<CMat> {
        let d = DVector::from_iterator(lambda.len(), lambda.iter().map(|&l| Complex64::from(inv(l))));
        projected.iter().map(|y| &q * CMat::from_diagonal(&d) * y).collect()
    };
    if total == 0.0 {
        return Ok((0.0, build(&|_| 0.0)));
    }

    // μ = 0 is allowed when the targets avoid Γ's null space.
    let null_weight: f64 = lambda.iter().zip(&weight).filter(|(l, _)| **l <= zero).map(|(_, w)| w).sum();
    if null_weight <= 1e-24 * total {
        let p0: f64 = lambda
            .iter()
            .zip(&weight)
            .filter(|(l, _)| **l > zero)
            .map(|(l, w)| w / (l * l))
            .sum();
        if p0 <= power {
            return Ok((0.0, build(&|l| if l > zero { 1.0 / l } else { 0.0 })));
        }
    }

    let p = |mu: f64| -> f64 { lambda.iter().zip(&weight).map(|(l, w)| w / ((l + mu) * (l + mu))).sum() };
    let (mut lo, mut hi) = (0.0, (total / power).sqrt());
    if p(hi) > power * (1.0 + 1e-12) {
        return Err(format!("power {} at bracket end {hi} exceeds {power}", p(hi)));
    }
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if p(mid) > power {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mu = hi;
    Ok((mu, build(&|l| 1.0 / (l + mu))))
}

fn solve(
    structure: &CoalitionStructure,
    channels: &ChannelRealization,
    network: &Network,
    scenario: &Scenario,
    active: CellSet,
    config: &WmmseConfig,
    init: Option<Filters>,
) -> Result<PrecodingSolution> {
    WmmseSolver::new(structure, channels, network, scenario, active, config.mode, init)?
        .run(config.max_iters, config.rel_tol)
}

/// Robust WMMSE for `structure` with every cell active.
pub fn robust_wmmse(
    structure: &CoalitionStructure,
    channels: &ChannelRealization,
    network: &Network,
    scenario: &Scenario,
    config: &WmmseConfig,
    init: Option<Filters>,
) -> Result<PrecodingSolution> {
    let config = WmmseConfig {
        mode: WmmseMode::Robust,
        ..*config
    };
    solve(structure, channels, network, scenario, CellSet::full(scenario.num_cells), &config, init)
}

/// WMMSE that ignores everything outside each coalition.
pub fn naive_wmmse(
    structure: &CoalitionStructure,
    channels: &ChannelRealization,
    network: &Network,
    scenario: &Scenario,
    config: &WmmseConfig,
    init: Option<Filters>,
) -> Result<PrecodingSolution> {
    let config = WmmseConfig {
        mode: WmmseMode::Naive,
        ..*config
    };
    solve(structure, channels, network, scenario, CellSet::full(scenario.num_cells), &config, init)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netgen::{draw_channels, generate_network};

    fn instance(seed: u64) -> (Scenario, Network, ChannelRealization, CoalitionStructure) {
        let s = Scenario {
            num_cells: 4,
            ..Scenario::default()
        };
        let net = generate_network(&s, seed).unwrap();
        let ch = draw_channels(&net, &s, seed);
        let st = CoalitionStructure::from_labels(&[0, 0, 1, 1]).unwrap();
        (s, net, ch, st)
    }

    #[test]
    fn zero_receivers_start_at_zero_objective() {
        let (s, net, ch, st) = instance(1);
        let solver = WmmseSolver::new(&st, &ch, &net, &s, CellSet::full(4), WmmseMode::Robust, None).unwrap();
        assert_eq!(solver.objective(), 0.0);
    }

    #[test]
    fn each_block_update_decreases_objective() {
        for seed in 0..5 {
            let (s, net, ch, st) = instance(seed);
            for mode in [WmmseMode::Robust, WmmseMode::Naive] {
                let mut solver = WmmseSolver::new(&st, &ch, &net, &s, CellSet::full(4), mode, None).unwrap();
                let mut f = solver.objective();
                for _ in 0..15 {
                    solver.update_receivers().unwrap();
                    let g = solver.objective();
                    assert!(g <= f + 1e-9);
                    solver.update_precoders().unwrap();
                    let h = solver.objective();
                    assert!(h <= g + 1e-9, "{h} > {g}");
                    for i in 0..4 {
                        assert!(solver.power(i) <= net.powers[i] * (1.0 + 1e-6));
                    }
                    f = h;
                }
            }
        }
    }

    #[test]
    fn objective_equals_log_mse_at_optimal_weights() {
        let (s, net, ch, st) = instance(2);
        let mut solver = WmmseSolver::new(&st, &ch, &net, &s, CellSet::full(4), WmmseMode::Robust, None).unwrap();
        solver.update_receivers().unwrap();
        let e = solver.mse();
        let log_sum: f64 = e.iter().flatten().flatten().map(|e| e.ln()).sum();
        assert!((solver.objective() - log_sum).abs() < 1e-10);
        assert!(solver.w().iter().flatten().flatten().all(|&w| w >= 1.0));
    }

    #[test]
    fn bisection_contract() {
        for seed in 0..5 {
            let (s, net, ch, st) = instance(seed);
            let mut solver = WmmseSolver::new(&st, &ch, &net, &s, CellSet::full(4), WmmseMode::Robust, None).unwrap();
            for _ in 0..5 {
                solver.step().unwrap();
                for i in 0..4 {
                    let p = solver.power(i);
                    let mu = solver.mu()[i];
                    assert!(mu >= 0.0);
                    if mu > 0.0 {
                        assert!((p - net.powers[i]).abs() <= 1e-6 * net.powers[i]);
                    } else {
                        assert!(p <= net.powers[i] * (1.0 + 1e-12));
                    }
                }
            }
        }
    }

    #[test]
    fn grand_coalition_robust_equals_naive() {
        let (s, net, ch, _) = instance(3);
        let grand = CoalitionStructure::grand(4);
        let mut r = WmmseSolver::new(&grand, &ch, &net, &s, CellSet::full(4), WmmseMode::Robust, None).unwrap();
        let mut n = WmmseSolver::new(&grand, &ch, &net, &s, CellSet::full(4), WmmseMode::Naive, None).unwrap();
        for _ in 0..10 {
            r.step().unwrap();
            n.step().unwrap();
            for i in 0..4 {
                for k in 0..2 {
                    assert!((&r.v()[i][k] - &n.v()[i][k]).norm() <= 1e-6);
                }
            }
        }
    }

    #[test]
    fn single_link_reaches_dominant_mode() {
        let s = Scenario {
            num_cells: 1,
            mss_per_cell: 1,
            ..Scenario::default()
        };
        let net = Network::from_gains(&s, vec![vec![vec![1.0]]], 1000).unwrap();
        let ch = draw_channels(&net, &s, 8);
        let st = CoalitionStructure::singletons(1);
        let sol = robust_wmmse(&st, &ch, &net, &s, &WmmseConfig::default(), None).unwrap();
        let smax = ch.get(0, 0, 0).clone().singular_values().max();
        let expected = (1.0 + s.tx_power() * smax * smax / net.noise).log2();
        assert!((sol.sum_rate() - expected).abs() < 1e-4);
        assert!((sol.surrogate_sum_rate() - expected).abs() < 1e-4);
        assert!((cell_power(&sol.v, 0) - s.tx_power()).abs() < 1e-6 * s.tx_power());
    }

    #[test]
    fn trace_carries_messages() {
        let (s, net, ch, st) = instance(4);
        let sol = robust_wmmse(&st, &ch, &net, &s, &WmmseConfig::default(), None).unwrap();
        assert_eq!(sol.trace.len(), sol.iterations);
        let last = sol.trace.last().unwrap();
        assert_eq!(last.precoder_norms.len(), 4);
        assert!(last.receiver_traces.iter().flatten().all(|t| *t > 0.0));
        assert!(sol.trace.windows(2).all(|w| w[1].objective <= w[0].objective + 1e-9));
    }
}
