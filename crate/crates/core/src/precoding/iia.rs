//! Intracoalition interference alignment with zero-forcing structure.
//!
//! A relaxed solution only has to cancel intercell interference inside the
//! coalition. The orthogonalization step then picks each precoder in the null
//! space of everything it must not disturb, and each receive vector in the
//! null space of everything it must not hear, which adds intracell and
//! interstream zero-forcing, semi-unitary receivers (one stream per MS) and
//! equal-power orthogonal precoders.
//!
//! Both steps work on per-link normalized channels `H·√(NM)/‖H‖_F`; scaling a
//! column block does not move a null space, so the result is the same filter
//! set as on the raw channels but with well-conditioned rank decisions.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use super::{empty_filters, Filters};
use crate::error::{Error, Result};
use crate::linalg::{hstack, least_eigenvectors, left_null_space};
use crate::netgen::{CMat, ChannelRealization, Network, Scenario};
use crate::rng::{derive_seed, rng_from_seed, stream};
use crate::structure::CellSet;

pub const DEFAULT_RELAXED_ITERS: usize = 5000;
/// Relaxed leakage target, relative to the transmit power.
pub const DEFAULT_RELAXED_TOL: f64 = 1e-8;
/// Largest singular-value ratio still treated as a null direction.
pub const DEGENERACY_TOL: f64 = 1e-4;

#[derive(Clone, Debug)]
pub struct RelaxedSolution {
    pub coalition: CellSet,
    /// `N×d` per MS, orthonormal columns.
    pub u: Filters,
    /// `M×Kd` per BS (all MSs stacked), orthonormal columns.
    pub v: Vec<CMat>,
    /// Final intercell leakage on normalized channels, precoders at full power.
    pub leakage: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug)]
pub struct IiaSolution {
    pub coalition: CellSet,
    pub u: Filters,
    pub v: Filters,
    /// Largest residual interference power `|u_nᴴ H v_m|²` over all
    /// intracoalition cross pairs (own other streams included), raw channels.
    pub leakage: f64,
    /// Stacked matrices of the construction, on normalized channels.
    pub a: Vec<CMat>,
    pub b: Vec<Vec<CMat>>,
    pub c: Vec<Vec<CMat>>,
    pub d: Vec<Vec<Vec<CMat>>>,
}

fn normalized(h: &CMat) -> CMat {
    let f = h.norm();
    if f > 0.0 {
        h * Complex64::from(((h.nrows() * h.ncols()) as f64).sqrt() / f)
    } else {
        h.clone()
    }
}

struct Normalized {
    h: Vec<Vec<Vec<CMat>>>,
}

impl Normalized {
    fn new(channels: &ChannelRealization, coalition: CellSet) -> Self {
        let h = channels
            .h
            .iter()
            .enumerate()
            .map(|(i, cell)| {
                cell.iter()
                    .map(|ms| {
                        ms.iter()
                            .enumerate()
                            .map(|(j, h)| {
                                if coalition.contains(i) && coalition.contains(j) {
                                    normalized(h)
                                } else {
                                    CMat::zeros(0, 0)
                                }
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        Normalized { h }
    }

    fn get(&self, i: usize, k: usize, j: usize) -> &CMat {
        &self.h[i][k][j]
    }
}

fn random_orthonormal(rows: usize, cols: usize, rng: &mut impl Rng) -> CMat {
    let g = CMat::from_fn(rows, cols, |_, _| {
        Complex64::new(rng.sample::<f64, _>(StandardNormal), rng.sample::<f64, _>(StandardNormal))
    });
    g.qr().q()
}

fn relaxed_leakage(h: &Normalized, coalition: CellSet, u: &Filters, v: &[CMat], stream_power: f64) -> f64 {
    let mut total = 0.0;
    for i in coalition.iter() {
        for (k, uik) in u[i].iter().enumerate() {
            for j in coalition.iter().filter(|&j| j != i) {
                total += (uik.adjoint() * h.get(i, k, j) * &v[j]).norm_squared();
            }
        }
    }
    total * stream_power
}

/// Alternating leakage minimization for intercell alignment inside `coalition`.
///
/// Receivers take the `d` weakest eigenvectors of their intracoalition
/// intercell interference covariance; stacked precoders take the `Kd` weakest
/// of the reciprocal network's. Stops once the leakage drops below `tol·P`.
pub fn iia_relaxed_solve(
    coalition: CellSet,
    channels: &ChannelRealization,
    scenario: &Scenario,
    seed: u64,
    max_iters: usize,
    tol: f64,
) -> Result<RelaxedSolution> {
    let k_count = scenario.mss_per_cell;
    let d = scenario.streams_per_ms;
    let (m, n) = (scenario.bs_antennas, scenario.ms_antennas);
    if d > n || k_count * d > m {
        return Err(Error::DegenerateChannel(format!(
            "{d} streams per MS need N ≥ d and M ≥ Kd (N={n}, M={m}, K={k_count})"
        )));
    }
    let h = Normalized::new(channels, coalition);
    let mut rng = rng_from_seed(derive_seed(seed, &[stream::SOLVER]));
    let mut v: Vec<CMat> = vec![CMat::zeros(m, 0); scenario.num_cells];
    for i in coalition.iter() {
        v[i] = random_orthonormal(m, k_count * d, &mut rng);
    }
    let mut u = empty_filters(scenario, n);
    let power = scenario.tx_power();
    let stream_power = power / (k_count * d) as f64;
    let mut leakage = f64::INFINITY;
    for iteration in 1..=max_iters.max(1) {
        for i in coalition.iter() {
            for k in 0..k_count {
                let mut q = CMat::zeros(n, n);
                for j in coalition.iter().filter(|&j| j != i) {
                    let hv = h.get(i, k, j) * &v[j];
                    q += &hv * hv.adjoint();
                }
                u[i][k] = least_eigenvectors(&q, d);
            }
        }
        for i in coalition.iter() {
            let mut q = CMat::zeros(m, m);
            for j in coalition.iter().filter(|&j| j != i) {
                for l in 0..k_count {
                    let hu = h.get(j, l, i).adjoint() * &u[j][l];
                    q += &hu * hu.adjoint();
                }
            }
            v[i] = least_eigenvectors(&q, k_count * d);
        }
        leakage = relaxed_leakage(&h, coalition, &u, &v, stream_power);
        if leakage < tol * power {
            return Ok(RelaxedSolution {
                coalition,
                u,
                v,
                leakage,
                iterations: iteration,
            });
        }
    }
    Err(Error::Convergence {
        iterations: max_iters,
        leakage,
    })
}

/// Builds the full alignment solution from a relaxed one.
pub fn iia_orthogonalize(
    relaxed: &RelaxedSolution,
    channels: &ChannelRealization,
    network: &Network,
    scenario: &Scenario,
) -> Result<IiaSolution> {
    let coalition = relaxed.coalition;
    let k_count = scenario.mss_per_cell;
    let d = scenario.streams_per_ms;
    let (m, n) = (scenario.bs_antennas, scenario.ms_antennas);
    let h = Normalized::new(channels, coalition);
    let ut = &relaxed.u;

    let mut a = vec![CMat::zeros(m, 0); scenario.num_cells];
    let mut b = vec![vec![CMat::zeros(m, 0); k_count]; scenario.num_cells];
    let mut v = empty_filters(scenario, m);
    for i in coalition.iter() {
        let blocks: Vec<CMat> = coalition
            .iter()
            .filter(|&j| j != i)
            .flat_map(|j| (0..k_count).map(move |l| (j, l)))
            .map(|(j, l)| h.get(j, l, i).adjoint() * &ut[j][l])
            .collect();
        a[i] = hstack(m, &blocks.iter().collect::<Vec<_>>());
        let scale = Complex64::from((network.powers[i] / (k_count * d) as f64).sqrt());
        for k in 0..k_count {
            let intracell: Vec<CMat> = (0..k_count)
                .filter(|&l| l != k)
                .map(|l| h.get(i, l, i).adjoint() * &ut[i][l])
                .collect();
            let mut parts: Vec<&CMat> = intracell.iter().collect();
            parts.push(&a[i]);
            b[i][k] = hstack(m, &parts);
            v[i][k] = left_null_space(&b[i][k], d, DEGENERACY_TOL)? * scale;
        }
    }

    let mut c = vec![vec![CMat::zeros(n, 0); k_count]; scenario.num_cells];
    let mut dmat = vec![vec![Vec::new(); k_count]; scenario.num_cells];
    let mut u = empty_filters(scenario, n);
    for i in coalition.iter() {
        for k in 0..k_count {
            let inter: Vec<CMat> = coalition
                .iter()
                .filter(|&j| j != i)
                .flat_map(|j| v[j].iter().map(move |vjl| (j, vjl)))
                .map(|(j, vjl)| h.get(i, k, j) * vjl)
                .collect();
            c[i][k] = hstack(n, &inter.iter().collect::<Vec<_>>());
            let hd = h.get(i, k, i);
            let own = hd * &v[i][k];
            let intracell: Vec<CMat> = (0..k_count).filter(|&l| l != k).map(|l| hd * &v[i][l]).collect();
            let mut uik = CMat::zeros(n, d);
            for s in 0..d {
                let others: Vec<CMat> = (0..d).filter(|&t| t != s).map(|t| own.columns(t, 1).into_owned()).collect();
                let mut parts: Vec<&CMat> = others.iter().collect();
                parts.extend(intracell.iter());
                parts.push(&c[i][k]);
                let dm = hstack(n, &parts);
                uik.set_column(s, &left_null_space(&dm, 1, DEGENERACY_TOL)?.column(0));
                dmat[i][k].push(dm);
            }
            u[i][k] = uik;
        }
    }

    let leakage = max_residual(channels, coalition, &u, &v);
    Ok(IiaSolution {
        coalition,
        u,
        v,
        leakage,
        a,
        b,
        c,
        d: dmat,
    })
}

/// Largest `|u_{ik,n}ᴴ H_{ik,j} v_{jl,m}|²` over intracoalition pairs other
/// than a stream with itself.
pub(crate) fn max_residual(channels: &ChannelRealization, coalition: CellSet, u: &Filters, v: &Filters) -> f64 {
    let mut worst: f64 = 0.0;
    for i in coalition.iter() {
        for (k, uik) in u[i].iter().enumerate() {
            for j in coalition.iter() {
                let uh = uik.adjoint() * channels.get(i, k, j);
                for (l, vjl) in v[j].iter().enumerate() {
                    let g = &uh * vjl;
                    for r in 0..g.nrows() {
                        for s in 0..g.ncols() {
                            if (j, l, s) != (i, k, r) {
                                worst = worst.max(g[(r, s)].norm_sqr());
                            }
                        }
                    }
                }
            }
        }
    }
    worst
}

impl IiaSolution {
    /// `U_{ik}ᴴ H_{ik,i} V_{ik}`, the effective desired channel.
    pub fn effective_channel(&self, channels: &ChannelRealization, cell: usize, ms: usize) -> CMat {
        self.u[cell][ms].adjoint() * channels.get(cell, ms, cell) * &self.v[cell][ms]
    }
}
