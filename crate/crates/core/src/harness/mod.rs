//! Monte Carlo experiments: drops × fading blocks × clustering methods ×
//! precoders, written as one flat CSV per run.
//!
//! Every drop derives its own seeds from the master seed, so drops run in
//! parallel and the sorted output is byte-identical across runs. The network
//! seed depends only on the drop index, which gives common random numbers
//! across sweep values.

mod summary;

pub use summary::{read_rows, summarize, summarize_rows, SummaryLine};

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coalition::{run_formation, FormationConfig};
use crate::error::{Error, Result};
use crate::longterm::{csi_feasible, prelog_phase1, ThroughputModel};
use crate::netgen::{draw_channels, generate_network, ChannelRealization, Network, Scenario};
use crate::oracle::{optimal_structure, EnumerationBudget};
use crate::precoding::{mmse_receivers, stream_rates, WmmseMode, WmmseSolver};
use crate::rng::{derive_seed, stream, RNG_ALGORITHM};
use crate::structure::{CellSet, CoalitionStructure};

macro_rules! named_enum {
    ($name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        #[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $text)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn name(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.pad(self.name())
            }
        }

        impl FromStr for $name {
            type Err = String;

            fn from_str(s: &str) -> std::result::Result<Self, String> {
                $name::ALL
                    .iter()
                    .copied()
                    .find(|m| m.name() == s.trim())
                    .ok_or_else(|| {
                        let names: Vec<_> = $name::ALL.iter().map(|m| m.name()).collect();
                        format!("unknown value `{s}`, expected one of {}", names.join(", "))
                    })
            }
        }
    };
}

named_enum!(Method {
    FormationAos => "formation-aos",
    FormationAttach => "formation-attach",
    FormationAosIgnoreIa => "formation-aos-ignore-ia",
    Singletons => "singletons",
    Grand => "grand",
    Oracle => "oracle",
});

named_enum!(Precoder {
    Iia => "iia",
    RobustWmmse => "robust-wmmse",
    NaiveWmmse => "naive-wmmse",
});

named_enum!(SweepKey {
    SnrDb => "snr_db",
    MsSpeedKmh => "ms_speed_kmh",
    Beta => "beta",
    NumCells => "I",
});

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sweep {
    pub key: SweepKey,
    pub values: Vec<f64>,
}

impl Sweep {
    /// `key=v1,v2,...`
    pub fn parse(text: &str) -> Result<Self> {
        let (key, values) = text
            .split_once('=')
            .ok_or_else(|| Error::config("experiment.sweep", "expected key=v1,v2,..."))?;
        let key = key.parse().map_err(|e| Error::config("experiment.sweep.key", e))?;
        let values = values
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::config("experiment.sweep.values", format!("`{v}` is not a number")))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Sweep { key, values })
    }

    fn apply(&self, base: &Scenario, value: f64) -> Result<Scenario> {
        let mut s = base.clone();
        match self.key {
            SweepKey::SnrDb => s.tx_snr_db = value,
            SweepKey::MsSpeedKmh => s.ms_speed_kmh = value,
            SweepKey::Beta => s.beta = value,
            SweepKey::NumCells => {
                if !(value >= 1.0 && value.fract() == 0.0) {
                    return Err(Error::config(
                        "experiment.sweep.values",
                        format!("I must be a positive integer, got {value}"),
                    ));
                }
                s.num_cells = value as usize;
            }
        }
        s.validate()?;
        Ok(s)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentPlan {
    pub master_seed: u64,
    pub num_drops: usize,
    pub num_fading: usize,
    pub methods: Vec<Method>,
    pub precoders: Vec<Precoder>,
    pub sweep: Option<Sweep>,
    pub wmmse_max_iters: usize,
    /// Relative change of the WMMSE objective that ends the iteration.
    pub wmmse_rel_tol: f64,
    /// Largest network the oracle may enumerate.
    pub oracle_max_cells: usize,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        ExperimentPlan {
            master_seed: 0,
            num_drops: 25,
            num_fading: 5,
            methods: vec![Method::FormationAos, Method::Singletons],
            precoders: vec![Precoder::Iia],
            sweep: None,
            wmmse_max_iters: 500,
            wmmse_rel_tol: 1e-3,
            oracle_max_cells: EnumerationBudget::default().max_cells,
        }
    }
}

/// A full run configuration: `[scenario]` and `[experiment]` tables.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    pub scenario: Scenario,
    pub experiment: ExperimentPlan,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config("config", e.message().to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::config("config", format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// `(sweep value, scenario)` pairs, checked against the plan.
    pub fn sweep_points(&self) -> Result<Vec<(Option<f64>, Scenario)>> {
        let plan = &self.experiment;
        if plan.num_drops == 0 {
            return Err(Error::config("experiment.num_drops", "must be at least 1"));
        }
        if plan.num_fading == 0 {
            return Err(Error::config("experiment.num_fading", "must be at least 1"));
        }
        if plan.methods.is_empty() {
            return Err(Error::config("experiment.methods", "list is empty"));
        }
        if plan.precoders.is_empty() {
            return Err(Error::config("experiment.precoders", "list is empty"));
        }
        if plan.wmmse_max_iters == 0 {
            return Err(Error::config("experiment.wmmse_max_iters", "must be at least 1"));
        }
        if !(plan.wmmse_rel_tol > 0.0) {
            return Err(Error::config("experiment.wmmse_rel_tol", "must be positive"));
        }
        let points = match &plan.sweep {
            None => {
                self.scenario.validate()?;
                vec![(None, self.scenario.clone())]
            }
            Some(sw) => {
                if sw.values.is_empty() {
                    return Err(Error::config("experiment.sweep.values", "list is empty"));
                }
                sw.values
                    .iter()
                    .map(|&v| Ok((Some(v), sw.apply(&self.scenario, v)?)))
                    .collect::<Result<Vec<_>>>()?
            }
        };
        if plan.methods.contains(&Method::Oracle) {
            for (_, s) in &points {
                if s.num_cells > plan.oracle_max_cells {
                    return Err(Error::config(
                        "experiment.methods",
                        format!(
                            "oracle needs at most {} cells, scenario has {}",
                            plan.oracle_max_cells, s.num_cells
                        ),
                    ));
                }
            }
        }
        Ok(points)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub sweep_value: Option<f64>,
    pub drop: usize,
    pub fading: usize,
    pub method: Method,
    pub precoder: Precoder,
    /// bits/s/Hz over all served MSs.
    pub sum_throughput: f64,
    pub mean_coalition_size: f64,
    pub num_proposals: usize,
}

/// Wall time of the row with the same key, kept out of the result CSV so
/// the latter stays reproducible.
#[derive(Clone, Debug, Serialize)]
pub struct TimingRow {
    pub sweep_value: Option<f64>,
    pub drop: usize,
    pub fading: usize,
    pub method: Method,
    pub precoder: Precoder,
    pub wall_time_s: f64,
}

#[derive(Clone, Debug, Default)]
pub struct RunOutput {
    pub rows: Vec<ResultRow>,
    pub timings: Vec<TimingRow>,
}

struct Clustering {
    structure: CoalitionStructure,
    proposals: usize,
    seconds: f64,
}

fn cluster(method: Method, scenario: &Scenario, network: &Network, plan: &ExperimentPlan) -> Result<Clustering> {
    let start = Instant::now();
    let model = ThroughputModel::new(scenario, network);
    let singles = CoalitionStructure::singletons(scenario.num_cells);
    let (structure, proposals) = match method {
        Method::FormationAos => {
            let out = run_formation(singles, model, &FormationConfig::default());
            (out.structure, out.trace.total_proposals())
        }
        Method::FormationAttach => {
            let out = run_formation(singles, model, &FormationConfig::attach_only());
            (out.structure, out.trace.total_proposals())
        }
        Method::FormationAosIgnoreIa => {
            let out = run_formation(singles, model.ignoring_iia(), &FormationConfig::default());
            (out.structure, out.trace.total_proposals())
        }
        Method::Singletons => (singles, 0),
        Method::Grand => (CoalitionStructure::grand(scenario.num_cells), 0),
        Method::Oracle => {
            let budget = EnumerationBudget {
                max_cells: plan.oracle_max_cells,
                max_coalition_size: None,
            };
            (optimal_structure(model, &budget)?.0, 0)
        }
    };
    Ok(Clustering {
        structure,
        proposals,
        seconds: start.elapsed().as_secs_f64(),
    })
}

/// Per-MS rates (bits/s/Hz) of a WMMSE run over `active`, after retraining
/// the receivers on the true received covariance.
fn wmmse_ms_rates(
    structure: &CoalitionStructure,
    channels: &ChannelRealization,
    network: &Network,
    scenario: &Scenario,
    active: CellSet,
    mode: WmmseMode,
    plan: &ExperimentPlan,
) -> Result<Vec<Vec<f64>>> {
    let sol = WmmseSolver::new(structure, channels, network, scenario, active, mode, None)?
        .run(plan.wmmse_max_iters, plan.wmmse_rel_tol)?;
    let u = mmse_receivers(channels, &sol.v, active, network.noise)?;
    let rates = stream_rates(channels, &u, &sol.v, active, network.noise);
    Ok(rates
        .iter()
        .map(|cell| cell.iter().map(|s| s.iter().sum()).collect())
        .collect())
}

/// Sum throughput with WMMSE filters: each MS earns its coalition's phase-1
/// share of the rate with only its coalition transmitting, plus the β share
/// of the rate with the whole network transmitting.
pub fn wmmse_sum_throughput(
    structure: &CoalitionStructure,
    channels: &ChannelRealization,
    network: &Network,
    scenario: &Scenario,
    mode: WmmseMode,
    plan: &ExperimentPlan,
) -> Result<f64> {
    let everyone = CellSet::full(scenario.num_cells);
    let phase2 = wmmse_ms_rates(structure, channels, network, scenario, everyone, mode, plan)?;
    let mut total = 0.0;
    for &c in structure.coalitions() {
        if !csi_feasible(c.len(), scenario, network) {
            continue;
        }
        let alpha1 = prelog_phase1(c.len(), scenario, network);
        let phase1 = wmmse_ms_rates(structure, channels, network, scenario, c, mode, plan)?;
        for i in c.iter() {
            for k in 0..scenario.mss_per_cell {
                total += alpha1 * phase1[i][k] + scenario.beta * phase2[i][k];
            }
        }
    }
    Ok(total)
}

fn run_drop(
    sweep_value: Option<f64>,
    scenario: &Scenario,
    drop: usize,
    plan: &ExperimentPlan,
) -> Result<(Vec<ResultRow>, Vec<TimingRow>)> {
    let network = generate_network(scenario, derive_seed(plan.master_seed, &[stream::NETWORK, drop as u64]))?;
    let model = ThroughputModel::new(scenario, &network);
    let clusterings = plan
        .methods
        .iter()
        .map(|&m| cluster(m, scenario, &network, plan))
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::new();
    let mut timings = Vec::new();
    for fading in 0..plan.num_fading {
        let needs_channels = plan.precoders.iter().any(|&p| p != Precoder::Iia);
        let channels = needs_channels.then(|| {
            draw_channels(
                &network,
                scenario,
                derive_seed(plan.master_seed, &[stream::FADING, drop as u64, fading as u64]),
            )
        });
        for (method, cl) in plan.methods.iter().zip(&clusterings) {
            for &precoder in &plan.precoders {
                let start = Instant::now();
                let value = match precoder {
                    Precoder::Iia => model.sum_throughput(&cl.structure),
                    Precoder::RobustWmmse | Precoder::NaiveWmmse => {
                        let mode = if precoder == Precoder::RobustWmmse {
                            WmmseMode::Robust
                        } else {
                            WmmseMode::Naive
                        };
                        let ch = channels.as_ref().expect("drawn above");
                        wmmse_sum_throughput(&cl.structure, ch, &network, scenario, mode, plan)?
                    }
                };
                rows.push(ResultRow {
                    sweep_value,
                    drop,
                    fading,
                    method: *method,
                    precoder,
                    sum_throughput: value,
                    mean_coalition_size: cl.structure.mean_coalition_size(),
                    num_proposals: cl.proposals,
                });
                timings.push(TimingRow {
                    sweep_value,
                    drop,
                    fading,
                    method: *method,
                    precoder,
                    wall_time_s: cl.seconds + start.elapsed().as_secs_f64(),
                });
            }
        }
    }
    Ok((rows, timings))
}

/// Runs the whole plan. Rows come out sorted by sweep value, drop, fading,
/// method and precoder, in plan order.
pub fn run_experiment(config: &Config) -> Result<RunOutput> {
    let plan = &config.experiment;
    let points = config.sweep_points()?;
    let jobs: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|p| (0..plan.num_drops).map(move |d| (p, d)))
        .collect();
    let results = jobs
        .par_iter()
        .map(|&(p, d)| run_drop(points[p].0, &points[p].1, d, plan).map(|r| (p, d, r)))
        .collect::<Result<Vec<_>>>()?;
    let mut ordered = results;
    ordered.sort_by_key(|(p, d, _)| (*p, *d));
    let mut out = RunOutput::default();
    for (_, _, (rows, timings)) in ordered {
        out.rows.extend(rows);
        out.timings.extend(timings);
    }
    Ok(out)
}

pub fn write_rows<T: Serialize>(rows: &[T], path: &Path) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct Metadata<'a> {
    crate_version: &'a str,
    rng: &'a str,
    master_seed: u64,
    rows: usize,
    config: &'a Config,
}

/// Paths of the sidecar files that accompany a result CSV.
pub fn sidecar_paths(out: &Path) -> (PathBuf, PathBuf) {
    let stem = out.with_extension("");
    let base = stem.to_string_lossy();
    (
        PathBuf::from(format!("{base}.meta.json")),
        PathBuf::from(format!("{base}.timing.csv")),
    )
}

/// Runs the plan and writes the result CSV, the metadata JSON and the
/// timing CSV next to it.
pub fn run_to_files(config: &Config, out: &Path) -> Result<RunOutput> {
    let output = run_experiment(config)?;
    write_rows(&output.rows, out)?;
    let (meta_path, timing_path) = sidecar_paths(out);
    let meta = Metadata {
        crate_version: env!("CARGO_PKG_VERSION"),
        rng: RNG_ALGORITHM,
        master_seed: config.experiment.master_seed,
        rows: output.rows.len(),
        config,
    };
    let json = serde_json::to_string_pretty(&meta).map_err(|e| Error::Numeric(e.to_string()))?;
    fs::write(meta_path, json + "\n")?;
    write_rows(&output.timings, &timing_path)?;
    Ok(output)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(methods: Vec<Method>, precoders: Vec<Precoder>) -> Config {
        Config {
            scenario: Scenario {
                num_cells: 4,
                ms_speed_kmh: 3.0,
                ..Scenario::default()
            },
            experiment: ExperimentPlan {
                master_seed: 11,
                num_drops: 3,
                num_fading: 2,
                methods,
                precoders,
                ..ExperimentPlan::default()
            },
        }
    }

    #[test]
    fn parses_full_config() {
        let text = r#"
            [scenario]
            num_cells = 6
            ms_speed_kmh = 3.0

            [experiment]
            master_seed = 4
            num_drops = 2
            methods = ["formation-aos", "oracle"]
            precoders = ["iia", "robust-wmmse"]
            sweep = { key = "snr_db", values = [0.0, 10.0] }
        "#;
        let c = Config::from_toml(text).unwrap();
        assert_eq!(c.scenario.num_cells, 6);
        assert_eq!(c.scenario.bs_antennas, 8);
        assert_eq!(c.experiment.methods, vec![Method::FormationAos, Method::Oracle]);
        assert_eq!(c.experiment.sweep.as_ref().unwrap().key, SweepKey::SnrDb);
        assert_eq!(c.sweep_points().unwrap().len(), 2);
    }

    #[test]
    fn config_errors_name_the_key() {
        let err = Config::from_toml("[scenario]\nnum_cels = 3\n").unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("num_cels"));
        let err = Config::from_toml("[experiment]\nmethods = [\"kmeans\"]\n").unwrap_err();
        assert!(err.to_string().contains("kmeans"));

        let mut c = small(vec![Method::Oracle], vec![Precoder::Iia]);
        c.scenario.num_cells = 14;
        match c.sweep_points() {
            Err(Error::Config { key, .. }) => assert_eq!(key, "experiment.methods"),
            other => panic!("{other:?}"),
        }
        let mut c = small(vec![Method::Singletons], vec![Precoder::Iia]);
        c.experiment.num_drops = 0;
        assert!(matches!(c.sweep_points(), Err(Error::Config { .. })));
        c.experiment.num_drops = 1;
        c.experiment.sweep = Some(Sweep::parse("beta=0,1.5").unwrap());
        match c.sweep_points() {
            Err(Error::Config { key, .. }) => assert_eq!(key, "scenario.beta"),
            other => panic!("{other:?}"),
        }
        assert!(Sweep::parse("I=2.5").unwrap().apply(&c.scenario, 2.5).is_err());
        assert!(Sweep::parse("speed=1").is_err());
    }

    #[test]
    fn singleton_iia_rows_repeat_across_fading() {
        let c = small(vec![Method::Singletons], vec![Precoder::Iia]);
        let out = run_experiment(&c).unwrap();
        assert_eq!(out.rows.len(), 3 * 2);
        for d in 0..3 {
            let net = generate_network(&c.scenario, derive_seed(11, &[stream::NETWORK, d as u64])).unwrap();
            let expected = crate::longterm::sum_throughput(&CoalitionStructure::singletons(4), &c.scenario, &net);
            for r in out.rows.iter().filter(|r| r.drop == d) {
                assert_eq!(r.sum_throughput, expected);
                assert_eq!(r.mean_coalition_size, 1.0);
            }
        }
    }

    #[test]
    fn row_count_and_order() {
        let mut c = small(vec![Method::FormationAos, Method::Grand], vec![Precoder::Iia, Precoder::NaiveWmmse]);
        c.experiment.sweep = Some(Sweep::parse("snr_db=10,20").unwrap());
        c.experiment.num_drops = 2;
        let out = run_experiment(&c).unwrap();
        assert_eq!(out.rows.len(), 2 * 2 * 2 * 2 * 2);
        assert_eq!(out.timings.len(), out.rows.len());
        let keys: Vec<_> = out
            .rows
            .iter()
            .map(|r| (r.sweep_value.unwrap() as i64, r.drop, r.fading, r.method, r.precoder))
            .collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
        assert!(out.rows.iter().all(|r| r.sum_throughput.is_finite() && r.sum_throughput >= 0.0));
    }

    #[test]
    fn clustering_ignores_fading_seed() {
        let c = small(vec![Method::FormationAos], vec![Precoder::Iia]);
        let out = run_experiment(&c).unwrap();
        for d in 0..3 {
            let r: Vec<_> = out.rows.iter().filter(|r| r.drop == d).collect();
            assert!(r.windows(2).all(|w| w[0].mean_coalition_size == w[1].mean_coalition_size
                && w[0].num_proposals == w[1].num_proposals));
        }
    }

    #[test]
    fn files_are_reproducible() {
        let dir = tempfile::tempdir().unwrap();
        let c = small(vec![Method::FormationAos, Method::Singletons], vec![Precoder::Iia, Precoder::RobustWmmse]);
        let a = dir.path().join("a.csv");
        let b = dir.path().join("b.csv");
        run_to_files(&c, &a).unwrap();
        run_to_files(&c, &b).unwrap();
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
        let (meta, timing) = sidecar_paths(&a);
        let meta: serde_json::Value = serde_json::from_str(&fs::read_to_string(meta).unwrap()).unwrap();
        assert_eq!(meta["master_seed"], 11);
        assert!(fs::read_to_string(timing).unwrap().starts_with("sweep_value,drop,fading"));
        let text = fs::read_to_string(&a).unwrap();
        assert!(text.starts_with("sweep_value,drop,fading,method,precoder,sum_throughput"));
        assert!(!text.contains('\r'));
    }
}
