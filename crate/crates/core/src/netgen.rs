//! Random network drops, large-scale gains and per-block Rayleigh channels.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, rng_from_seed, stream};
use crate::structure::MAX_CELLS;

pub type CMat = DMatrix<Complex64>;

pub const SPEED_OF_LIGHT: f64 = 2.998e8;

/// What `tx_snr_db` is measured against.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SnrReference {
    /// Plain `P/σ²`: gains carry the absolute path loss, so at macro
    /// distances the received SNR sits some 100 dB below `tx_snr_db`.
    Transmit,
    /// Path loss counted relative to the loss at `ms_distance_m`, so
    /// `tx_snr_db` is the mean received SNR from the serving BS before
    /// shadowing.
    #[default]
    ServingDistance,
}

/// Symmetric network scenario. All cells share the same dimensions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Scenario {
    pub num_cells: usize,
    pub mss_per_cell: usize,
    pub bs_antennas: usize,
    pub ms_antennas: usize,
    pub streams_per_ms: usize,
    /// P/σ² in dB, with σ² = 1.
    pub tx_snr_db: f64,
    /// Fraction of the coherence block spent in the spectrum-sharing phase.
    pub beta: f64,
    pub ms_speed_kmh: f64,
    pub coherence_bandwidth_hz: f64,
    pub carrier_freq_hz: f64,
    pub isd_m: f64,
    pub ms_distance_m: f64,
    pub shadow_std_db: f64,
    pub pathloss_const_db: f64,
    pub pathloss_slope: f64,
    pub snr_reference: SnrReference,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            num_cells: 12,
            mss_per_cell: 2,
            bs_antennas: 8,
            ms_antennas: 2,
            streams_per_ms: 1,
            tx_snr_db: 20.0,
            beta: 0.5,
            ms_speed_kmh: 30.0,
            coherence_bandwidth_hz: 300e3,
            carrier_freq_hz: 2e9,
            isd_m: 500.0,
            ms_distance_m: 150.0,
            shadow_std_db: 8.0,
            pathloss_const_db: 15.3,
            pathloss_slope: 37.6,
            snr_reference: SnrReference::ServingDistance,
        }
    }
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        let positive_int = [
            ("num_cells", self.num_cells),
            ("mss_per_cell", self.mss_per_cell),
            ("bs_antennas", self.bs_antennas),
            ("ms_antennas", self.ms_antennas),
            ("streams_per_ms", self.streams_per_ms),
        ];
        for (key, v) in positive_int {
            if v == 0 {
                return Err(Error::config(format!("scenario.{key}"), "must be positive"));
            }
        }
        if self.num_cells > MAX_CELLS {
            return Err(Error::config(
                "scenario.num_cells",
                format!("at most {MAX_CELLS} cells are supported"),
            ));
        }
        if self.streams_per_ms > self.bs_antennas.min(self.ms_antennas) {
            return Err(Error::config(
                "scenario.streams_per_ms",
                "must not exceed min(bs_antennas, ms_antennas)",
            ));
        }
        if !(0.0..1.0).contains(&self.beta) {
            return Err(Error::config("scenario.beta", "must lie in [0, 1)"));
        }
        let positive_real = [
            ("ms_speed_kmh", self.ms_speed_kmh),
            ("coherence_bandwidth_hz", self.coherence_bandwidth_hz),
            ("carrier_freq_hz", self.carrier_freq_hz),
            ("isd_m", self.isd_m),
            ("ms_distance_m", self.ms_distance_m),
        ];
        for (key, v) in positive_real {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::config(format!("scenario.{key}"), "must be positive and finite"));
            }
        }
        if !(self.shadow_std_db >= 0.0 && self.shadow_std_db.is_finite()) {
            return Err(Error::config("scenario.shadow_std_db", "must be non-negative"));
        }
        for (key, v) in [
            ("tx_snr_db", self.tx_snr_db),
            ("pathloss_const_db", self.pathloss_const_db),
            ("pathloss_slope", self.pathloss_slope),
        ] {
            if !v.is_finite() {
                return Err(Error::config(format!("scenario.{key}"), "must be finite"));
            }
        }
        Ok(())
    }

    /// Linear transmit power per BS (σ² = 1).
    pub fn tx_power(&self) -> f64 {
        10f64.powf(self.tx_snr_db / 10.0) * NOISE_POWER
    }

    /// Side of the square holding the BSs: same mean cell area as a hexagonal
    /// layout with the configured inter-site distance.
    pub fn square_side_m(&self) -> f64 {
        (self.num_cells as f64 * 3f64.sqrt() / 2.0 * self.isd_m * self.isd_m).sqrt()
    }

    pub fn pathloss_db(&self, distance_m: f64) -> f64 {
        self.pathloss_const_db + self.pathloss_slope * distance_m.log10()
    }

    pub fn coherence_symbols(&self) -> usize {
        coherence_block_length(self.ms_speed_kmh, self.coherence_bandwidth_hz, self.carrier_freq_hz)
    }

    /// Streams served per cell.
    pub fn streams_per_cell(&self) -> usize {
        self.mss_per_cell * self.streams_per_ms
    }
}

pub const NOISE_POWER: f64 = 1.0;

/// Number of symbols in a coherence block for a given MS speed.
///
/// Normalized Doppler `f_D = L_s v / λ` with symbol period `L_s = 1/W_c`; a
/// block-fading channel with `f_D = 1/(2 L_c)` is used.
pub fn coherence_block_length(ms_speed_kmh: f64, coherence_bandwidth_hz: f64, carrier_freq_hz: f64) -> usize {
    let symbol_period = 1.0 / coherence_bandwidth_hz;
    let wavelength = SPEED_OF_LIGHT / carrier_freq_hz;
    let speed = ms_speed_kmh / 3.6;
    let doppler = symbol_period * speed / wavelength;
    let l_c = (1.0 / (2.0 * doppler)).floor();
    if l_c.is_finite() {
        (l_c as usize).max(1)
    } else {
        usize::MAX
    }
}

/// One drop: geometry and large-scale gains.
#[derive(Clone, Debug, Serialize)]
pub struct Network {
    pub bs_positions: Vec<[f64; 2]>,
    /// `ms_positions[i][k]` for MS k of cell i.
    pub ms_positions: Vec<Vec<[f64; 2]>>,
    /// `gains[i][k][j]`: linear large-scale gain from BS j to MS k of cell i.
    pub gains: Vec<Vec<Vec<f64>>>,
    pub powers: Vec<f64>,
    pub noise: f64,
    pub coherence_symbols: usize,
}

impl Network {
    /// Network with given gains and no geometry, for hand-built instances.
    pub fn from_gains(scenario: &Scenario, gains: Vec<Vec<Vec<f64>>>, coherence_symbols: usize) -> Result<Self> {
        let i = scenario.num_cells;
        let k = scenario.mss_per_cell;
        let shape_ok = gains.len() == i
            && gains.iter().all(|cell| cell.len() == k && cell.iter().all(|ms| ms.len() == i));
        if !shape_ok {
            return Err(Error::Domain(format!("gains must have shape {i}x{k}x{i}")));
        }
        if gains.iter().flatten().flatten().any(|g| !(*g >= 0.0 && g.is_finite())) {
            return Err(Error::Domain("gains must be finite and non-negative".into()));
        }
        if coherence_symbols == 0 {
            return Err(Error::Domain("coherence block must hold at least one symbol".into()));
        }
        Ok(Network {
            bs_positions: Vec::new(),
            ms_positions: Vec::new(),
            gains,
            powers: vec![scenario.tx_power(); i],
            noise: NOISE_POWER,
            coherence_symbols,
        })
    }

    pub fn num_cells(&self) -> usize {
        self.gains.len()
    }

    pub fn gain(&self, cell: usize, ms: usize, bs: usize) -> f64 {
        self.gains[cell][ms][bs]
    }
}

/// Smallest distance fed to the path loss law; keeps gains finite.
const MIN_DISTANCE_M: f64 = 1.0;

/// Drops BSs uniformly in the square and MSs on a circle around their BS.
pub fn generate_network(scenario: &Scenario, seed: u64) -> Result<Network> {
    scenario.validate()?;
    let side = scenario.square_side_m();
    if !(side > 0.0 && side.is_finite()) {
        return Err(Error::config("scenario.isd_m", "drop area must be positive"));
    }
    let mut rng = rng_from_seed(derive_seed(seed, &[stream::NETWORK]));
    let i_cells = scenario.num_cells;
    let k_ms = scenario.mss_per_cell;

    let bs_positions: Vec<[f64; 2]> = (0..i_cells)
        .map(|_| [rng.random::<f64>() * side, rng.random::<f64>() * side])
        .collect();
    let r = scenario.ms_distance_m;
    let ms_positions: Vec<Vec<[f64; 2]>> = bs_positions
        .iter()
        .map(|bs| {
            (0..k_ms)
                .map(|_| {
                    let phi = 2.0 * PI * rng.random::<f64>();
                    [bs[0] + r * phi.cos(), bs[1] + r * phi.sin()]
                })
                .collect()
        })
        .collect();

    let shadow = Normal::new(0.0, scenario.shadow_std_db)
        .map_err(|e| Error::config("scenario.shadow_std_db", e.to_string()))?;
    let reference_db = match scenario.snr_reference {
        SnrReference::Transmit => 0.0,
        SnrReference::ServingDistance => scenario.pathloss_db(scenario.ms_distance_m),
    };
    let gains = ms_positions
        .iter()
        .map(|cell| {
            cell.iter()
                .map(|ms| {
                    bs_positions
                        .iter()
                        .map(|bs| {
                            let d = ((ms[0] - bs[0]).powi(2) + (ms[1] - bs[1]).powi(2)).sqrt();
                            let pl = scenario.pathloss_db(d.max(MIN_DISTANCE_M)) - reference_db;
                            let x: f64 = shadow.sample(&mut rng);
                            10f64.powf(-(pl + x) / 10.0)
                        })
                        .collect()
                })
                .collect()
        })
        .collect();

    Ok(Network {
        bs_positions,
        ms_positions,
        gains,
        powers: vec![scenario.tx_power(); i_cells],
        noise: NOISE_POWER,
        coherence_symbols: scenario.coherence_symbols(),
    })
}

/// Small-scale fading for one coherence block.
#[derive(Clone, Debug)]
pub struct ChannelRealization {
    /// `h[i][k][j]`: N×M channel from BS j to MS k of cell i.
    pub h: Vec<Vec<Vec<CMat>>>,
}

impl ChannelRealization {
    pub fn get(&self, cell: usize, ms: usize, bs: usize) -> &CMat {
        &self.h[cell][ms][bs]
    }

    /// The same realization with every entry scaled by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        ChannelRealization {
            h: self
                .h
                .iter()
                .map(|c| c.iter().map(|m| m.iter().map(|h| h * Complex64::from(factor)).collect()).collect())
                .collect(),
        }
    }
}

/// Draws i.i.d. CN(0, γ) entries for every link. Independent of the drop's
/// own random stream.
pub fn draw_channels(network: &Network, scenario: &Scenario, seed: u64) -> ChannelRealization {
    let mut rng = rng_from_seed(derive_seed(seed, &[stream::FADING]));
    let n = scenario.ms_antennas;
    let m = scenario.bs_antennas;
    let h = network
        .gains
        .iter()
        .map(|cell| {
            cell.iter()
                .map(|ms| {
                    ms.iter()
                        .map(|&gamma| {
                            let sd = (gamma / 2.0).sqrt();
                            CMat::from_fn(n, m, |_, _| {
                                let re: f64 = rng.sample(StandardNormal);
                                let im: f64 = rng.sample(StandardNormal);
                                Complex64::new(sd * re, sd * im)
                            })
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    ChannelRealization { h }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn square_side_matches_hexagon_area() {
        let s = Scenario::default();
        // 12 hexagons of area (√3/2)·500² each.
        let area: f64 = 12.0 * 0.866_025_403_784_438_6 * 250_000.0;
        assert_relative_eq!(s.square_side_m(), area.sqrt(), max_relative = 1e-14);
        assert_relative_eq!(s.square_side_m(), 1611.9, epsilon = 0.05);
    }

    #[test]
    fn pathloss_at_150m() {
        let s = Scenario::default();
        assert_relative_eq!(s.pathloss_db(150.0), 97.121_031_340_5, epsilon = 1e-9);
    }

    #[test]
    fn coherence_block_examples() {
        // v/λ = 8.3333 m/s / 0.1499 m, times L_s = 1/300 kHz.
        assert_eq!(coherence_block_length(30.0, 300e3, 2e9), 2698);
        let half = coherence_block_length(15.0, 300e3, 2e9);
        assert!((half as i64 - 2 * 2698).abs() <= 1);
        // 1/(2 f_D) = 26982.0 at 3 km/h: ten times 2698.2 before flooring.
        assert_eq!(coherence_block_length(3.0, 300e3, 2e9), 26982);
        assert_eq!(coherence_block_length(1e9, 300e3, 2e9), 1);
    }

    #[test]
    fn no_shadowing_gives_pure_pathloss() {
        let s = Scenario {
            shadow_std_db: 0.0,
            tx_snr_db: 0.0,
            num_cells: 4,
            snr_reference: SnrReference::Transmit,
            ..Scenario::default()
        };
        let net = generate_network(&s, 3).unwrap();
        assert_eq!(net.powers, vec![1.0; 4]);
        for (i, cell) in net.ms_positions.iter().enumerate() {
            for (k, ms) in cell.iter().enumerate() {
                for (j, bs) in net.bs_positions.iter().enumerate() {
                    let d = ((ms[0] - bs[0]).powi(2) + (ms[1] - bs[1]).powi(2)).sqrt();
                    let expected = 10f64.powf(-s.pathloss_db(d.max(1.0)) / 10.0);
                    assert_relative_eq!(net.gain(i, k, j), expected, max_relative = 1e-12);
                }
                let d_own = ((ms[0] - net.bs_positions[i][0]).powi(2) + (ms[1] - net.bs_positions[i][1]).powi(2)).sqrt();
                assert_relative_eq!(d_own, 150.0, max_relative = 1e-9);
            }
        }
        let side = s.square_side_m();
        assert!(net.bs_positions.iter().flatten().all(|&c| (0.0..=side).contains(&c)));
    }

    #[test]
    fn serving_distance_reference_shifts_all_gains() {
        let s = Scenario {
            shadow_std_db: 0.0,
            num_cells: 4,
            ..Scenario::default()
        };
        let rel = generate_network(&s, 3).unwrap();
        let abs = generate_network(&Scenario { snr_reference: SnrReference::Transmit, ..s.clone() }, 3).unwrap();
        let shift = 10f64.powf(s.pathloss_db(150.0) / 10.0);
        for i in 0..4 {
            for k in 0..2 {
                assert_relative_eq!(rel.gain(i, k, i), 1.0, max_relative = 1e-9);
                for j in 0..4 {
                    assert_relative_eq!(rel.gain(i, k, j), abs.gain(i, k, j) * shift, max_relative = 1e-9);
                }
            }
        }
        assert_eq!(rel.powers, abs.powers);
    }

    #[test]
    fn network_is_deterministic_and_positive() {
        let s = Scenario::default();
        let a = generate_network(&s, 11).unwrap();
        let b = generate_network(&s, 11).unwrap();
        assert_eq!(a.gains, b.gains);
        assert!(a.gains.iter().flatten().flatten().all(|&g| g > 0.0 && g.is_finite()));
        assert_eq!(a.coherence_symbols, 2698);
        let c = generate_network(&s, 12).unwrap();
        assert_ne!(a.gains, c.gains);
    }

    #[test]
    fn channel_draws_are_reproducible_and_do_not_touch_the_drop() {
        let s = Scenario { num_cells: 3, ..Scenario::default() };
        let net = generate_network(&s, 5).unwrap();
        let before = net.gains.clone();
        let h1 = draw_channels(&net, &s, 9);
        let h2 = draw_channels(&net, &s, 9);
        assert_eq!(net.gains, before);
        for (a, b) in h1.h.iter().flatten().flatten().zip(h2.h.iter().flatten().flatten()) {
            assert_eq!(a, b);
        }
        let h3 = draw_channels(&net, &s, 10);
        assert_ne!(h1.get(0, 0, 0), h3.get(0, 0, 0));
        assert_eq!(h1.get(1, 1, 2).shape(), (2, 8));
    }

    #[test]
    fn zero_gain_link_is_all_zero() {
        let s = Scenario { num_cells: 2, mss_per_cell: 1, ..Scenario::default() };
        let gains = vec![vec![vec![1.0, 0.0]], vec![vec![0.5, 1.0]]];
        let net = Network::from_gains(&s, gains, 100).unwrap();
        let h = draw_channels(&net, &s, 1);
        assert!(h.get(0, 0, 1).iter().all(|z| *z == Complex64::new(0.0, 0.0)));
        assert!(h.get(0, 0, 0).iter().any(|z| z.norm() > 0.0));
    }

    #[test]
    fn entry_power_matches_gain() {
        // Sample mean of |h|² over 10⁵ entries has relative standard error 1/√n.
        let s = Scenario { num_cells: 1, mss_per_cell: 1, bs_antennas: 5, ms_antennas: 2, ..Scenario::default() };
        let gamma = 3.7e-9;
        let net = Network::from_gains(&s, vec![vec![vec![gamma]]], 10).unwrap();
        let mut acc = 0.0;
        let mut count = 0usize;
        for seed in 0..10_000 {
            let h = draw_channels(&net, &s, seed);
            acc += h.get(0, 0, 0).iter().map(|z| z.norm_sqr()).sum::<f64>();
            count += 10;
        }
        let mean = acc / count as f64;
        assert!((mean / gamma - 1.0).abs() < 0.02, "mean/γ = {}", mean / gamma);
    }

    #[test]
    fn validation_rejects_bad_scenarios() {
        let bad = [
            Scenario { beta: 1.0, ..Scenario::default() },
            Scenario { streams_per_ms: 3, ..Scenario::default() },
            Scenario { isd_m: 0.0, ..Scenario::default() },
            Scenario { ms_distance_m: -1.0, ..Scenario::default() },
            Scenario { num_cells: 0, ..Scenario::default() },
            Scenario { num_cells: 65, ..Scenario::default() },
        ];
        for s in bad {
            assert!(matches!(s.validate(), Err(Error::Config { .. })), "{s:?}");
            assert!(generate_network(&s, 0).is_err());
        }
    }
}
