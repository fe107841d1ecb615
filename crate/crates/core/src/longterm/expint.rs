//! Exponential integral E1 and the Rayleigh ergodic rate built on it.

use crate::error::{Error, Result};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Power series, accurate for `0 < x <= 1`.
fn e1_series(x: f64) -> f64 {
    // E1(x) = -γ - ln x - Σ_{k≥1} (-x)^k / (k·k!)
    let mut sum = 0.0;
    let mut term = 1.0;
    for k in 1..200 {
        let kf = k as f64;
        term *= -x / kf;
        let add = term / kf;
        sum += add;
        if add.abs() <= 1e-17 * sum.abs().max(1e-300) {
            break;
        }
    }
    -EULER_GAMMA - x.ln() - sum
}

/// `e^x E1(x)` from the continued fraction (modified Lentz), for `x > 1`.
fn scaled_e1_cf(x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    let mut b = x + 1.0;
    let mut c = 1.0 / TINY;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..10_000 {
        let an = -((i * i) as f64);
        b += 2.0;
        d = 1.0 / (an * d + b);
        c = b + an / c;
        let del = c * d;
        h *= del;
        if (del - 1.0).abs() < 1e-16 {
            break;
        }
    }
    h
}

/// E1(x) = ∫_x^∞ e^{-t}/t dt for `x > 0`.
pub fn exp_integral_e1(x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::Domain(format!("E1 is defined for x > 0, got {x}")));
    }
    if x.is_infinite() {
        return Ok(0.0);
    }
    Ok(if x <= 1.0 {
        e1_series(x)
    } else {
        (-x).exp() * scaled_e1_cf(x)
    })
}

/// Ergodic rate `E[ln(1 + ρ|h|²)] = e^{1/ρ} E1(1/ρ)` of a Rayleigh channel
/// with mean SNR `rho`, in nats/s/Hz.
///
/// Evaluated through the scaled continued fraction for `1/ρ > 1`, so there is
/// no overflow however small `rho` gets; `rho <= 0` yields 0.
pub fn ergodic_rate_nats(rho: f64) -> f64 {
    if !(rho > 0.0) {
        return 0.0;
    }
    let x = 1.0 / rho;
    if x <= 1.0 {
        x.exp() * e1_series(x)
    } else if x.is_finite() {
        scaled_e1_cf(x)
    } else {
        0.0
    }
}
