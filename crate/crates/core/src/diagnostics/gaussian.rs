//! Dobrushin coefficients of the additive-Gaussian example with a 2- or
//! 3-level quantized channel.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Standard normal CDF, `Φ(x) = erfc(−x/√2)/2`.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ObsLevels {
    Two,
    Three,
}

impl TryFrom<u8> for ObsLevels {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            2 => Ok(ObsLevels::Two),
            3 => Ok(ObsLevels::Three),
            _ => Err(Error::InvalidParameter { name: "obs_levels", value: v as f64, reason: "must be 2 or 3" }),
        }
    }
}

fn check_ratio(name: &'static str, r: f64) -> Result<()> {
    if r > 0.0 && r.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter { name, value: r, reason: "must be positive and finite" })
    }
}

/// `δ(T) = 2Φ(−t/σ_t)`. This is a lower bound on the coefficient and is used
/// as its value.
pub fn delta_t(ratio_t: f64) -> Result<f64> {
    check_ratio("ratio_t", ratio_t)?;
    Ok(2.0 * normal_cdf(-1.0 / ratio_t))
}

/// Dobrushin coefficient of the quantized channel.
pub fn delta_q_hat(ratio_q: f64, levels: ObsLevels) -> Result<f64> {
    check_ratio("ratio_q", ratio_q)?;
    Ok(match levels {
        ObsLevels::Two => 2.0 * normal_cdf(-1.0 / ratio_q),
        ObsLevels::Three => normal_cdf(-1.0 / (2.0 * ratio_q)) + normal_cdf(-3.0 / (2.0 * ratio_q)),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianDobrushin {
    pub delta_t: f64,
    pub delta_q_hat: f64,
    pub alpha_condition_holds: bool,
}

pub fn gaussian_dobrushin(ratio_t: f64, ratio_q: f64, levels: ObsLevels) -> Result<GaussianDobrushin> {
    let dt = delta_t(ratio_t)?;
    let dq = delta_q_hat(ratio_q, levels)?;
    Ok(GaussianDobrushin { delta_t: dt, delta_q_hat: dq, alpha_condition_holds: (1.0 - dt) * (2.0 - dq) < 1.0 })
}

/// Largest ratio searched by [`min_ratio_q`].
pub const MAX_RATIO_Q: f64 = 1e12;

/// Smallest `σ_q/q` for which `(1−δ(T))(2−δ(Q̂)) < 1`, found by bisection.
/// `Ok(None)` means any channel works; `Err` means none does below
/// [`MAX_RATIO_Q`].
pub fn min_ratio_q(ratio_t: f64, levels: ObsLevels) -> Result<Option<f64>> {
    let dt = delta_t(ratio_t)?;
    // δ(Q̂) has to exceed this.
    let need = 2.0 - 1.0 / (1.0 - dt);
    if need < 0.0 {
        return Ok(None);
    }
    let holds = |r: f64| delta_q_hat(r, levels).map(|dq| (1.0 - dt) * (2.0 - dq) < 1.0);
    if !holds(MAX_RATIO_Q)? {
        return Err(Error::PreconditionViolated {
            condition: format!("(1-delta_T)(2-delta_Q) < 1 for some ratio_q <= {MAX_RATIO_Q}"),
            margin: need - delta_q_hat(MAX_RATIO_Q, levels)?,
        });
    }
    let (mut lo, mut hi) = (1e-9_f64, MAX_RATIO_Q);
    // Bisect in log space; δ(Q̂) is increasing in the ratio.
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if holds(mid)? {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi / lo < 1.0 + 1e-12 {
            break;
        }
    }
    Ok(Some(hi))
}

/// One column of the Gaussian table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianRow {
    pub ratio_t: f64,
    /// Supplied channel ratio, `None` for "any".
    pub ratio_q: Option<f64>,
    /// Bisected minimum ratio, `None` for "any".
    pub ratio_q_min: Option<f64>,
    pub delta_t: f64,
    pub delta_q_hat: Option<f64>,
    pub alpha_condition_holds: Option<bool>,
}

pub fn gaussian_row(ratio_t: f64, ratio_q: Option<f64>, levels: ObsLevels) -> Result<GaussianRow> {
    let dt = delta_t(ratio_t)?;
    let ratio_q_min = min_ratio_q(ratio_t, levels).unwrap_or(Some(f64::INFINITY));
    let g = ratio_q.map(|r| gaussian_dobrushin(ratio_t, r, levels)).transpose()?;
    Ok(GaussianRow {
        ratio_t,
        ratio_q,
        ratio_q_min,
        delta_t: dt,
        delta_q_hat: g.map(|g| g.delta_q_hat),
        alpha_condition_holds: g.map(|g| g.alpha_condition_holds),
    })
}

/// `σ_t/t` columns of the published tables.
pub const DEFAULT_RATIO_T: [f64; 13] = [1.5, 1.4, 1.3, 1.2, 1.1, 1.0, 0.9, 0.8, 0.7, 0.6, 0.5, 0.4, 0.3];

/// Published minimum channel ratios for the 2-level channel.
pub const DEFAULT_RATIO_Q_TWO: [Option<f64>; 13] = [
    None,
    Some(0.6),
    Some(0.8),
    Some(1.01),
    Some(1.3),
    Some(1.65),
    Some(2.13),
    Some(3.25),
    Some(5.5),
    Some(8.0),
    Some(20.0),
    Some(70.0),
    Some(1000.0),
];

/// Published minimum channel ratios for the 3-level channel.
pub const DEFAULT_RATIO_Q_THREE: [Option<f64>; 13] = [
    None,
    Some(0.39),
    Some(0.6),
    Some(0.85),
    Some(1.2),
    Some(1.54),
    Some(2.1),
    Some(3.2),
    Some(5.9),
    Some(8.0),
    Some(20.0),
    Some(80.0),
    Some(1000.0),
];

pub fn default_pairs(levels: ObsLevels) -> Vec<(f64, Option<f64>)> {
    let q = match levels {
        ObsLevels::Two => DEFAULT_RATIO_Q_TWO,
        ObsLevels::Three => DEFAULT_RATIO_Q_THREE,
    };
    DEFAULT_RATIO_T.iter().copied().zip(q).collect()
}

pub fn gaussian_table(pairs: &[(f64, Option<f64>)], levels: ObsLevels) -> Result<Vec<GaussianRow>> {
    pairs.iter().map(|&(t, q)| gaussian_row(t, q, levels)).collect()
}
