//! Contraction coefficients and the explicit error-bound constants.

pub mod gaussian;

use serde::{Deserialize, Serialize};

use crate::distance::tv_slices;
use crate::error::{Error, Result};
use crate::model::PomdpModel;

/// Row-sum tolerance accepted by [`dobrushin`].
pub const KERNEL_TOL: f64 = 1e-9;

/// Tolerance used to flag a computed α that disagrees with an asserted one.
pub const ALPHA_MISMATCH_TOL: f64 = 1e-6;

/// Dobrushin coefficient of a finite row-stochastic kernel: the minimum over
/// row pairs of the summed elementwise minima. A single row gives 1.
pub fn dobrushin(kernel: &[Vec<f64>]) -> Result<f64> {
    let first = kernel.first().ok_or_else(|| Error::MalformedKernel("kernel has no rows".into()))?;
    let m = first.len();
    if m == 0 {
        return Err(Error::MalformedKernel("kernel has no columns".into()));
    }
    for (i, row) in kernel.iter().enumerate() {
        if row.len() != m {
            return Err(Error::MalformedKernel(format!("row {i} has {} columns, expected {m}", row.len())));
        }
        if let Some(j) = row.iter().position(|p| !p.is_finite() || *p < 0.0) {
            return Err(Error::MalformedKernel(format!("entry ({i}, {j}) = {} is not a probability", row[j])));
        }
        let s: f64 = row.iter().sum();
        if (s - 1.0).abs() > KERNEL_TOL {
            return Err(Error::MalformedKernel(format!("row {i} sums to {s}")));
        }
    }
    let mut delta = 1.0_f64;
    for x in 0..kernel.len() {
        for y in x + 1..kernel.len() {
            let overlap: f64 = kernel[x].iter().zip(&kernel[y]).map(|(a, b)| a.min(*b)).sum();
            delta = delta.min(overlap);
        }
    }
    Ok(delta.clamp(0.0, 1.0))
}

/// Per-action Dobrushin coefficients of the transition kernel.
pub fn delta_t_per_action(model: &PomdpModel) -> Result<Vec<f64>> {
    model.transition.iter().map(|t| dobrushin(t)).collect()
}

/// `min_u δ(T(·|·,u))`.
pub fn delta_tilde(model: &PomdpModel) -> Result<f64> {
    Ok(delta_t_per_action(model)?.into_iter().fold(1.0, f64::min))
}

/// `α = (1 − δ̃(T))(2 − δ(Q))`.
pub fn alpha(model: &PomdpModel) -> Result<f64> {
    Ok(alpha_from(delta_tilde(model)?, dobrushin(&model.channel)?))
}

pub fn alpha_from(delta_t_min: f64, delta_q: f64) -> f64 {
    (1.0 - delta_t_min) * (2.0 - delta_q)
}

fn state_pairs(model: &PomdpModel) -> Result<Vec<(usize, usize, f64)>> {
    let mut pairs = Vec::new();
    for x in 0..model.n_states {
        for y in 0..model.n_states {
            if x == y {
                continue;
            }
            let d = model.state_metric[x][y];
            if !(d > 0.0) {
                return Err(Error::DegenerateMetric(x, y));
            }
            pairs.push((x, y, d));
        }
    }
    Ok(pairs)
}

/// TV-Lipschitz constant of the transition kernel in the state.
pub fn alpha_x(model: &PomdpModel) -> Result<f64> {
    let pairs = state_pairs(model)?;
    let mut a = 0.0_f64;
    for t in &model.transition {
        for &(x, y, d) in &pairs {
            a = a.max(tv_slices(&t[x], &t[y]) / d);
        }
    }
    Ok(a)
}

/// Lipschitz constant of the one-stage cost in the state, uniformly in the action.
pub fn alpha_c(model: &PomdpModel) -> Result<f64> {
    let pairs = state_pairs(model)?;
    let mut a = 0.0_f64;
    for u in 0..model.n_actions {
        for &(x, y, d) in &pairs {
            a = a.max((model.cost[x][u] - model.cost[y][u]).abs() / d);
        }
    }
    Ok(a)
}

/// The four Lipschitz bounds on the belief kernel. Options i and ii are
/// constants with respect to the BL metric, iii and iv with respect to TV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaZOptions {
    pub bl_plain: f64,
    pub bl_channel: f64,
    pub tv_plain: f64,
    pub tv_channel: f64,
}

impl AlphaZOptions {
    pub fn from_parts(alpha_x: f64, delta_q: f64, delta_t_min: f64) -> Self {
        AlphaZOptions {
            bl_plain: 3.0 * (1.0 + alpha_x),
            bl_channel: (3.0 - 2.0 * delta_q) * (1.0 + alpha_x),
            tv_plain: 3.0,
            tv_channel: (3.0 - 2.0 * delta_q) * (1.0 - delta_t_min),
        }
    }

    /// Default constant fed to the bound: the smaller BL-Lipschitz option.
    pub fn selected(&self) -> f64 {
        self.bl_plain.min(self.bl_channel)
    }

    pub fn get(&self, choice: AlphaZChoice) -> f64 {
        match choice {
            AlphaZChoice::Selected => self.selected(),
            AlphaZChoice::BlPlain => self.bl_plain,
            AlphaZChoice::BlChannel => self.bl_channel,
            AlphaZChoice::TvPlain => self.tv_plain,
            AlphaZChoice::TvChannel => self.tv_channel,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlphaZChoice {
    #[default]
    Selected,
    BlPlain,
    BlChannel,
    TvPlain,
    TvChannel,
}

pub fn alpha_z_options(model: &PomdpModel) -> Result<AlphaZOptions> {
    Ok(AlphaZOptions::from_parts(alpha_x(model)?, dobrushin(&model.channel)?, delta_tilde(model)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundConstants {
    pub j_bl_bound: f64,
    pub k0: f64,
    pub k0_hat: f64,
    pub k: f64,
}

/// `1/(4α_Z+1)`: the discount must stay below this for the constants to exist.
pub fn beta_threshold(alpha_z: f64) -> f64 {
    1.0 / (4.0 * alpha_z + 1.0)
}

/// Informational alternative threshold `1/((2+L)α_Z+1)`.
pub fn alternative_beta_threshold(alpha_z: f64, l_inf: f64) -> f64 {
    1.0 / ((2.0 + l_inf) * alpha_z + 1.0)
}

fn check_discount(beta: f64) -> Result<()> {
    if beta > 0.0 && beta < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter { name: "beta", value: beta, reason: "must lie in (0, 1)" })
    }
}

/// Bound constants `(‖J*‖_BL bound, K₀, K̂₀, K)`.
///
/// `α_c̃ = α_c + ‖c‖∞` enters only the BL-norm bound on the value function;
/// the leading terms use `α_c`.
pub fn bound_constant_k(beta: f64, alpha_z: f64, alpha_c: f64, cost_sup: f64) -> Result<BoundConstants> {
    check_discount(beta)?;
    for (name, v) in [("alpha_z", alpha_z), ("alpha_c", alpha_c), ("cost_sup", cost_sup)] {
        if !v.is_finite() || v < 0.0 {
            return Err(Error::InvalidParameter { name, value: v, reason: "must be finite and nonnegative" });
        }
    }
    let threshold = beta_threshold(alpha_z);
    if beta >= threshold {
        return Err(Error::PreconditionViolated {
            condition: format!("beta < 1/(4*alpha_Z+1) = {threshold}"),
            margin: beta - threshold,
        });
    }
    if beta * alpha_z >= 1.0 {
        return Err(Error::PreconditionViolated {
            condition: "beta*alpha_Z < 1".into(),
            margin: beta * alpha_z - 1.0,
        });
    }
    let alpha_ctilde = alpha_c + cost_sup;
    let j_bl_bound = (cost_sup / (1.0 - beta) + alpha_ctilde) / (1.0 - beta * alpha_z);
    let lead = alpha_c + beta * alpha_z * j_bl_bound;
    let g = 1.0 - beta * (4.0 * alpha_z + 1.0);
    let k0 = lead / g;
    let k0_hat = lead * (2.0 / g + 3.0 * alpha_z / (1.0 - beta * alpha_z) + 9.0 * alpha_z * alpha_z / (g * g));
    let k = (lead + (beta + 1.0) * k0 + k0_hat * beta * alpha_z) / (1.0 - beta);
    Ok(BoundConstants { j_bl_bound, k0, k0_hat, k })
}

/// Per-`N` bounds with an explicit discount and α_Z.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowBound {
    pub n: usize,
    pub value_bound: f64,
    pub robustness_bound: f64,
}

pub fn window_bounds(k: f64, alpha: f64, beta: f64, ns: impl IntoIterator<Item = usize>) -> Vec<WindowBound> {
    ns.into_iter()
        .map(|n| {
            let a = alpha.powi(n as i32);
            WindowBound { n, value_bound: k * a, robustness_bound: k * a * beta.powi(n as i32) }
        })
        .collect()
}

/// `K·α^N` and `K·α^N·β^N` for each `N`, using the model's discount and the
/// default α_Z.
pub fn theorem_bounds(model: &PomdpModel, ns: impl IntoIterator<Item = usize>) -> Result<Vec<WindowBound>> {
    let c = bound_constant_k(model.discount, alpha_z_options(model)?.selected(), alpha_c(model)?, model.cost_sup())?;
    Ok(window_bounds(c.k, alpha(model)?, model.discount, ns))
}

/// Uniform-stability bounds `(value, robustness)` given `L̄_TV`.
pub fn uniform_bounds(model: &PomdpModel, alpha_z: f64, l_tv: f64) -> Result<(f64, f64)> {
    uniform_bounds_with(model.discount, alpha_z, model.cost_sup(), l_tv)
}

pub fn uniform_bounds_with(beta: f64, alpha_z: f64, cost_sup: f64, l_tv: f64) -> Result<(f64, f64)> {
    check_discount(beta)?;
    if !(0.0..=2.0).contains(&l_tv) {
        return Err(Error::InvalidParameter { name: "L_TV", value: l_tv, reason: "must lie in [0, 2]" });
    }
    if beta * alpha_z >= 1.0 {
        return Err(Error::PreconditionViolated {
            condition: "beta*alpha_Z < 1".into(),
            margin: beta * alpha_z - 1.0,
        });
    }
    let head = 1.0 + (alpha_z - 1.0) * beta;
    let tail = 1.0 - alpha_z * beta;
    let value = head / ((1.0 - beta).powi(2) * tail) * cost_sup * l_tv;
    let robustness = 2.0 * head / ((1.0 - beta).powi(3) * tail) * cost_sup * l_tv;
    Ok((value, robustness))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsConfig {
    /// Discount used for the bounds in place of the model's.
    pub beta_override: Option<f64>,
    pub n_max: usize,
    pub alpha_z_choice: AlphaZChoice,
    /// Value of α to compare the computed one against.
    pub asserted_alpha: Option<f64>,
    /// `‖L‖∞` in the informational alternative threshold.
    pub l_inf: f64,
}

impl Default for DiagnosticsConfig {
    fn default() -> Self {
        DiagnosticsConfig { beta_override: None, n_max: 10, alpha_z_choice: AlphaZChoice::Selected, asserted_alpha: None, l_inf: 2.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsReport {
    pub delta_t_per_action: Vec<f64>,
    pub delta_t_min: f64,
    pub delta_q: f64,
    pub alpha: f64,
    pub alpha_x: f64,
    pub alpha_c: f64,
    pub alpha_z_options: AlphaZOptions,
    pub alpha_z_choice: AlphaZChoice,
    pub alpha_z_selected: f64,
    pub alpha_ctilde: f64,
    pub beta: f64,
    pub beta_overridden: bool,
    pub beta_threshold: f64,
    pub alternative_beta_threshold: f64,
    pub j_bl_bound: Option<f64>,
    pub k0: Option<f64>,
    pub k0_hat: Option<f64>,
    pub k: Option<f64>,
    /// Why the bound constants are missing, when they are.
    pub k_unavailable_reason: Option<String>,
    pub per_n_bounds: Vec<WindowBound>,
    pub asserted_alpha: Option<f64>,
    pub alpha_mismatch: bool,
}

/// Full diagnostics for a model. Precondition failures of the bound constants
/// are reported in the output rather than returned as errors.
pub fn diagnose(model: &PomdpModel, config: &DiagnosticsConfig) -> Result<DiagnosticsReport> {
    let delta_t_per_action = delta_t_per_action(model)?;
    let delta_t_min = delta_t_per_action.iter().copied().fold(1.0, f64::min);
    let delta_q = dobrushin(&model.channel)?;
    let alpha = alpha_from(delta_t_min, delta_q);
    let alpha_x = alpha_x(model)?;
    let alpha_c = alpha_c(model)?;
    let options = AlphaZOptions::from_parts(alpha_x, delta_q, delta_t_min);
    let alpha_z = options.get(config.alpha_z_choice);
    let cost_sup = model.cost_sup();
    let beta = config.beta_override.unwrap_or(model.discount);

    let (constants, reason) = match bound_constant_k(beta, alpha_z, alpha_c, cost_sup) {
        Ok(c) => (Some(c), None),
        Err(e @ (Error::PreconditionViolated { .. } | Error::InvalidParameter { .. })) => (None, Some(e.to_string())),
        Err(e) => return Err(e),
    };
    let per_n_bounds = constants.map(|c| window_bounds(c.k, alpha, beta, 0..=config.n_max)).unwrap_or_default();
    let alpha_mismatch = config.asserted_alpha.is_some_and(|a| (a - alpha).abs() > ALPHA_MISMATCH_TOL);

    Ok(DiagnosticsReport {
        delta_t_per_action,
        delta_t_min,
        delta_q,
        alpha,
        alpha_x,
        alpha_c,
        alpha_z_options: options,
        alpha_z_choice: config.alpha_z_choice,
        alpha_z_selected: alpha_z,
        alpha_ctilde: alpha_c + cost_sup,
        beta,
        beta_overridden: config.beta_override.is_some(),
        beta_threshold: beta_threshold(alpha_z),
        alternative_beta_threshold: alternative_beta_threshold(alpha_z, config.l_inf),
        j_bl_bound: constants.map(|c| c.j_bl_bound),
        k0: constants.map(|c| c.k0),
        k0_hat: constants.map(|c| c.k0_hat),
        k: constants.map(|c| c.k),
        k_unavailable_reason: reason,
        per_n_bounds,
        asserted_alpha: config.asserted_alpha,
        alpha_mismatch,
    })
}
