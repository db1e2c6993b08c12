//! Finite POMDP model data, validation, and the machine-repair builder.
//!
//! Conventions used throughout the crate:
//!
//! * `transition[u][x][x']` is the probability of moving from `x` to `x'`
//!   under action `u`.
//! * `channel[x][y]` is the probability of observing `y` in state `x`. The
//!   channel does not depend on the action.
//! * `cost[x][u]` is the nonnegative one-stage cost.
//! * `state_metric[x][x']` is a metric on the state set, used by the
//!   bounded-Lipschitz distance between beliefs.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on row sums and prior normalization.
pub const VALIDATION_TOL: f64 = 1e-12;

/// Largest state count for which the triangle inequality is checked exhaustively.
pub const TRIANGLE_CHECK_MAX_STATES: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PomdpModel {
    pub n_states: usize,
    pub n_obs: usize,
    pub n_actions: usize,
    pub transition: Vec<Vec<Vec<f64>>>,
    pub channel: Vec<Vec<f64>>,
    pub cost: Vec<Vec<f64>>,
    pub discount: f64,
    pub state_metric: Vec<Vec<f64>>,
    pub prior: Vec<f64>,
    pub reference_prior: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub index: Vec<usize>,
    /// Size of the violation, e.g. the row-sum deficit or the negative entry.
    pub magnitude: f64,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}{:?}: {} (magnitude {:e})",
            self.field, self.index, self.message, self.magnitude
        )
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_empty(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, field: &str, index: Vec<usize>, magnitude: f64, message: impl Into<String>) {
        self.violations.push(Violation {
            field: field.to_string(),
            index,
            magnitude,
            message: message.into(),
        });
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "no violations");
        }
        for v in &self.violations {
            writeln!(f, "  - {v}")?;
        }
        Ok(())
    }
}

fn check_distribution(report: &mut ValidationReport, field: &str, index: Vec<usize>, row: &[f64]) {
    let mut finite = true;
    for (j, &p) in row.iter().enumerate() {
        let mut at = index.clone();
        at.push(j);
        if !p.is_finite() {
            report.push(field, at, f64::NAN, "entry is not finite");
            finite = false;
        } else if p < 0.0 {
            report.push(field, at, -p, "negative probability");
        } else if p > 1.0 {
            report.push(field, at, p - 1.0, "probability exceeds 1");
        }
    }
    if finite {
        let sum: f64 = row.iter().sum();
        let gap = 1.0 - sum;
        if gap.abs() > VALIDATION_TOL {
            let what = if gap > 0.0 { "deficit" } else { "excess" };
            report.push(field, index, gap.abs(), format!("row sums to {sum} ({what} {:.3e})", gap.abs()));
        }
    }
}

fn check_shape(report: &mut ValidationReport, field: &str, rows: usize, cols: usize, m: &[Vec<f64>]) -> bool {
    if m.len() != rows {
        report.push(field, vec![], m.len() as f64, format!("expected {rows} rows, found {}", m.len()));
        return false;
    }
    let mut ok = true;
    for (i, r) in m.iter().enumerate() {
        if r.len() != cols {
            report.push(field, vec![i], r.len() as f64, format!("expected {cols} columns, found {}", r.len()));
            ok = false;
        }
    }
    ok
}

/// Checks every structural and numerical invariant of the model and lists
/// the violations found. An empty report means the model is usable.
pub fn validate_model(model: &PomdpModel) -> ValidationReport {
    let mut report = ValidationReport::default();
    let (nx, ny, nu) = (model.n_states, model.n_obs, model.n_actions);
    for (name, n) in [("n_states", nx), ("n_obs", ny), ("n_actions", nu)] {
        if n == 0 {
            report.push(name, vec![], 0.0, "must be positive");
        }
    }
    if !report.is_empty() {
        return report;
    }

    if model.transition.len() != nu {
        report.push(
            "transition",
            vec![],
            model.transition.len() as f64,
            format!("expected {nu} action matrices, found {}", model.transition.len()),
        );
    } else {
        for (u, t) in model.transition.iter().enumerate() {
            if !check_shape(&mut report, "transition", nx, nx, t) {
                continue;
            }
            for (x, row) in t.iter().enumerate() {
                check_distribution(&mut report, "transition", vec![u, x], row);
            }
        }
    }

    if check_shape(&mut report, "channel", nx, ny, &model.channel) {
        for (x, row) in model.channel.iter().enumerate() {
            check_distribution(&mut report, "channel", vec![x], row);
        }
    }

    if check_shape(&mut report, "cost", nx, nu, &model.cost) {
        for (x, row) in model.cost.iter().enumerate() {
            for (u, &c) in row.iter().enumerate() {
                if !c.is_finite() {
                    report.push("cost", vec![x, u], f64::NAN, "cost is not finite");
                } else if c < 0.0 {
                    report.push("cost", vec![x, u], -c, "negative cost");
                }
            }
        }
    }

    let beta = model.discount;
    if !(beta > 0.0 && beta < 1.0) {
        report.push("discount", vec![], beta, "discount must lie in (0,1)");
    }

    if check_shape(&mut report, "state_metric", nx, nx, &model.state_metric) {
        validate_metric(&mut report, &model.state_metric);
    }

    for (name, p) in [("prior", &model.prior), ("reference_prior", &model.reference_prior)] {
        if p.len() != nx {
            report.push(name, vec![], p.len() as f64, format!("expected length {nx}, found {}", p.len()));
        } else {
            check_distribution(&mut report, name, vec![], p);
        }
    }
    report
}

fn validate_metric(report: &mut ValidationReport, d: &[Vec<f64>]) {
    let n = d.len();
    for i in 0..n {
        if d[i][i] != 0.0 {
            report.push("state_metric", vec![i, i], d[i][i].abs(), "diagonal must be zero");
        }
        for j in 0..n {
            let v = d[i][j];
            if !v.is_finite() {
                report.push("state_metric", vec![i, j], f64::NAN, "distance is not finite");
                continue;
            }
            if v < 0.0 {
                report.push("state_metric", vec![i, j], -v, "negative distance");
            }
            if i != j && v == 0.0 {
                report.push("state_metric", vec![i, j], 0.0, "distinct states at distance zero");
            }
            if j > i && (v - d[j][i]).abs() > 0.0 {
                report.push("state_metric", vec![i, j], (v - d[j][i]).abs(), "metric is not symmetric");
            }
        }
    }
    if n <= TRIANGLE_CHECK_MAX_STATES {
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    let excess = d[i][j] - (d[i][k] + d[k][j]);
                    if excess > VALIDATION_TOL {
                        report.push("state_metric", vec![i, j, k], excess, "triangle inequality fails");
                    }
                }
            }
        }
    }
}

impl PomdpModel {
    /// Validates and returns the model, or the full report as an error.
    pub fn validated(self) -> Result<Self> {
        let report = validate_model(&self);
        if report.is_empty() {
            Ok(self)
        } else {
            Err(Error::InvalidModel(report))
        }
    }

    pub fn transition_prob(&self, u: usize, x: usize, next: usize) -> f64 {
        self.transition[u][x][next]
    }

    /// Largest one-stage cost, the sup norm of `c`.
    pub fn cost_sup(&self) -> f64 {
        self.cost.iter().flatten().fold(0.0_f64, |m, &c| m.max(c))
    }

    pub fn check_action(&self, u: usize) -> Result<()> {
        if u < self.n_actions {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange { what: "action", index: u, size: self.n_actions })
        }
    }

    pub fn check_observation(&self, y: usize) -> Result<()> {
        if y < self.n_obs {
            Ok(())
        } else {
            Err(Error::IndexOutOfRange { what: "observation", index: y, size: self.n_obs })
        }
    }
}

/// Metric that embeds states at 0, 1, 2, ... on the real line.
pub fn line_metric(n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|i| (0..n).map(|j| (i as f64 - j as f64).abs()).collect())
        .collect()
}

/// Parameters of the two-state machine-repair problem.
///
/// State 0 is "broken", state 1 is "working"; action 1 is "repair".
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MachineRepairParams {
    /// Probability that the sensor reports the wrong state.
    pub epsilon: f64,
    /// Probability that a repair of a broken machine succeeds.
    pub kappa: f64,
    /// Probability that a working, unrepaired machine breaks down.
    pub theta: f64,
    pub repair_cost: f64,
    pub broken_cost: f64,
    pub discount: f64,
}

impl MachineRepairParams {
    /// The three parameter sets of the numerical study (cases 1, 2 and 3).
    pub fn case(id: u8) -> Result<Self> {
        let (epsilon, kappa, theta) = match id {
            1 => (0.3, 0.2, 0.1),
            2 => (0.01, 0.3, 0.1),
            3 => (0.3, 0.4, 0.3),
            _ => {
                return Err(Error::InvalidParameter {
                    name: "case",
                    value: id as f64,
                    reason: "machine-repair case must be 1, 2 or 3",
                })
            }
        };
        Ok(Self { epsilon, kappa, theta, repair_cost: 5.0, broken_cost: 1.0, discount: 0.8 })
    }

    /// Contraction constant reported alongside a case in the original
    /// study, where one was stated. Only case 3 carries one.
    pub fn claimed_alpha(id: u8) -> Option<f64> {
        (id == 3).then_some(0.7)
    }
}

/// Reference prior used for all machine-repair cases: 0.1 on broken, 0.9 on working.
pub fn default_reference_prior_machine_repair() -> Vec<f64> {
    vec![0.1, 0.9]
}

fn check_prob(name: &'static str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::InvalidParameter { name, value: p, reason: "must lie in [0,1]" })
    }
}

/// Builds the machine-repair POMDP.
///
/// Only two transition rows are determined by the parameters. The other two
/// follow a minimal-dynamics convention: a broken machine that is not
/// repaired stays broken, and a working machine under repair keeps working.
/// Both the prior and the reference prior are set to
/// [`default_reference_prior_machine_repair`].
pub fn build_machine_repair(p: &MachineRepairParams) -> Result<PomdpModel> {
    check_prob("epsilon", p.epsilon)?;
    check_prob("kappa", p.kappa)?;
    check_prob("theta", p.theta)?;
    for (name, v) in [("repair_cost", p.repair_cost), ("broken_cost", p.broken_cost)] {
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::InvalidParameter { name, value: v, reason: "must be finite and nonnegative" });
        }
    }
    if !(p.discount > 0.0 && p.discount < 1.0) {
        return Err(Error::InvalidParameter { name: "discount", value: p.discount, reason: "must lie in (0,1)" });
    }
    let (e, k, th) = (p.epsilon, p.kappa, p.theta);
    let idle = vec![vec![1.0, 0.0], vec![th, 1.0 - th]];
    let repair = vec![vec![1.0 - k, k], vec![0.0, 1.0]];
    let channel = vec![vec![1.0 - e, e], vec![e, 1.0 - e]];
    let (r, b) = (p.repair_cost, p.broken_cost);
    let cost = vec![vec![b, r + b], vec![0.0, r]];
    let pi_hat = default_reference_prior_machine_repair();
    PomdpModel {
        n_states: 2,
        n_obs: 2,
        n_actions: 2,
        transition: vec![idle, repair],
        channel,
        cost,
        discount: p.discount,
        state_metric: line_metric(2),
        prior: pi_hat.clone(),
        reference_prior: pi_hat,
    }
    .validated()
}
