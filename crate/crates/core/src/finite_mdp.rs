//! The finite approximate belief MDP on a quantized belief set, and its
//! solution by value iteration.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::belief::{bayes_update, expected_cost, filter_from_history, obs_likelihoods, HistoryWindow, ZERO_LIKELIHOOD};
use crate::error::{Error, Result};
use crate::model::PomdpModel;
use crate::quantizer::{nearest_neighbor, QuantizedBeliefSet};

/// Tolerance on per-(state, action) branch probability sums.
pub const BRANCH_SUM_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Branch {
    pub observation: usize,
    pub probability: f64,
    pub successor: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteBeliefMdp {
    pub states: QuantizedBeliefSet,
    /// `costs[i][u]`: expected stage cost of entry `i` under action `u`.
    pub costs: Vec<Vec<f64>>,
    /// `transitions[i][u]`: one branch per observation with positive likelihood.
    pub transitions: Vec<Vec<Vec<Branch>>>,
    pub discount: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolvedPolicy {
    pub values: Vec<f64>,
    pub policy: Vec<usize>,
    pub iteration_count: usize,
    /// Sup-norm change of the last Bellman update.
    pub residual: f64,
}

/// Builds costs and quantized transitions: from each entry and action,
/// every observation with positive likelihood leads to the nearest entry
/// of the Bayes-updated belief.
pub fn build_finite_mdp(set: QuantizedBeliefSet, model: &PomdpModel) -> Result<FiniteBeliefMdp> {
    if set.is_empty() {
        return Err(Error::EmptySet);
    }
    let metric = &model.state_metric;
    let rows: Vec<(Vec<f64>, Vec<Vec<Branch>>)> = set
        .entries
        .par_iter()
        .map(|entry| {
            let z = &entry.belief;
            let costs = (0..model.n_actions).map(|u| expected_cost(z, u, model)).collect();
            let branches = (0..model.n_actions)
                .map(|u| {
                    obs_likelihoods(z, u, model)
                        .into_iter()
                        .enumerate()
                        .filter(|&(_, p)| p >= ZERO_LIKELIHOOD)
                        .map(|(y, p)| {
                            let (next, _) = bayes_update(z, u, y, model)?;
                            Ok(Branch { observation: y, probability: p, successor: nearest_neighbor(&next, &set, metric)? })
                        })
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((costs, branches))
        })
        .collect::<Result<Vec<_>>>()?;
    let (costs, transitions) = rows.into_iter().unzip();
    Ok(FiniteBeliefMdp { states: set, costs, transitions, discount: model.discount })
}

impl FiniteBeliefMdp {
    pub fn n_states(&self) -> usize {
        self.costs.len()
    }

    pub fn n_actions(&self) -> usize {
        self.costs.first().map_or(0, Vec::len)
    }

    /// `c(i,u) + beta * sum_y P(y|i,u) v(succ)`.
    pub fn q_value(&self, values: &[f64], state: usize, action: usize) -> f64 {
        let future: f64 = self.transitions[state][action]
            .iter()
            .map(|b| b.probability * values[b.successor])
            .sum();
        self.costs[state][action] + self.discount * future
    }

    /// Minimizing action and its Q-value; ties go to the lowest action.
    pub fn greedy(&self, values: &[f64], state: usize) -> (usize, f64) {
        let mut best = (0, self.q_value(values, state, 0));
        for u in 1..self.n_actions() {
            let q = self.q_value(values, state, u);
            if q < best.1 {
                best = (u, q);
            }
        }
        best
    }

    /// One synchronous Bellman update. Each state reads only `values`, so
    /// the result does not depend on how the sweep is scheduled.
    pub fn bellman_update(&self, values: &[f64]) -> Vec<f64> {
        (0..self.n_states())
            .into_par_iter()
            .map(|i| self.greedy(values, i).1)
            .collect()
    }
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}

/// Value iteration from `v = 0`.
///
/// Stops once the sup-norm change falls to `tolerance * (1 - beta) / beta`,
/// which puts the returned values within `tolerance` of the fixed point.
/// The greedy policy is extracted once, at the final values.
pub fn value_iteration(mdp: &FiniteBeliefMdp, tolerance: f64, max_iter: usize) -> Result<SolvedPolicy> {
    if !(tolerance > 0.0) {
        return Err(Error::InvalidParameter { name: "tolerance", value: tolerance, reason: "must be positive" });
    }
    if mdp.n_states() == 0 {
        return Err(Error::EmptySet);
    }
    let beta = mdp.discount;
    let stop = tolerance * (1.0 - beta) / beta;
    let mut values = vec![0.0; mdp.n_states()];
    let mut residual = f64::INFINITY;
    for iter in 1..=max_iter {
        let next = mdp.bellman_update(&values);
        residual = sup_diff(&next, &values);
        values = next;
        if residual <= stop {
            let policy = (0..mdp.n_states()).map(|i| mdp.greedy(&values, i).0).collect();
            return Ok(SolvedPolicy { values, policy, iteration_count: iter, residual });
        }
    }
    Err(Error::NotConverged { max_iter, residual })
}

/// Iteration cap that comfortably covers the geometric convergence rate.
pub fn default_max_iter(mdp: &FiniteBeliefMdp, tolerance: f64) -> usize {
    let beta = mdp.discount;
    let scale = mdp.costs.iter().flatten().fold(0.0_f64, |m, &c| m.max(c)) / (1.0 - beta);
    let target = (tolerance * (1.0 - beta) / beta).max(f64::MIN_POSITIVE);
    let k = ((target / scale.max(1e-300)).ln() / beta.ln()).ceil();
    if k.is_finite() && k > 0.0 {
        (k as usize).saturating_mul(2).max(100)
    } else {
        100
    }
}

/// Action of the finite-window policy for the given window.
///
/// The window is looked up by its history index. If its entry was pruned or
/// is inconsistent, the window is filtered from the anchor and the action
/// of the nearest surviving entry is used.
pub fn finite_window_action(
    solved: &SolvedPolicy,
    mdp: &FiniteBeliefMdp,
    window: &HistoryWindow,
    model: &PomdpModel,
) -> Result<usize> {
    let set = &mdp.states;
    if window.size() != set.window_size {
        return Err(Error::WindowMismatch { expected: set.window_size, got: window.size() });
    }
    window.check(model)?;
    if let Some(i) = set.index_of_history(window) {
        return Ok(solved.policy[i]);
    }
    let (z, _) = filter_from_history(&set.anchor, window, model)?;
    Ok(solved.policy[nearest_neighbor(&z, set, &model.state_metric)?])
}
