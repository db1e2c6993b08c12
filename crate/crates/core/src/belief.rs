//! Belief vectors and the Bayesian predictor/filter recursions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::PomdpModel;

pub use crate::distance::{bl_distance, tv_distance};

/// Likelihoods below this are treated as structurally impossible histories.
pub const ZERO_LIKELIHOOD: f64 = 1e-300;

/// Normalization tolerance for beliefs.
pub const BELIEF_TOL: f64 = 1e-10;

/// A probability vector over the hidden states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Belief(Vec<f64>);

impl Belief {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::InvalidParameter { name: "belief", value: 0.0, reason: "belief must be non-empty" });
        }
        if let Some(&w) = weights.iter().find(|w| !w.is_finite() || **w < 0.0) {
            return Err(Error::InvalidParameter { name: "belief", value: w, reason: "weights must be finite and nonnegative" });
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > BELIEF_TOL {
            return Err(Error::InvalidParameter { name: "belief", value: sum, reason: "weights must sum to 1" });
        }
        Ok(Self(weights))
    }

    /// Scales nonnegative weights to sum to one.
    pub fn normalized(weights: Vec<f64>) -> Result<Self> {
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0 && sum.is_finite()) {
            return Err(Error::InvalidParameter { name: "belief", value: sum, reason: "weights have no positive mass" });
        }
        Self::new(weights.into_iter().map(|w| w / sum).collect())
    }

    pub fn point_mass(n: usize, x: usize) -> Self {
        let mut w = vec![0.0; n];
        w[x] = 1.0;
        Self(w)
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// True when every state with zero mass under `other` also has zero
    /// mass here. Returns the first offending state otherwise.
    pub fn absolutely_continuous_wrt(&self, other: &Belief) -> std::result::Result<(), usize> {
        match self.0.iter().zip(&other.0).position(|(&p, &q)| q == 0.0 && p != 0.0) {
            Some(x) => Err(x),
            None => Ok(()),
        }
    }
}

impl std::ops::Index<usize> for Belief {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Observations `y_0..y_N` and the actions `u_0..u_{N-1}` between them.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct HistoryWindow {
    pub observations: Vec<usize>,
    pub actions: Vec<usize>,
}

impl HistoryWindow {
    pub fn new(observations: Vec<usize>, actions: Vec<usize>) -> Result<Self> {
        if observations.len() != actions.len() + 1 {
            return Err(Error::MalformedWindow(format!(
                "{} observations and {} actions; need exactly one more observation than actions",
                observations.len(),
                actions.len()
            )));
        }
        Ok(Self { observations, actions })
    }

    /// Window size N, the number of actions.
    pub fn size(&self) -> usize {
        self.actions.len()
    }

    pub fn check(&self, model: &PomdpModel) -> Result<()> {
        if self.observations.len() != self.actions.len() + 1 {
            return Err(Error::MalformedWindow("observation count must exceed action count by one".into()));
        }
        for &y in &self.observations {
            model.check_observation(y)?;
        }
        for &u in &self.actions {
            model.check_action(u)?;
        }
        Ok(())
    }

    /// Slides the window one step: drops the oldest observation/action pair
    /// (if the window is non-empty) and appends `action` then `observation`.
    pub fn shifted(&self, action: usize, observation: usize) -> Self {
        let n = self.size();
        let mut observations = Vec::with_capacity(n + 1);
        let mut actions = Vec::with_capacity(n);
        observations.extend_from_slice(&self.observations[1..]);
        observations.push(observation);
        if n > 0 {
            actions.extend_from_slice(&self.actions[1..]);
            actions.push(action);
        }
        Self { observations, actions }
    }

    /// The trailing window of size `n` of a longer history.
    pub fn tail(observations: &[usize], actions: &[usize], n: usize) -> Result<Self> {
        if observations.len() != actions.len() + 1 {
            return Err(Error::MalformedWindow("observation count must exceed action count by one".into()));
        }
        if n > actions.len() {
            return Err(Error::WindowMismatch { expected: n, got: actions.len() });
        }
        Self::new(
            observations[observations.len() - n - 1..].to_vec(),
            actions[actions.len() - n..].to_vec(),
        )
    }
}

/// One-step predictor: pushes the belief through the transition kernel of `action`.
pub fn predict(belief: &Belief, action: usize, model: &PomdpModel) -> Belief {
    let t = &model.transition[action];
    let mut out = vec![0.0; model.n_states];
    for (x, &w) in belief.weights().iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        for (next, &p) in t[x].iter().enumerate() {
            out[next] += w * p;
        }
    }
    let sum: f64 = out.iter().sum();
    Belief(out.into_iter().map(|w| w / sum).collect())
}

/// Channel correction of an (already predicted) belief by observation `y`.
/// Returns the posterior and the likelihood of `y`.
pub fn correct(predicted: &Belief, observation: usize, model: &PomdpModel) -> Option<(Belief, f64)> {
    let unnormalized: Vec<f64> = predicted
        .weights()
        .iter()
        .enumerate()
        .map(|(x, &w)| w * model.channel[x][observation])
        .collect();
    let likelihood: f64 = unnormalized.iter().sum();
    if likelihood < ZERO_LIKELIHOOD {
        return None;
    }
    Some((Belief(unnormalized.into_iter().map(|w| w / likelihood).collect()), likelihood))
}

/// Predict-then-correct step. The likelihood is `P(y | z, u)`.
pub fn bayes_update(belief: &Belief, action: usize, observation: usize, model: &PomdpModel) -> Result<(Belief, f64)> {
    model.check_action(action)?;
    model.check_observation(observation)?;
    correct(&predict(belief, action, model), observation, model).ok_or(Error::ZeroLikelihood { step: 1 })
}

/// Distribution of the next observation given the current belief and action.
pub fn obs_likelihoods(belief: &Belief, action: usize, model: &PomdpModel) -> Vec<f64> {
    let predicted = predict(belief, action, model);
    let mut out = vec![0.0; model.n_obs];
    for (x, &w) in predicted.weights().iter().enumerate() {
        for (y, &q) in model.channel[x].iter().enumerate() {
            out[y] += w * q;
        }
    }
    out
}

/// Runs the filter from `prior` along `window`: the first observation
/// corrects the prior directly, then each action/observation pair is a
/// predict/correct step. Returns the posterior and the product of the
/// per-step likelihoods.
pub fn filter_from_history(prior: &Belief, window: &HistoryWindow, model: &PomdpModel) -> Result<(Belief, f64)> {
    window.check(model)?;
    let (mut z, mut path) =
        correct(prior, window.observations[0], model).ok_or(Error::ZeroLikelihood { step: 0 })?;
    for (k, (&u, &y)) in window.actions.iter().zip(&window.observations[1..]).enumerate() {
        let (next, lik) =
            correct(&predict(&z, u, model), y, model).ok_or(Error::ZeroLikelihood { step: k + 1 })?;
        z = next;
        path *= lik;
    }
    Ok((z, path))
}

/// Expected one-stage cost `sum_x c(x,u) z(x)`.
pub fn expected_cost(belief: &Belief, action: usize, model: &PomdpModel) -> f64 {
    belief
        .weights()
        .iter()
        .zip(&model.cost)
        .map(|(&w, row)| w * row[action])
        .sum()
}
