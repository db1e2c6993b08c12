//! The finite belief set built from all length-`N` histories, and the
//! nearest-neighbour quantizer onto it.
//!
//! Histories are enumerated lexicographically with the observations as the
//! outer (more significant) digits and the actions as the inner digits, both
//! ascending. A history's position in that order is its *history index*.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::belief::{filter_from_history, Belief, HistoryWindow};
use crate::distance::{bl_lower_ratio, bl_slices, tv_slices};
use crate::error::{Error, Result};
use crate::model::PomdpModel;

pub const DEFAULT_CAPACITY_LIMIT: u64 = 10_000_000;

/// Distances within this of the minimum count as ties in the nearest-neighbour search.
pub const TIE_TOL: f64 = 1e-12;

/// Beliefs closer than this are merged by the optional dedup pass.
pub const DEDUP_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantizerConfig {
    /// Histories whose observation-likelihood product is at or below this
    /// are discarded. Zero keeps every consistent history.
    pub prune_threshold: f64,
    pub capacity_limit: u64,
    /// Merge entries whose beliefs are within [`DEDUP_TOL`] in BL distance.
    pub dedup: bool,
}

impl Default for QuantizerConfig {
    fn default() -> Self {
        Self { prune_threshold: 0.0, capacity_limit: DEFAULT_CAPACITY_LIMIT, dedup: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizedEntry {
    pub history: HistoryWindow,
    pub history_index: u64,
    pub belief: Belief,
    /// Product of the observation likelihoods along the history when
    /// filtering from the anchor (actions are treated as given).
    pub reach_probability: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantizedBeliefSet {
    pub window_size: usize,
    pub n_obs: usize,
    pub n_actions: usize,
    pub anchor: Belief,
    /// Sorted by `history_index`.
    pub entries: Vec<QuantizedEntry>,
    /// Histories merged into an earlier entry by dedup: (history index, entry).
    /// Sorted by history index; empty unless dedup was requested.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub aliases: Vec<(u64, usize)>,
}

/// Number of histories `|Y|^(N+1) |U|^N`, or `None` on overflow.
pub fn history_count(n_obs: usize, n_actions: usize, window: usize) -> Option<u128> {
    let y = (n_obs as u128).checked_pow(window as u32 + 1)?;
    let u = (n_actions as u128).checked_pow(window as u32)?;
    y.checked_mul(u)
}

/// Inverse of [`history_index`].
pub fn history_from_index(mut index: u64, window: usize, n_obs: usize, n_actions: usize) -> HistoryWindow {
    let mut actions = vec![0; window];
    for slot in actions.iter_mut().rev() {
        *slot = (index % n_actions as u64) as usize;
        index /= n_actions as u64;
    }
    let mut observations = vec![0; window + 1];
    for slot in observations.iter_mut().rev() {
        *slot = (index % n_obs as u64) as usize;
        index /= n_obs as u64;
    }
    HistoryWindow { observations, actions }
}

/// Position of `window` in the lexicographic enumeration.
pub fn history_index(window: &HistoryWindow, n_obs: usize, n_actions: usize) -> u64 {
    let mut index = 0u64;
    for &y in &window.observations {
        index = index * n_obs as u64 + y as u64;
    }
    for &u in &window.actions {
        index = index * n_actions as u64 + u as u64;
    }
    index
}

/// Filters the model's reference prior along every length-`window` history
/// and keeps the consistent, unpruned posteriors in enumeration order.
pub fn build_quantized_set(model: &PomdpModel, window: usize, config: &QuantizerConfig) -> Result<QuantizedBeliefSet> {
    if !(0.0..1.0).contains(&config.prune_threshold) {
        return Err(Error::InvalidParameter {
            name: "prune_threshold",
            value: config.prune_threshold,
            reason: "must lie in [0,1)",
        });
    }
    let anchor = Belief::new(model.reference_prior.clone())?;
    build_quantized_set_from(model, &anchor, window, config)
}

/// As [`build_quantized_set`] with an explicit anchor prior.
pub fn build_quantized_set_from(
    model: &PomdpModel,
    anchor: &Belief,
    window: usize,
    config: &QuantizerConfig,
) -> Result<QuantizedBeliefSet> {
    let count = history_count(model.n_obs, model.n_actions, window)
        .filter(|&c| c <= config.capacity_limit as u128)
        .ok_or(Error::CapacityExceeded {
            required: history_count(model.n_obs, model.n_actions, window).unwrap_or(u128::MAX),
            limit: config.capacity_limit,
        })? as u64;

    let entries: Vec<QuantizedEntry> = (0..count)
        .into_par_iter()
        .filter_map(|idx| {
            let history = history_from_index(idx, window, model.n_obs, model.n_actions);
            match filter_from_history(anchor, &history, model) {
                Ok((belief, p)) if p > config.prune_threshold => Some(QuantizedEntry {
                    history,
                    history_index: idx,
                    belief,
                    reach_probability: p,
                }),
                _ => None,
            }
        })
        .collect();

    let mut set = QuantizedBeliefSet {
        window_size: window,
        n_obs: model.n_obs,
        n_actions: model.n_actions,
        anchor: anchor.clone(),
        entries,
        aliases: Vec::new(),
    };
    if config.dedup {
        set.dedup(&model.state_metric);
    }
    Ok(set)
}

impl QuantizedBeliefSet {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entry holding the posterior of `window`, if it survived pruning.
    pub fn index_of_history(&self, window: &HistoryWindow) -> Option<usize> {
        if window.size() != self.window_size {
            return None;
        }
        let key = history_index(window, self.n_obs, self.n_actions);
        if let Ok(i) = self.entries.binary_search_by_key(&key, |e| e.history_index) {
            return Some(i);
        }
        self.aliases
            .binary_search_by_key(&key, |&(h, _)| h)
            .ok()
            .map(|i| self.aliases[i].1)
    }

    fn dedup(&mut self, metric: &[Vec<f64>]) {
        let kappa = bl_lower_ratio(metric);
        let mut kept: Vec<QuantizedEntry> = Vec::with_capacity(self.entries.len());
        let mut aliases = Vec::new();
        for e in std::mem::take(&mut self.entries) {
            let w = e.belief.weights();
            let dup = kept.iter().position(|k| {
                let tv = tv_slices(k.belief.weights(), w);
                kappa * tv < DEDUP_TOL && bl_slices(k.belief.weights(), w, metric) < DEDUP_TOL
            });
            match dup {
                Some(i) => aliases.push((e.history_index, i)),
                None => kept.push(e),
            }
        }
        self.entries = kept;
        self.aliases = aliases;
    }
}

/// Index of the entry closest to `z` in BL distance, ties going to the lowest index.
///
/// Distances within [`TIE_TOL`] of the minimum are ties. Candidates are
/// visited in order of TV distance and skipped once the lower bound
/// `kappa * tv <= bl` rules them out, so most entries never need the LP.
pub fn nearest_neighbor(z: &Belief, set: &QuantizedBeliefSet, metric: &[Vec<f64>]) -> Result<usize> {
    nearest_with_distance(z, set, metric).map(|(i, _)| i)
}

pub(crate) fn nearest_with_distance(z: &Belief, set: &QuantizedBeliefSet, metric: &[Vec<f64>]) -> Result<(usize, f64)> {
    if set.entries.is_empty() {
        return Err(Error::EmptySet);
    }
    let zw = z.weights();
    let kappa = bl_lower_ratio(metric);
    let mut order: Vec<(f64, usize)> = set
        .entries
        .iter()
        .enumerate()
        .map(|(i, e)| (tv_slices(zw, e.belief.weights()), i))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let mut best = f64::INFINITY;
    let mut evaluated: Vec<(usize, f64)> = Vec::new();
    for &(tv, i) in &order {
        if kappa * tv > best + TIE_TOL {
            break;
        }
        let d = bl_slices(zw, set.entries[i].belief.weights(), metric);
        best = best.min(d);
        evaluated.push((i, d));
    }
    Ok(evaluated
        .into_iter()
        .filter(|&(_, d)| d <= best + TIE_TOL)
        .min_by_key(|&(i, _)| i)
        .expect("at least one candidate is evaluated"))
}

/// Distance from `z` to its quantized image.
pub fn quantization_loss(z: &Belief, set: &QuantizedBeliefSet, metric: &[Vec<f64>]) -> Result<f64> {
    nearest_with_distance(z, set, metric).map(|(_, d)| d)
}
