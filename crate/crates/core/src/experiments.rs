//! End-to-end study: warm-up, finite-window policy synthesis for each window
//! size, cost evaluation, and the value/robustness error curves.

use std::collections::{HashMap, VecDeque};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::belief::{filter_from_history, Belief, HistoryWindow};
use crate::diagnostics::alpha;
use crate::error::{Error, Result};
use crate::finite_mdp::{build_finite_mdp, default_max_iter, value_iteration};
use crate::model::{build_machine_repair, MachineRepairParams, PomdpModel};
use crate::policy::{FiniteWindowPolicy, WindowPolicy};
use crate::quantizer::{nearest_neighbor, QuantizerConfig, DEFAULT_CAPACITY_LIMIT};
use crate::rng::{mean_and_std_error, sample_index, sample_rng, sub_seed};
use crate::stability::{prior_grid, sup_open_loop_stability, EstimateMode};

/// Horizon whose tail bound is below 1e-4 at discount 0.8 and costs up to 6.
pub const DEFAULT_HORIZON: usize = 60;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    /// Truncated dynamic programming over (hidden state, window) pairs.
    Exact { capacity_limit: u64 },
    /// Discounted rollouts truncated at the horizon.
    MonteCarlo { samples: u64, seed: u64 },
}

impl Default for EvalMode {
    fn default() -> Self {
        EvalMode::Exact { capacity_limit: DEFAULT_CAPACITY_LIMIT }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostEstimate {
    /// Expected discounted cost of the first `horizon` stages.
    pub cost: f64,
    /// `β^H ‖c‖∞ / (1−β)`, the most the remaining stages can add.
    pub tail_bound: f64,
    /// Zero in exact mode.
    pub std_error: f64,
    pub mode: EstimateMode,
}

pub fn tail_bound(model: &PomdpModel, horizon: usize) -> f64 {
    model.discount.powi(horizon as i32) * model.cost_sup() / (1.0 - model.discount)
}

/// Truncated values of a window policy on the product chain of hidden
/// state and window. The window only changes through the policy's own
/// action and the next observation, so the pair is a Markov chain.
pub struct ExactCostTable {
    n_states: usize,
    index: HashMap<HistoryWindow, usize>,
    values: Vec<f64>,
}

impl ExactCostTable {
    pub fn build(
        model: &PomdpModel,
        policy: &dyn WindowPolicy,
        starts: &[HistoryWindow],
        horizon: usize,
        capacity_limit: u64,
    ) -> Result<Self> {
        let s = model.n_states;
        let mut index = HashMap::new();
        let mut windows: Vec<HistoryWindow> = Vec::new();
        let mut queue = VecDeque::new();
        for w in starts {
            if w.size() != policy.window_size() {
                return Err(Error::WindowMismatch { expected: policy.window_size(), got: w.size() });
            }
            w.check(model)?;
            if !index.contains_key(w) {
                index.insert(w.clone(), windows.len());
                windows.push(w.clone());
                queue.push_back(windows.len() - 1);
            }
        }
        let mut actions = Vec::new();
        let mut successors: Vec<Vec<usize>> = Vec::new();
        while let Some(k) = queue.pop_front() {
            let u = policy.action(&windows[k])?;
            model.check_action(u)?;
            let mut succ = Vec::with_capacity(model.n_obs);
            for y in 0..model.n_obs {
                let next = windows[k].shifted(u, y);
                let j = match index.get(&next) {
                    Some(&j) => j,
                    None => {
                        let j = windows.len();
                        if ((j + 1) * s) as u128 > capacity_limit as u128 {
                            return Err(Error::CapacityExceeded { required: ((j + 1) * s) as u128, limit: capacity_limit });
                        }
                        index.insert(next.clone(), j);
                        windows.push(next);
                        queue.push_back(j);
                        j
                    }
                };
                succ.push(j);
            }
            // BFS pops windows in insertion order, so position k is next.
            debug_assert_eq!(actions.len(), k);
            actions.push(u);
            successors.push(succ);
        }

        let beta = model.discount;
        let mut values = vec![0.0; windows.len() * s];
        let mut next = vec![0.0; windows.len() * s];
        for _ in 0..horizon {
            next.par_chunks_mut(s).enumerate().for_each(|(k, out)| {
                let u = actions[k];
                for (x, slot) in out.iter_mut().enumerate() {
                    let mut future = 0.0;
                    for (x2, &p) in model.transition[u][x].iter().enumerate() {
                        if p == 0.0 {
                            continue;
                        }
                        let mut inner = 0.0;
                        for (y, &q) in model.channel[x2].iter().enumerate() {
                            inner += q * values[successors[k][y] * s + x2];
                        }
                        future += p * inner;
                    }
                    *slot = model.cost[x][u] + beta * future;
                }
            });
            std::mem::swap(&mut values, &mut next);
        }
        Ok(ExactCostTable { n_states: s, index, values })
    }

    pub fn n_windows(&self) -> usize {
        self.index.len()
    }

    /// Expected truncated cost with the hidden state drawn from `belief`.
    pub fn cost(&self, belief: &Belief, window: &HistoryWindow) -> Result<f64> {
        let k = *self.index.get(window).ok_or_else(|| Error::MalformedWindow("window was not a start of this table".into()))?;
        Ok(belief.weights().iter().enumerate().map(|(x, w)| w * self.values[k * self.n_states + x]).sum())
    }
}

fn rollout_costs(
    model: &PomdpModel,
    policy: &dyn WindowPolicy,
    belief: &Belief,
    window: &HistoryWindow,
    horizon: usize,
    samples: u64,
    seed: u64,
) -> Result<Vec<f64>> {
    (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(seed, i);
            let mut x = sample_index(belief.weights(), &mut rng);
            let mut w = window.clone();
            let (mut total, mut disc) = (0.0, 1.0);
            for _ in 0..horizon {
                let u = policy.action(&w)?;
                total += disc * model.cost[x][u];
                disc *= model.discount;
                x = sample_index(&model.transition[u][x], &mut rng);
                let y = sample_index(&model.channel[x], &mut rng);
                w = w.shifted(u, y);
            }
            Ok(total)
        })
        .collect()
}

/// Discounted cost of running `policy` from `initial_window`, with the hidden
/// state distributed as `initial_belief`, truncated after `horizon` stages.
pub fn evaluate_policy_cost(
    model: &PomdpModel,
    policy: &dyn WindowPolicy,
    initial_belief: &Belief,
    initial_window: &HistoryWindow,
    horizon: usize,
    mode: EvalMode,
) -> Result<CostEstimate> {
    if horizon == 0 {
        return Err(Error::InvalidParameter { name: "horizon", value: 0.0, reason: "must be at least 1" });
    }
    if initial_belief.len() != model.n_states {
        return Err(Error::IndexOutOfRange { what: "belief length", index: initial_belief.len(), size: model.n_states });
    }
    let tail = tail_bound(model, horizon);
    match mode {
        EvalMode::Exact { capacity_limit } => {
            let table = ExactCostTable::build(model, policy, std::slice::from_ref(initial_window), horizon, capacity_limit)?;
            Ok(CostEstimate { cost: table.cost(initial_belief, initial_window)?, tail_bound: tail, std_error: 0.0, mode: EstimateMode::Exact })
        }
        EvalMode::MonteCarlo { samples, seed } => {
            if samples == 0 {
                return Err(Error::InvalidParameter { name: "samples", value: 0.0, reason: "must be at least 1" });
            }
            let (cost, se) = mean_and_std_error(&rollout_costs(model, policy, initial_belief, initial_window, horizon, samples, seed)?);
            Ok(CostEstimate { cost, tail_bound: tail, std_error: se, mode: EstimateMode::MonteCarlo })
        }
    }
}

/// One warm-up observation path and the true belief at its end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WarmupPath {
    pub observations: Vec<usize>,
    pub actions: Vec<usize>,
    pub probability: f64,
    pub belief: Belief,
}

/// Every observation path of `steps` steps under a fixed action, started
/// from the model's true prior. Impossible paths are dropped.
pub fn enumerate_warmup(model: &PomdpModel, steps: usize, action: usize, capacity_limit: u64) -> Result<Vec<WarmupPath>> {
    model.check_action(action)?;
    let prior = Belief::new(model.prior.clone())?;
    let count = (model.n_obs as u128).checked_pow(steps as u32 + 1).unwrap_or(u128::MAX);
    if count > capacity_limit as u128 {
        return Err(Error::CapacityExceeded { required: count, limit: capacity_limit });
    }
    let actions = vec![action; steps];
    let mut paths = Vec::new();
    for idx in 0..count as u64 {
        // Observations in lexicographic order, first observation most significant.
        let mut rest = idx;
        let mut observations = vec![0; steps + 1];
        for slot in observations.iter_mut().rev() {
            *slot = (rest % model.n_obs as u64) as usize;
            rest /= model.n_obs as u64;
        }
        let window = HistoryWindow::new(observations.clone(), actions.clone())?;
        match filter_from_history(&prior, &window, model) {
            Ok((belief, probability)) => paths.push(WarmupPath { observations, actions: actions.clone(), probability, belief }),
            Err(Error::ZeroLikelihood { .. }) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(paths)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub window_sizes: Vec<usize>,
    pub warmup_steps: usize,
    pub warmup_action: usize,
    pub horizon: usize,
    pub eval: EvalMode,
    /// Used when exact evaluation exceeds its capacity.
    pub mc_fallback_samples: u64,
    pub seed: u64,
    pub vi_tolerance: f64,
    pub quantizer: QuantizerConfig,
    /// Interior grid resolution of the priors in the stability term.
    pub stability_grid_steps: usize,
    pub capacity_limit: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            window_sizes: (0..=5).collect(),
            warmup_steps: 5,
            warmup_action: 0,
            horizon: DEFAULT_HORIZON,
            eval: EvalMode::default(),
            mc_fallback_samples: 10_000,
            seed: 0,
            vi_tolerance: 1e-9,
            quantizer: QuantizerConfig::default(),
            stability_grid_steps: 10,
            capacity_limit: DEFAULT_CAPACITY_LIMIT,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRecord {
    pub n: usize,
    /// Average of `J^N` at the quantized warm-up belief.
    pub approx_value: f64,
    /// Average discounted cost of the window-`N` policy from the warm-up belief.
    pub realized_cost: f64,
    pub realized_std_error: f64,
    /// Average of `|approx_value_N − approx_value_Nmax|` over warm-up paths.
    pub value_error: f64,
    /// Average of `|realized_cost_N − realized_cost_Nmax|` over warm-up paths.
    pub robustness_error: f64,
    pub filter_stability_term: f64,
    pub alpha_pow_n: f64,
    pub quantized_states: usize,
    pub vi_iterations: usize,
    pub vi_residual: f64,
    pub eval_mode: EstimateMode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub case_id: Option<u8>,
    pub alpha: f64,
    pub records: Vec<ExperimentRecord>,
    pub horizon: usize,
    pub truncation_error_bound: f64,
    pub warmup_steps: usize,
    pub warmup_paths: usize,
    pub warmup_mass: f64,
    /// Window size whose values stand in for the optimal value.
    pub proxy_window: usize,
}

struct Leg {
    approx: Vec<f64>,
    realized: Vec<f64>,
    realized_se: Vec<f64>,
    stability: f64,
    quantized_states: usize,
    vi_iterations: usize,
    vi_residual: f64,
    mode: EstimateMode,
}

fn run_leg(model: &PomdpModel, n: usize, paths: &[WarmupPath], config: &ExperimentConfig) -> Result<Leg> {
    let set = crate::quantizer::build_quantized_set(model, n, &config.quantizer)?;
    let anchor = set.anchor.clone();
    let mdp = build_finite_mdp(set, model)?;
    let solved = value_iteration(&mdp, config.vi_tolerance, default_max_iter(&mdp, config.vi_tolerance))?;
    let approx = paths
        .iter()
        .map(|p| Ok(solved.values[nearest_neighbor(&p.belief, &mdp.states, &model.state_metric)?]))
        .collect::<Result<Vec<f64>>>()?;
    let (quantized_states, vi_iterations, vi_residual) = (mdp.n_states(), solved.iteration_count, solved.residual);
    let policy = FiniteWindowPolicy { model: model.clone(), mdp, solved };
    let starts = paths
        .iter()
        .map(|p| HistoryWindow::tail(&p.observations, &p.actions, n))
        .collect::<Result<Vec<_>>>()?;

    let exact = match config.eval {
        EvalMode::Exact { capacity_limit } => match ExactCostTable::build(model, &policy, &starts, config.horizon, capacity_limit) {
            Ok(t) => Some(t),
            Err(Error::CapacityExceeded { .. }) => None,
            Err(e) => return Err(e),
        },
        EvalMode::MonteCarlo { .. } => None,
    };
    let (realized, realized_se, mode) = if let Some(table) = exact {
        let r = paths.iter().zip(&starts).map(|(p, w)| table.cost(&p.belief, w)).collect::<Result<Vec<_>>>()?;
        let n = r.len();
        (r, vec![0.0; n], EstimateMode::Exact)
    } else {
        let (samples, seed) = match config.eval {
            EvalMode::MonteCarlo { samples, seed } => (samples, seed),
            EvalMode::Exact { .. } => (config.mc_fallback_samples, config.seed),
        };
        let mut r = Vec::with_capacity(paths.len());
        let mut se = Vec::with_capacity(paths.len());
        for (i, (p, w)) in paths.iter().zip(&starts).enumerate() {
            let costs = rollout_costs(model, &policy, &p.belief, w, config.horizon, samples, sub_seed(seed, i as u64))?;
            let (m, s) = mean_and_std_error(&costs);
            r.push(m);
            se.push(s);
        }
        (r, se, EstimateMode::MonteCarlo)
    };

    let priors = prior_grid(model.n_states, config.stability_grid_steps);
    let stability = sup_open_loop_stability(model, &anchor, n, &priors, config.capacity_limit)?;
    Ok(Leg { approx, realized, realized_se, stability, quantized_states, vi_iterations, vi_residual, mode })
}

/// Runs the study on an arbitrary model. The model's `prior` is the true
/// initial distribution and its `reference_prior` anchors the quantizer.
pub fn run_experiment(model: &PomdpModel, config: &ExperimentConfig, case_id: Option<u8>) -> Result<ExperimentResult> {
    if config.window_sizes.is_empty() {
        return Err(Error::EmptySet);
    }
    if let Some(&n) = config.window_sizes.iter().find(|&&n| n > config.warmup_steps) {
        return Err(Error::WindowMismatch { expected: config.warmup_steps, got: n });
    }
    if config.horizon == 0 {
        return Err(Error::InvalidParameter { name: "horizon", value: 0.0, reason: "must be at least 1" });
    }
    let paths = enumerate_warmup(model, config.warmup_steps, config.warmup_action, config.capacity_limit)?;
    let warmup_mass: f64 = paths.iter().map(|p| p.probability).sum();
    let a = alpha(model)?;
    let legs = config
        .window_sizes
        .par_iter()
        .map(|&n| run_leg(model, n, &paths, config))
        .collect::<Result<Vec<Leg>>>()?;

    let proxy_window = *config.window_sizes.iter().max().expect("non-empty");
    let proxy = &legs[config.window_sizes.iter().position(|&n| n == proxy_window).expect("present")];
    let weighted = |f: &dyn Fn(usize) -> f64| paths.iter().enumerate().map(|(i, p)| p.probability * f(i)).sum::<f64>();

    let records = config
        .window_sizes
        .iter()
        .zip(&legs)
        .map(|(&n, leg)| ExperimentRecord {
            n,
            approx_value: weighted(&|i| leg.approx[i]),
            realized_cost: weighted(&|i| leg.realized[i]),
            realized_std_error: paths.iter().zip(&leg.realized_se).map(|(p, s)| (p.probability * s).powi(2)).sum::<f64>().sqrt(),
            value_error: weighted(&|i| (leg.approx[i] - proxy.approx[i]).abs()),
            robustness_error: weighted(&|i| (leg.realized[i] - proxy.realized[i]).abs()),
            filter_stability_term: leg.stability,
            alpha_pow_n: a.powi(n as i32),
            quantized_states: leg.quantized_states,
            vi_iterations: leg.vi_iterations,
            vi_residual: leg.vi_residual,
            eval_mode: leg.mode,
        })
        .collect();

    Ok(ExperimentResult {
        case_id,
        alpha: a,
        records,
        horizon: config.horizon,
        truncation_error_bound: tail_bound(model, config.horizon),
        warmup_steps: config.warmup_steps,
        warmup_paths: paths.len(),
        warmup_mass,
        proxy_window,
    })
}

/// The study on one of the three machine-repair cases.
pub fn run_machine_repair(case_id: u8, config: &ExperimentConfig) -> Result<ExperimentResult> {
    let model = build_machine_repair(&MachineRepairParams::case(case_id)?)?;
    run_experiment(&model, config, Some(case_id))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedRow {
    pub n: usize,
    pub value_error: f64,
    pub robustness_error: f64,
    pub stability_term: f64,
    pub alpha_pow_n: f64,
}

/// Error, stability and `α^N` curves, each rescaled to share the stability
/// term's value at `N = 0`. A curve that vanishes at every `N` is returned as
/// zeros; one that vanishes only at `N = 0` cannot be rescaled.
pub fn error_curves(result: &ExperimentResult) -> Result<Vec<NormalizedRow>> {
    let mut recs: Vec<&ExperimentRecord> = result.records.iter().collect();
    recs.sort_by_key(|r| r.n);
    let first = recs.first().ok_or(Error::EmptySet)?;
    if first.n != 0 {
        return Err(Error::WindowMismatch { expected: 0, got: first.n });
    }
    let target = first.filter_stability_term;
    // A curve that is zero everywhere stays zero under any scale.
    let scale = |curve: &'static str, get: fn(&ExperimentRecord) -> f64| {
        let v0 = get(first);
        if v0.abs() > f64::MIN_POSITIVE {
            Ok(target / v0)
        } else if recs.iter().all(|r| get(r) == 0.0) {
            Ok(0.0)
        } else {
            Err(Error::DegenerateNormalization { curve })
        }
    };
    let sv = scale("value_error", |r| r.value_error)?;
    let sr = scale("robustness_error", |r| r.robustness_error)?;
    let ss = scale("stability_term", |r| r.filter_stability_term)?;
    let sa = scale("alpha_pow_n", |r| r.alpha_pow_n)?;
    Ok(recs
        .iter()
        .map(|r| NormalizedRow {
            n: r.n,
            value_error: r.value_error * sv,
            robustness_error: r.robustness_error * sr,
            stability_term: r.filter_stability_term * ss,
            alpha_pow_n: r.alpha_pow_n * sa,
        })
        .collect())
}
