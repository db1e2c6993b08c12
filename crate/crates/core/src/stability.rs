//! Filter stability: how far apart two filters started from different
//! priors are after being fed the same observations and actions.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::belief::{correct, filter_from_history, predict, Belief};
use crate::diagnostics::alpha;
use crate::distance::{bl_distance, tv_distance};
use crate::error::{Error, Result};
use crate::model::PomdpModel;
use crate::policy::{HistoryPolicy, OpenLoop};
use crate::quantizer::{history_count, history_from_index, DEFAULT_CAPACITY_LIMIT};
use crate::rng::{mean_and_std_error, sample_index, sample_rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimateMode {
    Exact,
    MonteCarlo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityEstimate {
    pub n: usize,
    pub mean_tv: f64,
    pub mean_bl: f64,
    pub std_error_tv: f64,
    pub std_error_bl: f64,
    pub mode: EstimateMode,
    /// Consistent histories enumerated, or simulated samples.
    pub samples: u64,
    /// Total probability of the enumerated histories (1 for Monte Carlo).
    pub probability_mass: f64,
}

/// How to estimate a point of the decay curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StabilityMode {
    Exact { capacity_limit: u64 },
    MonteCarlo { samples: u64, seed: u64 },
}

impl Default for StabilityMode {
    fn default() -> Self {
        StabilityMode::Exact { capacity_limit: DEFAULT_CAPACITY_LIMIT }
    }
}

#[derive(Debug, Clone, Copy, Default)]
struct Accumulator {
    mass: f64,
    tv: f64,
    bl: f64,
    count: u64,
}

impl Accumulator {
    fn merge(self, o: Accumulator) -> Accumulator {
        Accumulator { mass: self.mass + o.mass, tv: self.tv + o.tv, bl: self.bl + o.bl, count: self.count + o.count }
    }
}

struct Walk<'a> {
    model: &'a PomdpModel,
    policy: &'a dyn HistoryPolicy,
    horizon: usize,
    same_prior: bool,
}

impl Walk<'_> {
    /// `zp` and `za` are the filters after `obs.len()` observations.
    fn descend(
        &self,
        obs: &mut Vec<usize>,
        acts: &mut Vec<usize>,
        zp: &Belief,
        za: &Belief,
        prob: f64,
        acc: &mut Accumulator,
    ) -> Result<()> {
        if obs.len() == self.horizon + 1 {
            acc.mass += prob;
            acc.count += 1;
            if !self.same_prior {
                acc.tv += prob * tv_distance(zp, za);
                acc.bl += prob * bl_distance(zp, za, &self.model.state_metric);
            }
            return Ok(());
        }
        let u = self.policy.action(obs, acts)?;
        self.model.check_action(u)?;
        let (pp, pa) = (predict(zp, u, self.model), predict(za, u, self.model));
        acts.push(u);
        for y in 0..self.model.n_obs {
            self.branch(obs, acts, &pp, &pa, y, prob, acc)?;
        }
        acts.pop();
        Ok(())
    }

    #[allow(clippy::too_many_arguments)]
    fn branch(
        &self,
        obs: &mut Vec<usize>,
        acts: &mut Vec<usize>,
        pp: &Belief,
        pa: &Belief,
        y: usize,
        prob: f64,
        acc: &mut Accumulator,
    ) -> Result<()> {
        let Some((zp, lik)) = correct(pp, y, self.model) else {
            return Ok(());
        };
        let step = obs.len();
        let (za, _) = correct(pa, y, self.model).ok_or(Error::ZeroLikelihood { step })?;
        obs.push(y);
        let r = self.descend(obs, acts, &zp, &za, prob * lik, acc);
        obs.pop();
        r
    }
}

fn check_same_size(model: &PomdpModel, beliefs: &[&Belief]) -> Result<()> {
    for b in beliefs {
        if b.len() != model.n_states {
            return Err(Error::IndexOutOfRange { what: "belief length", index: b.len(), size: model.n_states });
        }
    }
    Ok(())
}

/// Expected TV and BL distance at time `n` between the filter started from
/// `prior` and the one started from `anchor`, averaged over the histories
/// generated by `prior` under `policy`. Exact enumeration.
pub fn exact_filter_stability(
    model: &PomdpModel,
    prior: &Belief,
    anchor: &Belief,
    policy: &dyn HistoryPolicy,
    n: usize,
    capacity_limit: u64,
) -> Result<StabilityEstimate> {
    check_same_size(model, &[prior, anchor])?;
    let leaves = (model.n_obs as u128).checked_pow(n as u32 + 1).unwrap_or(u128::MAX);
    if leaves > capacity_limit as u128 {
        return Err(Error::CapacityExceeded { required: leaves, limit: capacity_limit });
    }
    let walk = Walk { model, policy, horizon: n, same_prior: prior == anchor };
    // One subtree per first observation; partial sums are merged in order so
    // the result does not depend on scheduling.
    let parts: Vec<Accumulator> = (0..model.n_obs)
        .into_par_iter()
        .map(|y| {
            let mut acc = Accumulator::default();
            let (mut obs, mut acts) = (Vec::with_capacity(n + 1), Vec::with_capacity(n));
            walk.branch(&mut obs, &mut acts, prior, anchor, y, 1.0, &mut acc)?;
            Ok(acc)
        })
        .collect::<Result<_>>()?;
    let total = parts.into_iter().fold(Accumulator::default(), Accumulator::merge);
    Ok(StabilityEstimate {
        n,
        mean_tv: total.tv,
        mean_bl: total.bl,
        std_error_tv: 0.0,
        std_error_bl: 0.0,
        mode: EstimateMode::Exact,
        samples: total.count,
        probability_mass: total.mass,
    })
}

/// Monte Carlo version of [`exact_filter_stability`]: simulates the hidden
/// chain from `prior`, runs both filters on the generated history and
/// averages the distances. Sample `i` uses its own seeded stream.
pub fn mc_filter_stability(
    model: &PomdpModel,
    prior: &Belief,
    anchor: &Belief,
    policy: &dyn HistoryPolicy,
    n: usize,
    samples: u64,
    seed: u64,
) -> Result<StabilityEstimate> {
    check_same_size(model, &[prior, anchor])?;
    if samples == 0 {
        return Err(Error::InvalidParameter { name: "samples", value: 0.0, reason: "must be at least 1" });
    }
    let same = prior == anchor;
    let draws: Vec<(f64, f64)> = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = sample_rng(seed, i);
            let mut x = sample_index(prior.weights(), &mut rng);
            let mut y = sample_index(&model.channel[x], &mut rng);
            let (mut obs, mut acts) = (vec![y], Vec::with_capacity(n));
            let mut zp = correct(prior, y, model).ok_or(Error::ZeroLikelihood { step: 0 })?.0;
            let mut za = correct(anchor, y, model).ok_or(Error::ZeroLikelihood { step: 0 })?.0;
            for t in 1..=n {
                let u = policy.action(&obs, &acts)?;
                model.check_action(u)?;
                x = sample_index(&model.transition[u][x], &mut rng);
                y = sample_index(&model.channel[x], &mut rng);
                zp = correct(&predict(&zp, u, model), y, model).ok_or(Error::ZeroLikelihood { step: t })?.0;
                za = correct(&predict(&za, u, model), y, model).ok_or(Error::ZeroLikelihood { step: t })?.0;
                obs.push(y);
                acts.push(u);
            }
            if same {
                return Ok((0.0, 0.0));
            }
            Ok((tv_distance(&zp, &za), bl_distance(&zp, &za, &model.state_metric)))
        })
        .collect::<Result<_>>()?;
    let tv: Vec<f64> = draws.iter().map(|d| d.0).collect();
    let bl: Vec<f64> = draws.iter().map(|d| d.1).collect();
    let (mean_tv, std_error_tv) = mean_and_std_error(&tv);
    let (mean_bl, std_error_bl) = mean_and_std_error(&bl);
    Ok(StabilityEstimate {
        n,
        mean_tv,
        mean_bl,
        std_error_tv,
        std_error_bl,
        mode: EstimateMode::MonteCarlo,
        samples,
        probability_mass: 1.0,
    })
}

pub fn filter_stability(
    model: &PomdpModel,
    prior: &Belief,
    anchor: &Belief,
    policy: &dyn HistoryPolicy,
    n: usize,
    mode: StabilityMode,
) -> Result<StabilityEstimate> {
    match mode {
        StabilityMode::Exact { capacity_limit } => exact_filter_stability(model, prior, anchor, policy, n, capacity_limit),
        StabilityMode::MonteCarlo { samples, seed } => mc_filter_stability(model, prior, anchor, policy, n, samples, seed),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayPoint {
    pub n: usize,
    pub mean_tv: f64,
    pub se_tv: f64,
    pub mean_bl: f64,
    pub se_bl: f64,
    /// `2α^N`.
    pub envelope: f64,
}

fn check_dominated(prior: &Belief, anchor: &Belief) -> Result<()> {
    prior.absolutely_continuous_wrt(anchor).map_err(|state| Error::AbsoluteContinuityViolated { state })
}

/// Stability estimates for `N = 0..=n_max` next to the envelope `2α^N`.
pub fn stability_decay_curve(
    model: &PomdpModel,
    prior: &Belief,
    anchor: &Belief,
    policy: &dyn HistoryPolicy,
    n_max: usize,
    mode: StabilityMode,
) -> Result<Vec<DecayPoint>> {
    check_same_size(model, &[prior, anchor])?;
    check_dominated(prior, anchor)?;
    let a = alpha(model)?;
    (0..=n_max)
        .map(|n| {
            let e = filter_stability(model, prior, anchor, policy, n, mode)?;
            Ok(DecayPoint {
                n,
                mean_tv: e.mean_tv,
                se_tv: e.std_error_tv,
                mean_bl: e.mean_bl,
                se_bl: e.std_error_bl,
                envelope: 2.0 * a.powi(n as i32),
            })
        })
        .collect()
}

/// Worst-case TV distance between the two filters at time `n` over the
/// supplied priors, every action sequence and every observation sequence the
/// prior can produce. An under-approximation of the uniform constant since
/// only finitely many priors are tried.
pub fn approx_uniform_l_tv(
    model: &PomdpModel,
    anchor: &Belief,
    n: usize,
    prior_set: &[Belief],
    capacity_limit: u64,
) -> Result<f64> {
    if prior_set.is_empty() {
        return Err(Error::EmptySet);
    }
    check_same_size(model, &[anchor])?;
    for p in prior_set {
        check_same_size(model, &[p])?;
        check_dominated(p, anchor)?;
    }
    let per_prior = history_count(model.n_obs, model.n_actions, n).unwrap_or(u128::MAX);
    let required = per_prior.saturating_mul(prior_set.len() as u128);
    if required > capacity_limit as u128 {
        return Err(Error::CapacityExceeded { required, limit: capacity_limit });
    }
    let mut worst = 0.0_f64;
    for prior in prior_set {
        let m = (0..per_prior as u64)
            .into_par_iter()
            .map(|idx| {
                let h = history_from_index(idx, n, model.n_obs, model.n_actions);
                let Ok((zp, _)) = filter_from_history(prior, &h, model) else {
                    return Ok(0.0);
                };
                let (za, _) = filter_from_history(anchor, &h, model)?;
                Ok(tv_distance(&zp, &za))
            })
            .try_reduce(|| 0.0, |a: f64, b: f64| Ok(a.max(b)))?;
        worst = worst.max(m);
    }
    Ok(worst.min(2.0))
}

/// Point masses plus, for two states, an interior grid `k/steps`.
pub fn prior_grid(n_states: usize, steps: usize) -> Vec<Belief> {
    let mut out: Vec<Belief> = (0..n_states).map(|x| Belief::point_mass(n_states, x)).collect();
    if n_states == 2 {
        for k in 1..steps {
            let p = k as f64 / steps as f64;
            out.push(Belief::new(vec![p, 1.0 - p]).expect("grid point is a distribution"));
        }
    } else {
        out.push(Belief::uniform(n_states));
    }
    out
}

/// Largest exact expected BL mismatch at time `n` over the supplied priors
/// and every open-loop action sequence of length `n`.
pub fn sup_open_loop_stability(
    model: &PomdpModel,
    anchor: &Belief,
    n: usize,
    prior_set: &[Belief],
    capacity_limit: u64,
) -> Result<f64> {
    if prior_set.is_empty() {
        return Err(Error::EmptySet);
    }
    let sequences = (model.n_actions as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    let leaves = (model.n_obs as u128).checked_pow(n as u32 + 1).unwrap_or(u128::MAX);
    let required = sequences.saturating_mul(leaves).saturating_mul(prior_set.len() as u128);
    if required > capacity_limit as u128 {
        return Err(Error::CapacityExceeded { required, limit: capacity_limit });
    }
    let mut worst = 0.0_f64;
    for prior in prior_set {
        check_dominated(prior, anchor)?;
        for s in 0..sequences as u64 {
            let mut rest = s;
            let seq: Vec<usize> = (0..n)
                .map(|_| {
                    let u = (rest % model.n_actions as u64) as usize;
                    rest /= model.n_actions as u64;
                    u
                })
                .collect();
            let e = exact_filter_stability(model, prior, anchor, &OpenLoop(seq), n, capacity_limit)?;
            worst = worst.max(e.mean_bl);
        }
    }
    Ok(worst)
}
