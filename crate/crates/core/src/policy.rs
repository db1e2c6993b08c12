//! Control policies used by the evaluators.
//!
//! A [`WindowPolicy`] maps the last `N` observations and actions to an
//! action. A [`HistoryPolicy`] sees the whole history so far, which is what
//! the simulators and the filter-stability enumerations drive.

use crate::belief::HistoryWindow;
use crate::error::{Error, Result};
use crate::finite_mdp::{finite_window_action, FiniteBeliefMdp, SolvedPolicy};
use crate::model::PomdpModel;

pub trait WindowPolicy: Sync {
    fn window_size(&self) -> usize;
    fn action(&self, window: &HistoryWindow) -> Result<usize>;
}

pub trait HistoryPolicy: Sync {
    /// Action at time `t = actions.len()` given `y_0..y_t` and `u_0..u_{t-1}`.
    fn action(&self, observations: &[usize], actions: &[usize]) -> Result<usize>;
}

/// Always plays the same action.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FixedAction(pub usize);

impl WindowPolicy for FixedAction {
    fn window_size(&self) -> usize {
        0
    }

    fn action(&self, _window: &HistoryWindow) -> Result<usize> {
        Ok(self.0)
    }
}

impl HistoryPolicy for FixedAction {
    fn action(&self, _observations: &[usize], _actions: &[usize]) -> Result<usize> {
        Ok(self.0)
    }
}

/// Plays a fixed action sequence regardless of the observations.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OpenLoop(pub Vec<usize>);

impl HistoryPolicy for OpenLoop {
    fn action(&self, _observations: &[usize], actions: &[usize]) -> Result<usize> {
        self.0
            .get(actions.len())
            .copied()
            .ok_or(Error::IndexOutOfRange { what: "open-loop time step", index: actions.len(), size: self.0.len() })
    }
}

/// The stationary policy of a solved finite belief MDP.
#[derive(Debug, Clone)]
pub struct FiniteWindowPolicy {
    pub model: PomdpModel,
    pub mdp: FiniteBeliefMdp,
    pub solved: SolvedPolicy,
}

impl WindowPolicy for FiniteWindowPolicy {
    fn window_size(&self) -> usize {
        self.mdp.states.window_size
    }

    fn action(&self, window: &HistoryWindow) -> Result<usize> {
        finite_window_action(&self.solved, &self.mdp, window, &self.model)
    }
}

/// Runs a window policy once `N` actions have been taken and a fixed
/// warm-up action before that.
#[derive(Debug, Clone)]
pub struct WithWarmup<P> {
    pub policy: P,
    pub warmup_action: usize,
}

impl<P: WindowPolicy> HistoryPolicy for WithWarmup<P> {
    fn action(&self, observations: &[usize], actions: &[usize]) -> Result<usize> {
        let n = self.policy.window_size();
        if actions.len() < n {
            return Ok(self.warmup_action);
        }
        self.policy.action(&HistoryWindow::tail(observations, actions, n)?)
    }
}
