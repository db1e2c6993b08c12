//! Finite-window control of partially observed Markov decision processes.
//!
//! The crate builds a finite belief MDP whose states are the posteriors
//! obtained by filtering a fixed reference prior along every window of the
//! `N` most recent observations and actions. Beliefs outside that set are
//! mapped to it by nearest neighbour under the bounded-Lipschitz distance.
//! Solving the finite model gives a stationary policy that only looks at
//! the last `N` observations and actions.
//!
//! Alongside the solver the crate computes the filter-stability quantities
//! that control the approximation error (Dobrushin coefficients, the
//! contraction constant and the explicit bound constants) and reproduces
//! the machine-repair study end to end.

pub mod belief;
pub mod diagnostics;
pub mod distance;
pub mod error;
pub mod experiments;
pub mod finite_mdp;
pub mod model;
pub mod policy;
pub mod quantizer;
pub mod rng;
pub mod stability;

pub use belief::{Belief, HistoryWindow};
pub use error::{Error, Result};
pub use model::{PomdpModel, ValidationReport};
pub use diagnostics::DiagnosticsReport;
pub use experiments::{EvalMode, ExperimentResult};
pub use finite_mdp::{FiniteBeliefMdp, SolvedPolicy};
pub use policy::{HistoryPolicy, WindowPolicy};
pub use quantizer::QuantizedBeliefSet;
pub use stability::StabilityEstimate;
