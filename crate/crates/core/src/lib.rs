//! Two-phase safe exploration.
//!
//! Phase one pretrains a goal-independent safety policy together with two
//! quantile-critic ensembles: one for the discounted safety return and one for
//! the worst future constraint value (reachability). Phase two trains a
//! goal-conditioned policy with hindsight relabeling while a hysteretic
//! selector hands control to the safety policy whenever the estimated risk of
//! the goal-conditioned action is too high.
//!
//! Everything here is CPU-only and deterministic for a fixed seed.

#[cfg(feature = "openblas")]
extern crate blas_src;

pub mod approx;
pub mod distcritic;
pub mod envs;
mod error;
pub mod goal;
pub mod orchestrator;
pub mod pretrain;
pub mod risk;
pub mod selector;

pub use error::{Error, Result};

pub use approx::{Adam, GaussianPolicy, Mlp, Real, Temperature};
pub use distcritic::{CriticEnsemble, CriticRole, CriticSpec, CumProbs};
pub use envs::{CartPoleGc, CartState, ChainWorld, Goal, StepResult};
pub use goal::{GcAgent, GcConfig};
pub use orchestrator::{Mode, RunConfig};
pub use pretrain::{PretrainConfig, SafetyAgent};
pub use risk::{RiskKind, RiskStrategy};
pub use selector::{ActingPolicy, SelectionTrace, SelectorState};
