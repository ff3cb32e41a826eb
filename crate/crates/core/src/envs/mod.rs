//! Environments: the goal-conditioned cart-pole and a one-dimensional chain
//! used as an exactly solvable reference.
//!
//! Both share the piecewise-linear constraint function in [`Bound`]: `-1` at the
//! middle of a bounded variable, `0` on its limits and positive outside.

mod cartpole;
mod chain;

pub use cartpole::{CartPoleGc, CartState, ContAction, EnvBounds, Goal, StepResult};
pub use chain::{ChainState, ChainStep, ChainWorld};

use rand_chacha::ChaCha8Rng;

use crate::Result;

/// Random source used by every stochastic component.
pub type SimRng = ChaCha8Rng;

/// A bounded state variable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bound {
    pub min: f64,
    pub max: f64,
}

impl Bound {
    pub const fn symmetric(limit: f64) -> Self {
        Bound {
            min: -limit,
            max: limit,
        }
    }

    pub fn mid(&self) -> f64 {
        0.5 * (self.min + self.max)
    }

    pub fn range(&self) -> f64 {
        self.max - self.min
    }

    /// Per-variable constraint value: `max(-1 - 2u, 2u - 1)` with
    /// `u = (v - mid) / (max - min)`.
    pub fn h(&self, v: f64) -> f64 {
        let u = (v - self.mid()) / self.range();
        (-1.0 - 2.0 * u).max(2.0 * u - 1.0)
    }
}

/// One transition of a safety-only task.
#[derive(Debug, Clone, PartialEq)]
pub struct SafetyStep<S> {
    pub next: S,
    pub r_s: f64,
    pub h: f64,
    pub terminated: bool,
    pub truncated: bool,
}

/// The goal-independent view of an environment used by safety pretraining.
pub trait SafetyTask {
    type State: Copy + std::fmt::Debug;

    fn obs_dim(&self) -> usize;

    fn max_steps(&self) -> usize;

    fn observe(&self, state: &Self::State, out: &mut Vec<f64>);

    fn constraint(&self, state: &Self::State) -> f64;

    fn reset_anywhere(&self, rng: &mut SimRng) -> Self::State;

    /// `step_count` is the number of steps already taken in the episode.
    fn step_safety(
        &self,
        state: &Self::State,
        action: f64,
        step_count: usize,
    ) -> Result<SafetyStep<Self::State>>;
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bound_h_reference_points() {
        let b = Bound::symmetric(2.4);
        assert_eq!(b.h(0.0), -1.0);
        assert_eq!(b.h(2.4), 0.0);
        assert_eq!(b.h(-2.4), 0.0);
        assert_eq!(b.h(1.2), -0.5);
        assert_eq!(b.h(3.0), 0.25);
    }

    #[test]
    fn asymmetric_bound_uses_midpoint() {
        let b = Bound { min: 1.0, max: 4.0 };
        assert_eq!(b.mid(), 2.5);
        assert_eq!(b.h(2.5), -1.0);
        assert!((b.h(4.0)).abs() < 1e-15);
        assert!((b.h(1.0)).abs() < 1e-15);
    }
}
