//! Deterministic one-dimensional chain whose safety quantities can be
//! computed exactly by dynamic programming.

use rand::Rng;

use super::{Bound, SafetyStep, SafetyTask, SimRng};
use crate::{Error, Result};

/// Positions drift off the 0.1 lattice by a few ulps after repeated steps.
const LATTICE_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ChainState {
    pub pos: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainStep {
    pub next: ChainState,
    pub r_s: f64,
    pub h: f64,
    pub terminated: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainWorld {
    pub step_size: f64,
    pub bound: Bound,
    /// Safety reward when `|pos| <= n0`.
    pub n0: f64,
    pub max_steps: usize,
    /// Reset-anywhere draws `pos` uniformly in `[-reset_limit, reset_limit]`.
    pub reset_limit: f64,
}

impl Default for ChainWorld {
    fn default() -> Self {
        ChainWorld {
            step_size: 0.1,
            bound: Bound::symmetric(2.4),
            n0: 0.1,
            max_steps: 500,
            reset_limit: 2.3,
        }
    }
}

impl ChainWorld {
    pub fn chain_step(&self, state: ChainState, action: f64) -> ChainStep {
        let pos = state.pos + self.step_size * action.clamp(-1.0, 1.0);
        let h = self.bound.h(pos);
        ChainStep {
            next: ChainState { pos },
            r_s: if pos.abs() <= self.n0 + LATTICE_EPS { 1.0 } else { 0.0 },
            h,
            terminated: h > 0.0,
        }
    }

    /// Number of full-speed steps needed to enter the safety set from `pos`.
    pub fn steps_to_n0(&self, pos: f64) -> usize {
        let excess = pos.abs() - self.n0;
        if excess <= 0.0 {
            0
        } else {
            let k = excess / self.step_size;
            let r = k.round();
            if (k - r).abs() < LATTICE_EPS {
                r as usize
            } else {
                k.ceil() as usize
            }
        }
    }
}

impl SafetyTask for ChainWorld {
    type State = ChainState;

    fn obs_dim(&self) -> usize {
        1
    }

    fn max_steps(&self) -> usize {
        self.max_steps
    }

    fn observe(&self, state: &ChainState, out: &mut Vec<f64>) {
        out.push(state.pos);
    }

    fn constraint(&self, state: &ChainState) -> f64 {
        self.bound.h(state.pos)
    }

    fn reset_anywhere(&self, rng: &mut SimRng) -> ChainState {
        ChainState {
            pos: rng.random_range(-self.reset_limit..=self.reset_limit),
        }
    }

    fn step_safety(
        &self,
        state: &ChainState,
        action: f64,
        step_count: usize,
    ) -> Result<SafetyStep<ChainState>> {
        let h0 = self.bound.h(state.pos);
        if h0 > 0.0 {
            return Err(Error::TerminalStep { h: h0 });
        }
        if step_count >= self.max_steps {
            return Err(Error::StepLimit {
                limit: self.max_steps,
            });
        }
        let s = self.chain_step(*state, action);
        Ok(SafetyStep {
            next: s.next,
            r_s: s.r_s,
            h: s.h,
            terminated: s.terminated,
            truncated: step_count + 1 >= self.max_steps,
        })
    }
}
