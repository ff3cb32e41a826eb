//! Hysteretic gate choosing between the safety action and the
//! goal-conditioned action at every step.

use std::fmt;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ActingPolicy {
    Safety,
    GoalConditioned,
}

impl ActingPolicy {
    pub fn as_str(self) -> &'static str {
        match self {
            ActingPolicy::Safety => "safety",
            ActingPolicy::GoalConditioned => "gc",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "safety" => Some(ActingPolicy::Safety),
            "gc" => Some(ActingPolicy::GoalConditioned),
            _ => None,
        }
    }
}

impl fmt::Display for ActingPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Per-episode gate state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectorState {
    pub safety_flag: bool,
    /// Risk of the safety action above which the flag is raised.
    pub th_raise: f64,
    /// Risk of the goal-conditioned action at or below which the flag drops.
    pub th_lower: f64,
}

/// One gate decision.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectionTrace {
    pub flag_before: bool,
    pub flag_after: bool,
    pub risk_gc: f64,
    pub risk_safety: f64,
    pub acting: ActingPolicy,
}

impl SelectorState {
    pub fn new(th_raise: f64, th_lower: f64) -> Result<Self> {
        if !(th_lower <= th_raise) {
            return Err(Error::Config(format!(
                "thresholds must satisfy lower <= raise, got raise {th_raise} lower {th_lower}"
            )));
        }
        Ok(SelectorState {
            safety_flag: false,
            th_raise,
            th_lower,
        })
    }

    /// Episode start: the goal-conditioned policy acts first.
    pub fn reset(&mut self) {
        self.safety_flag = false;
    }

    /// Updates the flag from the two candidate risks: it stays up while the
    /// goal-conditioned action is still too risky, and is forced up whenever
    /// even the safety action is risky.
    pub fn update(&mut self, risk_gc: f64, risk_safety: f64) -> SelectionTrace {
        let flag_before = self.safety_flag;
        let keep = risk_gc > self.th_lower;
        let raise = risk_safety > self.th_raise;
        self.safety_flag = (flag_before && keep) || raise;
        SelectionTrace {
            flag_before,
            flag_after: self.safety_flag,
            risk_gc,
            risk_safety,
            acting: if self.safety_flag {
                ActingPolicy::Safety
            } else {
                ActingPolicy::GoalConditioned
            },
        }
    }

    /// Gate decision plus the executed action, which is bitwise one of the
    /// two candidates.
    pub fn select(&mut self, a_gc: f64, a_safety: f64, risk_gc: f64, risk_safety: f64) -> (f64, SelectionTrace) {
        let trace = self.update(risk_gc, risk_safety);
        let a = match trace.acting {
            ActingPolicy::Safety => a_safety,
            ActingPolicy::GoalConditioned => a_gc,
        };
        (a, trace)
    }
}
