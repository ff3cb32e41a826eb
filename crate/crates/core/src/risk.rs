//! Risk of an `(s, a)` pair under the frozen safety policy, read off the
//! safety critics: a worst-case time to reach the safe set, a worst-case
//! constraint value, or the combination of both.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;

use crate::distcritic::{tail_mean, CumProbs};
use crate::pretrain::SafetyAgent;
use crate::{Error, Result};

/// Lower clamp applied to value atoms before the time mapping.
pub const VALUE_CLAMP: f64 = 1e-6;

/// `log((1 - gamma) x) / log(gamma)`: the number of steps `t` for which a
/// discounted unit reward starting at step `t` is worth `x`.
pub fn f_gamma(x: f64, gamma: f64) -> f64 {
    ((1.0 - gamma) * x).ln() / gamma.ln()
}

/// Inverse of [`f_gamma`].
pub fn f_gamma_inverse(t: f64, gamma: f64) -> f64 {
    gamma.powf(t) / (1.0 - gamma)
}

/// Clamps a value atom into the open range where the time mapping is finite.
pub fn clamp_value(x: f64, gamma: f64) -> f64 {
    x.clamp(VALUE_CLAMP, 1.0 / (1.0 - gamma) - VALUE_CLAMP * gamma)
}

/// Time-to-safe-set estimate of one value atom.
pub fn time_of_value(x: f64, gamma: f64) -> f64 {
    f_gamma(clamp_value(x, gamma), gamma)
}

/// Mean mapped time over the worst `1 - tau` of the time distribution.
///
/// The mapping reverses the order of the atoms, so atom `j` carries time
/// probability `1 - p_j`; the tail keeps atoms with `1 - p_j > tau` and falls
/// back to the lowest value atom when none qualifies.
pub fn time_tail(value_atoms: &[&[f64]], probs: &CumProbs, tau: f64, gamma: f64) -> f64 {
    assert!((0.0..=1.0).contains(&tau), "tau must lie in [0, 1]");
    let n = probs.len();
    let mut chosen: Vec<usize> = (0..n).filter(|&j| 1.0 - probs.get(j) > tau).collect();
    if chosen.is_empty() {
        chosen.push(0);
    }
    let mut sum = 0.0;
    for a in value_atoms {
        assert_eq!(a.len(), n);
        sum += chosen.iter().map(|&j| time_of_value(a[j], gamma)).sum::<f64>();
    }
    sum / (chosen.len() * value_atoms.len()) as f64
}

/// Mean reachability atom over the upper tail `p_j > tau`.
pub fn constraint_tail(reach_atoms: &[&[f64]], probs: &CumProbs, tau: f64) -> f64 {
    tail_mean(reach_atoms, probs, tau)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RiskKind {
    Time,
    Constraint,
    TimeConstraint,
}

impl RiskKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RiskKind::Time => "time",
            RiskKind::Constraint => "constraint",
            RiskKind::TimeConstraint => "time-constraint",
        }
    }
}

impl fmt::Display for RiskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for RiskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('_', "-").as_str() {
            "time" => Ok(RiskKind::Time),
            "constraint" => Ok(RiskKind::Constraint),
            "time-constraint" | "timeconstraint" => Ok(RiskKind::TimeConstraint),
            other => Err(Error::Config(format!("unknown risk strategy `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RiskStrategy {
    pub kind: RiskKind,
    pub tau: f64,
    pub epsilon: f64,
    pub t_max: f64,
    pub gamma: f64,
}

impl Default for RiskStrategy {
    fn default() -> Self {
        RiskStrategy {
            kind: RiskKind::TimeConstraint,
            tau: 0.9,
            epsilon: 0.1,
            t_max: 500.0,
            gamma: 0.99,
        }
    }
}

impl RiskStrategy {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::Config("risk tau must lie in [0, 1]".into()));
        }
        if self.epsilon <= 0.0 {
            return Err(Error::Config("risk epsilon must be positive".into()));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config("gamma must lie in (0, 1)".into()));
        }
        Ok(())
    }

    pub fn uses_value(&self) -> bool {
        self.kind != RiskKind::Constraint
    }

    pub fn uses_reach(&self) -> bool {
        self.kind != RiskKind::Time
    }

    /// `T_max` when the constraint tail is within `epsilon` of failure,
    /// otherwise the time tail.
    pub fn combine(&self, time: f64, constraint: f64) -> f64 {
        if constraint > -self.epsilon {
            self.t_max
        } else {
            time
        }
    }

    /// Risk from the atoms of both ensembles at one `(s, a)`.
    pub fn from_atoms(&self, value: &[&[f64]], value_probs: &CumProbs, reach: &[&[f64]], reach_probs: &CumProbs) -> f64 {
        match self.kind {
            RiskKind::Time => time_tail(value, value_probs, self.tau, self.gamma),
            RiskKind::Constraint => constraint_tail(reach, reach_probs, self.tau),
            RiskKind::TimeConstraint => {
                let c = constraint_tail(reach, reach_probs, self.tau);
                if c > -self.epsilon {
                    self.t_max
                } else {
                    time_tail(value, value_probs, self.tau, self.gamma)
                }
            }
        }
    }

    /// Risk of each candidate action at one observation, using the online
    /// critics of a (frozen) safety agent.
    pub fn evaluate(&self, agent: &SafetyAgent<f32>, obs: &[f64], actions: &[f64]) -> Vec<f64> {
        let x = Array2::from_shape_fn((actions.len(), obs.len() + 1), |(r, c)| {
            if c < obs.len() {
                obs[c] as f32
            } else {
                actions[r] as f32
            }
        });
        let value = if self.uses_value() {
            agent.value.row_atoms(x.view())
        } else {
            vec![Vec::new(); actions.len()]
        };
        let reach = if self.uses_reach() {
            agent.reach.row_atoms(x.view())
        } else {
            vec![Vec::new(); actions.len()]
        };
        value
            .iter()
            .zip(&reach)
            .map(|(v, r)| {
                let v: Vec<&[f64]> = v.iter().map(|a| a.as_slice()).collect();
                let r: Vec<&[f64]> = r.iter().map(|a| a.as_slice()).collect();
                self.from_atoms(&v, agent.value.probs(), &r, agent.reach.probs())
            })
            .collect()
    }
}
