//! Continuous-action cart-pole with a goal on the cart position.

use rand::Rng;

use super::{Bound, SafetyStep, SafetyTask, SimRng};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CartState {
    pub x: f64,
    pub x_dot: f64,
    pub theta: f64,
    pub theta_dot: f64,
}

impl CartState {
    pub const fn new(x: f64, x_dot: f64, theta: f64, theta_dot: f64) -> Self {
        CartState {
            x,
            x_dot,
            theta,
            theta_dot,
        }
    }

    pub fn to_array(&self) -> [f64; 4] {
        [self.x, self.x_dot, self.theta, self.theta_dot]
    }

    pub fn is_finite(&self) -> bool {
        self.to_array().iter().all(|v| v.is_finite())
    }
}

/// Desired cart position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Goal(pub f64);

/// Force command; `1` maps to +10 N and `-1` to -10 N.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContAction(pub f64);

impl ContAction {
    pub fn clipped(self) -> f64 {
        self.0.clamp(-1.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepResult {
    pub next_state: CartState,
    pub r_s: f64,
    pub r_g: f64,
    pub h: f64,
    pub terminated: bool,
    pub truncated: bool,
}

/// Bounded state variables; exceeding either is a mistake.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnvBounds {
    pub x: Bound,
    pub theta: Bound,
}

impl Default for EnvBounds {
    fn default() -> Self {
        EnvBounds {
            x: Bound::symmetric(2.4),
            theta: Bound::symmetric(0.41),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CartPoleGc {
    pub gravity: f64,
    pub cart_mass: f64,
    pub pole_mass: f64,
    /// Half of the pole length.
    pub pole_half_length: f64,
    pub force_mag: f64,
    pub dt: f64,
    pub bounds: EnvBounds,
    /// Safety-reward box: `|x| <= n0_x` and every other variable within `n0_other`.
    pub n0_x: f64,
    pub n0_other: f64,
    pub goal_limit: f64,
    pub goal_tolerance: f64,
    pub max_steps: usize,
    /// Reset-anywhere box half-widths for (x, x_dot, theta, theta_dot).
    pub anywhere_box: [f64; 4],
    pub noisy_reset: f64,
}

impl Default for CartPoleGc {
    fn default() -> Self {
        CartPoleGc {
            gravity: 9.8,
            cart_mass: 1.0,
            pole_mass: 0.1,
            pole_half_length: 0.5,
            force_mag: 10.0,
            dt: 0.02,
            bounds: EnvBounds::default(),
            n0_x: 2.2,
            n0_other: 0.05,
            goal_limit: 2.16,
            goal_tolerance: 0.05,
            max_steps: 500,
            anywhere_box: [2.2, 1.0, 0.35, 1.0],
            noisy_reset: 0.05,
        }
    }
}

impl CartPoleGc {
    pub const OBS_DIM: usize = 4;

    /// Maximum of the per-variable constraint values over x and theta.
    pub fn constraint_h(&self, s: &CartState) -> f64 {
        self.bounds.x.h(s.x).max(self.bounds.theta.h(s.theta))
    }

    pub fn in_n0(&self, s: &CartState) -> bool {
        s.x.abs() <= self.n0_x
            && s.x_dot.abs() <= self.n0_other
            && s.theta.abs() <= self.n0_other
            && s.theta_dot.abs() <= self.n0_other
    }

    pub fn goal_reward(&self, x: f64, goal: f64) -> f64 {
        if (x - goal).abs() < self.goal_tolerance {
            1.0
        } else {
            0.0
        }
    }

    /// One explicit-Euler step of the classic cart-pole equations.
    pub fn dynamics(&self, s: &CartState, action: f64) -> CartState {
        let force = self.force_mag * action.clamp(-1.0, 1.0);
        let total_mass = self.cart_mass + self.pole_mass;
        let pml = self.pole_mass * self.pole_half_length;
        let (sin, cos) = s.theta.sin_cos();
        let temp = (force + pml * s.theta_dot * s.theta_dot * sin) / total_mass;
        let theta_acc = (self.gravity * sin - cos * temp)
            / (self.pole_half_length * (4.0 / 3.0 - self.pole_mass * cos * cos / total_mass));
        let x_acc = temp - pml * theta_acc * cos / total_mass;
        CartState {
            x: s.x + self.dt * s.x_dot,
            x_dot: s.x_dot + self.dt * x_acc,
            theta: s.theta + self.dt * s.theta_dot,
            theta_dot: s.theta_dot + self.dt * theta_acc,
        }
    }

    pub fn step(
        &self,
        state: &CartState,
        action: ContAction,
        goal: Goal,
        step_count: usize,
    ) -> Result<StepResult> {
        let h0 = self.constraint_h(state);
        if h0 > 0.0 {
            return Err(Error::TerminalStep { h: h0 });
        }
        if step_count >= self.max_steps {
            return Err(Error::StepLimit {
                limit: self.max_steps,
            });
        }
        if !action.0.is_finite() {
            return Err(Error::NonFinite {
                what: "action",
                step: step_count as u64,
            });
        }
        let next_state = self.dynamics(state, action.clipped());
        let h = self.constraint_h(&next_state);
        let terminated = h > 0.0;
        let r_s = if self.in_n0(&next_state) { 1.0 } else { 0.0 };
        Ok(StepResult {
            next_state,
            r_s,
            r_g: self.goal_reward(next_state.x, goal.0),
            h,
            terminated,
            truncated: step_count + 1 >= self.max_steps,
        })
    }

    pub fn reset_anywhere(&self, rng: &mut SimRng) -> CartState {
        let [bx, bxd, bt, btd] = self.anywhere_box;
        CartState {
            x: rng.random_range(-bx..=bx),
            x_dot: rng.random_range(-bxd..=bxd),
            theta: rng.random_range(-bt..=bt),
            theta_dot: rng.random_range(-btd..=btd),
        }
    }

    pub fn sample_goal(&self, rng: &mut SimRng) -> Goal {
        Goal(rng.random_range(-self.goal_limit..=self.goal_limit))
    }

    /// Noisy reset centred on `(x0, 0, 0, 0)`.
    pub fn reset_noisy_at(&self, x0: f64, rng: &mut SimRng) -> CartState {
        let n = self.noisy_reset;
        CartState {
            x: x0 + rng.random_range(-n..n),
            x_dot: rng.random_range(-n..n),
            theta: rng.random_range(-n..n),
            theta_dot: rng.random_range(-n..n),
        }
    }

    pub fn reset_noisy(&self, rng: &mut SimRng) -> (CartState, Goal) {
        let s = self.reset_noisy_at(0.0, rng);
        (s, self.sample_goal(rng))
    }
}

impl SafetyTask for CartPoleGc {
    type State = CartState;

    fn obs_dim(&self) -> usize {
        Self::OBS_DIM
    }

    fn max_steps(&self) -> usize {
        self.max_steps
    }

    fn observe(&self, state: &CartState, out: &mut Vec<f64>) {
        out.extend_from_slice(&state.to_array());
    }

    fn constraint(&self, state: &CartState) -> f64 {
        self.constraint_h(state)
    }

    fn reset_anywhere(&self, rng: &mut SimRng) -> CartState {
        CartPoleGc::reset_anywhere(self, rng)
    }

    fn step_safety(
        &self,
        state: &CartState,
        action: f64,
        step_count: usize,
    ) -> Result<SafetyStep<CartState>> {
        let r = self.step(state, ContAction(action), Goal(0.0), step_count)?;
        Ok(SafetyStep {
            next: r.next_state,
            r_s: r.r_s,
            h: r.h,
            terminated: r.terminated,
            truncated: r.truncated,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn env() -> CartPoleGc {
        CartPoleGc::default()
    }

    #[test]
    fn full_push_from_rest() {
        let r = env()
            .step(&CartState::default(), ContAction(1.0), Goal(1.0), 0)
            .unwrap();
        let s = r.next_state;
        assert_eq!(s.x, 0.0);
        assert_eq!(s.theta, 0.0);
        assert!((s.x_dot - 0.195_122).abs() < 1e-5, "{}", s.x_dot);
        assert!((s.theta_dot + 0.292_683).abs() < 1e-5, "{}", s.theta_dot);
        assert!(!r.terminated);
        assert!(!r.truncated);
    }

    #[test]
    fn zero_force_at_equilibrium_stays_put() {
        let r = env()
            .step(&CartState::default(), ContAction(0.0), Goal(0.0), 0)
            .unwrap();
        assert_eq!(r.next_state, CartState::default());
        assert_eq!(r.r_s, 1.0);
        assert_eq!(r.r_g, 1.0);
        assert!(!r.terminated);
    }

    #[test]
    fn overshooting_the_track_terminates() {
        let r = env()
            .step(&CartState::new(2.39, 5.0, 0.0, 0.0), ContAction(1.0), Goal(0.0), 10)
            .unwrap();
        assert!((r.next_state.x - 2.49).abs() < 1e-12);
        assert!(r.h > 0.0);
        assert!(r.terminated);
        assert_eq!(r.r_s, 0.0);
    }

    #[test]
    fn constraint_reference_values() {
        let e = env();
        assert_eq!(e.constraint_h(&CartState::default()), -1.0);
        assert_eq!(e.constraint_h(&CartState::new(2.4, 0.0, 0.0, 0.0)), 0.0);
        assert_eq!(e.constraint_h(&CartState::new(1.2, 0.0, 0.0, 0.0)), -0.5);
        assert_eq!(e.constraint_h(&CartState::new(3.0, 0.0, 0.0, 0.0)), 0.25);
        // theta dominates when it is relatively further out
        let h = e.constraint_h(&CartState::new(0.0, 0.0, 0.41, 0.0));
        assert!(h.abs() < 1e-15);
    }

    #[test]
    fn stepping_terminal_state_is_rejected() {
        let err = env()
            .step(&CartState::new(2.5, 0.0, 0.0, 0.0), ContAction(0.0), Goal(0.0), 0)
            .unwrap_err();
        assert!(matches!(err, Error::TerminalStep { .. }));
    }

    #[test]
    fn step_limit_truncates_then_rejects() {
        let e = env();
        let r = e
            .step(&CartState::default(), ContAction(0.0), Goal(0.0), 499)
            .unwrap();
        assert!(r.truncated);
        assert!(matches!(
            e.step(&CartState::default(), ContAction(0.0), Goal(0.0), 500),
            Err(Error::StepLimit { .. })
        ));
    }

    #[test]
    fn action_is_clipped() {
        let e = env();
        let s = CartState::new(0.1, 0.2, 0.01, -0.1);
        let a = e.step(&s, ContAction(3.0), Goal(0.0), 0).unwrap();
        let b = e.step(&s, ContAction(1.0), Goal(0.0), 0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn resets_stay_in_their_boxes() {
        let e = env();
        let mut rng = SimRng::seed_from_u64(7);
        for _ in 0..10_000 {
            let s = e.reset_anywhere(&mut rng);
            assert!(s.x.abs() <= 2.2 && s.theta.abs() <= 0.35);
            assert!(s.x_dot.abs() <= 1.0 && s.theta_dot.abs() <= 1.0);
            assert!(e.constraint_h(&s) <= 0.0);
            let (s, g) = e.reset_noisy(&mut rng);
            assert!(s.to_array().iter().all(|v| v.abs() <= 0.05));
            assert!(e.in_n0(&s));
            assert!(g.0.abs() <= 2.16);
        }
    }
}
