use crate::envs::{CartPoleGc, CartState, ContAction, Goal, SimRng};
use crate::goal::{EpisodeBuffer, GcAgent, GcConfig, Transition};
use crate::pretrain::{stream, SafetyAgent};
use crate::risk::RiskStrategy;
use crate::selector::{ActingPolicy, SelectionTrace, SelectorState};
use crate::{Error, Result};

use super::{ExploreConfig, Mode, RunConfig};

/// Random streams of the exploration phase, disjoint from pretraining's.
const INIT: u64 = 10;
const ENV: u64 = 11;
const TRAIN: u64 = 12;
const EVAL: u64 = 13;

pub const OBS_DIM: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsRow {
    pub step: usize,
    pub cumulative_mistakes: usize,
    pub success_rate: f64,
    /// Share of the env steps since the previous row executed by the safety
    /// policy.
    pub safety_usage_frac: f64,
}

impl MetricsRow {
    pub const CSV_HEADER: [&'static str; 4] = ["step", "cumulative_mistakes", "success_rate", "safety_usage_frac"];
}

/// Risk values recorded next to each stored transition; `NaN` when the gate
/// is bypassed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepRisk {
    pub gc: f64,
    pub safety: f64,
}

#[derive(Debug, Clone)]
pub struct ExploreOutcome {
    pub agent: GcAgent<f32>,
    pub metrics: Vec<MetricsRow>,
    pub buffer: EpisodeBuffer,
    /// Parallel to the buffer's transitions in insertion order.
    pub risks: Vec<StepRisk>,
    pub mistakes: usize,
    pub gradient_steps: u64,
    pub selector_invocations: u64,
}

/// Frozen safety side of the gate.
#[derive(Debug, Clone, Copy)]
pub struct Gate<'a> {
    pub safety: &'a SafetyAgent<f32>,
    pub strategy: RiskStrategy,
    pub th_raise: f64,
    pub th_lower: f64,
}

/// Chooses the executed action for one episode.
pub struct Controller<'a> {
    gc: &'a GcAgent<f32>,
    gate: Option<(Gate<'a>, SelectorState)>,
}

impl<'a> Controller<'a> {
    pub fn new(gc: &'a GcAgent<f32>, gate: Option<Gate<'a>>) -> Result<Self> {
        let gate = match gate {
            Some(g) => Some((g, SelectorState::new(g.th_raise, g.th_lower)?)),
            None => None,
        };
        Ok(Controller { gc, gate })
    }

    pub fn reset(&mut self) {
        if let Some((_, s)) = &mut self.gate {
            s.reset();
        }
    }

    /// Samples both candidates from `rng`, or uses both policy means when
    /// `rng` is `None`.
    pub fn decide(&mut self, obs: &[f64], goal: f64, rng: Option<&mut SimRng>) -> (f64, Option<SelectionTrace>) {
        let mut og = obs.to_vec();
        og.push(goal);
        match (&mut self.gate, rng) {
            (None, Some(rng)) => (self.gc.act(&og, rng), None),
            (None, None) => (self.gc.act_deterministic(&og), None),
            (Some((gate, sel)), rng) => {
                let (a_gc, a_s) = match rng {
                    Some(rng) => {
                        let a_gc = self.gc.act(&og, rng);
                        (a_gc, gate.safety.act(obs, rng))
                    }
                    None => (self.gc.act_deterministic(&og), gate.safety.act_deterministic(obs)),
                };
                let risk = gate.strategy.evaluate(gate.safety, obs, &[a_gc, a_s]);
                let (a, trace) = sel.select(a_gc, a_s, risk[0], risk[1]);
                (a, Some(trace))
            }
        }
    }
}

pub(crate) fn observe(s: &CartState) -> [f64; OBS_DIM] {
    s.to_array()
}

/// Runs one evaluation episode from `start`; success means the goal was
/// within tolerance at least once, the initial state included.
pub fn run_eval_episode(env: &CartPoleGc, ctl: &mut Controller<'_>, start: CartState, goal: f64) -> Result<bool> {
    ctl.reset();
    let mut state = start;
    if env.goal_reward(state.x, goal) > 0.0 {
        return Ok(true);
    }
    for t in 0..env.max_steps {
        let (a, _) = ctl.decide(&observe(&state), goal, None);
        let r = env.step(&state, ContAction(a), Goal(goal), t)?;
        if r.r_g > 0.0 {
            return Ok(true);
        }
        if r.terminated {
            return Ok(false);
        }
        state = r.next_state;
    }
    Ok(false)
}

/// Success rate over `episodes` noisy-reset episodes with fresh goals, using
/// policy means and the gate as configured.
pub fn evaluate(
    env: &CartPoleGc,
    gc: &GcAgent<f32>,
    gate: Option<Gate<'_>>,
    episodes: usize,
    rng: &mut SimRng,
) -> Result<f64> {
    let mut ctl = Controller::new(gc, gate)?;
    let mut hits = 0;
    for _ in 0..episodes {
        let (s, g) = env.reset_noisy(rng);
        hits += run_eval_episode(env, &mut ctl, s, g.0)? as usize;
    }
    Ok(hits as f64 / episodes as f64)
}

/// Rejects a safety checkpoint trained on a different observation space.
pub fn check_obs_dim(safety: &SafetyAgent<f32>) -> Result<()> {
    if safety.obs_dim() != OBS_DIM {
        return Err(Error::Checkpoint(format!(
            "safety policy observes {} values, the environment provides {OBS_DIM}",
            safety.obs_dim()
        )));
    }
    Ok(())
}

/// Goal-conditioned training on CartPoleGC. With a safety agent every step
/// passes through the risk gate; without one the goal-conditioned action
/// always executes. Transitions are stored whichever policy acted, and one
/// gradient step follows every env step once an episode has completed.
pub fn explore_run(
    cfg: &RunConfig,
    safety: Option<&SafetyAgent<f32>>,
    mut on_metrics: impl FnMut(&MetricsRow),
) -> Result<ExploreOutcome> {
    cfg.validate()?;
    let x: &ExploreConfig = &cfg.explore;
    let env = CartPoleGc::default();
    let gate = match (cfg.mode, safety) {
        (Mode::Explore, Some(s)) => {
            check_obs_dim(s)?;
            Some(Gate {
                safety: s,
                strategy: x.risk,
                th_raise: x.th_raise,
                th_lower: x.th_lower,
            })
        }
        (Mode::Explore, None) => return Err(Error::Config("explore needs a safety agent".into())),
        (Mode::Baseline, _) => None,
        (m, _) => return Err(Error::Config(format!("{m} is not an exploration mode"))),
    };
    let gc_cfg = match gate {
        Some(_) => cfg.gc.clone(),
        None => GcConfig {
            critics: x.baseline_critics,
            ..cfg.gc.clone()
        },
    };
    let mut init_rng = stream(cfg.seed, INIT);
    let mut env_rng = stream(cfg.seed, ENV);
    let mut train_rng = stream(cfg.seed, TRAIN);
    let mut eval_rng = stream(cfg.seed, EVAL);
    let mut agent = GcAgent::<f32>::new(OBS_DIM + 1, &gc_cfg, &mut init_rng);
    let mut buffer = EpisodeBuffer::new();
    let mut risks = Vec::with_capacity(x.total_steps);
    let mut metrics = Vec::new();
    let reward = |xp: f64, g: f64| env.goal_reward(xp, g);

    let (mut state, mut goal) = env.reset_noisy(&mut env_rng);
    buffer.start_episode(goal.0);
    let mut ep_len = 0usize;
    let mut mistakes = 0usize;
    let mut invocations = 0u64;
    let mut window_safety = 0usize;
    let mut window_start = 0usize;
    let mut selector = SelectorState::new(x.th_raise, x.th_lower)?;

    for step in 0..x.total_steps {
        let obs = observe(&state);
        let mut og = obs.to_vec();
        og.push(goal.0);
        let a_gc = agent.act(&og, &mut env_rng);
        let (action, acting, risk) = match &gate {
            Some(g) => {
                let a_s = g.safety.act(&obs, &mut env_rng);
                let r = g.strategy.evaluate(g.safety, &obs, &[a_gc, a_s]);
                let (a, trace) = selector.select(a_gc, a_s, r[0], r[1]);
                invocations += 1;
                (a, trace.acting, StepRisk { gc: r[0], safety: r[1] })
            }
            None => (
                a_gc,
                ActingPolicy::GoalConditioned,
                StepRisk {
                    gc: f64::NAN,
                    safety: f64::NAN,
                },
            ),
        };
        let r = env.step(&state, ContAction(action), goal, ep_len)?;
        buffer.push(Transition {
            obs: obs.to_vec(),
            action,
            next_obs: observe(&r.next_state).to_vec(),
            r_s: r.r_s,
            r_g: r.r_g,
            h_next: r.h,
            terminated: r.terminated,
            achieved: r.next_state.x,
            acting,
        });
        risks.push(risk);
        ep_len += 1;
        window_safety += (acting == ActingPolicy::Safety) as usize;
        mistakes += r.terminated as usize;

        if r.terminated || r.truncated {
            buffer.close_episode();
            let (s, g) = env.reset_noisy(&mut env_rng);
            state = s;
            goal = g;
            ep_len = 0;
            selector.reset();
            buffer.start_episode(goal.0);
        } else {
            state = r.next_state;
        }

        if buffer.closed_episodes() > 0 {
            let batch = buffer.her_sample::<f32>(gc_cfg.batch_size, &x.her, reward, &mut train_rng);
            agent.gradient_step(&batch, &mut train_rng)?;
        }

        let done = step + 1;
        if done % x.eval_every == 0 || done == x.total_steps {
            let row = MetricsRow {
                step: done,
                cumulative_mistakes: mistakes,
                success_rate: evaluate(&env, &agent, gate, x.eval_episodes, &mut eval_rng)?,
                safety_usage_frac: window_safety as f64 / (done - window_start) as f64,
            };
            on_metrics(&row);
            metrics.push(row);
            window_safety = 0;
            window_start = done;
        }
    }
    buffer.close_episode();
    Ok(ExploreOutcome {
        gradient_steps: agent.updates(),
        agent,
        metrics,
        buffer,
        risks,
        mistakes,
        selector_invocations: invocations,
    })
}
