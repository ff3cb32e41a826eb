use ndarray::{Array1, Array2};
use rand::Rng;

use crate::approx::{lit, Real};
use crate::envs::SimRng;
use crate::selector::ActingPolicy;
use crate::{Error, Result};

/// Hindsight relabeling with the "future" strategy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HerSpec {
    pub relabel_prob: f64,
}

impl Default for HerSpec {
    fn default() -> Self {
        HerSpec { relabel_prob: 0.8 }
    }
}

impl HerSpec {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.relabel_prob) {
            return Err(Error::Config("relabel probability must lie in [0, 1]".into()));
        }
        Ok(())
    }
}

/// One stored step of an episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Vec<f64>,
    pub action: f64,
    pub next_obs: Vec<f64>,
    pub r_s: f64,
    pub r_g: f64,
    pub h_next: f64,
    pub terminated: bool,
    /// Goal-space coordinate reached after the step.
    pub achieved: f64,
    pub acting: ActingPolicy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Episode {
    pub goal: f64,
    pub transitions: Vec<Transition>,
    pub closed: bool,
}

impl Episode {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn terminated(&self) -> bool {
        self.transitions.last().is_some_and(|t| t.terminated)
    }
}

/// Replay memory that keeps episode boundaries, never forgets, and accepts
/// transitions from either acting policy.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EpisodeBuffer {
    episodes: Vec<Episode>,
    /// `(episode, step)` of every stored transition, in insertion order.
    index: Vec<(u32, u32)>,
    closed: usize,
}

/// Goal-conditioned batch; inputs are observations with the goal appended.
#[derive(Debug, Clone, PartialEq)]
pub struct GcBatch<T> {
    pub obs: Array2<T>,
    pub actions: Array2<T>,
    pub next_obs: Array2<T>,
    pub rewards: Array1<T>,
    /// 1 where the transition ended in failure.
    pub terminated: Array1<T>,
    pub goals: Vec<f64>,
    pub relabeled: Vec<bool>,
    /// Source `(episode, step)` of each row.
    pub source: Vec<(usize, usize)>,
}

impl EpisodeBuffer {
    pub fn new() -> Self {
        Self::default()
    }

    /// Opens a new episode; an episode still open is closed first.
    pub fn start_episode(&mut self, goal: f64) {
        self.close_episode();
        self.episodes.push(Episode {
            goal,
            transitions: Vec::new(),
            closed: false,
        });
    }

    pub fn close_episode(&mut self) {
        if let Some(e) = self.episodes.last_mut() {
            if !e.closed {
                e.closed = true;
                self.closed += 1;
            }
        }
    }

    pub fn push(&mut self, t: Transition) {
        let ep = self.episodes.len().checked_sub(1).expect("no open episode");
        let e = &mut self.episodes[ep];
        assert!(!e.closed, "episode already closed");
        self.index.push((ep as u32, e.transitions.len() as u32));
        e.transitions.push(t);
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn episodes(&self) -> &[Episode] {
        &self.episodes
    }

    pub fn closed_episodes(&self) -> usize {
        self.closed
    }

    /// Uniform transitions; each goal is replaced with probability
    /// `relabel_prob` by the achieved goal of a uniformly chosen step at or
    /// after the sampled one, and the reward is recomputed with `reward`.
    pub fn her_sample<T: Real>(
        &self,
        batch: usize,
        her: &HerSpec,
        reward: impl Fn(f64, f64) -> f64,
        rng: &mut SimRng,
    ) -> GcBatch<T> {
        assert!(!self.is_empty(), "sampling from an empty buffer");
        let od = self.episodes[self.index[0].0 as usize].transitions[0].obs.len();
        let mut obs = Array2::zeros((batch, od + 1));
        let mut next_obs = Array2::zeros((batch, od + 1));
        let mut actions = Array2::zeros((batch, 1));
        let mut rewards = Array1::zeros(batch);
        let mut terminated = Array1::zeros(batch);
        let mut goals = Vec::with_capacity(batch);
        let mut relabeled = Vec::with_capacity(batch);
        let mut source = Vec::with_capacity(batch);
        for r in 0..batch {
            let (ep, step) = self.index[rng.random_range(0..self.index.len())];
            let (ep, step) = (ep as usize, step as usize);
            let e = &self.episodes[ep];
            let t = &e.transitions[step];
            let relabel = rng.random::<f64>() < her.relabel_prob;
            let goal = if relabel {
                e.transitions[rng.random_range(step..e.len())].achieved
            } else {
                e.goal
            };
            for c in 0..od {
                obs[[r, c]] = lit(t.obs[c]);
                next_obs[[r, c]] = lit(t.next_obs[c]);
            }
            obs[[r, od]] = lit(goal);
            next_obs[[r, od]] = lit(goal);
            actions[[r, 0]] = lit(t.action);
            rewards[r] = lit(reward(t.achieved, goal));
            terminated[r] = if t.terminated { T::one() } else { T::zero() };
            goals.push(goal);
            relabeled.push(relabel);
            source.push((ep, step));
        }
        GcBatch {
            obs,
            actions,
            next_obs,
            rewards,
            terminated,
            goals,
            relabeled,
            source,
        }
    }
}
