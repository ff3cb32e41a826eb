use rand::{Rng, SeedableRng};

use super::{SafetyAgent, SafetyBuffer, UpdateStats};
use crate::distcritic::HUBER_KAPPA;
use crate::envs::{SafetyTask, SimRng};
use crate::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct PretrainConfig {
    pub total_steps: usize,
    /// Uniformly random actions and no updates for this many env steps.
    pub warmup_steps: usize,
    pub lambda: f64,
    pub batch_size: usize,
    pub gamma: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub temperature_lr: f64,
    pub initial_temperature: f64,
    pub ema_tau: f64,
    pub hidden: Vec<usize>,
    pub critics: usize,
    pub atoms: usize,
    pub drop_per_critic: usize,
    pub huber_kappa: f64,
    pub seed: u64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            total_steps: 300_000,
            warmup_steps: 5_000,
            lambda: 100.0,
            batch_size: 256,
            gamma: 0.99,
            actor_lr: 3e-4,
            critic_lr: 3e-4,
            temperature_lr: 3e-4,
            initial_temperature: 1.0,
            ema_tau: 5e-3,
            hidden: vec![256, 256],
            critics: 5,
            atoms: 25,
            drop_per_critic: 2,
            huber_kappa: HUBER_KAPPA,
            seed: 0,
        }
    }
}

impl PretrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(crate::Error::Config(m.to_string()));
        if self.warmup_steps > self.total_steps {
            return bad("warmup exceeds total steps");
        }
        if self.lambda < 0.0 {
            return bad("lambda must be non-negative");
        }
        if self.drop_per_critic >= self.atoms {
            return bad("cannot drop every atom");
        }
        if self.batch_size == 0 || self.critics == 0 || self.atoms == 0 {
            return bad("batch size, critics and atoms must be positive");
        }
        Ok(())
    }
}

/// One finished pretraining episode.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeLog {
    /// Total env steps taken when the episode ended.
    pub step: usize,
    pub safety_return: f64,
    pub length: usize,
    pub terminated: bool,
}

impl EpisodeLog {
    pub const CSV_HEADER: &'static str = "step,return,length,terminated";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{}",
            self.step, self.safety_return, self.length, self.terminated as u8
        )
    }
}

#[derive(Debug, Clone)]
pub struct PretrainOutcome {
    pub agent: SafetyAgent<f32>,
    pub episodes: Vec<EpisodeLog>,
    pub gradient_steps: u64,
    pub buffer_len: usize,
    pub last_stats: UpdateStats,
}

impl PretrainOutcome {
    pub fn log_csv(&self) -> String {
        let mut s = String::from(EpisodeLog::CSV_HEADER);
        s.push('\n');
        for e in &self.episodes {
            s.push_str(&e.csv_row());
            s.push('\n');
        }
        s
    }
}

/// Reset-anywhere training loop: random actions during warmup, then one
/// gradient step per environment step.
pub fn pretrain_run<E: SafetyTask>(
    env: &E,
    cfg: &PretrainConfig,
    mut on_episode: impl FnMut(&EpisodeLog, &UpdateStats),
) -> Result<PretrainOutcome> {
    cfg.validate()?;
    let mut init_rng = stream(cfg.seed, 0);
    let mut env_rng = stream(cfg.seed, 1);
    let mut train_rng = stream(cfg.seed, 2);
    let mut agent = SafetyAgent::<f32>::new(env.obs_dim(), cfg, &mut init_rng);
    let mut buffer = SafetyBuffer::new(env.obs_dim(), 1);
    let mut episodes = Vec::new();
    let mut stats = UpdateStats::default();

    let mut state = env.reset_anywhere(&mut env_rng);
    let (mut ep_len, mut ep_return) = (0usize, 0.0);
    let mut obs = Vec::new();
    let mut next_obs = Vec::new();
    for step in 0..cfg.total_steps {
        obs.clear();
        env.observe(&state, &mut obs);
        let action = if step < cfg.warmup_steps {
            env_rng.random_range(-1.0..=1.0)
        } else {
            agent.act(&obs, &mut env_rng)
        };
        let r = env.step_safety(&state, action, ep_len)?;
        next_obs.clear();
        env.observe(&r.next, &mut next_obs);
        buffer.push(&obs, &[action], &next_obs, r.r_s, r.h, r.terminated);
        ep_len += 1;
        ep_return += r.r_s;

        if step >= cfg.warmup_steps {
            let batch = buffer.sample(cfg.batch_size, &mut train_rng);
            stats = agent.gradient_step(&batch, &mut train_rng)?;
        }

        if r.terminated || r.truncated {
            let log = EpisodeLog {
                step: step + 1,
                safety_return: ep_return,
                length: ep_len,
                terminated: r.terminated,
            };
            on_episode(&log, &stats);
            episodes.push(log);
            state = env.reset_anywhere(&mut env_rng);
            ep_len = 0;
            ep_return = 0.0;
        } else {
            state = r.next;
        }
    }
    Ok(PretrainOutcome {
        gradient_steps: agent.updates(),
        agent,
        episodes,
        buffer_len: buffer.len(),
        last_stats: stats,
    })
}

/// Independent deterministic random stream `id` of a run seed.
pub(crate) fn stream(seed: u64, id: u64) -> SimRng {
    let mut rng = SimRng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}
