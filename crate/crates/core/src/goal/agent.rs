use ndarray::{s, Array1, Array2, ArrayView2};

use super::GcBatch;
use crate::approx::{ema_update, lit, Adam, AdamConfig, Checkpoint, GaussianPolicy, Mlp, Real, Temperature};
use crate::envs::SimRng;
use crate::pretrain::{concat_cols, normal_noise};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct GcConfig {
    pub critics: usize,
    pub hidden: Vec<usize>,
    pub batch_size: usize,
    pub gamma: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub temperature_lr: f64,
    pub initial_temperature: f64,
    pub ema_tau: f64,
}

impl Default for GcConfig {
    fn default() -> Self {
        GcConfig {
            critics: 10,
            hidden: vec![256, 256],
            batch_size: 256,
            gamma: 0.99,
            actor_lr: 3e-4,
            critic_lr: 3e-4,
            temperature_lr: 3e-4,
            initial_temperature: 1.0,
            ema_tau: 5e-3,
        }
    }
}

impl GcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.critics == 0 || self.batch_size == 0 {
            return Err(Error::Config("critic count and batch size must be positive".into()));
        }
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config("gamma must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct GcStats {
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub alpha: f64,
}

/// Goal-conditioned soft actor-critic whose backup and actor objective use
/// the minimum over an ensemble of scalar critics.
#[derive(Debug, Clone, PartialEq)]
pub struct GcAgent<T> {
    pub policy: GaussianPolicy<T>,
    pub critics: Vec<Mlp<T>>,
    pub targets: Vec<Mlp<T>>,
    pub temperature: Temperature,
    pub gamma: f64,
    pub ema_tau: f64,
    critic_opts: Vec<Adam<T>>,
    policy_opt: Adam<T>,
    updates: u64,
}

impl<T: Real> GcAgent<T> {
    pub const ACT_DIM: usize = 1;

    /// `input_dim` counts the observation and the appended goal.
    pub fn new(input_dim: usize, cfg: &GcConfig, rng: &mut SimRng) -> Self {
        let mut psizes = vec![input_dim];
        psizes.extend(&cfg.hidden);
        psizes.push(2 * Self::ACT_DIM);
        let policy = GaussianPolicy::new(Mlp::new(&psizes, rng));
        let mut csizes = vec![input_dim + Self::ACT_DIM];
        csizes.extend(&cfg.hidden);
        csizes.push(1);
        let critics: Vec<Mlp<T>> = (0..cfg.critics).map(|_| Mlp::new(&csizes, rng)).collect();
        let copt = AdamConfig {
            lr: cfg.critic_lr,
            ..AdamConfig::default()
        };
        GcAgent {
            critic_opts: critics.iter().map(|c| Adam::new(c.num_params(), copt)).collect(),
            targets: critics.clone(),
            critics,
            policy_opt: Adam::new(
                policy.net.num_params(),
                AdamConfig {
                    lr: cfg.actor_lr,
                    ..AdamConfig::default()
                },
            ),
            policy,
            temperature: Temperature::new(
                cfg.initial_temperature,
                Self::ACT_DIM,
                AdamConfig {
                    lr: cfg.temperature_lr,
                    ..AdamConfig::default()
                },
            ),
            gamma: cfg.gamma,
            ema_tau: cfg.ema_tau,
            updates: 0,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.policy.obs_dim()
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    pub fn act(&self, obs_goal: &[f64], rng: &mut SimRng) -> f64 {
        let x = Array2::from_shape_fn((1, obs_goal.len()), |(_, c)| lit::<T>(obs_goal[c]));
        let s = self.policy.sample(x.view(), normal_noise(1, Self::ACT_DIM, rng));
        s.actions[[0, 0]].to_f64().unwrap()
    }

    pub fn act_deterministic(&self, obs_goal: &[f64]) -> f64 {
        let x = Array2::from_shape_fn((1, obs_goal.len()), |(_, c)| lit::<T>(obs_goal[c]));
        self.policy.mean_action(x.view())[[0, 0]].to_f64().unwrap()
    }

    /// Row-wise minimum over `nets` at `x`.
    pub fn min_q(nets: &[Mlp<T>], x: ArrayView2<T>) -> Array1<T> {
        let mut m = Array1::from_elem(x.nrows(), T::infinity());
        for n in nets {
            let q = n.forward(x);
            m.zip_mut_with(&q.column(0), |a, &b| *a = if b < *a { b } else { *a });
        }
        m
    }

    /// `r + gamma * min_j Qtarget_j(s', a')` with `a'` from the current
    /// policy; failure rows keep only the reward.
    pub fn critic_target(&self, batch: &GcBatch<T>, next_noise: Array2<T>) -> Array1<T> {
        let next = self.policy.sample(batch.next_obs.view(), next_noise);
        let x = concat_cols(batch.next_obs.view(), next.actions.view());
        let q = Self::min_q(&self.targets, x.view());
        let g = lit::<T>(self.gamma);
        let mut y = batch.rewards.clone();
        ndarray::Zip::from(&mut y)
            .and(&q)
            .and(&batch.terminated)
            .for_each(|y, &q, &d| *y += g * (T::one() - d) * q);
        y
    }

    /// Mean squared error of each critic against `y`, with its gradient.
    pub fn critic_grads(&self, x: ArrayView2<T>, y: &Array1<T>) -> (Vec<T>, Vec<Vec<T>>) {
        let b = lit::<T>(x.nrows() as f64);
        let two = lit::<T>(2.0);
        let mut losses = Vec::with_capacity(self.critics.len());
        let mut grads = Vec::with_capacity(self.critics.len());
        for c in &self.critics {
            let (q, tape) = c.forward_tape(x);
            let mut dq = q;
            dq.column_mut(0).zip_mut_with(y, |d, &t| *d = *d - t);
            losses.push(dq.iter().fold(T::zero(), |a, &e| a + e * e) / b);
            dq.mapv_inplace(|e| two * e / b);
            let mut g = vec![T::zero(); c.num_params()];
            c.backward(&tape, dq, Some(&mut g), false);
            grads.push(g);
        }
        (losses, grads)
    }

    /// `mean(alpha log pi(a|s,g) - min_j Q_j(s, g, a))` with reparameterized
    /// `a`, its policy gradient, and the sampled log-probabilities. The
    /// minimum routes each row's gradient through its smallest critic.
    pub fn actor_loss(&self, obs: ArrayView2<T>, noise: Array2<T>) -> (T, Vec<T>, Array1<T>) {
        let b = obs.nrows();
        let od = obs.ncols();
        let inv_b = T::one() / lit::<T>(b as f64);
        let alpha = lit::<T>(self.temperature.alpha());
        let sample = self.policy.sample(obs, noise);
        let x = concat_cols(obs, sample.actions.view());
        let mut qmin = Array1::from_elem(b, T::infinity());
        let mut arg = vec![0usize; b];
        let mut tapes = Vec::with_capacity(self.critics.len());
        for (j, c) in self.critics.iter().enumerate() {
            let (q, tape) = c.forward_tape(x.view());
            for r in 0..b {
                if q[[r, 0]] < qmin[r] {
                    qmin[r] = q[[r, 0]];
                    arg[r] = j;
                }
            }
            tapes.push(tape);
        }
        let mut d_actions = Array2::zeros((b, Self::ACT_DIM));
        for (j, (c, tape)) in self.critics.iter().zip(&tapes).enumerate() {
            if !arg.contains(&j) {
                continue;
            }
            let dy = Array2::from_shape_fn((b, 1), |(r, _)| if arg[r] == j { -inv_b } else { T::zero() });
            let dx = c.backward(tape, dy, None, true).unwrap();
            d_actions += &dx.slice(s![.., od..]);
        }
        let loss = (&sample.log_probs * alpha - &qmin).sum() * inv_b;
        let d_logp = Array1::from_elem(b, alpha * inv_b);
        let mut grad = vec![T::zero(); self.policy.net.num_params()];
        self.policy.backward(&sample, d_actions.view(), d_logp.view(), &mut grad);
        (loss, grad, sample.log_probs)
    }

    /// Critics, actor, temperature, then target averaging.
    pub fn gradient_step(&mut self, batch: &GcBatch<T>, rng: &mut SimRng) -> Result<GcStats> {
        let step = self.updates + 1;
        let b = batch.obs.nrows();
        let y = self.critic_target(batch, normal_noise(b, Self::ACT_DIM, rng));
        let x = concat_cols(batch.obs.view(), batch.actions.view());
        let (losses, grads) = self.critic_grads(x.view(), &y);
        let critic_loss = losses.iter().fold(T::zero(), |a, &l| a + l) / lit::<T>(losses.len() as f64);
        finite(critic_loss, "goal critic loss", step)?;
        for ((c, opt), g) in self.critics.iter_mut().zip(&mut self.critic_opts).zip(&grads) {
            opt.step(c.params_mut(), g)?;
        }
        let (actor_loss, grad, log_probs) = self.actor_loss(batch.obs.view(), normal_noise(b, Self::ACT_DIM, rng));
        finite(actor_loss, "goal actor loss", step)?;
        self.policy_opt.step(self.policy.net.params_mut(), &grad)?;
        let lp: Vec<f64> = log_probs.iter().map(|v| v.to_f64().unwrap()).collect();
        self.temperature.update(&lp)?;
        let tau = lit::<T>(self.ema_tau);
        for (t, o) in self.targets.iter_mut().zip(&self.critics) {
            ema_update(t.params_mut(), o.params(), tau);
        }
        self.updates = step;
        Ok(GcStats {
            critic_loss: critic_loss.to_f64().unwrap(),
            actor_loss: actor_loss.to_f64().unwrap(),
            alpha: self.temperature.alpha(),
        })
    }
}

fn finite<T: Real>(v: T, what: &'static str, step: u64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite { what, step })
    }
}

const PREFIX: &str = "gc";

impl GcAgent<f32> {
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new();
        ck.push_mlp(&format!("{PREFIX}.policy"), &self.policy.net);
        for (i, c) in self.critics.iter().enumerate() {
            ck.push_mlp(&format!("{PREFIX}.critic.online.{i}"), c);
        }
        for (i, c) in self.targets.iter().enumerate() {
            ck.push_mlp(&format!("{PREFIX}.critic.target.{i}"), c);
        }
        ck.push_scalar(format!("{PREFIX}.log_alpha"), self.temperature.log_alpha as f32);
        ck.push_scalar(format!("{PREFIX}.gamma"), self.gamma as f32);
        ck
    }

    /// Frozen agent for evaluation; optimizer moments are not restored.
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let policy = GaussianPolicy::new(ck.mlp(&format!("{PREFIX}.policy"))?);
        let mut critics = Vec::new();
        let mut targets = Vec::new();
        while let Ok(c) = ck.mlp::<f32>(&format!("{PREFIX}.critic.online.{}", critics.len())) {
            targets.push(ck.mlp(&format!("{PREFIX}.critic.target.{}", critics.len()))?);
            critics.push(c);
        }
        if critics.is_empty() {
            return Err(Error::Checkpoint("no goal-conditioned critics".into()));
        }
        if critics.iter().any(|c| c.input_dim() != policy.obs_dim() + 1) {
            return Err(Error::Checkpoint("critic input does not match policy".into()));
        }
        let mut temperature = Temperature::new(1.0, 1, AdamConfig::default());
        temperature.log_alpha = ck.scalar(&format!("{PREFIX}.log_alpha"))? as f64;
        Ok(GcAgent {
            critic_opts: critics.iter().map(|c| Adam::new(c.num_params(), AdamConfig::default())).collect(),
            policy_opt: Adam::new(policy.net.num_params(), AdamConfig::default()),
            policy,
            targets,
            critics,
            temperature,
            gamma: ck.scalar(&format!("{PREFIX}.gamma"))? as f64,
            ema_tau: 5e-3,
            updates: 0,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::goal::{EpisodeBuffer, HerSpec, Transition};
    use crate::selector::ActingPolicy;
    use rand::{Rng, SeedableRng};

    fn tiny(critics: usize) -> GcConfig {
        GcConfig {
            critics,
            hidden: vec![8, 8],
            batch_size: 6,
            ..GcConfig::default()
        }
    }

    fn batch(rng: &mut SimRng, rewards_zero: bool) -> GcBatch<f64> {
        let mut b = EpisodeBuffer::new();
        for e in 0..3 {
            b.start_episode(rng.random_range(-2.0..2.0));
            for s in 0..6 {
                let x: f64 = rng.random_range(-2.0..2.0);
                b.push(Transition {
                    obs: (0..4).map(|_| rng.random_range(-1.0..1.0)).collect(),
                    action: rng.random_range(-1.0..1.0),
                    next_obs: vec![x, 0.1, -0.1, 0.2],
                    r_s: 0.0,
                    r_g: 0.0,
                    h_next: -0.5,
                    terminated: e == 1 && s == 5,
                    achieved: x,
                    acting: ActingPolicy::GoalConditioned,
                });
            }
        }
        let reward = move |x: f64, g: f64| if rewards_zero { 0.0 } else { ((x - g).abs() < 0.5) as u8 as f64 };
        b.her_sample(7, &HerSpec::default(), reward, rng)
    }

    #[test]
    fn target_arithmetic() {
        let mut rng = SimRng::seed_from_u64(1);
        let mut agent = GcAgent::<f64>::new(5, &tiny(3), &mut rng);
        for t in &mut agent.targets {
            t.params_mut().iter_mut().for_each(|p| *p = 0.0);
            let last = t.params().len() - 1;
            t.params_mut()[last] = 10.0;
        }
        let mut bt = batch(&mut rng, true);
        bt.terminated.fill(0.0);
        bt.terminated[2] = 1.0;
        let y = agent.critic_target(&bt, Array2::zeros((7, 1)));
        for r in 0..7 {
            let expect = if r == 2 { 0.0 } else { 9.9 };
            assert!((y[r] - expect).abs() < 1e-12, "{r}: {}", y[r]);
        }
        // one pessimistic critic dominates the backup
        let last = agent.targets[1].params().len() - 1;
        agent.targets[1].params_mut()[last] = -1e6;
        let y = agent.critic_target(&bt, Array2::zeros((7, 1)));
        assert!((y[0] + 0.99e6).abs() < 1e-6);
    }

    #[test]
    fn min_never_rises_with_more_critics() {
        let mut rng = SimRng::seed_from_u64(2);
        let agent = GcAgent::<f64>::new(5, &tiny(6), &mut rng);
        let x = Array2::from_shape_fn((20, 6), |_| rng.random_range(-1.0..1.0));
        let mut prev = GcAgent::min_q(&agent.targets[..1], x.view());
        for k in 2..=6 {
            let m = GcAgent::min_q(&agent.targets[..k], x.view());
            assert!(m.iter().zip(&prev).all(|(a, b)| a <= b));
            prev = m;
        }
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
    }

    #[test]
    fn critic_gradient_matches_finite_differences() {
        let mut rng = SimRng::seed_from_u64(3);
        let mut agent = GcAgent::<f64>::new(5, &tiny(2), &mut rng);
        let bt = batch(&mut rng, false);
        let x = concat_cols(bt.obs.view(), bt.actions.view());
        let y = bt.rewards.mapv(|r| r + 0.3);
        let (_, grads) = agent.critic_grads(x.view(), &y);
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for j in 0..2 {
            for i in 0..agent.critics[j].num_params() {
                let p0 = agent.critics[j].params()[i];
                agent.critics[j].params_mut()[i] = p0 + h;
                let lp = agent.critic_grads(x.view(), &y).0[j];
                agent.critics[j].params_mut()[i] = p0 - h;
                let lm = agent.critic_grads(x.view(), &y).0[j];
                agent.critics[j].params_mut()[i] = p0;
                worst = worst.max(rel((lp - lm) / (2.0 * h), grads[j][i]));
            }
        }
        assert!(worst < 1e-4, "{worst}");
    }

    #[test]
    fn actor_gradient_matches_finite_differences() {
        let mut rng = SimRng::seed_from_u64(4);
        let mut agent = GcAgent::<f64>::new(5, &tiny(4), &mut rng);
        agent.temperature.log_alpha = 0.2f64.ln();
        let obs = Array2::from_shape_fn((6, 5), |_| rng.random_range(-1.0..1.0));
        let noise = normal_noise(6, 1, &mut rng);
        let (_, g, _) = agent.actor_loss(obs.view(), noise.clone());
        let h = 1e-6;
        let mut worst: f64 = 0.0;
        for i in 0..g.len() {
            let p0 = agent.policy.net.params()[i];
            agent.policy.net.params_mut()[i] = p0 + h;
            let lp = agent.actor_loss(obs.view(), noise.clone()).0;
            agent.policy.net.params_mut()[i] = p0 - h;
            let lm = agent.actor_loss(obs.view(), noise.clone()).0;
            agent.policy.net.params_mut()[i] = p0;
            worst = worst.max(rel((lp - lm) / (2.0 * h), g[i]));
        }
        assert!(worst < 1e-4, "{worst}");
    }

    #[test]
    fn zero_rewards_drive_critics_to_zero() {
        let mut rng = SimRng::seed_from_u64(5);
        let cfg = GcConfig {
            // one critic and a fixed policy isolate the backup: a min over
            // several critics or a maximizing actor both bias the fixed point
            actor_lr: 0.0,
            critic_lr: 1e-3,
            ema_tau: 0.5,
            ..tiny(1)
        };
        let mut agent = GcAgent::<f64>::new(5, &cfg, &mut rng);
        // closed loop over four states whose actions densely cover [-1, 1],
        // so the backup never queries an unfitted action
        let states = Array2::from_shape_fn((4, 5), |_| rng.random_range(-1.0..1.0));
        let obs = Array2::from_shape_fn((64, 5), |(r, c)| states[[r / 16, c]]);
        let bt = GcBatch {
            actions: Array2::from_shape_fn((64, 1), |(r, _)| -1.0 + 2.0 * (r % 16) as f64 / 15.0),
            next_obs: obs.clone(),
            obs,
            rewards: Array1::zeros(64),
            terminated: Array1::zeros(64),
            goals: vec![0.0; 64],
            relabeled: vec![false; 64],
            source: vec![(0, 0); 64],
        };
        let x = concat_cols(bt.obs.view(), bt.actions.view());
        for _ in 0..6000 {
            agent.gradient_step(&bt, &mut rng).unwrap();
        }
        let q = GcAgent::min_q(&agent.critics, x.view());
        assert!(q.iter().all(|v| v.abs() < 0.05), "{q}");
    }

    #[test]
    fn deterministic_and_checkpointable() {
        let mut r1 = SimRng::seed_from_u64(6);
        let mut r2 = SimRng::seed_from_u64(6);
        let mut a = GcAgent::<f32>::new(5, &tiny(3), &mut r1);
        let mut b = GcAgent::<f32>::new(5, &tiny(3), &mut r2);
        let mut rb = SimRng::seed_from_u64(7);
        let bt64 = batch(&mut rb, false);
        let bt = GcBatch {
            obs: bt64.obs.mapv(|v| v as f32),
            actions: bt64.actions.mapv(|v| v as f32),
            next_obs: bt64.next_obs.mapv(|v| v as f32),
            rewards: bt64.rewards.mapv(|v| v as f32),
            terminated: bt64.terminated.mapv(|v| v as f32),
            goals: bt64.goals,
            relabeled: bt64.relabeled,
            source: bt64.source,
        };
        for _ in 0..5 {
            a.gradient_step(&bt, &mut r1).unwrap();
            b.gradient_step(&bt, &mut r2).unwrap();
        }
        assert_eq!(a, b);
        let back = GcAgent::from_checkpoint(&a.to_checkpoint()).unwrap();
        assert_eq!(back.policy, a.policy);
        assert_eq!(back.critics, a.critics);
        assert_eq!(back.targets, a.targets);
        assert_eq!(back.temperature.log_alpha, a.temperature.log_alpha as f32 as f64);
    }
}
