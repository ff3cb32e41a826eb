use ndarray::{s, Array1, Array2, ArrayView2};

use super::{concat_cols, normal_noise, PretrainConfig, SafetyBatch};
use crate::approx::{lit, Adam, AdamConfig, Checkpoint, GaussianPolicy, Mlp, Real, Temperature};
use crate::distcritic::{
    reachability_target, tqc_value_target, CriticEnsemble, CriticRole, CriticSpec,
};
use crate::envs::SimRng;
use crate::{Error, Result};

/// Safety policy with its value and reachability ensembles.
#[derive(Debug, Clone, PartialEq)]
pub struct SafetyAgent<T> {
    pub policy: GaussianPolicy<T>,
    pub value: CriticEnsemble<T>,
    pub reach: CriticEnsemble<T>,
    pub temperature: Temperature,
    pub lambda: f64,
    pub gamma: f64,
    pub drop_per_critic: usize,
    pub huber_kappa: f64,
    pub ema_tau: f64,
    policy_opt: Adam<T>,
    updates: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UpdateStats {
    pub value_loss: f64,
    pub reach_loss: f64,
    pub actor_loss: f64,
    pub alpha: f64,
}

impl<T: Real> SafetyAgent<T> {
    pub const ACT_DIM: usize = 1;

    pub fn new(obs_dim: usize, cfg: &PretrainConfig, rng: &mut SimRng) -> Self {
        let mut sizes = vec![obs_dim];
        sizes.extend(&cfg.hidden);
        sizes.push(2 * Self::ACT_DIM);
        let policy = GaussianPolicy::new(Mlp::new(&sizes, rng));
        let spec = CriticSpec {
            input_dim: obs_dim + Self::ACT_DIM,
            hidden: cfg.hidden.clone(),
            critics: cfg.critics,
            atoms: cfg.atoms,
        };
        let critic_opt = AdamConfig {
            lr: cfg.critic_lr,
            ..AdamConfig::default()
        };
        let value = CriticEnsemble::new(CriticRole::Value, &spec, critic_opt, rng);
        let reach = CriticEnsemble::new(CriticRole::Reachability, &spec, critic_opt, rng);
        let policy_opt = Adam::new(
            policy.net.num_params(),
            AdamConfig {
                lr: cfg.actor_lr,
                ..AdamConfig::default()
            },
        );
        SafetyAgent {
            policy,
            value,
            reach,
            temperature: Temperature::new(
                cfg.initial_temperature,
                Self::ACT_DIM,
                AdamConfig {
                    lr: cfg.temperature_lr,
                    ..AdamConfig::default()
                },
            ),
            lambda: cfg.lambda,
            gamma: cfg.gamma,
            drop_per_critic: cfg.drop_per_critic,
            huber_kappa: cfg.huber_kappa,
            ema_tau: cfg.ema_tau,
            policy_opt,
            updates: 0,
        }
    }

    pub fn obs_dim(&self) -> usize {
        self.policy.obs_dim()
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    /// Stochastic action for a single observation.
    pub fn act(&self, obs: &[f64], rng: &mut SimRng) -> f64 {
        let x = Array2::from_shape_fn((1, obs.len()), |(_, c)| lit::<T>(obs[c]));
        let s = self.policy.sample(x.view(), normal_noise(1, Self::ACT_DIM, rng));
        s.actions[[0, 0]].to_f64().unwrap()
    }

    pub fn act_deterministic(&self, obs: &[f64]) -> f64 {
        let x = Array2::from_shape_fn((1, obs.len()), |(_, c)| lit::<T>(obs[c]));
        self.policy.mean_action(x.view())[[0, 0]].to_f64().unwrap()
    }

    /// Actor loss `mean(alpha log pi(a|s) - Qbar(s, a) + lambda Rbar(s, a))`
    /// with `a = tanh(mean + std * noise)`, and its gradient in the policy
    /// parameters. Also returns the sampled log-probabilities.
    pub fn actor_loss(&self, obs: ArrayView2<T>, noise: Array2<T>) -> (T, Vec<T>, Array1<T>) {
        let b = obs.nrows();
        let od = obs.ncols();
        let inv_b = T::one() / lit::<T>(b as f64);
        let alpha = lit::<T>(self.temperature.alpha());
        let lambda = lit::<T>(self.lambda);
        let sample = self.policy.sample(obs, noise);
        let x = concat_cols(obs, sample.actions.view());
        let (q, dq) = self.value.mean_with_input_grad(x.view(), -inv_b);
        let mut d_actions = dq.slice(s![.., od..]).to_owned();
        let mut loss = (&sample.log_probs * alpha - &q).sum();
        if self.lambda != 0.0 {
            let (r, dr) = self.reach.mean_with_input_grad(x.view(), lambda * inv_b);
            d_actions += &dr.slice(s![.., od..]);
            loss += r.sum() * lambda;
        }
        let d_logp = Array1::from_elem(b, alpha * inv_b);
        let mut grad = vec![T::zero(); self.policy.net.num_params()];
        self.policy
            .backward(&sample, d_actions.view(), d_logp.view(), &mut grad);
        (loss * inv_b, grad, sample.log_probs)
    }

    /// Value-ensemble regression targets and the reachability targets of
    /// every critic, from one shared next-action sample.
    pub fn critic_targets(&self, batch: &SafetyBatch<T>, next_noise: Array2<T>) -> (Array2<T>, Vec<Array2<T>>) {
        let next = self.policy.sample(batch.next_obs.view(), next_noise);
        let next_in = concat_cols(batch.next_obs.view(), next.actions.view());
        let value_atoms = self.value.target_atoms(next_in.view());
        let views: Vec<_> = value_atoms.iter().map(|a| a.view()).collect();
        let value_y = tqc_value_target(
            &views,
            batch.r_s.view(),
            batch.terminated.view(),
            self.gamma,
            self.drop_per_critic,
        );
        let reach_y = self
            .reach
            .target_atoms(next_in.view())
            .iter()
            .map(|a| reachability_target(a.view(), batch.h_next.view(), batch.terminated.view(), self.gamma))
            .collect();
        (value_y, reach_y)
    }

    /// One update in the fixed order value critics, reachability critics,
    /// actor, temperature, then both target ensembles.
    pub fn gradient_step(&mut self, batch: &SafetyBatch<T>, rng: &mut SimRng) -> Result<UpdateStats> {
        let step = self.updates + 1;
        let b = batch.obs.nrows();
        let x = concat_cols(batch.obs.view(), batch.actions.view());

        let (value_y, reach_y) = self.critic_targets(batch, normal_noise(b, Self::ACT_DIM, rng));
        let value_views = vec![value_y.view(); self.value.len()];
        let value_loss = self.value.regress(x.view(), &value_views, self.huber_kappa)?;
        finite(value_loss, "value loss", step)?;
        let reach_views: Vec<_> = reach_y.iter().map(|y| y.view()).collect();
        let reach_loss = self.reach.regress(x.view(), &reach_views, self.huber_kappa)?;
        finite(reach_loss, "reachability loss", step)?;

        let (actor_loss, grad, log_probs) = self.actor_loss(batch.obs.view(), normal_noise(b, Self::ACT_DIM, rng));
        finite(actor_loss, "actor loss", step)?;
        self.policy_opt.step(self.policy.net.params_mut(), &grad)?;

        let lp: Vec<f64> = log_probs.iter().map(|v| v.to_f64().unwrap()).collect();
        self.temperature.update(&lp)?;

        self.value.soft_update(self.ema_tau);
        self.reach.soft_update(self.ema_tau);
        self.updates = step;
        Ok(UpdateStats {
            value_loss: value_loss.to_f64().unwrap(),
            reach_loss: reach_loss.to_f64().unwrap(),
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

const PREFIX: &str = "safety";

impl SafetyAgent<f32> {
    /// All six parameter families, the temperature and the constants the
    /// exploration phase needs.
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut ck = Checkpoint::new();
        ck.push_mlp(&format!("{PREFIX}.policy"), &self.policy.net);
        for (name, ens) in [("value", &self.value), ("reach", &self.reach)] {
            for (i, c) in ens.online.iter().enumerate() {
                ck.push_mlp(&format!("{PREFIX}.{name}.online.{i}"), c);
            }
            for (i, c) in ens.target.iter().enumerate() {
                ck.push_mlp(&format!("{PREFIX}.{name}.target.{i}"), c);
            }
        }
        ck.push_scalar(format!("{PREFIX}.log_alpha"), self.temperature.log_alpha as f32);
        ck.push_scalar(format!("{PREFIX}.lambda"), self.lambda as f32);
        ck.push_scalar(format!("{PREFIX}.gamma"), self.gamma as f32);
        ck.push_scalar(format!("{PREFIX}.drop_per_critic"), self.drop_per_critic as f32);
        ck
    }

    /// Rebuilds a frozen agent; optimizer moments are not restored.
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<Self> {
        let policy = GaussianPolicy::new(ck.mlp(&format!("{PREFIX}.policy"))?);
        let ensemble = |name: &str, role| -> Result<CriticEnsemble<f32>> {
            let mut online = Vec::new();
            let mut target = Vec::new();
            while let Ok(c) = ck.mlp(&format!("{PREFIX}.{name}.online.{}", online.len())) {
                target.push(ck.mlp(&format!("{PREFIX}.{name}.target.{}", online.len()))?);
                online.push(c);
            }
            if online.is_empty() {
                return Err(Error::Checkpoint(format!("no {name} critics")));
            }
            Ok(CriticEnsemble::from_parts(role, online, target, AdamConfig::default()))
        };
        let value = ensemble("value", CriticRole::Value)?;
        let reach = ensemble("reach", CriticRole::Reachability)?;
        let obs_dim = policy.obs_dim();
        if value.input_dim() != obs_dim + 1 || reach.input_dim() != obs_dim + 1 {
            return Err(Error::Checkpoint("critic input does not match policy".into()));
        }
        let mut temperature = Temperature::new(1.0, 1, AdamConfig::default());
        temperature.log_alpha = ck.scalar(&format!("{PREFIX}.log_alpha"))? as f64;
        let policy_opt = Adam::new(policy.net.num_params(), AdamConfig::default());
        Ok(SafetyAgent {
            policy,
            value,
            reach,
            temperature,
            lambda: ck.scalar(&format!("{PREFIX}.lambda"))? as f64,
            gamma: ck.scalar(&format!("{PREFIX}.gamma"))? as f64,
            drop_per_critic: ck.scalar(&format!("{PREFIX}.drop_per_critic"))? as usize,
            huber_kappa: crate::distcritic::HUBER_KAPPA,
            ema_tau: 5e-3,
            policy_opt,
            updates: 0,
        })
    }
}
