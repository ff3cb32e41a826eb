//! Tanh-squashed diagonal Gaussian policy with reparameterized sampling.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};

use super::{lit, Mlp, MlpTape, Real};

pub const LOG_STD_MIN: f64 = -20.0;
pub const LOG_STD_MAX: f64 = 2.0;

/// Network emitting `[mean | log_std]` per action dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicy<T> {
    pub net: Mlp<T>,
}

/// Everything the reverse pass of a sampled batch needs.
#[derive(Debug, Clone)]
pub struct PolicySample<T> {
    /// Squashed actions, strictly inside `(-1, 1)`.
    pub actions: Array2<T>,
    pub log_probs: Array1<T>,
    pre_tanh: Array2<T>,
    noise: Array2<T>,
    std: Array2<T>,
    /// 1 where the raw log-std lies inside the clamp range.
    std_live: Array2<T>,
    tape: MlpTape<T>,
}

impl<T: Real> GaussianPolicy<T> {
    pub fn new(net: Mlp<T>) -> Self {
        assert!(net.output_dim() % 2 == 0, "policy output must be [mean | log_std]");
        GaussianPolicy { net }
    }

    pub fn action_dim(&self) -> usize {
        self.net.output_dim() / 2
    }

    pub fn obs_dim(&self) -> usize {
        self.net.input_dim()
    }

    /// Draws `tanh(mean + std * noise)` for a batch; `noise` holds standard
    /// normal draws of shape `(batch, action_dim)`.
    pub fn sample(&self, obs: ArrayView2<T>, noise: Array2<T>) -> PolicySample<T> {
        let d = self.action_dim();
        assert_eq!(noise.dim(), (obs.nrows(), d));
        let (out, tape) = self.net.forward_tape(obs);
        let mean = out.slice(s![.., ..d]);
        let raw_ls = out.slice(s![.., d..]);
        let (lo, hi) = (lit::<T>(LOG_STD_MIN), lit::<T>(LOG_STD_MAX));
        let std_live = raw_ls.mapv(|v| if v >= lo && v <= hi { T::one() } else { T::zero() });
        let log_std = raw_ls.mapv(|v| v.max(lo).min(hi));
        let std = log_std.mapv(T::exp);
        let pre_tanh = &mean + &(&std * &noise);
        let edge = T::one() - T::epsilon();
        let actions = pre_tanh.mapv(|u| u.tanh().max(-edge).min(edge));

        let half_ln_2pi = lit::<T>(0.5 * (2.0 * std::f64::consts::PI).ln());
        let ln2 = lit::<T>(std::f64::consts::LN_2);
        let two = lit::<T>(2.0);
        let half = lit::<T>(0.5);
        let mut log_probs = Array1::zeros(obs.nrows());
        for b in 0..obs.nrows() {
            let mut lp = T::zero();
            for k in 0..d {
                let e = noise[[b, k]];
                let u = pre_tanh[[b, k]];
                // log(1 - tanh(u)^2) = 2 (ln 2 - u - softplus(-2u))
                let log_jac = two * (ln2 - u - softplus(-two * u));
                lp += -half * e * e - log_std[[b, k]] - half_ln_2pi - log_jac;
            }
            log_probs[b] = lp;
        }
        PolicySample {
            actions,
            log_probs,
            pre_tanh,
            noise,
            std,
            std_live,
            tape,
        }
    }

    /// Accumulates into `grad` the parameter gradient of a loss whose partial
    /// derivatives with respect to the sampled actions and log-probabilities
    /// are `d_actions` and `d_log_probs`.
    pub fn backward(
        &self,
        sample: &PolicySample<T>,
        d_actions: ArrayView2<T>,
        d_log_probs: ArrayView1<T>,
        grad: &mut [T],
    ) {
        let d = self.action_dim();
        let n = sample.actions.nrows();
        assert_eq!(d_actions.dim(), (n, d));
        assert_eq!(d_log_probs.len(), n);
        let two = lit::<T>(2.0);
        let mut d_out = Array2::zeros((n, 2 * d));
        for b in 0..n {
            let dlp = d_log_probs[b];
            for k in 0..d {
                let t = sample.pre_tanh[[b, k]].tanh();
                // d log_prob / du = 2 tanh(u), d tanh(u) / du = 1 - tanh(u)^2
                let du = d_actions[[b, k]] * (T::one() - t * t) + dlp * two * t;
                d_out[[b, k]] = du;
                let dls = du * sample.std[[b, k]] * sample.noise[[b, k]] - dlp;
                d_out[[b, d + k]] = dls * sample.std_live[[b, k]];
            }
        }
        self.net.backward(&sample.tape, d_out, Some(grad), false);
    }

    /// Deterministic action `tanh(mean)`.
    pub fn mean_action(&self, obs: ArrayView2<T>) -> Array2<T> {
        let d = self.action_dim();
        let out = self.net.forward(obs);
        let edge = T::one() - T::epsilon();
        out.slice(s![.., ..d])
            .mapv(|u| u.tanh().max(-edge).min(edge))
    }
}

#[inline]
fn softplus<T: Real>(x: T) -> T {
    // log(1 + e^x) without overflow
    if x > T::zero() {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}
