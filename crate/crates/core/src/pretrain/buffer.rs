use ndarray::{Array1, Array2};
use rand::Rng;

use crate::approx::{lit, Real};
use crate::envs::SimRng;

/// Unbounded transition store; nothing is ever evicted.
#[derive(Debug, Clone, Default)]
pub struct SafetyBuffer {
    obs_dim: usize,
    act_dim: usize,
    obs: Vec<f32>,
    actions: Vec<f32>,
    next_obs: Vec<f32>,
    r_s: Vec<f32>,
    h_next: Vec<f32>,
    terminated: Vec<bool>,
}

#[derive(Debug, Clone)]
pub struct SafetyBatch<T> {
    pub obs: Array2<T>,
    pub actions: Array2<T>,
    pub next_obs: Array2<T>,
    pub r_s: Array1<T>,
    pub h_next: Array1<T>,
    /// 1 for a mistake (no bootstrap), 0 otherwise.
    pub terminated: Array1<T>,
}

impl SafetyBuffer {
    pub fn new(obs_dim: usize, act_dim: usize) -> Self {
        SafetyBuffer {
            obs_dim,
            act_dim,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.r_s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r_s.is_empty()
    }

    pub fn push(&mut self, obs: &[f64], action: &[f64], next_obs: &[f64], r_s: f64, h_next: f64, terminated: bool) {
        assert_eq!(obs.len(), self.obs_dim);
        assert_eq!(next_obs.len(), self.obs_dim);
        assert_eq!(action.len(), self.act_dim);
        self.obs.extend(obs.iter().map(|&v| v as f32));
        self.actions.extend(action.iter().map(|&v| v as f32));
        self.next_obs.extend(next_obs.iter().map(|&v| v as f32));
        self.r_s.push(r_s as f32);
        self.h_next.push(h_next as f32);
        self.terminated.push(terminated);
    }

    /// Indices drawn uniformly with replacement.
    pub fn sample_indices(&self, batch: usize, rng: &mut SimRng) -> Vec<usize> {
        assert!(!self.is_empty(), "sampling from an empty buffer");
        (0..batch).map(|_| rng.random_range(0..self.len())).collect()
    }

    pub fn gather<T: Real>(&self, idx: &[usize]) -> SafetyBatch<T> {
        let (od, ad) = (self.obs_dim, self.act_dim);
        let rows = |src: &[f32], w: usize| {
            Array2::from_shape_fn((idx.len(), w), |(r, c)| lit::<T>(src[idx[r] * w + c] as f64))
        };
        SafetyBatch {
            obs: rows(&self.obs, od),
            actions: rows(&self.actions, ad),
            next_obs: rows(&self.next_obs, od),
            r_s: idx.iter().map(|&i| lit(self.r_s[i] as f64)).collect(),
            h_next: idx.iter().map(|&i| lit(self.h_next[i] as f64)).collect(),
            terminated: idx
                .iter()
                .map(|&i| if self.terminated[i] { T::one() } else { T::zero() })
                .collect(),
        }
    }

    pub fn sample<T: Real>(&self, batch: usize, rng: &mut SimRng) -> SafetyBatch<T> {
        let idx = self.sample_indices(batch, rng);
        self.gather(&idx)
    }
}
