use ndarray::{Array1, Array2, ArrayView2};

use super::{quantile_huber_loss, readout, CumProbs};
use crate::approx::{ema_update, lit, Adam, AdamConfig, Mlp, Real};
use crate::envs::SimRng;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CriticRole {
    Value,
    Reachability,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CriticSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub critics: usize,
    pub atoms: usize,
}

impl CriticSpec {
    pub fn layer_sizes(&self) -> Vec<usize> {
        let mut s = vec![self.input_dim];
        s.extend(&self.hidden);
        s.push(self.atoms);
        s
    }
}

/// `M` online quantile critics with their averaged target copies.
#[derive(Debug, Clone, PartialEq)]
pub struct CriticEnsemble<T> {
    pub role: CriticRole,
    pub online: Vec<Mlp<T>>,
    pub target: Vec<Mlp<T>>,
    opts: Vec<Adam<T>>,
    probs: CumProbs,
}

impl<T: Real> CriticEnsemble<T> {
    /// Each critic draws its own initial weights from `rng` in turn.
    pub fn new(role: CriticRole, spec: &CriticSpec, adam: AdamConfig, rng: &mut SimRng) -> Self {
        let sizes = spec.layer_sizes();
        let online: Vec<Mlp<T>> = (0..spec.critics).map(|_| Mlp::new(&sizes, rng)).collect();
        Self::from_parts(role, online.clone(), online, adam)
    }

    pub fn from_parts(role: CriticRole, online: Vec<Mlp<T>>, target: Vec<Mlp<T>>, adam: AdamConfig) -> Self {
        assert!(!online.is_empty());
        assert_eq!(online.len(), target.len());
        let n = online[0].output_dim();
        assert!(online.iter().chain(&target).all(|c| c.sizes() == online[0].sizes()));
        let opts = online.iter().map(|c| Adam::new(c.num_params(), adam)).collect();
        CriticEnsemble {
            role,
            online,
            target,
            opts,
            probs: CumProbs::new(n),
        }
    }

    pub fn len(&self) -> usize {
        self.online.len()
    }

    pub fn is_empty(&self) -> bool {
        self.online.is_empty()
    }

    pub fn atoms_per_critic(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &CumProbs {
        &self.probs
    }

    pub fn input_dim(&self) -> usize {
        self.online[0].input_dim()
    }

    pub fn online_atoms(&self, x: ArrayView2<T>) -> Vec<Array2<T>> {
        self.online.iter().map(|c| c.forward(x)).collect()
    }

    pub fn target_atoms(&self, x: ArrayView2<T>) -> Vec<Array2<T>> {
        self.target.iter().map(|c| c.forward(x)).collect()
    }

    /// Quantile-regression loss of each critic against `targets[i]`; returns
    /// the per-critic losses without updating anything, plus the gradients.
    pub fn regression_grads(
        &self,
        x: ArrayView2<T>,
        targets: &[ArrayView2<T>],
        kappa: f64,
    ) -> (Vec<T>, Vec<Vec<T>>) {
        assert_eq!(targets.len(), self.len());
        let mut losses = Vec::with_capacity(self.len());
        let mut grads = Vec::with_capacity(self.len());
        for (critic, y) in self.online.iter().zip(targets) {
            let (atoms, tape) = critic.forward_tape(x);
            let (loss, d_atoms) = quantile_huber_loss(atoms.view(), *y, &self.probs, kappa);
            let mut g = vec![T::zero(); critic.num_params()];
            critic.backward(&tape, d_atoms, Some(&mut g), false);
            losses.push(loss);
            grads.push(g);
        }
        (losses, grads)
    }

    /// One optimizer step of every critic toward its targets. Returns the mean
    /// loss over critics.
    pub fn regress(&mut self, x: ArrayView2<T>, targets: &[ArrayView2<T>], kappa: f64) -> Result<T> {
        let (losses, grads) = self.regression_grads(x, targets, kappa);
        for ((critic, opt), g) in self.online.iter_mut().zip(&mut self.opts).zip(&grads) {
            opt.step(critic.params_mut(), g)?;
        }
        Ok(losses.iter().fold(T::zero(), |a, &l| a + l) / lit::<T>(losses.len() as f64))
    }

    /// Per-row mean over all online atoms, and `d/dx` of
    /// `sum_rows weight * mean`.
    pub fn mean_with_input_grad(&self, x: ArrayView2<T>, weight: T) -> (Array1<T>, Array2<T>) {
        let rows = x.nrows();
        let scale = T::one() / lit::<T>((self.len() * self.atoms_per_critic()) as f64);
        let mut mean = Array1::zeros(rows);
        let mut dx = Array2::zeros(x.raw_dim());
        for critic in &self.online {
            let (atoms, tape) = critic.forward_tape(x);
            mean += &(atoms.sum_axis(ndarray::Axis(1)) * scale);
            let dy = Array2::from_elem(atoms.raw_dim(), weight * scale);
            dx += &critic.backward(&tape, dy, None, true).unwrap();
        }
        (mean, dx)
    }

    pub fn soft_update(&mut self, tau: f64) {
        let tau = lit::<T>(tau);
        for (t, o) in self.target.iter_mut().zip(&self.online) {
            ema_update(t.params_mut(), o.params(), tau);
        }
    }

    /// Online atoms of every critic, one `Vec` of `M` rows per input row, in `f64`.
    pub fn row_atoms(&self, x: ArrayView2<T>) -> Vec<Vec<Vec<f64>>> {
        let per_critic = self.online_atoms(x);
        (0..x.nrows())
            .map(|r| {
                per_critic
                    .iter()
                    .map(|a| a.row(r).iter().map(|v| v.to_f64().unwrap()).collect())
                    .collect()
            })
            .collect()
    }

    pub fn ensemble_mean(&self, x: ArrayView2<T>) -> Vec<f64> {
        self.map_rows(x, readout::ensemble_mean)
    }

    pub fn tail_mean(&self, x: ArrayView2<T>, tau: f64) -> Vec<f64> {
        let probs = self.probs.clone();
        self.map_rows(x, |a| readout::tail_mean(a, &probs, tau))
    }

    pub fn disagreement_l1(&self, x: ArrayView2<T>) -> Vec<f64> {
        self.map_rows(x, readout::disagreement_l1)
    }

    fn map_rows(&self, x: ArrayView2<T>, f: impl Fn(&[&[f64]]) -> f64) -> Vec<f64> {
        self.row_atoms(x)
            .iter()
            .map(|row| {
                let refs: Vec<&[f64]> = row.iter().map(|v| v.as_slice()).collect();
                f(&refs)
            })
            .collect()
    }
}
