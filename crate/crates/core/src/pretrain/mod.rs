//! Safety pretraining: a TQC-style loop that also trains reachability critics
//! and penalizes reachability in the actor loss.

mod agent;
mod buffer;
mod run;

pub use agent::{SafetyAgent, UpdateStats};
pub use buffer::{SafetyBatch, SafetyBuffer};
pub use run::{pretrain_run, EpisodeLog, PretrainConfig, PretrainOutcome};
pub(crate) use run::stream;

use ndarray::{concatenate, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::approx::{lit, Real};
use crate::envs::SimRng;

pub(crate) fn concat_cols<T: Real>(a: ArrayView2<T>, b: ArrayView2<T>) -> Array2<T> {
    concatenate(Axis(1), &[a, b]).expect("row counts agree")
}

pub(crate) fn normal_noise<T: Real>(rows: usize, cols: usize, rng: &mut SimRng) -> Array2<T> {
    Array2::from_shape_fn((rows, cols), |_| lit(rng.sample::<f64, _>(StandardNormal)))
}
