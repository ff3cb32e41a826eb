//! Quantile-critic ensembles for the safety return and for reachability.

mod ensemble;
mod quantile;
mod readout;
mod targets;

pub use ensemble::{CriticEnsemble, CriticRole, CriticSpec};
pub use quantile::{quantile_huber_loss, CumProbs, HUBER_KAPPA};
pub use readout::{disagreement_l1, ensemble_mean, tail_mean};
pub use targets::{reachability_target, tqc_value_target};
