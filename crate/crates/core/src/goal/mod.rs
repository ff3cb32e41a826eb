//! Goal-conditioned learner for the exploration phase: an episodic replay
//! buffer with hindsight relabeling and a soft actor-critic whose critics
//! form a min-ensemble.

mod agent;
mod buffer;

pub use agent::{GcAgent, GcConfig, GcStats};
pub use buffer::{Episode, EpisodeBuffer, GcBatch, HerSpec, Transition};
