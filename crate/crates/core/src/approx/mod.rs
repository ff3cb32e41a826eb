//! Small neural function-approximation engine.
//!
//! Networks keep all parameters in one flat vector so that the optimizer,
//! target-network averaging and checkpointing work on plain slices. Every
//! routine is generic over [`Real`]: training runs in `f32`, while gradient
//! checks instantiate the same code in `f64`.

mod adam;
mod checkpoint;
mod mlp;
mod policy;
mod temperature;

pub use adam::{ema_update, Adam, AdamConfig};
pub use checkpoint::{Checkpoint, Tensor};
pub use mlp::{Mlp, MlpTape};
pub use policy::{GaussianPolicy, PolicySample, LOG_STD_MAX, LOG_STD_MIN};
pub use temperature::Temperature;

use ndarray::NdFloat;
use num_traits::FromPrimitive;

/// Floating-point element type of networks and batches.
pub trait Real: NdFloat + FromPrimitive + Default {}

impl Real for f32 {}
impl Real for f64 {}

/// Converts an `f64` literal into `T`.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("f64 is representable")
}
