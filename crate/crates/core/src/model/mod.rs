//! Tiny fully convolutional segmenter with hand-written reverse mode.

pub mod checkpoint;
mod ema;
mod loss;
mod net;
mod optim;
mod params;
mod scalar;
mod tape;

pub use ema::{ema_update, EmaConfig};
pub use loss::{softmax, softmax_ce, PROB_FLOOR};
pub use net::{image_tensor, Forward, NetSpec};
pub use optim::{sgd_step, OptimState, SgdConfig};
pub use params::{NamedTensor, Params};
pub use scalar::Real;
pub use tape::{NodeId, Tape, Tensor};
