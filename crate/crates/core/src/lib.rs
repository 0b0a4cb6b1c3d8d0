//! Semi-supervised semantic segmentation lab.
//!
//! A small, fully deterministic laboratory for mean-teacher segmentation
//! training with a weak geometric view for the teacher and a strong view
//! (confidence-adaptive label-injecting CutMix followed by random intensity
//! transforms) for the student.
//!
//! Module map:
//!
//! * [`raster`] and [`rng`]: pixel containers and the counter-based,
//!   path-addressed random streams every other module draws from.
//! * [`geometric`]: paired scale / flip / crop of image and label.
//! * [`intensity`]: random photometric plans and their pixel kernels.
//! * [`adaptive`]: confidence score and the two-stage CutMix.
//! * [`model`]: tiny convolutional segmenter with reverse-mode gradients,
//!   SGD with polynomial decay, EMA teacher, checkpoints.
//! * [`data`]: synthetic shapes dataset, netpbm codecs, splits.
//! * [`train`]: training step, experiments, ablation grids, mIoU.

pub mod adaptive;
pub mod data;
mod error;
pub mod geometric;
pub mod intensity;
pub mod model;
pub mod raster;
pub mod rng;
pub mod train;

pub use error::{Error, Result};
pub use raster::{argmax_labels, Image, LabelMask, ProbMap, RegionMask, IGNORE};
pub use rng::RngStream;
