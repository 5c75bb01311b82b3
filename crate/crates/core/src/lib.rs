//! Per-title bitrate ladder construction from source-side information features.
//!
//! The pipeline reads uncompressed Y4M video, measures Gaussian-scale-mixture
//! information statistics over a four-scale, two-orientation decomposition of
//! every frame and frame difference, trains an Extra-Trees regressor that maps
//! those statistics plus encode metadata to VMAF, and uses the predictions to
//! pick a resolution per ladder rung. Ladders are compared with Bjontegaard
//! delta metrics.

pub mod bd_metrics;
pub mod dataset;
pub mod error;
pub mod feature_assembly;
pub mod gsm_vif;
pub mod ladder;
pub mod media_io;
pub mod plane;
pub mod pyramid;
pub mod regressor;
pub mod resolution;
pub mod synthetic;

mod util;

pub use error::{Error, Result};
pub use plane::Plane;
pub use resolution::Resolution;
pub use util::write_atomic;
