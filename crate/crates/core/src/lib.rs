//! FBLNet: a driver-attention network whose fusion stage is guided by a
//! persistent knowledge buffer, refreshed once per training step from a
//! detached decoder feature.
//!
//! The crate covers the model ([`model::FblNet`]), the saliency metrics
//! ([`metrics`]), datasets and a synthetic scene generator ([`data`]), and the
//! training, evaluation, checkpoint and ablation harness ([`harness`]).
//!
//! Runnable walkthroughs live under `examples/`:
//!
//! | example          | shows                                             |
//! |------------------|---------------------------------------------------|
//! | `shape_plan`     | every intermediate tensor shape for a scale       |
//! | `metrics`        | the six metrics and the loss on hand-made maps    |
//! | `feedback_loop`  | knowledge updates and guidance neutrality         |
//! | `fusion`         | the four fusion modes side by side                |
//! | `synthetic_data` | generating and saving a synthetic dataset         |
//! | `train_tiny`     | a short training run with validation              |
//! | `checkpoint`     | save, reload and verify a checkpoint              |
//! | `predict`        | writing a heatmap PNG for one image               |
//! | `ablation`       | the fusion, feedback-node and encoder tables      |

pub mod config;
pub mod data;
pub mod decoder;
pub mod encoder;
pub mod error;
pub mod fbl;
pub mod feature;
pub mod fusion;
pub mod harness;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod shape;

pub use config::{EncoderMode, FeedbackNode, FusionMode, ModelConfig, RunConfig};
pub use error::{Error, Result};
pub use model::FblNet;
