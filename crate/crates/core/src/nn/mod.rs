//! Parameter storage and the handful of layers the network is built from.
//!
//! Everything is composed from differentiable `candle_core` tensor ops so a
//! single `backward()` on the loss reaches every trainable parameter.

mod layers;
mod ops;
mod store;

pub(crate) use layers::batch_norm;
pub use layers::{BatchNorm2d, Conv2d, ConvBlock, LayerNorm, Linear};
pub use ops::{bilinear_matrix, resize_bilinear, softmax_last_dim, to_nhwc, to_nchw};
pub use store::{Buffer, Init, ParamStore, Scope};

/// Whether layers should use batch statistics and accept knowledge updates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

impl Mode {
    pub fn is_train(self) -> bool {
        self == Mode::Train
    }
}
