//! A small reverse-mode network stack: dense, activation, batch-norm and
//! dropout layers with a tape-based backward pass.

mod layer;
mod loss;
mod model;

pub use layer::{
    ActLayer, BatchNorm, BatchNormCache, Dense, Dropout, Layer, Mode, ParamRole, ParamView, BATCHNORM_EPS,
    BATCHNORM_MOMENTUM,
};
pub use loss::{accuracy, argmax, softmax_cross_entropy};
pub use model::{ActivationStats, Model, Tape};
