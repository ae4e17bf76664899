//! A small CPU tensor engine and the intra-mode classification networks.
//!
//! The feature-learning trunk consumes a 4x132 reference canvas; its
//! flattened output is concatenated with the 73 hand-crafted features at
//! the input of every fully connected layer. All variants share one
//! implementation, parameterized by [`Architecture`].

pub mod adam;
pub mod arch;
pub mod checkpoint;
mod columns;
pub mod error;
pub mod gradcheck;
pub mod network;
pub mod real;
pub mod train;

pub use adam::Adam;
pub use arch::{
    flops, short_flops, two_digits, Activation, Architecture, LayerKind, LayerSpec, SideInput, Trunk, Variant, CANVAS_COLS,
    CANVAS_LEN, CANVAS_ROWS, FEATURE_LEN, HIST_LEN, NUM_CLASSES,
};
pub use error::{NnError, Result};
pub use gradcheck::{gradient_check, GradCheck, Pick};
pub use network::{argmax, cross_entropy, Dropout, ForwardPass, Input, Network, ParamSet, Tensor};
pub use real::Real;
pub use train::{train, train_from, validation_accuracy, EpochLog, Labeled, TrainConfig};
