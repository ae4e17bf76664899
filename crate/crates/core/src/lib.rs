//! Intra-only coding laboratory around learned intra-mode derivation.
//!
//! A block's mode is either signaled explicitly through the MPM list or
//! derived by a network from its decoded neighborhood, chosen per block by
//! rate-distortion cost and marked with a one-bit flag.

pub mod codec;
pub mod dataset;
pub mod error;
pub mod features;
pub mod frame_store;
pub mod intra_pred;
pub mod metrics;
pub mod signaling;
pub mod synth;

pub use codec::{decode_frame, encode_frame, DlimdModel, RdConfig};
pub use error::{CoreError, Result};
pub use frame_store::{Frame, Partition, ReconBuffer, Rect};
pub use intra_pred::IntraMode;
