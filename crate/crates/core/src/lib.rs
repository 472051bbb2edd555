//! Two-phase information reconciliation for QKD sifted keys.
//!
//! Forward phase: Alice sends `Z = U·G_n ⊕ K_A` and per-sub-block CRC tags;
//! Bob runs a block-checked SCL decoder that reports which sub-blocks failed.
//! Acknowledgment phase: only the failed sub-blocks are reconciled with LDPC
//! syndromes. The crate also carries the closed-form bounds used to size the
//! protocol and a Monte-Carlo harness to measure it.

pub mod analysis;
pub mod bits;
pub mod construction;
pub mod crc;
pub mod decoder;
pub mod error;
pub mod harness;
pub mod ldpc;
pub mod polar;
pub mod protocol;
pub mod rng;

pub use bits::BitBlock;
pub use construction::{BitChannelStats, FrozenLibrary};
pub use crc::{CrcSpec, TagVector};
pub use decoder::{DecodeOutcome, MetricMode};
pub use error::{Error, Result};
pub use ldpc::ParityCheckMatrix;
pub use polar::FrozenVector;
