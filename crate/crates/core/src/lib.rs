//! Homomorphically encrypted training of multilayer perceptrons over
//! SIMD-packed ciphertexts, with encrypted federated averaging across
//! worker nodes.
//!
//! * [`cipher`]: ciphertexts, keys and the exact level-tracking reference
//!   backend.
//! * [`packing`]: row/column packing and the packed matrix-vector product.
//! * [`henn`]: the encrypted network, its polynomial activation and the
//!   training loop.
//! * [`data`]: CSV ingestion, preprocessing, synthetic traffic, dataset
//!   encryption and metrics.
//! * [`fed`]: partitioning, encrypted FedAvg and the master/worker protocol.
//! * [`config`]: the training configuration file.

pub mod cipher;
pub mod config;
pub mod data;
pub mod error;
pub mod fed;
pub mod henn;
pub mod matrix;
pub mod packing;
mod wire;

pub use cipher::{Ciphertext, Evaluator, HeParams, KeyPair, PublicKey, SecretKey};
pub use config::TrainConfig;
pub use error::{Error, Result};
pub use matrix::Matrix;
pub use packing::{Axis, Packed, PackedLayout};
