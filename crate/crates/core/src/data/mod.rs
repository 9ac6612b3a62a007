//! Datasets: CSV ingestion, stratified preprocessing, a synthetic traffic
//! generator, per-sample encryption and classification metrics.

mod dataset;
mod encrypted;
mod ingest;
mod metrics;
mod prep;

pub use dataset::{one_hot, Dataset, MinMax};
pub use encrypted::{
    decrypt_dataset, encrypt_dataset, encrypt_features, EncryptedDataset, EncryptedSample,
};
pub use ingest::{load_csv, read_csv, write_csv, Schema, DEFAULT_CLASSES};
pub use metrics::{evaluate, ConfusionMatrix, MetricsReport};
pub use prep::{preprocess, synth_generate, TEST_FRACTION};
