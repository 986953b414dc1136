//! Anomaly detection for wireless sensor network streams.
//!
//! The pipeline: parse sensor logs (or generate synthetic streams), cut
//! per-node series into 64-sample windows, inject temperature faults into
//! half of them, encode each window as a 16x16 gray image, then classify
//! images as normal or abnormal with small from-scratch CNNs or a CART
//! tree, and score everything with detection accuracy, true positive rate,
//! and precision over sweeps of fault intensity.
//!
//! Everything downstream of a seed is deterministic: same inputs and seeds
//! give byte-identical corpora, models, and reports.

pub mod baseline;
pub mod encode;
pub mod error;
pub mod eval;
pub mod faults;
pub mod ingest;
pub mod nn;
pub mod rng;

pub use error::{Error, Result};
