//! Device fingerprinting from per-packet header features: capture
//! ingestion, feature ranking, C4.5-style trees, decision tables and an
//! evaluation harness.

pub mod classifier;
pub mod cli;
pub mod harness;
pub mod ingest;
pub mod model;
pub mod selection;
pub mod synth;
pub mod table;
pub mod tree;
