//! Benchmark harness for encrypted malicious-traffic classification.
//!
//! The pipeline runs capture files through session reassembly
//! ([`capture`]), labeling and preprocessing ([`dataset`]), feature
//! extraction ([`features`]), classical learners ([`models`]) and the
//! evaluation protocols ([`eval`]). [`synth`] generates planted-signal
//! captures with a known ground truth.

pub mod capture;
pub mod dataset;
pub mod eval;
pub mod features;
pub mod models;
pub mod synth;
