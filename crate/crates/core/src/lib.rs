//! Log anomaly detection with a log-key language model.
//!
//! Raw logs are mined into template keys ([`preprocess`]), a small decoder
//! learns to predict the next key ([`lm`]), REINFORCE fine-tuning with a
//! Top-K reward adapts it ([`rl`]), and Top-K misses flag anomalies
//! ([`detect`]). [`harness`] wires the stages into reproducible runs.

pub mod detect;
pub mod harness;
pub mod lm;
pub mod preprocess;
pub mod rl;
