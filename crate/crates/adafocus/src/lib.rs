//! Budgeted long-video question answering built around three decisions:
//! which frames to look at first, whether the draft answer is trustworthy,
//! and where to look next when it is not.
//!
//! The crate provides the full loop as a library: query-aware preview
//! sampling over a frame pool ([`sampler`]), a length-adaptive confidence
//! gate over token log-probabilities ([`gate`]), timestamp grounding from
//! generated text or attention ([`grounding`]), windowed frame retrieval
//! from an indexed archive without whole-file decoding ([`archive`]), and
//! an orchestrator that ties them together and records a machine-readable
//! trace ([`pipeline`]). Model calls go through the [`backends`] traits;
//! deterministic mock implementations make every test reproducible.

pub mod archive;
pub mod backends;
pub mod error;
pub mod gate;
pub mod grounding;
pub mod pipeline;
pub mod prompt;
pub mod sampler;
pub mod types;

pub use error::{Error, Result};
