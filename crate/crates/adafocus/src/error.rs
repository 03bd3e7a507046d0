//! Unified error type for the crate.

use std::io;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    // ── embeddings and queries ──────────────────────────────────────────
    #[error("embedding must have at least one element")]
    EmptyEmbedding,

    #[error("cannot normalize a zero-norm vector")]
    ZeroNorm,

    #[error("embedding dimension mismatch: {left} vs {right}")]
    DimMismatch { left: usize, right: usize },

    #[error("query text must be non-empty")]
    EmptyQuery,

    // ── sampling ────────────────────────────────────────────────────────
    #[error("candidate pool is empty")]
    EmptyCandidates,

    #[error("selection budget {k} outside valid range 1..={n}")]
    InvalidBudget { k: usize, n: usize },

    #[error("keyframe set holds {len} frames, cap is {cap}")]
    KeyframeCapExceeded { len: usize, cap: usize },

    #[error("duration must be positive, got {0}")]
    NonPositiveDuration(f64),

    // ── generation and gating ───────────────────────────────────────────
    #[error("generation carries no token log-probabilities")]
    EmptyGeneration,

    #[error("token log-probability at position {index} is {value}, must be <= 0 and finite")]
    InvalidLogProb { index: usize, value: f64 },

    #[error("frame attention at position {index} is {value}, must be >= 0 and finite")]
    InvalidAttention { index: usize, value: f64 },

    #[error("attention has {got} entries but evidence holds {expected} frames")]
    AttentionMismatch { got: usize, expected: usize },

    #[error("no timestamp cited and no frame attention available")]
    GroundingUnavailable,

    // ── archive and sidecar formats ─────────────────────────────────────
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: String, found: String },

    #[error("corrupt file at byte {offset}: {reason}")]
    Corrupt { offset: u64, reason: String },

    #[error("read failed at byte {offset}: {source}")]
    ReadFailed { offset: u64, source: io::Error },

    #[error("archive must contain at least one frame")]
    EmptyArchive,

    #[error("frame timestamps must be strictly increasing: entry {index} has {timestamp_ms} ms after {previous_ms} ms")]
    UnsortedTimestamps {
        index: usize,
        timestamp_ms: u64,
        previous_ms: u64,
    },

    #[error("sidecar has no embedding for timestamp {timestamp_ms} ms")]
    MissingEmbedding { timestamp_ms: u64 },

    #[error("window half-width must be positive, got {0}")]
    NonPositiveHalfWidth(f64),

    // ── backends ────────────────────────────────────────────────────────
    #[error("scripted model exhausted after {served} calls")]
    ScriptExhausted { served: usize },

    #[error("scripted step {step} expected {expected}, observed {observed}")]
    ScriptMismatch {
        step: usize,
        expected: String,
        observed: String,
    },

    #[error("backend: {0}")]
    Backend(String),

    // ── configuration, manifests, evaluation ────────────────────────────
    #[error("config: {0}")]
    Config(String),

    #[error("manifest: {0}")]
    Manifest(String),

    #[error("inverted interval [{start}, {end}]")]
    InvertedInterval { start: f64, end: f64 },

    #[error(transparent)]
    Io(#[from] io::Error),
}
