//! Machine-readable record of one pipeline execution.
//!
//! One record per generate call: the gate numbers it produced and, when
//! refinement followed, the grounding outcome and retrieved window.
//! Retrieval byte deltas count payload bytes of frames newly added to
//! the evidence, a logical measure that is identical whether the bytes
//! came off disk on demand or out of a preloaded buffer; physical I/O
//! totals live in the run's [`ReadAccounting`](crate::archive::ReadAccounting),
//! outside the trace.
//! Wall-clock timings are the only nondeterministic fields, and
//! [`PipelineTrace::canonical`] zeroes them so two runs can be compared
//! bit-for-bit.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::grounding::GroundingOutcome;
use crate::sampler::RoutingDecision;
use crate::types::SamplingMode;

pub const TRACE_VERSION: u32 = 1;

/// Wall-clock milliseconds per stage of one round.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub generate_ms: f64,
    pub ground_ms: f64,
    pub retrieve_ms: f64,
}

/// How the preview was built and what it cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreviewRecord {
    /// Candidate pool size after 1-fps thinning.
    pub pool_size: usize,
    pub routing: RoutingDecision,
    pub max_relevance: f64,
    pub sampling_mode: SamplingMode,
    pub keyframe_timestamps_sec: Vec<f64>,
    /// Payload bytes of the preview frames.
    pub payload_bytes: u64,
    pub wall_ms: f64,
}

/// One generate call plus the refinement step that followed it, if any.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: u32,
    /// Evidence frames fed to this generate call.
    pub evidence_size: usize,
    /// Mean token log-probability of the answer.
    pub confidence: f64,
    /// Length-adjusted acceptance threshold.
    pub threshold: f64,
    pub triggered: bool,
    /// Present when grounding ran after this round's gate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grounding: Option<GroundingOutcome>,
    /// Timestamps of the frames in the retrieved window.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub window_timestamps_sec: Vec<f64>,
    /// Payload bytes of frames the window newly added to the evidence.
    pub window_payload_bytes: u64,
    pub timings: StageTimings,
}

/// Why the loop stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AcceptedBy {
    /// Confidence cleared the threshold.
    Gate,
    /// Retrieval budget ran out while still triggered.
    RoundCap,
    /// Neither citation nor attention gave a target.
    GroundingFailure,
}

impl AcceptedBy {
    pub fn name(&self) -> &'static str {
        match self {
            AcceptedBy::Gate => "gate",
            AcceptedBy::RoundCap => "round-cap",
            AcceptedBy::GroundingFailure => "grounding-failure",
        }
    }
}

/// Complete trace of one pipeline run; serializes to one JSON line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineTrace {
    pub version: u32,
    pub source_id: String,
    pub query: String,
    pub mode: String,
    pub duration_sec: f64,
    /// Absent in dense-oracle mode, which skips preview sampling.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preview: Option<PreviewRecord>,
    pub rounds: Vec<RoundRecord>,
    pub answer: String,
    pub evidence_frames: usize,
    pub visual_tokens: u64,
    /// Re-generation rounds taken, i.e. generate calls minus one.
    pub rounds_used: u32,
    pub accepted_by: AcceptedBy,
}

impl PipelineTrace {
    /// Copy with every wall-clock field zeroed; equal canonical traces
    /// mean equal runs in every deterministic respect.
    pub fn canonical(&self) -> Self {
        let mut out = self.clone();
        if let Some(preview) = &mut out.preview {
            preview.wall_ms = 0.0;
        }
        for round in &mut out.rounds {
            round.timings = StageTimings::default();
        }
        out
    }

    /// Single-line JSON, the format one trace occupies in a JSONL file.
    pub fn to_json_line(&self) -> Result<String> {
        serde_json::to_string(self).map_err(|e| crate::error::Error::Config(e.to_string()))
    }
}
