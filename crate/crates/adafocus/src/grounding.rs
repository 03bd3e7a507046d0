//! Turning a draft answer into a place to look next.
//!
//! The primary signal is an explicit bracketed citation in the generated
//! text, `[mm:ss]` or `[hh:mm:ss]`; the last well-formed one wins, on the
//! observation that models cite the decisive moment late in the answer.
//! When no citation parses, the frame with the highest generation
//! attention stands in. When neither signal exists the caller keeps the
//! current answer rather than retrieving blindly.

use std::sync::LazyLock;

use regex::Regex;

use crate::error::{Error, Result};
use crate::types::{FrameRef, GenerationResult, GroundingSource};

/// Result of grounding one generation.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GroundingOutcome {
    /// A retrieval target was found.
    Grounded {
        target_sec: f64,
        source: GroundingSource,
    },
    /// No citation parsed and no attention was available.
    Failed,
}

// Two-field citations leave minutes unbounded (a 90-minute video is
// legitimately cited as [75:30]); three-field citations bound both
// minutes and seconds. Seconds are always two digits below 60.
static CITATION: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"\[(\d{1,2}):(\d{2})\]|\[(\d{1,2}):(\d{2}):(\d{2})\]").expect("static pattern")
});

/// Parses the last well-formed timestamp citation out of `text`,
/// clamped to `[0, duration_sec]`. Malformed candidates (seconds of 60
/// or more, over-long fields) are skipped, not errors.
pub fn extract_timestamp(text: &str, duration_sec: f64) -> Result<Option<f64>> {
    if duration_sec.is_nan() || duration_sec <= 0.0 {
        return Err(Error::NonPositiveDuration(duration_sec));
    }
    let mut last = None;
    for caps in CITATION.captures_iter(text) {
        let seconds = if let Some(minutes) = caps.get(1) {
            let m: u32 = minutes.as_str().parse().expect("digits");
            let s: u32 = caps[2].parse().expect("digits");
            if s > 59 {
                continue;
            }
            u64::from(m) * 60 + u64::from(s)
        } else {
            let h: u32 = caps[3].parse().expect("digits");
            let m: u32 = caps[4].parse().expect("digits");
            let s: u32 = caps[5].parse().expect("digits");
            if m > 59 || s > 59 {
                continue;
            }
            u64::from(h) * 3600 + u64::from(m) * 60 + u64::from(s)
        };
        last = Some(seconds as f64);
    }
    Ok(last.map(|t| t.min(duration_sec).max(0.0)))
}

/// Formats whole seconds as a citation the extractor round-trips:
/// `[mm:ss]` while two minute digits suffice, `[h:mm:ss]` beyond.
pub fn format_citation(seconds: u64) -> String {
    if seconds < 6000 {
        format!("[{:02}:{:02}]", seconds / 60, seconds % 60)
    } else {
        format!(
            "[{}:{:02}:{:02}]",
            seconds / 3600,
            (seconds % 3600) / 60,
            seconds % 60
        )
    }
}

/// Timestamp of the frame holding the highest attention weight; ties go
/// to the earliest timestamp, then lowest index.
pub fn attention_argmax(attention: &[f64], frames: &[FrameRef]) -> Result<f64> {
    if attention.len() != frames.len() {
        return Err(Error::AttentionMismatch {
            got: attention.len(),
            expected: frames.len(),
        });
    }
    if frames.is_empty() {
        return Err(Error::GroundingUnavailable);
    }
    for (index, &value) in attention.iter().enumerate() {
        if !value.is_finite() || value < 0.0 {
            return Err(Error::InvalidAttention { index, value });
        }
    }
    let mut best = 0;
    for i in 1..frames.len() {
        let better = attention[i] > attention[best]
            || (attention[i] == attention[best]
                && (frames[i].timestamp_sec < frames[best].timestamp_sec
                    || (frames[i].timestamp_sec == frames[best].timestamp_sec
                        && frames[i].index < frames[best].index)));
        if better {
            best = i;
        }
    }
    Ok(frames[best].timestamp_sec)
}

/// Grounds a generation against the evidence it was produced from:
/// citation text first, attention fallback, explicit failure otherwise.
pub fn ground(
    result: &GenerationResult,
    evidence: &[FrameRef],
    duration_sec: f64,
) -> Result<GroundingOutcome> {
    if let Some(target_sec) = extract_timestamp(&result.text, duration_sec)? {
        return Ok(GroundingOutcome::Grounded {
            target_sec,
            source: GroundingSource::Regex,
        });
    }
    match &result.frame_attention {
        Some(attention) => Ok(GroundingOutcome::Grounded {
            target_sec: attention_argmax(attention, evidence)?,
            source: GroundingSource::Attention,
        }),
        None => Ok(GroundingOutcome::Failed),
    }
}
