//! Metrics over pipeline runs: token footprints, answer accuracy,
//! temporal IoU, and the aggregate dataset report.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::EvidenceSet;

/// Visual tokens an evidence set costs the model.
pub fn token_footprint(evidence: &EvidenceSet, tokens_per_frame: u32) -> u64 {
    evidence.len() as u64 * u64::from(tokens_per_frame)
}

/// Overlap-over-union of two closed intervals. Two identical
/// zero-length intervals count as 1; a zero-length interval against
/// anything it does not equal follows the formula (0 unless covered
/// with positive overlap, which zero length cannot produce).
pub fn interval_iou(a: [f64; 2], b: [f64; 2]) -> Result<f64> {
    for [start, end] in [a, b] {
        if !(start.is_finite() && end.is_finite()) || start > end {
            return Err(Error::InvertedInterval { start, end });
        }
    }
    let inter = (a[1].min(b[1]) - a[0].max(b[0])).max(0.0);
    let union = (a[1] - a[0]) + (b[1] - b[0]) - inter;
    if union <= 0.0 {
        return Ok(if a == b { 1.0 } else { 0.0 });
    }
    Ok(inter / union)
}

/// Exact-match normalization: trim, case-fold, strip one final period.
pub fn normalize_answer(text: &str) -> String {
    let trimmed = text.trim();
    let trimmed = trimmed.strip_suffix('.').unwrap_or(trimmed);
    trimmed.to_lowercase()
}

/// Side-by-side token cost of dense frames versus a focused evidence
/// set. Frame counts are means, so they may be fractional.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FootprintReport {
    pub dense_frames: f64,
    pub focused_frames: f64,
    pub tokens_per_frame: u32,
}

impl FootprintReport {
    pub fn new(dense_frames: f64, focused_frames: f64, tokens_per_frame: u32) -> Self {
        Self {
            dense_frames,
            focused_frames,
            tokens_per_frame,
        }
    }

    pub fn dense_tokens(&self) -> f64 {
        self.dense_frames * f64::from(self.tokens_per_frame)
    }

    pub fn focused_tokens(&self) -> f64 {
        self.focused_frames * f64::from(self.tokens_per_frame)
    }

    /// Dense-over-focused token ratio.
    pub fn ratio(&self) -> f64 {
        self.dense_tokens() / self.focused_tokens()
    }
}

/// 85000 -> "85,000".
pub fn group_thousands(value: u64) -> String {
    let digits = value.to_string();
    let mut out = String::with_capacity(digits.len() + digits.len() / 3);
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(c);
    }
    out
}

fn trim_fraction(value: f64) -> String {
    if (value - value.round()).abs() < 1e-9 {
        format!("{:.0}", value)
    } else {
        format!("{:.1}", value)
    }
}

impl std::fmt::Display for FootprintReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(
            f,
            "dense:   {} frames -> {} visual tokens",
            trim_fraction(self.dense_frames),
            group_thousands(self.dense_tokens().round() as u64)
        )?;
        writeln!(
            f,
            "focused: {} frames -> {} visual tokens",
            trim_fraction(self.focused_frames),
            group_thousands(self.focused_tokens().round() as u64)
        )?;
        write!(
            f,
            "ratio:   ~{}\u{d7} fewer visual tokens ({:.1}\u{d7})",
            self.ratio().round() as u64,
            self.ratio()
        )
    }
}

/// Per-entry evaluation numbers, computed when the entry succeeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntryMetrics {
    pub evidence_frames: usize,
    pub visual_tokens: u64,
    pub rounds_used: u32,
    /// Whether the round-0 gate asked for refinement.
    pub triggered: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact_match: Option<bool>,
    /// Best window-vs-gold IoU; 0 when nothing was retrieved.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub interval_iou: Option<f64>,
    /// Whether any retrieved window overlaps the gold interval.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window_hit: Option<bool>,
}

/// Aggregate over a dataset run. Means cover successful entries only;
/// an empty or fully-failed run reports zeros rather than NaNs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetReport {
    pub mode: String,
    pub entries_total: usize,
    pub entries_failed: usize,
    pub mean_frames: f64,
    pub mean_tokens: f64,
    pub mean_rounds: f64,
    /// Share of successful entries whose first gate triggered.
    pub trigger_rate: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exact_match_accuracy: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_interval_iou: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window_hit_rate: Option<f64>,
}

impl DatasetReport {
    /// Folds per-entry metrics; order-independent.
    pub fn aggregate(
        mode: &str,
        entries_total: usize,
        metrics: &[EntryMetrics],
    ) -> Self {
        let n = metrics.len();
        let mean = |f: &dyn Fn(&EntryMetrics) -> f64| -> f64 {
            if n == 0 {
                0.0
            } else {
                metrics.iter().map(f).sum::<f64>() / n as f64
            }
        };
        let optional_rate = |f: &dyn Fn(&EntryMetrics) -> Option<f64>| -> Option<f64> {
            let values: Vec<f64> = metrics.iter().filter_map(f).collect();
            if values.is_empty() {
                None
            } else {
                Some(values.iter().sum::<f64>() / values.len() as f64)
            }
        };
        Self {
            mode: mode.to_owned(),
            entries_total,
            entries_failed: entries_total - n,
            mean_frames: mean(&|m| m.evidence_frames as f64),
            mean_tokens: mean(&|m| m.visual_tokens as f64),
            mean_rounds: mean(&|m| f64::from(m.rounds_used)),
            trigger_rate: mean(&|m| if m.triggered { 1.0 } else { 0.0 }),
            exact_match_accuracy: optional_rate(&|m| {
                m.exact_match.map(|hit| if hit { 1.0 } else { 0.0 })
            }),
            mean_interval_iou: optional_rate(&|m| m.interval_iou),
            window_hit_rate: optional_rate(&|m| {
                m.window_hit.map(|hit| if hit { 1.0 } else { 0.0 })
            }),
        }
    }
}
