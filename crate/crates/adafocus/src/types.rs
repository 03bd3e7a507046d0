//! Shared domain types: frames, embeddings, queries, evidence sets,
//! generation outputs, and the pipeline configuration.
//!
//! Everything here is immutable after construction and cheap to clone;
//! constructors validate their invariants so downstream code never has to.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Hard cap on preview size. Duration-scaled cluster counts saturate here.
pub const KEYFRAME_CAP: usize = 32;

/// An addressable frame inside one on-disk archive.
///
/// Identity is `(source_id, index)`, never the timestamp: archives may
/// repeat timestamps at segment boundaries.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameRef {
    /// Opaque identifier of the archive this frame belongs to.
    pub source_id: String,
    /// Position in the archive index, starting at 0.
    pub index: u32,
    /// Presentation time in seconds.
    pub timestamp_sec: f64,
    /// Byte offset of the payload within the archive file.
    pub payload_offset: u64,
    /// Payload length in bytes.
    pub payload_len: u32,
}

impl FrameRef {
    /// The deduplication key: frame identity within and across archives.
    pub fn identity(&self) -> (&str, u32) {
        (&self.source_id, self.index)
    }
}

/// Ordering used everywhere a frame list must be deterministic:
/// timestamp, then source, then index.
fn frame_order(a: &FrameRef, b: &FrameRef) -> std::cmp::Ordering {
    a.timestamp_sec
        .total_cmp(&b.timestamp_sec)
        .then_with(|| a.source_id.cmp(&b.source_id))
        .then_with(|| a.index.cmp(&b.index))
}

fn dedup_sort(mut frames: Vec<FrameRef>) -> Vec<FrameRef> {
    let mut seen = std::collections::HashSet::new();
    frames.retain(|f| seen.insert((f.source_id.clone(), f.index)));
    frames.sort_by(frame_order);
    frames
}

/// Unit-norm vector for a frame thumbnail or a query text.
///
/// Normalization happens once, here, so relevance is a plain dot product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Embedding {
    values: Vec<f32>,
}

impl Embedding {
    /// Builds a unit-norm embedding from an arbitrary vector.
    ///
    /// Rejects empty and zero-norm inputs; direction is preserved.
    pub fn normalized(values: Vec<f32>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyEmbedding);
        }
        let norm_sq: f64 = values.iter().map(|&v| f64::from(v) * f64::from(v)).sum();
        let norm = norm_sq.sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::ZeroNorm);
        }
        let inv = 1.0 / norm;
        let values = values.iter().map(|&v| (f64::from(v) * inv) as f32).collect();
        Ok(Self { values })
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    /// Dot product, accumulated in f64. Equals cosine similarity for
    /// unit-norm inputs; clamped to [-1, 1] to absorb rounding.
    pub fn dot(&self, other: &Embedding) -> Result<f64> {
        if self.dim() != other.dim() {
            return Err(Error::DimMismatch {
                left: self.dim(),
                right: other.dim(),
            });
        }
        let sum: f64 = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(&a, &b)| f64::from(a) * f64::from(b))
            .sum();
        Ok(sum.clamp(-1.0, 1.0))
    }
}

/// A text query paired with its embedding.
#[derive(Debug, Clone, PartialEq)]
pub struct Query {
    pub text: String,
    pub embedding: Embedding,
}

impl Query {
    pub fn new(text: impl Into<String>, embedding: Embedding) -> Result<Self> {
        let text = text.into();
        if text.is_empty() {
            return Err(Error::EmptyQuery);
        }
        Ok(Self { text, embedding })
    }
}

/// How a preview was selected.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SamplingMode {
    /// Greedy relevance scoring with a temporal-proximity penalty.
    RelevanceDiversity,
    /// Duration-scaled k-means over embeddings, for globally phrased queries.
    TemporalClustering,
}

/// The compact preview: deduplicated, timestamp-sorted, at most
/// [`KEYFRAME_CAP`] frames.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KeyframeSet {
    frames: Vec<FrameRef>,
    mode: SamplingMode,
}

impl KeyframeSet {
    pub fn new(frames: Vec<FrameRef>, mode: SamplingMode) -> Result<Self> {
        let frames = dedup_sort(frames);
        if frames.len() > KEYFRAME_CAP {
            return Err(Error::KeyframeCapExceeded {
                len: frames.len(),
                cap: KEYFRAME_CAP,
            });
        }
        Ok(Self { frames, mode })
    }

    pub fn frames(&self) -> &[FrameRef] {
        &self.frames
    }

    pub fn mode(&self) -> SamplingMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// Where a refinement target came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroundingSource {
    /// A `[mm:ss]` citation parsed from the answer text.
    Regex,
    /// Argmax over per-frame attention mass.
    Attention,
    /// Uniformly random center; used only by the random-retrieval ablation.
    Random,
}

/// A short high-resolution window decoded around a target timestamp.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RetrievedWindow {
    pub target_sec: f64,
    pub half_width_sec: f64,
    pub frames: Vec<FrameRef>,
    pub grounding_source: GroundingSource,
}

/// Evidence fed to the answer model: preview plus every retrieved window,
/// deduplicated by identity and sorted by timestamp.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvidenceSet {
    frames: Vec<FrameRef>,
    rounds: u32,
}

impl EvidenceSet {
    /// Starts from a preview; zero refinement rounds applied.
    pub fn from_preview(preview: &KeyframeSet) -> Self {
        Self {
            frames: preview.frames().to_vec(),
            rounds: 0,
        }
    }

    /// Builds evidence directly from a frame list (dense-oracle mode).
    pub fn from_frames(frames: Vec<FrameRef>) -> Self {
        Self {
            frames: dedup_sort(frames),
            rounds: 0,
        }
    }

    /// Union with a retrieved window; counts one refinement round.
    /// Frames already present are dropped, the rest merge in timestamp order.
    pub fn union_with(&self, window: &RetrievedWindow) -> Self {
        let mut frames = self.frames.clone();
        frames.extend(window.frames.iter().cloned());
        Self {
            frames: dedup_sort(frames),
            rounds: self.rounds + 1,
        }
    }

    pub fn frames(&self) -> &[FrameRef] {
        &self.frames
    }

    pub fn rounds(&self) -> u32 {
        self.rounds
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

/// One answer-model output: text, per-token log-probabilities, and
/// optionally one aggregated attention scalar per evidence frame.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResult {
    pub text: String,
    pub token_logprobs: Vec<f64>,
    pub frame_attention: Option<Vec<f64>>,
}

impl GenerationResult {
    pub fn new(text: impl Into<String>, token_logprobs: Vec<f64>) -> Result<Self> {
        let out = Self {
            text: text.into(),
            token_logprobs,
            frame_attention: None,
        };
        out.validate()?;
        Ok(out)
    }

    pub fn with_attention(mut self, frame_attention: Vec<f64>) -> Result<Self> {
        self.frame_attention = Some(frame_attention);
        self.validate()?;
        Ok(self)
    }

    /// Number of generated tokens.
    pub fn token_count(&self) -> usize {
        self.token_logprobs.len()
    }

    /// Checks the construction invariants. Useful after deserializing a
    /// result from a script file or a wire response, which bypasses the
    /// constructors.
    pub fn validate(&self) -> Result<()> {
        if self.token_logprobs.is_empty() {
            return Err(Error::EmptyGeneration);
        }
        for (index, &value) in self.token_logprobs.iter().enumerate() {
            if !value.is_finite() || value > 0.0 {
                return Err(Error::InvalidLogProb { index, value });
            }
        }
        if let Some(attention) = &self.frame_attention {
            for (index, &value) in attention.iter().enumerate() {
                if !value.is_finite() || value < 0.0 {
                    return Err(Error::InvalidAttention { index, value });
                }
            }
        }
        Ok(())
    }
}

/// All pipeline hyperparameters plus artifact-level settings.
///
/// `cluster_cap` and `seconds_per_cluster` are fixed constants of the
/// duration-scaled cluster count; they are carried here so traces can
/// record the full configuration, but no CLI flag changes them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineConfig {
    /// Preview budget for the relevance-diversity route.
    pub k_base: usize,
    /// Per-second decay of the temporal-proximity penalty.
    pub alpha: f64,
    /// Weight of the pairwise penalty in the diagnostic objective.
    pub lambda_d: f64,
    /// Routing threshold: below this max relevance, switch to clustering.
    pub tau_global: f64,
    /// Base of the length-calibrated confidence threshold (log domain).
    pub gamma0: f64,
    /// Length-calibration slope; 0 gives a fixed threshold.
    pub beta: f64,
    /// Probability-domain confidence threshold; `gamma0 = ln(tau)` with
    /// `beta = 0` makes the two presentations one mechanism.
    pub tau: f64,
    /// Retrieval window half-width in seconds.
    pub delta_w_sec: f64,
    /// Refinement round cap.
    pub n_max: u32,
    /// Visual tokens charged per evidence frame.
    pub tokens_per_frame: u32,
    /// Upper bound on the cluster count (fixed).
    pub cluster_cap: usize,
    /// Seconds of video per cluster before the cap (fixed).
    pub seconds_per_cluster: u32,
    /// Seed for every randomized component (k-means init, ablations).
    pub rng_seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            k_base: 8,
            alpha: 0.5,
            lambda_d: 1.0,
            tau_global: 0.25,
            gamma0: 0.97f64.ln(),
            beta: 0.0,
            tau: 0.97,
            delta_w_sec: 1.5,
            n_max: 3,
            tokens_per_frame: 256,
            cluster_cap: KEYFRAME_CAP,
            seconds_per_cluster: 60,
            rng_seed: 0,
        }
    }
}

impl PipelineConfig {
    /// Sets the probability-domain threshold and keeps `gamma0` in sync.
    pub fn with_tau(mut self, tau: f64) -> Self {
        self.tau = tau;
        self.gamma0 = tau.ln();
        self
    }

    pub fn validate(&self) -> Result<()> {
        fn fail(msg: String) -> Result<()> {
            Err(Error::Config(msg))
        }
        if self.k_base < 1 || self.k_base > self.cluster_cap {
            return fail(format!(
                "k_base must be in 1..={}, got {}",
                self.cluster_cap, self.k_base
            ));
        }
        if self.alpha.is_nan() || self.alpha <= 0.0 {
            return fail(format!("alpha must be > 0, got {}", self.alpha));
        }
        if self.lambda_d.is_nan() || self.lambda_d < 0.0 {
            return fail(format!("lambda_d must be >= 0, got {}", self.lambda_d));
        }
        if !(-1.0..=1.0).contains(&self.tau_global) {
            return fail(format!(
                "tau_global must be in [-1, 1], got {}",
                self.tau_global
            ));
        }
        if !self.gamma0.is_finite() {
            return fail(format!("gamma0 must be finite, got {}", self.gamma0));
        }
        if self.beta.is_nan() || self.beta < 0.0 {
            return fail(format!("beta must be >= 0, got {}", self.beta));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return fail(format!("tau must be in (0, 1], got {}", self.tau));
        }
        if self.delta_w_sec.is_nan() || self.delta_w_sec <= 0.0 {
            return fail(format!("delta_w must be > 0, got {}", self.delta_w_sec));
        }
        if self.tokens_per_frame < 1 {
            return fail(format!(
                "tokens_per_frame must be >= 1, got {}",
                self.tokens_per_frame
            ));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn frame(index: u32, timestamp_sec: f64) -> FrameRef {
        FrameRef {
            source_id: "test".into(),
            index,
            timestamp_sec,
            payload_offset: 0,
            payload_len: 0,
        }
    }

    #[test]
    fn normalize_three_four_five() {
        let e = Embedding::normalized(vec![3.0, 4.0]).unwrap();
        assert_abs_diff_eq!(e.values()[0], 0.6, epsilon = 1e-6);
        assert_abs_diff_eq!(e.values()[1], 0.8, epsilon = 1e-6);
    }

    #[test]
    fn normalize_already_unit() {
        let e = Embedding::normalized(vec![1.0, 0.0]).unwrap();
        assert_eq!(e.values(), &[1.0, 0.0]);
    }

    #[test]
    fn normalize_rejects_zero_and_empty() {
        assert!(matches!(
            Embedding::normalized(vec![0.0, 0.0]),
            Err(Error::ZeroNorm)
        ));
        assert!(matches!(
            Embedding::normalized(vec![]),
            Err(Error::EmptyEmbedding)
        ));
    }

    #[test]
    fn dot_requires_matching_dims() {
        let a = Embedding::normalized(vec![1.0, 0.0]).unwrap();
        let b = Embedding::normalized(vec![1.0, 0.0, 0.0]).unwrap();
        assert!(matches!(
            a.dot(&b),
            Err(Error::DimMismatch { left: 2, right: 3 })
        ));
    }

    #[test]
    fn query_rejects_empty_text() {
        let e = Embedding::normalized(vec![1.0]).unwrap();
        assert!(matches!(Query::new("", e), Err(Error::EmptyQuery)));
    }

    #[test]
    fn keyframe_set_dedups_and_sorts() {
        let set = KeyframeSet::new(
            vec![frame(2, 20.0), frame(1, 10.0), frame(2, 20.0)],
            SamplingMode::RelevanceDiversity,
        )
        .unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set.frames()[0].index, 1);
        assert_eq!(set.frames()[1].index, 2);
    }

    #[test]
    fn keyframe_set_enforces_cap() {
        let frames: Vec<_> = (0..33).map(|i| frame(i, f64::from(i))).collect();
        assert!(matches!(
            KeyframeSet::new(frames, SamplingMode::TemporalClustering),
            Err(Error::KeyframeCapExceeded { len: 33, cap: 32 })
        ));
    }

    #[test]
    fn evidence_union_dedups_and_counts_rounds() {
        let preview = KeyframeSet::new(
            vec![frame(0, 0.0), frame(5, 5.0)],
            SamplingMode::RelevanceDiversity,
        )
        .unwrap();
        let evidence = EvidenceSet::from_preview(&preview);
        assert_eq!(evidence.rounds(), 0);

        let window = RetrievedWindow {
            target_sec: 5.0,
            half_width_sec: 1.5,
            frames: vec![frame(4, 4.0), frame(5, 5.0), frame(6, 6.0)],
            grounding_source: GroundingSource::Regex,
        };
        let merged = evidence.union_with(&window);
        assert_eq!(merged.rounds(), 1);
        let indices: Vec<u32> = merged.frames().iter().map(|f| f.index).collect();
        assert_eq!(indices, vec![0, 4, 5, 6]);
    }

    #[test]
    fn generation_result_rejects_bad_values() {
        assert!(matches!(
            GenerationResult::new("x", vec![]),
            Err(Error::EmptyGeneration)
        ));
        assert!(matches!(
            GenerationResult::new("x", vec![-0.1, 0.2]),
            Err(Error::InvalidLogProb { index: 1, .. })
        ));
        let ok = GenerationResult::new("x", vec![-0.1, 0.0]).unwrap();
        assert!(matches!(
            ok.with_attention(vec![0.5, -0.1]),
            Err(Error::InvalidAttention { index: 1, .. })
        ));
    }

    #[test]
    fn default_config_matches_stated_values() {
        let c = PipelineConfig::default();
        assert_eq!(c.k_base, 8);
        assert_eq!(c.delta_w_sec, 1.5);
        assert_eq!(c.n_max, 3);
        assert_eq!(c.tau, 0.97);
        assert_eq!(c.gamma0, 0.97f64.ln());
        assert_eq!(c.cluster_cap, 32);
        assert_eq!(c.seconds_per_cluster, 60);
        c.validate().unwrap();
    }

    #[test]
    fn with_tau_keeps_gamma0_in_sync() {
        let c = PipelineConfig::default().with_tau(0.95);
        assert_eq!(c.gamma0, 0.95f64.ln());
        assert_eq!(c.tau, 0.95);
    }
}
