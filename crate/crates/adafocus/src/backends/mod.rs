//! Model backends behind two small traits: an embedding provider for
//! preview scoring and an answer model for generation. The mock
//! implementations are fully deterministic, which is what lets pipeline
//! tests freeze exact traces; the HTTP client in [`http`] bridges to a
//! real inference server over a versioned JSON protocol.

pub mod http;

use std::collections::VecDeque;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grounding::format_citation;
use crate::types::{Embedding, EvidenceSet, GenerationResult, Query};

/// Scores text and frames into one shared embedding space.
pub trait EmbeddingProvider: Send {
    /// Output dimension, constant over the provider's lifetime.
    fn dim(&self) -> usize;
    fn embed_text(&self, text: &str) -> Result<Embedding>;
    fn embed_frame(&self, payload: &[u8]) -> Result<Embedding>;
    /// Whether calls may run concurrently from several threads.
    fn concurrent_safe(&self) -> bool;
}

/// One generation call. Payloads align 1:1 with `evidence.frames()`.
pub struct GenerateRequest<'a> {
    pub query: &'a Query,
    pub evidence: &'a EvidenceSet,
    pub payloads: &'a [Vec<u8>],
    pub template_id: &'a str,
}

/// Produces an answer with per-token log-probabilities and optionally
/// one attention scalar per evidence frame.
pub trait AnswerModel: Send {
    fn generate(&mut self, request: &GenerateRequest<'_>) -> Result<GenerationResult>;
    /// Whether calls may run concurrently from several threads.
    fn concurrent_safe(&self) -> bool;
}

/// Deterministic embedding: a keyed hash of the input seeds a stream of
/// gaussian draws, normalized to the unit sphere. Identical input and
/// seed always produce the identical vector.
pub fn mock_embed(input: &[u8], dim: usize, seed: u64) -> Result<Embedding> {
    if dim < 2 {
        return Err(Error::Config(format!("mock embedding dim must be >= 2, got {dim}")));
    }
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(input);
    let digest = hasher.finalize();
    let mut values = Vec::with_capacity(dim);
    // Box-Muller over a hash-keyed counter stream; two draws per round.
    let mut counter = 0_u64;
    while values.len() < dim {
        let mut block = Sha256::new();
        block.update(digest);
        block.update(counter.to_le_bytes());
        counter += 1;
        let bytes = block.finalize();
        let u1 = unit_f64(&bytes[0..8]);
        let u2 = unit_f64(&bytes[8..16]);
        let r = (-2.0 * (1.0 - u1).ln()).sqrt();
        let theta = std::f64::consts::TAU * u2;
        values.push((r * theta.cos()) as f32);
        if values.len() < dim {
            values.push((r * theta.sin()) as f32);
        }
    }
    Embedding::normalized(values)
}

/// Maps 8 hash bytes to a float in [0, 1).
fn unit_f64(bytes: &[u8]) -> f64 {
    let x = u64::from_le_bytes(bytes.try_into().expect("8 bytes"));
    (x >> 11) as f64 * (1.0 / 9007199254740992.0)
}

/// Hash-keyed [`EmbeddingProvider`] for tests and offline runs.
#[derive(Debug, Clone)]
pub struct MockEmbedder {
    dim: usize,
    seed: u64,
}

impl MockEmbedder {
    pub fn new(dim: usize, seed: u64) -> Self {
        Self { dim, seed }
    }
}

impl EmbeddingProvider for MockEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_text(&self, text: &str) -> Result<Embedding> {
        let mut input = b"text\0".to_vec();
        input.extend_from_slice(text.as_bytes());
        mock_embed(&input, self.dim, self.seed)
    }

    fn embed_frame(&self, payload: &[u8]) -> Result<Embedding> {
        let mut input = b"frame\0".to_vec();
        input.extend_from_slice(payload);
        mock_embed(&input, self.dim, self.seed)
    }

    fn concurrent_safe(&self) -> bool {
        true
    }
}

/// One step of a scripted generation sequence.
///
/// Log-probabilities come either verbatim from `token_logprobs` or as a
/// uniform sequence from `token_probability` (length `token_count`,
/// default 8). Attention comes either verbatim from `frame_attention`
/// or as a one-hot at the evidence frame nearest `attention_peak_sec`.
#[derive(Debug, Clone, Default, serde::Serialize, serde::Deserialize)]
pub struct ScriptStep {
    /// When set, the call must be round number this value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub expect_round: Option<u32>,
    /// When set, the call's evidence must hold at least this many frames.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_evidence: Option<usize>,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_logprobs: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_probability: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_count: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame_attention: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attention_peak_sec: Option<f64>,
}

impl ScriptStep {
    /// Uniform-probability step with the default 8 tokens.
    pub fn uniform(text: impl Into<String>, probability: f64) -> Self {
        Self {
            text: text.into(),
            token_probability: Some(probability),
            ..Self::default()
        }
    }
}

/// Replays a fixed list of steps, one per generate call, in order.
/// Running past the end or violating a step's expectation is an error,
/// so an orchestration bug cannot silently look like a model answer.
pub struct ScriptedAnswerModel {
    steps: VecDeque<ScriptStep>,
    served: usize,
}

impl ScriptedAnswerModel {
    pub fn new(steps: Vec<ScriptStep>) -> Self {
        Self {
            steps: steps.into(),
            served: 0,
        }
    }

    /// Steps consumed so far.
    pub fn served(&self) -> usize {
        self.served
    }

    /// Steps not yet consumed.
    pub fn remaining(&self) -> usize {
        self.steps.len()
    }
}

impl AnswerModel for ScriptedAnswerModel {
    fn generate(&mut self, request: &GenerateRequest<'_>) -> Result<GenerationResult> {
        let step = self
            .steps
            .pop_front()
            .ok_or(Error::ScriptExhausted { served: self.served })?;
        if let Some(round) = step.expect_round {
            if round as usize != self.served {
                return Err(Error::ScriptMismatch {
                    step: self.served,
                    expected: format!("round {round}"),
                    observed: format!("round {}", self.served),
                });
            }
        }
        if let Some(min) = step.min_evidence {
            if request.evidence.len() < min {
                return Err(Error::ScriptMismatch {
                    step: self.served,
                    expected: format!("at least {min} evidence frames"),
                    observed: format!("{} evidence frames", request.evidence.len()),
                });
            }
        }

        let logprobs = match (&step.token_logprobs, step.token_probability) {
            (Some(explicit), _) => explicit.clone(),
            (None, Some(p)) => {
                if !(p > 0.0 && p <= 1.0) {
                    return Err(Error::Config(format!(
                        "script step {} token_probability must be in (0, 1], got {p}",
                        self.served
                    )));
                }
                vec![p.ln(); step.token_count.unwrap_or(8)]
            }
            (None, None) => {
                return Err(Error::Config(format!(
                    "script step {} needs token_logprobs or token_probability",
                    self.served
                )))
            }
        };

        let attention = match (&step.frame_attention, step.attention_peak_sec) {
            (Some(explicit), _) => Some(explicit.clone()),
            (None, Some(peak)) => {
                let frames = request.evidence.frames();
                let mut best = 0;
                for i in 1..frames.len() {
                    if (frames[i].timestamp_sec - peak).abs()
                        < (frames[best].timestamp_sec - peak).abs()
                    {
                        best = i;
                    }
                }
                let mut one_hot = vec![0.0; frames.len()];
                if !one_hot.is_empty() {
                    one_hot[best] = 1.0;
                }
                Some(one_hot)
            }
            (None, None) => None,
        };

        let mut out = GenerationResult::new(step.text, logprobs)?;
        if let Some(attention) = attention {
            if attention.len() != request.evidence.len() {
                return Err(Error::AttentionMismatch {
                    got: attention.len(),
                    expected: request.evidence.len(),
                });
            }
            out = out.with_attention(attention)?;
        }
        self.served += 1;
        Ok(out)
    }

    fn concurrent_safe(&self) -> bool {
        false
    }
}

/// Self-contained simulated answer model for demos and benchmarks.
///
/// The answer, its confidence, and its attention all derive from a hash
/// of seed, query, and evidence identity, so a run is reproducible
/// without any script. Confidence rises with evidence size, which gives
/// the refinement loop realistic accept/retry dynamics.
#[derive(Debug, Clone)]
pub struct MockAnswerModel {
    seed: u64,
}

impl MockAnswerModel {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }
}

impl AnswerModel for MockAnswerModel {
    fn generate(&mut self, request: &GenerateRequest<'_>) -> Result<GenerationResult> {
        if request.evidence.is_empty() {
            return Err(Error::EmptyCandidates);
        }
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        hasher.update(request.query.text.as_bytes());
        for frame in request.evidence.frames() {
            hasher.update(frame.source_id.as_bytes());
            hasher.update(frame.index.to_le_bytes());
        }
        let digest = hasher.finalize();

        let noise = unit_f64(&digest[0..8]);
        let p = (0.90 + 0.004 * request.evidence.len() as f64 + 0.06 * noise).clamp(0.5, 0.999);
        let p = (p * 1000.0).round() / 1000.0;

        let frames = request.evidence.frames();
        let pick = usize::from(digest[8]) % frames.len();
        let cited = frames[pick].timestamp_sec.round() as u64;
        let mut attention = vec![0.0; frames.len()];
        attention[pick] = 1.0;

        GenerationResult::new(
            format!("The decisive moment appears around {}.", format_citation(cited)),
            vec![p.ln(); 8],
        )?
        .with_attention(attention)
    }

    fn concurrent_safe(&self) -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{FrameRef, KeyframeSet, SamplingMode};

    fn evidence(timestamps: &[f64]) -> EvidenceSet {
        let frames = timestamps
            .iter()
            .enumerate()
            .map(|(i, &t)| FrameRef {
                source_id: "clip".into(),
                index: i as u32,
                timestamp_sec: t,
                payload_offset: 0,
                payload_len: 1,
            })
            .collect();
        EvidenceSet::from_preview(
            &KeyframeSet::new(frames, SamplingMode::RelevanceDiversity).unwrap(),
        )
    }

    fn query() -> Query {
        Query::new("what happens?", Embedding::normalized(vec![1.0, 0.0]).unwrap()).unwrap()
    }

    fn request<'a>(
        query: &'a Query,
        evidence: &'a EvidenceSet,
        payloads: &'a [Vec<u8>],
    ) -> GenerateRequest<'a> {
        GenerateRequest {
            query,
            evidence,
            payloads,
            template_id: crate::prompt::GROUNDED_QA,
        }
    }

    #[test]
    fn mock_embed_is_deterministic() {
        let a = mock_embed(b"hello", 16, 3).unwrap();
        let b = mock_embed(b"hello", 16, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn mock_embed_distinguishes_inputs_and_seeds() {
        let corpus: Vec<Vec<u8>> = (0..20_u8).map(|i| vec![i, i + 1, i + 2]).collect();
        let mut seen = Vec::new();
        for input in &corpus {
            for seed in [1_u64, 2] {
                let e = mock_embed(input, 8, seed).unwrap();
                assert!(!seen.contains(&e), "collision for {input:?} seed {seed}");
                seen.push(e);
            }
        }
    }

    #[test]
    fn mock_embed_output_is_unit_norm() {
        let e = mock_embed(b"payload", 32, 9).unwrap();
        let norm: f64 = e.values().iter().map(|&v| f64::from(v) * f64::from(v)).sum();
        assert!((norm.sqrt() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn mock_embed_rejects_tiny_dim() {
        assert!(matches!(mock_embed(b"x", 1, 0), Err(Error::Config(_))));
    }

    #[test]
    fn embedder_separates_text_and_frame_domains() {
        let provider = MockEmbedder::new(8, 0);
        let text = provider.embed_text("abc").unwrap();
        let frame = provider.embed_frame(b"abc").unwrap();
        assert_ne!(text, frame);
        assert_eq!(provider.dim(), 8);
    }

    #[test]
    fn scripted_model_replays_in_order_and_exhausts() {
        let mut model = ScriptedAnswerModel::new(vec![
            ScriptStep::uniform("first", 0.9),
            ScriptStep::uniform("second", 0.99),
        ]);
        let q = query();
        let ev = evidence(&[1.0, 2.0]);
        let payloads: Vec<Vec<u8>> = vec![vec![0]; 2];
        let r = request(&q, &ev, &payloads);

        assert_eq!(model.generate(&r).unwrap().text, "first");
        assert_eq!(model.generate(&r).unwrap().text, "second");
        assert!(matches!(
            model.generate(&r),
            Err(Error::ScriptExhausted { served: 2 })
        ));
    }

    #[test]
    fn scripted_model_checks_round_and_evidence_expectations() {
        let mut model = ScriptedAnswerModel::new(vec![ScriptStep {
            expect_round: Some(1),
            ..ScriptStep::uniform("x", 0.9)
        }]);
        let q = query();
        let ev = evidence(&[1.0]);
        let payloads = vec![vec![0_u8]];
        assert!(matches!(
            model.generate(&request(&q, &ev, &payloads)),
            Err(Error::ScriptMismatch { step: 0, .. })
        ));

        let mut model = ScriptedAnswerModel::new(vec![ScriptStep {
            min_evidence: Some(5),
            ..ScriptStep::uniform("x", 0.9)
        }]);
        assert!(matches!(
            model.generate(&request(&q, &ev, &payloads)),
            Err(Error::ScriptMismatch { step: 0, .. })
        ));
    }

    #[test]
    fn scripted_attention_peak_becomes_one_hot() {
        let mut model = ScriptedAnswerModel::new(vec![ScriptStep {
            attention_peak_sec: Some(41.7),
            ..ScriptStep::uniform("x", 0.9)
        }]);
        let q = query();
        let ev = evidence(&[10.0, 42.0, 55.0]);
        let payloads = vec![vec![0_u8]; 3];
        let out = model.generate(&request(&q, &ev, &payloads)).unwrap();
        assert_eq!(out.frame_attention, Some(vec![0.0, 1.0, 0.0]));
    }

    #[test]
    fn scripted_uniform_probability_expands_to_logprobs() {
        let mut model = ScriptedAnswerModel::new(vec![ScriptStep {
            token_count: Some(4),
            ..ScriptStep::uniform("x", 0.95)
        }]);
        let q = query();
        let ev = evidence(&[1.0]);
        let payloads = vec![vec![0_u8]];
        let out = model.generate(&request(&q, &ev, &payloads)).unwrap();
        assert_eq!(out.token_logprobs, vec![0.95_f64.ln(); 4]);
    }

    #[test]
    fn sim_model_is_deterministic_and_cites() {
        let q = query();
        let ev = evidence(&[5.0, 42.0, 90.0]);
        let payloads = vec![vec![0_u8]; 3];
        let a = MockAnswerModel::new(7).generate(&request(&q, &ev, &payloads)).unwrap();
        let b = MockAnswerModel::new(7).generate(&request(&q, &ev, &payloads)).unwrap();
        assert_eq!(a, b);
        assert!(crate::grounding::extract_timestamp(&a.text, 1e9).unwrap().is_some());
        assert_eq!(a.token_count(), 8);
        let c = MockAnswerModel::new(8).generate(&request(&q, &ev, &payloads)).unwrap();
        assert_ne!(a.token_logprobs, c.token_logprobs);
    }

    #[test]
    fn sim_model_confidence_rises_with_evidence() {
        // the deterministic size term dominates once noise is averaged out
        let q = query();
        let payloads = vec![vec![0_u8]; 40];
        let mut small_sum = 0.0;
        let mut large_sum = 0.0;
        for seed in 0..40 {
            let small = evidence(&[1.0, 2.0]);
            let large = evidence(&(0..30).map(f64::from).collect::<Vec<_>>());
            let mut model = MockAnswerModel::new(seed);
            small_sum += model
                .generate(&request(&q, &small, &payloads))
                .unwrap()
                .token_logprobs[0];
            large_sum += model
                .generate(&request(&q, &large, &payloads))
                .unwrap()
                .token_logprobs[0];
        }
        assert!(large_sum > small_sum);
    }
}
