//! The refinement loop: preview, generate, gate, ground, retrieve,
//! repeat. One [`run_pipeline`] call answers one query over one archive;
//! [`run_dataset`] fans entries of a manifest out over worker threads
//! and aggregates their metrics.
//!
//! Evidence payloads are fetched exactly once per distinct frame and
//! held for the rest of the run, so in zero-cache I/O the archive gives
//! up only the bytes the final evidence set actually contains.

pub mod manifest;
pub mod report;
pub mod trace;

use std::collections::HashMap;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::archive::{read_embedding_sidecar, ArchiveReader, ReadAccounting};
use crate::backends::{AnswerModel, EmbeddingProvider, GenerateRequest, ScriptedAnswerModel};
use crate::error::{Error, Result};
use crate::gate::should_refine;
use crate::grounding::{ground, GroundingOutcome};
use crate::pipeline::manifest::{DatasetManifest, ManifestEntry};
use crate::pipeline::report::{
    interval_iou, normalize_answer, token_footprint, DatasetReport, EntryMetrics,
};
use crate::pipeline::trace::{
    AcceptedBy, PipelineTrace, PreviewRecord, RoundRecord, StageTimings, TRACE_VERSION,
};
use crate::prompt;
use crate::sampler::{one_fps_pool, sample_preview};
use crate::types::{
    EvidenceSet, FrameRef, GroundingSource, PipelineConfig, Query, RetrievedWindow,
};

/// Inference strategy for a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Preview evidence, one generate call, no refinement.
    Baseline,
    /// Gate loop that re-generates on the same evidence instead of
    /// retrieving; `rounds` bounds the re-generations.
    CotOnly { rounds: u32 },
    /// The full loop: gate, ground, retrieve, re-generate.
    AdaFocus,
    /// Every archive frame as evidence, one generate call.
    DenseOracle,
    /// The full loop with uniformly random window centers in place of
    /// grounding; the retrieval ablation.
    RandomRetrieval,
}

impl Mode {
    pub fn name(&self) -> &'static str {
        match self {
            Mode::Baseline => "baseline",
            Mode::CotOnly { .. } => "cot_only",
            Mode::AdaFocus => "adafocus",
            Mode::DenseOracle => "dense_oracle",
            Mode::RandomRetrieval => "random_retrieval",
        }
    }

    /// Parses a mode name; `cot_only` takes the default single re-think.
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "baseline" => Ok(Mode::Baseline),
            "cot_only" => Ok(Mode::CotOnly { rounds: 1 }),
            "adafocus" => Ok(Mode::AdaFocus),
            "dense_oracle" => Ok(Mode::DenseOracle),
            "random_retrieval" => Ok(Mode::RandomRetrieval),
            other => Err(Error::Config(format!(
                "unknown mode {other:?}; expected baseline, cot_only, adafocus, dense_oracle, or random_retrieval"
            ))),
        }
    }
}

/// Whether payloads are read on demand or all up front.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IoMode {
    /// Seek-and-read exactly the frames the run touches.
    ZeroCache,
    /// Read the whole payload region first; the comparison baseline.
    Preload,
}

/// Everything one pipeline execution produced.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub answer: String,
    pub evidence: EvidenceSet,
    pub trace: PipelineTrace,
    /// Physical I/O meter of the archive handle.
    pub accounting: ReadAccounting,
    pub archive_len: u64,
    pub generate_calls: u32,
}

fn millis(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

/// Payload store keyed by frame index; evidence frames all come from
/// one archive per run.
struct PayloadStore {
    payloads: HashMap<u32, Vec<u8>>,
}

impl PayloadStore {
    fn new() -> Self {
        Self {
            payloads: HashMap::new(),
        }
    }

    /// Fetches any of `frames` not yet held. In preload mode everything
    /// is already here and disk stays untouched.
    fn ensure(&mut self, reader: &mut ArchiveReader, frames: &[FrameRef]) -> Result<()> {
        let missing: Vec<usize> = frames
            .iter()
            .filter(|f| !self.payloads.contains_key(&f.index))
            .map(|f| f.index as usize)
            .collect();
        if !missing.is_empty() {
            for (frame, payload) in reader.read_payloads(&missing)? {
                self.payloads.insert(frame.index, payload);
            }
        }
        Ok(())
    }

    fn insert_all(&mut self, decoded: Vec<(FrameRef, Vec<u8>)>) {
        for (frame, payload) in decoded {
            self.payloads.insert(frame.index, payload);
        }
    }

    fn aligned(&self, evidence: &EvidenceSet) -> Result<Vec<Vec<u8>>> {
        evidence
            .frames()
            .iter()
            .map(|f| {
                self.payloads.get(&f.index).cloned().ok_or_else(|| {
                    Error::Config(format!("no payload fetched for frame {}", f.index))
                })
            })
            .collect()
    }
}

fn payload_bytes(frames: &[FrameRef]) -> u64 {
    frames.iter().map(|f| u64::from(f.payload_len)).sum()
}

/// Runs one query over one archive and returns the answer, the final
/// evidence, the trace, and the I/O meter.
#[allow(clippy::too_many_arguments)]
pub fn run_pipeline(
    archive_path: impl AsRef<Path>,
    sidecar_path: impl AsRef<Path>,
    query_text: &str,
    config: &PipelineConfig,
    embedder: &dyn EmbeddingProvider,
    model: &mut dyn AnswerModel,
    mode: Mode,
    io: IoMode,
) -> Result<PipelineRun> {
    config.validate()?;
    let mut reader = ArchiveReader::open(archive_path)?;
    let sidecar = read_embedding_sidecar(sidecar_path)?;
    let query = Query::new(query_text, embedder.embed_text(query_text)?)?;
    let duration = reader.duration_sec();

    let mut store = PayloadStore::new();
    if io == IoMode::Preload {
        let everything = reader.preload_all()?;
        store.insert_all(everything);
    }

    // Preview (or, for the dense oracle, the whole frame list).
    let preview_start = Instant::now();
    let (mut evidence, preview_record) = match mode {
        Mode::DenseOracle => {
            let evidence = EvidenceSet::from_frames(reader.frame_refs());
            store.ensure(&mut reader, evidence.frames())?;
            (evidence, None)
        }
        _ => {
            let pool_full = crate::archive::embedded_pool(&reader, &sidecar)?;
            let pool = one_fps_pool(&pool_full);
            let preview = sample_preview(&pool, &query, duration, config)?;
            let evidence = EvidenceSet::from_preview(&preview.keyframes);
            store.ensure(&mut reader, evidence.frames())?;
            let record = PreviewRecord {
                pool_size: pool.len(),
                routing: preview.routing,
                max_relevance: preview.max_relevance,
                sampling_mode: preview.keyframes.mode(),
                keyframe_timestamps_sec: evidence
                    .frames()
                    .iter()
                    .map(|f| f.timestamp_sec)
                    .collect(),
                payload_bytes: payload_bytes(evidence.frames()),
                wall_ms: millis(preview_start),
            };
            (evidence, Some(record))
        }
    };
    let preview_size = evidence.len();

    let mut retrievals_left = match mode {
        Mode::AdaFocus | Mode::RandomRetrieval => config.n_max,
        Mode::Baseline | Mode::DenseOracle | Mode::CotOnly { .. } => 0,
    };
    let mut rethinks_left = match mode {
        Mode::CotOnly { rounds } => rounds,
        _ => 0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(config.rng_seed);

    let mut rounds: Vec<RoundRecord> = Vec::new();
    let mut template = prompt::GROUNDED_QA;
    let mut generate_calls = 0_u32;
    let (answer, accepted_by) = loop {
        let round = rounds.len() as u32;
        let payloads = store.aligned(&evidence)?;
        let generate_start = Instant::now();
        let generation = model.generate(&GenerateRequest {
            query: &query,
            evidence: &evidence,
            payloads: &payloads,
            template_id: template,
        })?;
        generate_calls += 1;
        let decision = should_refine(&generation, config)?;
        let mut record = RoundRecord {
            round,
            evidence_size: evidence.len(),
            confidence: decision.confidence,
            threshold: decision.threshold,
            triggered: decision.triggered,
            grounding: None,
            window_timestamps_sec: Vec::new(),
            window_payload_bytes: 0,
            timings: StageTimings {
                generate_ms: millis(generate_start),
                ..StageTimings::default()
            },
        };

        if !decision.triggered {
            rounds.push(record);
            break (generation.text, AcceptedBy::Gate);
        }
        if rethinks_left > 0 {
            rethinks_left -= 1;
            template = prompt::COT_REFLECT;
            rounds.push(record);
            continue;
        }
        if retrievals_left == 0 {
            rounds.push(record);
            break (generation.text, AcceptedBy::RoundCap);
        }

        // Pick the retrieval target.
        let (target_sec, source) = match mode {
            Mode::AdaFocus => {
                let ground_start = Instant::now();
                let outcome = ground(&generation, evidence.frames(), duration)?;
                record.timings.ground_ms = millis(ground_start);
                record.grounding = Some(outcome);
                match outcome {
                    GroundingOutcome::Failed => {
                        rounds.push(record);
                        break (generation.text, AcceptedBy::GroundingFailure);
                    }
                    GroundingOutcome::Grounded { target_sec, source } => (target_sec, source),
                }
            }
            Mode::RandomRetrieval => {
                let target_sec = rng.random::<f64>() * duration;
                record.grounding = Some(GroundingOutcome::Grounded {
                    target_sec,
                    source: GroundingSource::Random,
                });
                (target_sec, GroundingSource::Random)
            }
            _ => unreachable!("only retrieval modes hold a retrieval budget"),
        };
        retrievals_left -= 1;

        // Retrieve the window; only frames new to the evidence cost bytes.
        let retrieve_start = Instant::now();
        let (start, end) = reader.window_indices(target_sec, config.delta_w_sec)?;
        let window_frames: Vec<FrameRef> = (start..end).map(|i| reader.frame_ref(i)).collect();
        let window = RetrievedWindow {
            target_sec,
            half_width_sec: config.delta_w_sec,
            frames: window_frames,
            grounding_source: source,
        };
        let next = evidence.union_with(&window);
        let added: Vec<FrameRef> = next
            .frames()
            .iter()
            .filter(|f| !evidence.frames().contains(f))
            .cloned()
            .collect();
        store.ensure(&mut reader, &added)?;
        record.window_timestamps_sec = window.frames.iter().map(|f| f.timestamp_sec).collect();
        record.window_payload_bytes = payload_bytes(&added);
        record.timings.retrieve_ms = millis(retrieve_start);
        rounds.push(record);
        evidence = next;
        template = prompt::GROUNDED_QA;
    };

    // |E| can never outgrow the preview plus one full window per
    // retrieval; the closed interval adds at most one boundary frame.
    let fps = f64::from(reader.header().fps_millis) / 1000.0;
    let window_cap = (2.0 * config.delta_w_sec * fps).ceil() as usize + 1;
    debug_assert!(
        evidence.len() <= preview_size + config.n_max as usize * window_cap,
        "evidence {} exceeds budget {} + {} * {}",
        evidence.len(),
        preview_size,
        config.n_max,
        window_cap,
    );

    let trace = PipelineTrace {
        version: TRACE_VERSION,
        source_id: reader.source_id().to_owned(),
        query: query_text.to_owned(),
        mode: mode.name().to_owned(),
        duration_sec: duration,
        preview: preview_record,
        rounds,
        answer: answer.clone(),
        evidence_frames: evidence.len(),
        visual_tokens: token_footprint(&evidence, config.tokens_per_frame),
        rounds_used: generate_calls - 1,
        accepted_by,
    };
    Ok(PipelineRun {
        answer,
        evidence,
        trace,
        accounting: reader.accounting(),
        archive_len: reader.file_len(),
        generate_calls,
    })
}

/// Result of one manifest entry: a run with metrics, or the error that
/// stopped it.
#[derive(Debug)]
pub struct EntryOutcome {
    pub index: usize,
    pub query: String,
    pub run: Option<PipelineRun>,
    pub metrics: Option<EntryMetrics>,
    pub error: Option<String>,
}

/// Retrieval windows of a run as clamped closed intervals.
fn window_intervals(run: &PipelineRun, config: &PipelineConfig) -> Vec<[f64; 2]> {
    let duration = run.trace.duration_sec;
    run.trace
        .rounds
        .iter()
        .filter_map(|r| match r.grounding {
            Some(GroundingOutcome::Grounded { target_sec, .. }) => Some([
                (target_sec - config.delta_w_sec).max(0.0),
                (target_sec + config.delta_w_sec).min(duration),
            ]),
            _ => None,
        })
        .collect()
}

fn entry_metrics(
    run: &PipelineRun,
    entry: &ManifestEntry,
    config: &PipelineConfig,
) -> Result<EntryMetrics> {
    let exact_match = entry.gold_answer.as_ref().map(|gold| {
        normalize_answer(&run.answer) == normalize_answer(gold)
    });
    let (iou, hit) = match entry.gold_interval {
        None => (None, None),
        Some(gold) => {
            let mut best = 0.0_f64;
            let mut any_hit = false;
            for window in window_intervals(run, config) {
                let value = interval_iou(window, gold)?;
                best = best.max(value);
                if value > 0.0 {
                    any_hit = true;
                }
            }
            (Some(best), Some(any_hit))
        }
    };
    Ok(EntryMetrics {
        evidence_frames: run.evidence.len(),
        visual_tokens: run.trace.visual_tokens,
        rounds_used: run.trace.rounds_used,
        triggered: run.trace.rounds.first().is_some_and(|r| r.triggered),
        exact_match,
        interval_iou: iou,
        window_hit: hit,
    })
}

/// Runs one manifest entry end to end, validating its gold interval
/// against the real archive duration.
pub fn run_entry(
    manifest: &DatasetManifest,
    index: usize,
    config: &PipelineConfig,
    embedder: &dyn EmbeddingProvider,
    model: &mut dyn AnswerModel,
    mode: Mode,
    io: IoMode,
) -> EntryOutcome {
    let entry = &manifest.entries()[index];
    let (archive_path, sidecar_path) = manifest.resolve(entry);
    let attempt = (|| -> Result<(PipelineRun, EntryMetrics)> {
        let run = run_pipeline(
            &archive_path,
            &sidecar_path,
            &entry.query,
            config,
            embedder,
            model,
            mode,
            io,
        )?;
        if let Some([_, end]) = entry.gold_interval {
            if end > run.trace.duration_sec {
                return Err(Error::Manifest(format!(
                    "gold interval ends at {end} s but the archive lasts {} s",
                    run.trace.duration_sec
                )));
            }
        }
        let metrics = entry_metrics(&run, entry, config)?;
        Ok((run, metrics))
    })();
    match attempt {
        Ok((run, metrics)) => EntryOutcome {
            index,
            query: entry.query.clone(),
            run: Some(run),
            metrics: Some(metrics),
            error: None,
        },
        Err(error) => EntryOutcome {
            index,
            query: entry.query.clone(),
            run: None,
            metrics: None,
            error: Some(error.to_string()),
        },
    }
}

/// Builds per-entry backends: a scripted model when the entry carries a
/// script, otherwise whatever `fallback` constructs.
pub fn model_for_entry(
    entry: &ManifestEntry,
    fallback: &(dyn Fn() -> Result<Box<dyn AnswerModel>> + Sync),
) -> Result<Box<dyn AnswerModel>> {
    match &entry.script {
        Some(steps) => Ok(Box::new(ScriptedAnswerModel::new(steps.clone()))),
        None => fallback(),
    }
}

/// Runs every manifest entry, fanning out over `workers` threads. Entry
/// failures are recorded, never fatal; outcomes come back in manifest
/// order with an aggregate report over the successes.
pub fn run_dataset(
    manifest: &DatasetManifest,
    config: &PipelineConfig,
    embedder_factory: &(dyn Fn() -> Box<dyn EmbeddingProvider> + Sync),
    model_factory: &(dyn Fn(&ManifestEntry) -> Result<Box<dyn AnswerModel>> + Sync),
    mode: Mode,
    io: IoMode,
    workers: usize,
) -> (Vec<EntryOutcome>, DatasetReport) {
    let workers = workers.max(1).min(manifest.len().max(1));
    let next = std::sync::atomic::AtomicUsize::new(0);
    let mut slots_inner: Vec<Option<EntryOutcome>> = Vec::new();
    slots_inner.resize_with(manifest.len(), || None);
    let slots = std::sync::Mutex::new(slots_inner);

    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| {
                let embedder = embedder_factory();
                loop {
                    let index = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                    if index >= manifest.len() {
                        break;
                    }
                    let entry = &manifest.entries()[index];
                    let outcome = match model_factory(entry) {
                        Ok(mut model) => run_entry(
                            manifest,
                            index,
                            config,
                            embedder.as_ref(),
                            model.as_mut(),
                            mode,
                            io,
                        ),
                        Err(error) => EntryOutcome {
                            index,
                            query: entry.query.clone(),
                            run: None,
                            metrics: None,
                            error: Some(error.to_string()),
                        },
                    };
                    slots.lock().expect("no panics hold the lock")[index] = Some(outcome);
                }
            });
        }
    });

    let outcomes: Vec<EntryOutcome> = slots
        .into_inner()
        .expect("no panics hold the lock")
        .into_iter()
        .map(|slot| slot.expect("every index visited"))
        .collect();
    let metrics: Vec<EntryMetrics> = outcomes.iter().filter_map(|o| o.metrics).collect();
    let report = DatasetReport::aggregate(mode.name(), manifest.len(), &metrics);
    (outcomes, report)
}
