//! Subcommand bodies. Functions return the process exit code; an `Err`
//! anywhere means a configuration or format problem and exits 2.

use std::io::Write as _;
use std::path::{Path, PathBuf};

use adafocus::archive::{
    read_embedding_sidecar, write_archive, write_embedding_sidecar, ArchiveReader,
};
use adafocus::backends::http::{HttpAnswerModel, HttpConfig, AUTH_ENV};
use adafocus::backends::{AnswerModel, EmbeddingProvider, MockAnswerModel, MockEmbedder};
use adafocus::pipeline::manifest::DatasetManifest;
use adafocus::pipeline::report::{DatasetReport, FootprintReport};
use adafocus::pipeline::{
    model_for_entry, run_dataset, run_pipeline, EntryOutcome, IoMode, Mode, PipelineRun,
};
use adafocus::types::PipelineConfig;
use anyhow::{bail, Context};
use sha2::{Digest, Sha256};

use crate::{BackendArgs, BenchArgs, InspectArgs, PackArgs, RunArgs};

fn parse_mode(name: &str, cot_rounds: u32) -> anyhow::Result<Mode> {
    let mode = Mode::parse(name)?;
    Ok(match mode {
        Mode::CotOnly { .. } => Mode::CotOnly { rounds: cot_rounds },
        other => other,
    })
}

fn parse_io(name: &str) -> IoMode {
    match name {
        "preload" => IoMode::Preload,
        _ => IoMode::ZeroCache,
    }
}

/// Embedding dimension: the explicit flag, else the sidecar's.
fn embedding_dim(explicit: Option<usize>, sidecar: &Path) -> anyhow::Result<usize> {
    if let Some(dim) = explicit {
        return Ok(dim);
    }
    let records = read_embedding_sidecar(sidecar)
        .with_context(|| format!("reading sidecar {}", sidecar.display()))?;
    records
        .first()
        .map(|(_, embedding)| embedding.dim())
        .context("sidecar holds no embeddings; pass --embed-dim")
}

type ModelFactory = Box<dyn Fn() -> adafocus::Result<Box<dyn AnswerModel>> + Sync>;

fn model_builder(backend: &BackendArgs, seed: u64) -> anyhow::Result<ModelFactory> {
    match backend.backend.as_str() {
        "http" => {
            let config = match &backend.backend_endpoint {
                Some(endpoint) => {
                    let mut config = HttpConfig::new(endpoint);
                    config.auth_header = std::env::var(AUTH_ENV).ok();
                    config
                }
                None => HttpConfig::from_env(None)?,
            };
            Ok(Box::new(move || {
                Ok(Box::new(HttpAnswerModel::new(config.clone())))
            }))
        }
        _ => Ok(Box::new(move || Ok(Box::new(MockAnswerModel::new(seed))))),
    }
}

/// Line sink for traces and reports: a file path, or "-" for stdout.
fn write_output(dest: &str, content: &str) -> anyhow::Result<()> {
    if dest == "-" {
        let stdout = std::io::stdout();
        let mut lock = stdout.lock();
        lock.write_all(content.as_bytes())?;
        Ok(())
    } else {
        std::fs::write(dest, content).with_context(|| format!("writing {dest}"))
    }
}

#[derive(serde::Serialize)]
struct RunSummary<'a> {
    answer: &'a str,
    accepted_by: &'a str,
    rounds_used: u32,
    evidence_frames: usize,
    visual_tokens: u64,
    payload_bytes_read: u64,
    bytes_read: u64,
    seeks: u64,
    archive_len: u64,
}

fn print_single(run: &PipelineRun, config: &PipelineConfig) {
    println!("answer: {}", run.answer);
    println!("accepted by: {}", run.trace.accepted_by.name());
    println!("rounds used: {} (cap {})", run.trace.rounds_used, config.n_max);
    println!(
        "evidence: {} frames, {} visual tokens",
        run.evidence.len(),
        run.trace.visual_tokens
    );
    println!(
        "payload bytes read: {} of {} archive bytes ({} seeks)",
        run.accounting.payload_bytes_read, run.archive_len, run.accounting.seeks
    );
}

fn print_report(report: &DatasetReport, cap: u32) {
    println!("mode: {}", report.mode);
    println!(
        "entries: {} total, {} failed",
        report.entries_total, report.entries_failed
    );
    println!("mean frames: {:.2}", report.mean_frames);
    println!("mean visual tokens: {:.1}", report.mean_tokens);
    println!("mean rounds: {:.2} (cap {})", report.mean_rounds, cap);
    println!("trigger rate: {:.3}", report.trigger_rate);
    if let Some(acc) = report.exact_match_accuracy {
        println!("exact match: {acc:.3}");
    }
    if let Some(iou) = report.mean_interval_iou {
        println!("mean interval IoU: {iou:.3}");
    }
    if let Some(hit) = report.window_hit_rate {
        println!("window hit rate: {hit:.3}");
    }
}

fn report_failures(outcomes: &[EntryOutcome]) -> usize {
    let mut failed = 0;
    for outcome in outcomes {
        if let Some(error) = &outcome.error {
            eprintln!("entry {} ({}): {error}", outcome.index, outcome.query);
            failed += 1;
        }
    }
    failed
}

fn collect_traces(outcomes: &[EntryOutcome]) -> anyhow::Result<String> {
    let mut lines = String::new();
    for outcome in outcomes {
        if let Some(run) = &outcome.run {
            lines.push_str(&run.trace.to_json_line()?);
            lines.push('\n');
        }
    }
    Ok(lines)
}

pub fn run(args: RunArgs) -> anyhow::Result<u8> {
    let mode = parse_mode(&args.mode, args.cot_rounds)?;
    let io = parse_io(&args.io);
    let mut config = args.params.build();
    if let Some(delta_w) = args.delta_w {
        config.delta_w_sec = delta_w;
    }
    config.validate()?;

    if let Some(archive) = &args.archive {
        let query = args.query.as_deref().expect("clap enforces query");
        let sidecar = args
            .sidecar
            .clone()
            .unwrap_or_else(|| archive.with_extension("faem"));
        let dim = embedding_dim(args.params.embed_dim, &sidecar)?;
        let embedder = MockEmbedder::new(dim, config.rng_seed);
        let mut model = model_builder(&args.backend, config.rng_seed)?()?;
        let run = match run_pipeline(
            archive,
            &sidecar,
            query,
            &config,
            &embedder,
            model.as_mut(),
            mode,
            io,
        ) {
            Ok(run) => run,
            Err(error) => {
                eprintln!("run failed: {error}");
                return Ok(1);
            }
        };
        print_single(&run, &config);
        if let Some(dest) = &args.trace {
            let mut line = run.trace.to_json_line()?;
            line.push('\n');
            write_output(dest, &line)?;
        }
        if let Some(dest) = &args.report_json {
            let summary = RunSummary {
                answer: &run.answer,
                accepted_by: run.trace.accepted_by.name(),
                rounds_used: run.trace.rounds_used,
                evidence_frames: run.evidence.len(),
                visual_tokens: run.trace.visual_tokens,
                payload_bytes_read: run.accounting.payload_bytes_read,
                bytes_read: run.accounting.bytes_read,
                seeks: run.accounting.seeks,
                archive_len: run.archive_len,
            };
            let mut doc = serde_json::to_string_pretty(&summary)?;
            doc.push('\n');
            write_output(dest, &doc)?;
        }
        return Ok(0);
    }

    let manifest_path = args.manifest.as_ref().expect("clap enforces manifest");
    let manifest = DatasetManifest::load(manifest_path)?;
    let dim = match manifest.entries().first() {
        Some(entry) => embedding_dim(args.params.embed_dim, &manifest.resolve(entry).1)?,
        None => args.params.embed_dim.unwrap_or(64),
    };
    let fallback = model_builder(&args.backend, config.rng_seed)?;
    let seed = config.rng_seed;
    let (outcomes, report) = run_dataset(
        &manifest,
        &config,
        &move || Box::new(MockEmbedder::new(dim, seed)),
        &|entry| model_for_entry(entry, fallback.as_ref()),
        mode,
        io,
        args.workers,
    );
    if let Some(dest) = &args.trace {
        write_output(dest, &collect_traces(&outcomes)?)?;
    }
    print_report(&report, config.n_max);
    if let Some(dest) = &args.report_json {
        let mut doc = serde_json::to_string_pretty(&report)?;
        doc.push('\n');
        write_output(dest, &doc)?;
    }
    let failed = report_failures(&outcomes);
    Ok(if failed > 0 { 1 } else { 0 })
}

#[derive(serde::Serialize)]
struct SweepPoint {
    delta_w_sec: f64,
    report: DatasetReport,
}

#[derive(serde::Serialize)]
struct SweepReport {
    mode: String,
    seed: u64,
    tokens_per_frame: u32,
    sweep: Vec<SweepPoint>,
}

pub fn bench(args: BenchArgs) -> anyhow::Result<u8> {
    let mode = parse_mode(&args.mode, args.cot_rounds)?;
    let io = parse_io(&args.io);
    let base = args.params.build();
    base.validate()?;
    if args.delta_w.is_empty() {
        bail!("at least one --delta-w value required");
    }
    let manifest = DatasetManifest::load(&args.manifest)?;
    let dim = match manifest.entries().first() {
        Some(entry) => embedding_dim(args.params.embed_dim, &manifest.resolve(entry).1)?,
        None => args.params.embed_dim.unwrap_or(64),
    };
    let fallback = model_builder(&args.backend, base.rng_seed)?;
    let seed = base.rng_seed;
    let embedder_factory = move || -> Box<dyn EmbeddingProvider> {
        Box::new(MockEmbedder::new(dim, seed))
    };

    let mut failed = 0;
    let mut points: Vec<SweepPoint> = Vec::new();
    println!("delta_w  mean_frames  mean_rounds  trigger_rate  mean_tokens");
    for &delta_w in &args.delta_w {
        let config = PipelineConfig {
            delta_w_sec: delta_w,
            ..base.clone()
        };
        config.validate()?;
        let (outcomes, report) = run_dataset(
            &manifest,
            &config,
            &embedder_factory,
            &|entry| model_for_entry(entry, fallback.as_ref()),
            mode,
            io,
            args.workers,
        );
        println!(
            "{:>7.2}  {:>11.2}  {:>11.2}  {:>12.3}  {:>11.1}",
            delta_w, report.mean_frames, report.mean_rounds, report.trigger_rate, report.mean_tokens
        );
        failed += report_failures(&outcomes);
        points.push(SweepPoint {
            delta_w_sec: delta_w,
            report,
        });
    }

    if args.compare_dense {
        let (outcomes, dense) = run_dataset(
            &manifest,
            &base,
            &embedder_factory,
            &|entry| model_for_entry(entry, fallback.as_ref()),
            Mode::DenseOracle,
            io,
            args.workers,
        );
        failed += report_failures(&outcomes);
        for point in &points {
            println!();
            println!("footprint at delta_w {:.2}:", point.delta_w_sec);
            let footprint = FootprintReport::new(
                dense.mean_frames,
                point.report.mean_frames,
                base.tokens_per_frame,
            );
            println!("{footprint}");
        }
    }

    if let Some(dest) = &args.report_json {
        let doc = SweepReport {
            mode: mode.name().to_owned(),
            seed: base.rng_seed,
            tokens_per_frame: base.tokens_per_frame,
            sweep: points,
        };
        let mut text = serde_json::to_string_pretty(&doc)?;
        text.push('\n');
        write_output(dest, &text)?;
    }
    Ok(if failed > 0 { 1 } else { 0 })
}

pub fn pack(args: PackArgs) -> anyhow::Result<u8> {
    if !(args.fps.is_finite() && args.fps > 0.0) {
        bail!("fps must be positive, got {}", args.fps);
    }
    let fps_millis = (args.fps * 1000.0).round() as u32;
    if fps_millis == 0 {
        bail!("fps {} rounds to zero frames per second", args.fps);
    }
    let period_ms = 1_000_000 / u64::from(fps_millis);
    if period_ms == 0 {
        bail!("fps {} leaves no room between frame timestamps", args.fps);
    }

    let mut files: Vec<PathBuf> = std::fs::read_dir(&args.input)
        .with_context(|| format!("reading directory {}", args.input.display()))?
        .filter_map(|entry| entry.ok())
        .filter(|entry| entry.file_type().map(|t| t.is_file()).unwrap_or(false))
        .map(|entry| entry.path())
        .collect();
    files.sort();
    if files.is_empty() {
        bail!("no frame files in {}", args.input.display());
    }

    let embedder = MockEmbedder::new(args.dim, args.seed);
    let mut frames: Vec<(u64, Vec<u8>)> = Vec::with_capacity(files.len());
    let mut records: Vec<(u64, Vec<f32>)> = Vec::with_capacity(files.len());
    let mut payload_total = 0_u64;
    for (i, path) in files.iter().enumerate() {
        let payload =
            std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        let timestamp_ms = i as u64 * period_ms;
        let embedding = embedder.embed_frame(&payload)?;
        records.push((timestamp_ms, embedding.values().to_vec()));
        payload_total += payload.len() as u64;
        frames.push((timestamp_ms, payload));
    }
    write_archive(&args.output, fps_millis, &frames)?;
    let sidecar = args.output.with_extension("faem");
    write_embedding_sidecar(&sidecar, args.dim as u32, &records)?;

    let archive_len = std::fs::metadata(&args.output)?.len();
    let duration_sec =
        (frames.last().expect("nonempty").0 + 1_000_000 / u64::from(fps_millis)) as f64 / 1e3;
    println!(
        "packed {} frames, {} payload bytes, {:.1} s at {} fps",
        frames.len(),
        payload_total,
        duration_sec,
        args.fps
    );
    println!("archive: {} ({archive_len} bytes)", args.output.display());
    println!("sidecar: {} (dim {})", sidecar.display(), args.dim);
    Ok(0)
}

#[derive(serde::Serialize)]
struct InspectReport {
    source_id: String,
    frame_count: u32,
    fps_millis: u32,
    duration_ms: u64,
    duration_sec: f64,
    index_offset: u64,
    file_len: u64,
    payload_bytes: u64,
    payload_sha256: String,
    first_timestamp_ms: u64,
    last_timestamp_ms: u64,
}

pub fn inspect(args: InspectArgs) -> anyhow::Result<u8> {
    let mut reader = ArchiveReader::open(&args.archive)?;
    let header = *reader.header();
    let entries = reader.entries().to_vec();
    let payload_bytes: u64 = entries.iter().map(|e| u64::from(e.payload_len)).sum();

    let mut hasher = Sha256::new();
    for (_, payload) in reader.preload_all()? {
        hasher.update(&payload);
    }
    let digest = hasher.finalize();
    let payload_sha256: String = digest.iter().map(|b| format!("{b:02x}")).collect();

    let report = InspectReport {
        source_id: reader.source_id().to_owned(),
        frame_count: header.frame_count,
        fps_millis: header.fps_millis,
        duration_ms: header.duration_ms,
        duration_sec: reader.duration_sec(),
        index_offset: header.index_offset,
        file_len: reader.file_len(),
        payload_bytes,
        payload_sha256,
        first_timestamp_ms: entries.first().expect("archives are nonempty").timestamp_ms,
        last_timestamp_ms: entries.last().expect("archives are nonempty").timestamp_ms,
    };
    if args.json {
        println!("{}", serde_json::to_string_pretty(&report)?);
    } else {
        println!("source id: {}", report.source_id);
        println!(
            "frames: {} ({} to {} ms)",
            report.frame_count, report.first_timestamp_ms, report.last_timestamp_ms
        );
        println!(
            "fps: {} (header fps_millis {})",
            header.fps_millis as f64 / 1e3,
            header.fps_millis
        );
        println!(
            "duration: {:.3} s ({} ms)",
            report.duration_sec, report.duration_ms
        );
        println!(
            "layout: payloads at 32..{}, index at {}..{}",
            report.index_offset, report.index_offset, report.file_len
        );
        println!("payload bytes: {}", report.payload_bytes);
        println!("payload sha256: {}", report.payload_sha256);
    }
    Ok(0)
}
