//! Indexed frame archives read with seeks instead of full decodes.
//!
//! An archive keeps the dense frame sequence on disk behind a compact
//! index, so a retrieval window costs one seek per contiguous byte run
//! plus exactly the payload bytes of the frames inside it. Every read on
//! a handle is metered in [`ReadAccounting`], which is what makes the
//! no-precache claim checkable rather than aspirational.
//!
//! On-disk layout, all integers little-endian:
//!
//! ```text
//! offset 0   magic "FAFV0001" (8 bytes)
//! offset 8   frame_count u32, fps_millis u32, duration_ms u64, index_offset u64
//! offset 32  frame payloads, back to back
//! index      frame_count entries of (timestamp_ms u64, payload_offset u64, payload_len u32)
//! ```
//!
//! The embedding sidecar is a sibling file: magic "FAEM0001", count u32,
//! dim u32, then count records of (timestamp_ms u64, dim f32 values).

use std::collections::HashMap;
use std::fs::File;
use std::io::{Read, Seek, SeekFrom, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::types::{Embedding, FrameRef, GroundingSource, RetrievedWindow};

pub const ARCHIVE_MAGIC: &[u8; 8] = b"FAFV0001";
pub const SIDECAR_MAGIC: &[u8; 8] = b"FAEM0001";
pub const HEADER_LEN: u64 = 32;
pub const INDEX_ENTRY_LEN: u64 = 20;

/// Fixed-size archive header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameArchiveHeader {
    pub frame_count: u32,
    /// Frames per second times 1000.
    pub fps_millis: u32,
    pub duration_ms: u64,
    pub index_offset: u64,
}

/// One index record: where a frame's payload lives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameIndexEntry {
    pub timestamp_ms: u64,
    pub payload_offset: u64,
    pub payload_len: u32,
}

impl FrameIndexEntry {
    pub fn timestamp_sec(&self) -> f64 {
        self.timestamp_ms as f64 / 1000.0
    }
}

/// Byte-level I/O meter for one reader handle. All counters are
/// monotone over the handle's lifetime.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ReadAccounting {
    /// Every byte read from the file, header and index included.
    pub bytes_read: u64,
    /// Bytes read from the payload region only.
    pub payload_bytes_read: u64,
    pub frames_decoded: u64,
    /// Cursor repositions, the one to the index at open included.
    pub seeks: u64,
}

/// Read handle over one archive file.
pub struct ArchiveReader {
    file: File,
    source_id: String,
    header: FrameArchiveHeader,
    entries: Vec<FrameIndexEntry>,
    file_len: u64,
    cursor: u64,
    accounting: ReadAccounting,
}

impl ArchiveReader {
    /// Opens an archive: reads and validates header plus full index,
    /// touching no payload bytes.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let source_id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "archive".to_owned());
        let file = File::open(path)?;
        let file_len = file.metadata()?.len();

        let mut reader = Self {
            file,
            source_id,
            header: FrameArchiveHeader {
                frame_count: 0,
                fps_millis: 0,
                duration_ms: 0,
                index_offset: 0,
            },
            entries: Vec::new(),
            file_len,
            cursor: 0,
            accounting: ReadAccounting::default(),
        };

        if file_len < HEADER_LEN {
            return Err(Error::Corrupt {
                offset: file_len,
                reason: "file shorter than header".into(),
            });
        }
        let mut head = [0_u8; HEADER_LEN as usize];
        reader.read_at(0, &mut head)?;
        if &head[0..8] != ARCHIVE_MAGIC {
            return Err(Error::BadMagic {
                expected: String::from_utf8_lossy(ARCHIVE_MAGIC).into_owned(),
                found: String::from_utf8_lossy(&head[0..8]).into_owned(),
            });
        }
        let frame_count = u32::from_le_bytes(head[8..12].try_into().unwrap());
        let fps_millis = u32::from_le_bytes(head[12..16].try_into().unwrap());
        let duration_ms = u64::from_le_bytes(head[16..24].try_into().unwrap());
        let index_offset = u64::from_le_bytes(head[24..32].try_into().unwrap());

        if frame_count == 0 {
            return Err(Error::EmptyArchive);
        }
        if fps_millis == 0 {
            return Err(Error::Corrupt {
                offset: 12,
                reason: "fps_millis is zero".into(),
            });
        }
        let index_len = u64::from(frame_count) * INDEX_ENTRY_LEN;
        if index_offset < HEADER_LEN
            || index_offset > file_len
            || index_len > file_len - index_offset
        {
            return Err(Error::Corrupt {
                offset: 24,
                reason: format!(
                    "index of {frame_count} entries at {index_offset} does not fit a {file_len}-byte file"
                ),
            });
        }

        let mut raw = vec![0_u8; index_len as usize];
        reader.read_at(index_offset, &mut raw)?;
        let mut entries = Vec::with_capacity(frame_count as usize);
        for i in 0..frame_count as usize {
            let base = i * INDEX_ENTRY_LEN as usize;
            let entry = FrameIndexEntry {
                timestamp_ms: u64::from_le_bytes(raw[base..base + 8].try_into().unwrap()),
                payload_offset: u64::from_le_bytes(raw[base + 8..base + 16].try_into().unwrap()),
                payload_len: u32::from_le_bytes(raw[base + 16..base + 20].try_into().unwrap()),
            };
            let entry_offset = index_offset + base as u64;
            if let Some(prev) = entries.last() {
                let prev: &FrameIndexEntry = prev;
                if entry.timestamp_ms < prev.timestamp_ms {
                    return Err(Error::Corrupt {
                        offset: entry_offset,
                        reason: format!(
                            "timestamps out of order: {} after {}",
                            entry.timestamp_ms, prev.timestamp_ms
                        ),
                    });
                }
            }
            let payload_end = entry
                .payload_offset
                .checked_add(u64::from(entry.payload_len))
                .ok_or_else(|| Error::Corrupt {
                    offset: entry_offset,
                    reason: "payload range overflows".into(),
                })?;
            if entry.payload_offset < HEADER_LEN || payload_end > index_offset {
                return Err(Error::Corrupt {
                    offset: entry_offset,
                    reason: format!(
                        "payload range {}..{payload_end} outside payload region {HEADER_LEN}..{index_offset}",
                        entry.payload_offset
                    ),
                });
            }
            entries.push(entry);
        }

        let mut ranges: Vec<(u64, u64)> = entries
            .iter()
            .filter(|e| e.payload_len > 0)
            .map(|e| (e.payload_offset, e.payload_offset + u64::from(e.payload_len)))
            .collect();
        ranges.sort_unstable();
        for pair in ranges.windows(2) {
            if pair[1].0 < pair[0].1 {
                return Err(Error::Corrupt {
                    offset: pair[1].0,
                    reason: "payload ranges overlap".into(),
                });
            }
        }

        if duration_ms < entries.last().map_or(0, |e| e.timestamp_ms) {
            return Err(Error::Corrupt {
                offset: 16,
                reason: "duration_ms earlier than the last frame".into(),
            });
        }

        reader.header = FrameArchiveHeader {
            frame_count,
            fps_millis,
            duration_ms,
            index_offset,
        };
        reader.entries = entries;
        Ok(reader)
    }

    fn read_at(&mut self, offset: u64, buf: &mut [u8]) -> Result<()> {
        if self.cursor != offset {
            self.file
                .seek(SeekFrom::Start(offset))
                .map_err(|source| Error::ReadFailed { offset, source })?;
            self.accounting.seeks += 1;
            self.cursor = offset;
        }
        self.file
            .read_exact(buf)
            .map_err(|source| Error::ReadFailed { offset, source })?;
        self.cursor += buf.len() as u64;
        self.accounting.bytes_read += buf.len() as u64;
        Ok(())
    }

    pub fn header(&self) -> &FrameArchiveHeader {
        &self.header
    }

    pub fn entries(&self) -> &[FrameIndexEntry] {
        &self.entries
    }

    pub fn source_id(&self) -> &str {
        &self.source_id
    }

    pub fn file_len(&self) -> u64 {
        self.file_len
    }

    pub fn frame_count(&self) -> usize {
        self.entries.len()
    }

    pub fn duration_sec(&self) -> f64 {
        self.header.duration_ms as f64 / 1000.0
    }

    /// Snapshot of the I/O meter.
    pub fn accounting(&self) -> ReadAccounting {
        self.accounting
    }

    /// Frame handle for index position `index`. Panics when out of range.
    pub fn frame_ref(&self, index: usize) -> FrameRef {
        let entry = &self.entries[index];
        FrameRef {
            source_id: self.source_id.clone(),
            index: index as u32,
            timestamp_sec: entry.timestamp_sec(),
            payload_offset: entry.payload_offset,
            payload_len: entry.payload_len,
        }
    }

    /// All frame handles, payloads untouched.
    pub fn frame_refs(&self) -> Vec<FrameRef> {
        (0..self.entries.len()).map(|i| self.frame_ref(i)).collect()
    }

    /// Reads the payloads of the given index positions, in order.
    /// Consecutive positions whose payloads abut in the file share one
    /// seek and one read. Panics when a position is out of range.
    pub fn read_payloads(&mut self, indices: &[usize]) -> Result<Vec<(FrameRef, Vec<u8>)>> {
        let mut out = Vec::with_capacity(indices.len());
        let mut run: Vec<usize> = Vec::new();
        let flush =
            |this: &mut Self, run: &mut Vec<usize>, out: &mut Vec<(FrameRef, Vec<u8>)>| -> Result<()> {
                if run.is_empty() {
                    return Ok(());
                }
                let start = this.entries[run[0]].payload_offset;
                let total: usize = run
                    .iter()
                    .map(|&i| this.entries[i].payload_len as usize)
                    .sum();
                let mut buf = vec![0_u8; total];
                this.read_at(start, &mut buf)?;
                this.accounting.payload_bytes_read += total as u64;
                let mut at = 0;
                for &i in run.iter() {
                    let len = this.entries[i].payload_len as usize;
                    out.push((this.frame_ref(i), buf[at..at + len].to_vec()));
                    at += len;
                }
                this.accounting.frames_decoded += run.len() as u64;
                run.clear();
                Ok(())
            };

        for &i in indices {
            let contiguous = run.last().is_some_and(|&prev| {
                self.entries[prev].payload_offset + u64::from(self.entries[prev].payload_len)
                    == self.entries[i].payload_offset
            });
            if !run.is_empty() && !contiguous {
                flush(self, &mut run, &mut out)?;
            }
            run.push(i);
        }
        flush(self, &mut run, &mut out)?;
        Ok(out)
    }

    /// Index positions whose timestamps land in the closed interval
    /// `[max(0, target − w), min(duration, target + w)]`.
    pub fn window_indices(&self, target_sec: f64, half_width_sec: f64) -> Result<(usize, usize)> {
        if half_width_sec.is_nan() || half_width_sec <= 0.0 {
            return Err(Error::NonPositiveHalfWidth(half_width_sec));
        }
        if !target_sec.is_finite() {
            return Err(Error::Config(format!(
                "retrieval target must be finite, got {target_sec}"
            )));
        }
        let lo = (target_sec - half_width_sec).max(0.0);
        let hi = (target_sec + half_width_sec).min(self.duration_sec());
        let start = self.entries.partition_point(|e| e.timestamp_sec() < lo);
        let end = self.entries.partition_point(|e| e.timestamp_sec() <= hi);
        Ok((start, end.max(start)))
    }

    /// Reads every frame inside the clamped window around `target_sec`.
    /// Payloads line up with the window's frame list. The window may be
    /// empty when the interval is narrower than the frame spacing.
    pub fn decode_window(
        &mut self,
        target_sec: f64,
        half_width_sec: f64,
        source: GroundingSource,
    ) -> Result<(RetrievedWindow, Vec<Vec<u8>>)> {
        let (start, end) = self.window_indices(target_sec, half_width_sec)?;
        let indices: Vec<usize> = (start..end).collect();
        let decoded = self.read_payloads(&indices)?;
        let mut frames = Vec::with_capacity(decoded.len());
        let mut payloads = Vec::with_capacity(decoded.len());
        for (frame, payload) in decoded {
            frames.push(frame);
            payloads.push(payload);
        }
        Ok((
            RetrievedWindow {
                target_sec,
                half_width_sec,
                frames,
                grounding_source: source,
            },
            payloads,
        ))
    }

    /// Reads every payload once, in index order. This is the pre-cache
    /// comparator, not the normal path.
    pub fn preload_all(&mut self) -> Result<Vec<(FrameRef, Vec<u8>)>> {
        let indices: Vec<usize> = (0..self.entries.len()).collect();
        self.read_payloads(&indices)
    }
}

/// Writes a complete archive. Timestamps must be strictly increasing;
/// the stored duration extends one frame interval past the last frame.
pub fn write_archive(
    path: impl AsRef<Path>,
    fps_millis: u32,
    frames: &[(u64, Vec<u8>)],
) -> Result<()> {
    if frames.is_empty() {
        return Err(Error::EmptyArchive);
    }
    if fps_millis == 0 {
        return Err(Error::Config("fps_millis must be at least 1".into()));
    }
    for (index, pair) in frames.windows(2).enumerate() {
        if pair[1].0 <= pair[0].0 {
            return Err(Error::UnsortedTimestamps {
                index: index + 1,
                timestamp_ms: pair[1].0,
                previous_ms: pair[0].0,
            });
        }
    }

    let interval_ms = 1_000_000_u64 / u64::from(fps_millis);
    let duration_ms = frames.last().unwrap().0 + interval_ms;
    let payload_total: u64 = frames.iter().map(|(_, p)| p.len() as u64).sum();
    let index_offset = HEADER_LEN + payload_total;

    let mut out = std::io::BufWriter::new(File::create(path)?);
    out.write_all(ARCHIVE_MAGIC)?;
    out.write_all(&(frames.len() as u32).to_le_bytes())?;
    out.write_all(&fps_millis.to_le_bytes())?;
    out.write_all(&duration_ms.to_le_bytes())?;
    out.write_all(&index_offset.to_le_bytes())?;

    for (_, payload) in frames {
        out.write_all(payload)?;
    }
    let mut offset = HEADER_LEN;
    for (timestamp_ms, payload) in frames {
        out.write_all(&timestamp_ms.to_le_bytes())?;
        out.write_all(&offset.to_le_bytes())?;
        out.write_all(&(payload.len() as u32).to_le_bytes())?;
        offset += payload.len() as u64;
    }
    out.flush()?;
    Ok(())
}

/// Writes an embedding sidecar. Every vector must have `dim` values.
pub fn write_embedding_sidecar(
    path: impl AsRef<Path>,
    dim: u32,
    records: &[(u64, Vec<f32>)],
) -> Result<()> {
    if dim == 0 {
        return Err(Error::Config("sidecar dim must be at least 1".into()));
    }
    for (_, values) in records {
        if values.len() != dim as usize {
            return Err(Error::DimMismatch {
                left: values.len(),
                right: dim as usize,
            });
        }
    }
    let mut out = std::io::BufWriter::new(File::create(path)?);
    out.write_all(SIDECAR_MAGIC)?;
    out.write_all(&(records.len() as u32).to_le_bytes())?;
    out.write_all(&dim.to_le_bytes())?;
    for (timestamp_ms, values) in records {
        out.write_all(&timestamp_ms.to_le_bytes())?;
        for v in values {
            out.write_all(&v.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Loads an embedding sidecar; vectors are unit-normalized on load.
pub fn read_embedding_sidecar(path: impl AsRef<Path>) -> Result<Vec<(u64, Embedding)>> {
    let raw = std::fs::read(path)?;
    if raw.len() < 16 {
        return Err(Error::Corrupt {
            offset: raw.len() as u64,
            reason: "sidecar shorter than header".into(),
        });
    }
    if &raw[0..8] != SIDECAR_MAGIC {
        return Err(Error::BadMagic {
            expected: String::from_utf8_lossy(SIDECAR_MAGIC).into_owned(),
            found: String::from_utf8_lossy(&raw[0..8]).into_owned(),
        });
    }
    let count = u32::from_le_bytes(raw[8..12].try_into().unwrap()) as usize;
    let dim = u32::from_le_bytes(raw[12..16].try_into().unwrap()) as usize;
    if dim == 0 {
        return Err(Error::Corrupt {
            offset: 12,
            reason: "sidecar dim is zero".into(),
        });
    }
    let record_len = 8 + 4 * dim;
    let expected = 16 + count * record_len;
    if raw.len() != expected {
        return Err(Error::Corrupt {
            offset: raw.len() as u64,
            reason: format!(
                "sidecar holds {} bytes, header promises {expected} for {count} records",
                raw.len()
            ),
        });
    }
    let mut out = Vec::with_capacity(count);
    for i in 0..count {
        let base = 16 + i * record_len;
        let timestamp_ms = u64::from_le_bytes(raw[base..base + 8].try_into().unwrap());
        let values: Vec<f32> = (0..dim)
            .map(|d| {
                let at = base + 8 + 4 * d;
                f32::from_le_bytes(raw[at..at + 4].try_into().unwrap())
            })
            .collect();
        out.push((timestamp_ms, Embedding::normalized(values)?));
    }
    Ok(out)
}

/// Joins an archive's frames with sidecar embeddings by exact
/// timestamp, erroring on any frame without one.
pub fn embedded_pool(
    reader: &ArchiveReader,
    sidecar: &[(u64, Embedding)],
) -> Result<Vec<(FrameRef, Embedding)>> {
    let by_ts: HashMap<u64, &Embedding> = sidecar.iter().map(|(ts, e)| (*ts, e)).collect();
    reader
        .entries()
        .iter()
        .enumerate()
        .map(|(i, entry)| {
            let embedding = by_ts.get(&entry.timestamp_ms).ok_or(Error::MissingEmbedding {
                timestamp_ms: entry.timestamp_ms,
            })?;
            Ok((reader.frame_ref(i), (*embedding).clone()))
        })
        .collect()
}
