//! Dataset manifests: a JSON array of entries, each naming an archive,
//! its embedding sidecar, and a query, optionally with gold labels and
//! a scripted answer sequence. Relative paths resolve against the
//! manifest file's directory, so a dataset ships as one folder.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::backends::ScriptStep;
use crate::error::{Error, Result};

/// One benchmark item.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub archive: PathBuf,
    pub sidecar: PathBuf,
    pub query: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_answer: Option<String>,
    /// `[start_sec, end_sec]`, closed, within the archive duration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_interval: Option<[f64; 2]>,
    /// When present, the entry runs against a scripted answer model
    /// replaying these steps, regardless of the configured backend.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script: Option<Vec<ScriptStep>>,
}

/// A loaded manifest plus the directory its relative paths resolve in.
#[derive(Debug, Clone)]
pub struct DatasetManifest {
    entries: Vec<ManifestEntry>,
    base_dir: PathBuf,
}

impl DatasetManifest {
    /// Parses a manifest file. Inverted gold intervals are rejected
    /// here; path existence and interval-vs-duration checks happen per
    /// entry at run time so one bad entry cannot block the rest.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path)
            .map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
        let entries: Vec<ManifestEntry> = serde_json::from_str(&raw)
            .map_err(|e| Error::Manifest(format!("{}: {e}", path.display())))?;
        let base_dir = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        let manifest = Self { entries, base_dir };
        for (i, entry) in manifest.entries.iter().enumerate() {
            if let Some([start, end]) = entry.gold_interval {
                if !(start.is_finite() && end.is_finite()) || start > end {
                    return Err(Error::Manifest(format!(
                        "entry {i}: gold interval [{start}, {end}] is not a forward interval"
                    )));
                }
                if start < 0.0 {
                    return Err(Error::Manifest(format!(
                        "entry {i}: gold interval starts before zero"
                    )));
                }
            }
            if entry.query.trim().is_empty() {
                return Err(Error::Manifest(format!("entry {i}: empty query")));
            }
        }
        Ok(manifest)
    }

    /// Builds a manifest in memory; `base_dir` anchors relative paths.
    pub fn from_entries(entries: Vec<ManifestEntry>, base_dir: impl Into<PathBuf>) -> Self {
        Self {
            entries,
            base_dir: base_dir.into(),
        }
    }

    pub fn entries(&self) -> &[ManifestEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Archive and sidecar paths of an entry, resolved against the
    /// manifest directory when relative.
    pub fn resolve(&self, entry: &ManifestEntry) -> (PathBuf, PathBuf) {
        (self.resolve_one(&entry.archive), self.resolve_one(&entry.sidecar))
    }

    fn resolve_one(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn loads_and_resolves_relative_paths() {
        let dir = tempfile::tempdir().unwrap();
        let manifest_path = dir.path().join("set.json");
        std::fs::write(
            &manifest_path,
            r#"[
                {"archive": "a/clip.fafv", "sidecar": "a/clip.faem", "query": "what?",
                 "gold_answer": "a goal", "gold_interval": [10.0, 14.0]},
                {"archive": "/abs/other.fafv", "sidecar": "/abs/other.faem", "query": "when?"}
            ]"#,
        )
        .unwrap();
        let manifest = DatasetManifest::load(&manifest_path).unwrap();
        assert_eq!(manifest.len(), 2);
        let (archive, sidecar) = manifest.resolve(&manifest.entries()[0]);
        assert_eq!(archive, dir.path().join("a/clip.fafv"));
        assert_eq!(sidecar, dir.path().join("a/clip.faem"));
        let (abs, _) = manifest.resolve(&manifest.entries()[1]);
        assert_eq!(abs, PathBuf::from("/abs/other.fafv"));
    }

    #[test]
    fn rejects_inverted_interval_and_empty_query() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.json");
        std::fs::write(
            &path,
            r#"[{"archive": "a.fafv", "sidecar": "a.faem", "query": "q", "gold_interval": [9.0, 3.0]}]"#,
        )
        .unwrap();
        assert!(matches!(DatasetManifest::load(&path), Err(Error::Manifest(_))));

        std::fs::write(
            &path,
            r#"[{"archive": "a.fafv", "sidecar": "a.faem", "query": "  "}]"#,
        )
        .unwrap();
        assert!(matches!(DatasetManifest::load(&path), Err(Error::Manifest(_))));
    }

    #[test]
    fn rejects_malformed_json_with_path_context() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("broken.json");
        std::fs::write(&path, "{not json").unwrap();
        let err = DatasetManifest::load(&path).unwrap_err();
        assert!(err.to_string().contains("broken.json"));
    }

    #[test]
    fn scripted_entries_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("scripted.json");
        std::fs::write(
            &path,
            r#"[{"archive": "a.fafv", "sidecar": "a.faem", "query": "q",
                "script": [{"text": "low [00:30]", "token_probability": 0.9},
                           {"text": "sure", "token_probability": 0.99}]}]"#,
        )
        .unwrap();
        let manifest = DatasetManifest::load(&path).unwrap();
        let script = manifest.entries()[0].script.as_ref().unwrap();
        assert_eq!(script.len(), 2);
        assert_eq!(script[1].text, "sure");
    }
}
