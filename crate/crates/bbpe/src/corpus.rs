//! Corpus ingestion: manifests, chunking, Shannon entropy, and filtering.
//!
//! Training never sees whole files. Each manifest entry is split into
//! fixed-size chunks, every chunk gets a Shannon entropy score, and chunks
//! above the entropy threshold are dropped before merge counting so that
//! compressed/encrypted regions do not pollute pair statistics.

use std::fmt;
use std::fs;
use std::io::BufRead;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{BbpeError, Result};
use crate::vocab::SPECIAL_TOKEN_NAMES;

/// Operating system a binary targets. Unknown labels map to `Other`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Platform {
    Linux,
    Windows,
    Macos,
    Android,
    Other,
}

impl FromStr for Platform {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "linux" => Platform::Linux,
            "windows" => Platform::Windows,
            "macos" => Platform::Macos,
            "android" => Platform::Android,
            _ => Platform::Other,
        })
    }
}

impl fmt::Display for Platform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Platform::Linux => "linux",
            Platform::Windows => "windows",
            Platform::Macos => "macos",
            Platform::Android => "android",
            Platform::Other => "other",
        };
        f.write_str(s)
    }
}

/// Executable container format. Unknown labels map to `Other`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FileFormat {
    Elf,
    Pe,
    MachO,
    Apk,
    Other,
}

impl FromStr for FileFormat {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "elf" => FileFormat::Elf,
            "pe" => FileFormat::Pe,
            "mach_o" | "macho" => FileFormat::MachO,
            "apk" => FileFormat::Apk,
            _ => FileFormat::Other,
        })
    }
}

impl fmt::Display for FileFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            FileFormat::Elf => "elf",
            FileFormat::Pe => "pe",
            FileFormat::MachO => "mach_o",
            FileFormat::Apk => "apk",
            FileFormat::Other => "other",
        };
        f.write_str(s)
    }
}

/// Benign/malicious annotation carried through to benchmark grouping.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Label {
    Benign,
    Malicious,
    Unknown,
}

impl FromStr for Label {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "benign" => Label::Benign,
            "malicious" | "malware" => Label::Malicious,
            _ => Label::Unknown,
        })
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Label::Benign => "benign",
            Label::Malicious => "malicious",
            Label::Unknown => "unknown",
        };
        f.write_str(s)
    }
}

/// One input file plus its stratification metadata.
///
/// The metadata is carried into reports; no sampling or balancing happens
/// here — corpus balance is the manifest author's job.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: PathBuf,
    pub platform: Platform,
    #[serde(rename = "format")]
    pub file_format: FileFormat,
    pub arch: String,
    pub label: Label,
}

impl ManifestEntry {
    /// Entry with default metadata, for programmatic corpora.
    pub fn from_path(path: impl Into<PathBuf>) -> Self {
        ManifestEntry {
            path: path.into(),
            platform: Platform::Other,
            file_format: FileFormat::Other,
            arch: "unknown".to_string(),
            label: Label::Unknown,
        }
    }

    /// Validates that `path` names a readable regular file.
    pub fn validate(&self) -> Result<()> {
        let meta = fs::metadata(&self.path).map_err(|e| BbpeError::Ingest {
            path: self.path.clone(),
            message: e.to_string(),
        })?;
        if !meta.is_file() {
            return Err(BbpeError::Ingest {
                path: self.path.clone(),
                message: "not a regular file".to_string(),
            });
        }
        Ok(())
    }
}

/// A bounded byte window of a source file with its entropy score.
#[derive(Debug, Clone)]
pub struct Chunk {
    pub source: Arc<ManifestEntry>,
    /// Byte offset of this chunk within the source file.
    pub offset: u64,
    pub bytes: Vec<u8>,
    /// Shannon entropy of `bytes` in bits per byte, in [0, 8].
    pub entropy_bits: f64,
}

/// Training hyperparameters shared by chunking, filtering, and the trainer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig {
    /// Chunk size in bytes; only a file's final chunk may be shorter.
    pub chunk_size: usize,
    /// Maximum chunk entropy (bits per byte) retained for training.
    /// The comparison is inclusive: a chunk at exactly the threshold stays.
    pub entropy_threshold: f64,
    /// Total vocabulary sizes (specials included), strictly ascending.
    pub target_vocab_sizes: Vec<usize>,
    /// Longest token byte expansion the trainer may create.
    pub max_token_len: usize,
    /// Pairs below this frequency are never merged.
    pub min_pair_frequency: u64,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            chunk_size: 8192,
            entropy_threshold: 7.0,
            target_vocab_sizes: vec![4096, 8192, 16384, 32768, 65536],
            max_token_len: 32,
            min_pair_frequency: 2,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<()> {
        if self.chunk_size < 2 {
            return Err(BbpeError::InvalidConfig(format!(
                "chunk_size must be at least 2, got {}",
                self.chunk_size
            )));
        }
        if !(self.entropy_threshold > 0.0 && self.entropy_threshold <= 8.0) {
            return Err(BbpeError::InvalidConfig(format!(
                "entropy_threshold must be in (0, 8], got {}",
                self.entropy_threshold
            )));
        }
        if self.max_token_len < 2 {
            return Err(BbpeError::InvalidConfig(format!(
                "max_token_len must be at least 2, got {}",
                self.max_token_len
            )));
        }
        if self.min_pair_frequency < 1 {
            return Err(BbpeError::InvalidConfig(
                "min_pair_frequency must be at least 1".to_string(),
            ));
        }
        if self.target_vocab_sizes.is_empty() {
            return Err(BbpeError::InvalidConfig(
                "target_vocab_sizes must not be empty".to_string(),
            ));
        }
        let floor = 256 + SPECIAL_TOKEN_NAMES.len();
        for window in self.target_vocab_sizes.windows(2) {
            if window[1] <= window[0] {
                return Err(BbpeError::InvalidConfig(format!(
                    "target_vocab_sizes must be strictly ascending, got {} then {}",
                    window[0], window[1]
                )));
            }
        }
        for &size in &self.target_vocab_sizes {
            if size <= floor {
                return Err(BbpeError::InvalidConfig(format!(
                    "target vocabulary size {size} must exceed {floor} \
                     (256 base bytes + {} specials)",
                    SPECIAL_TOKEN_NAMES.len()
                )));
            }
        }
        Ok(())
    }

    /// Largest configured vocabulary size.
    pub fn max_target(&self) -> usize {
        *self.target_vocab_sizes.last().expect("validated non-empty")
    }

    /// Merges needed to fill the largest vocabulary.
    pub fn requested_merges(&self) -> usize {
        self.max_target() - 256 - SPECIAL_TOKEN_NAMES.len()
    }

    /// Hex digest of the canonical JSON form, for provenance.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}

/// Shannon entropy of a byte sequence in bits per byte.
///
/// Computed over the empirical byte distribution with log base 2;
/// zero-probability symbols contribute nothing. Result is 0 exactly when all
/// bytes are equal and 8 exactly when all 256 values are equally frequent.
pub fn shannon_entropy(bytes: &[u8]) -> Result<f64> {
    if bytes.is_empty() {
        return Err(BbpeError::InvalidConfig(
            "entropy is undefined for empty input".to_string(),
        ));
    }
    let mut counts = [0u64; 256];
    for &b in bytes {
        counts[b as usize] += 1;
    }
    let len = bytes.len() as f64;
    let mut entropy = 0.0;
    for &count in &counts {
        if count == 0 {
            continue;
        }
        let p = count as f64 / len;
        entropy -= p * p.log2();
    }
    Ok(entropy)
}

/// Splits one file into contiguous chunks with entropy scores.
///
/// Chunks cover the file exactly with ascending offsets; only the final
/// chunk may be shorter than `chunk_size`. Empty or unreadable files are
/// ingest errors naming the path.
pub fn chunk_file(entry: &Arc<ManifestEntry>, config: &TrainingConfig) -> Result<Vec<Chunk>> {
    entry.validate()?;
    let data = fs::read(&entry.path).map_err(|e| BbpeError::Ingest {
        path: entry.path.clone(),
        message: e.to_string(),
    })?;
    if data.is_empty() {
        return Err(BbpeError::Ingest {
            path: entry.path.clone(),
            message: "file is empty".to_string(),
        });
    }
    chunk_bytes(&data, entry, config)
}

/// Chunks an in-memory byte buffer as [`chunk_file`] would.
pub fn chunk_bytes(
    data: &[u8],
    entry: &Arc<ManifestEntry>,
    config: &TrainingConfig,
) -> Result<Vec<Chunk>> {
    if data.is_empty() {
        return Err(BbpeError::Ingest {
            path: entry.path.clone(),
            message: "no bytes to chunk".to_string(),
        });
    }
    let mut chunks = Vec::with_capacity(data.len().div_ceil(config.chunk_size));
    for (index, window) in data.chunks(config.chunk_size).enumerate() {
        let entropy_bits = shannon_entropy(window)?;
        chunks.push(Chunk {
            source: Arc::clone(entry),
            offset: (index * config.chunk_size) as u64,
            bytes: window.to_vec(),
            entropy_bits,
        });
    }
    Ok(chunks)
}

/// Keeps chunks whose entropy does not exceed the threshold.
///
/// The comparison is inclusive and order is preserved; filtering twice is a
/// no-op. An empty result is legal and surfaces in the ingest summary.
pub fn filter_chunks(chunks: Vec<Chunk>, config: &TrainingConfig) -> Vec<Chunk> {
    chunks
        .into_iter()
        .filter(|c| c.entropy_bits <= config.entropy_threshold)
        .collect()
}

/// Counters reported after each ingest run.
#[derive(Debug, Clone, Default, Serialize)]
pub struct IngestSummary {
    pub files: usize,
    pub chunks: usize,
    /// Chunks dropped by the entropy filter.
    pub chunks_filtered: usize,
    pub bytes_total: u64,
    pub bytes_retained: u64,
}

/// Reads a manifest: one JSON object per line with keys `path`, `platform`,
/// `format`, `arch`, `label`. Unknown keys are ignored; missing optional
/// keys default to `other`/`unknown`. `#` lines and blank lines are skipped.
pub fn load_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let file = fs::File::open(path).map_err(|e| BbpeError::Ingest {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let reader = std::io::BufReader::new(file);
    let mut entries = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| BbpeError::Manifest {
            path: path.to_path_buf(),
            line: line_no,
            message: e.to_string(),
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        entries.push(parse_manifest_line(trimmed).map_err(|message| BbpeError::Manifest {
            path: path.to_path_buf(),
            line: line_no,
            message,
        })?);
    }
    Ok(entries)
}

fn parse_manifest_line(line: &str) -> std::result::Result<ManifestEntry, String> {
    let value: serde_json::Value =
        serde_json::from_str(line).map_err(|e| format!("invalid JSON: {e}"))?;
    let obj = value.as_object().ok_or("record must be a JSON object")?;
    let path = obj
        .get("path")
        .and_then(|v| v.as_str())
        .ok_or("missing required key `path`")?;
    let get = |key: &str| obj.get(key).and_then(|v| v.as_str());
    Ok(ManifestEntry {
        path: PathBuf::from(path),
        platform: get("platform").map_or(Platform::Other, |s| s.parse().unwrap()),
        file_format: get("format").map_or(FileFormat::Other, |s| s.parse().unwrap()),
        arch: get("arch").unwrap_or("unknown").to_string(),
        label: get("label").map_or(Label::Unknown, |s| s.parse().unwrap()),
    })
}

/// Hex digest of a manifest file's raw bytes, for provenance.
pub fn manifest_digest(path: &Path) -> Result<String> {
    let data = fs::read(path).map_err(|e| BbpeError::Ingest {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    Ok(hex::encode(Sha256::digest(&data)))
}

/// Hex digest over chunk contents, for provenance of in-memory corpora.
/// Each chunk is length-prefixed so the digest is unambiguous.
pub fn chunks_digest(chunks: &[Chunk]) -> String {
    let mut hasher = Sha256::new();
    for chunk in chunks {
        hasher.update((chunk.bytes.len() as u64).to_le_bytes());
        hasher.update(&chunk.bytes);
    }
    hex::encode(hasher.finalize())
}

/// Chunks and entropy-filters every manifest entry.
///
/// Files are processed in parallel; the output order is the manifest order
/// with per-file chunk order preserved, so results are stable regardless of
/// thread count.
pub fn ingest(
    entries: &[ManifestEntry],
    config: &TrainingConfig,
) -> Result<(Vec<Chunk>, IngestSummary)> {
    let per_file: Vec<Result<Vec<Chunk>>> = entries
        .par_iter()
        .map(|entry| chunk_file(&Arc::new(entry.clone()), config))
        .collect();

    let mut summary = IngestSummary {
        files: entries.len(),
        ..IngestSummary::default()
    };
    let mut retained = Vec::new();
    for chunks in per_file {
        let chunks = chunks?;
        summary.chunks += chunks.len();
        summary.bytes_total += chunks.iter().map(|c| c.bytes.len() as u64).sum::<u64>();
        let kept = filter_chunks(chunks, config);
        summary.bytes_retained += kept.iter().map(|c| c.bytes.len() as u64).sum::<u64>();
        retained.extend(kept);
    }
    summary.chunks_filtered = summary.chunks - retained.len();
    Ok((retained, summary))
}
