//! Byte-level BPE toolkit for binary executables.
//!
//! The crate trains BPE vocabularies directly on raw bytes (0x00–0xFF) from
//! entropy-filtered chunks of executable files, slices the result into a
//! nested tokenizer family, encodes/decodes arbitrary byte streams, and
//! computes the vocabulary-structure and compression statistics used to
//! compare family members.
//!
//! Modules map onto the pipeline stages:
//!
//! * [`corpus`] — manifest ingestion, chunking, Shannon entropy, filtering.
//! * [`trainer`] — the merge loop (incremental and brute-force reference).
//! * [`vocab`] — vocabulary representation, family slicing, nesting checks.
//! * [`serialization`] — the tokenizer interchange document and family layout.
//! * [`codec`] — encode/decode plus the binary token stream format.
//! * [`analysis`] — token length/category/coverage statistics.
//! * [`bench`] — bytes-per-token measurement over file manifests.
//! * [`cli`] — the `bbpe` command-line surface.

pub mod analysis;
pub mod bench;
pub mod bytemap;
pub mod cli;
pub mod codec;
pub mod corpus;
pub mod error;
pub mod serialization;
pub mod trainer;
pub mod vocab;

pub use codec::{decode, encode, TokenSequence};
pub use corpus::{Chunk, ManifestEntry, TrainingConfig};
pub use error::{BbpeError, Result};
pub use trainer::{train, MergeRule, TokenId};
pub use vocab::{TokenizerFamily, Vocabulary};

/// Tool version embedded in reports and artifacts.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
