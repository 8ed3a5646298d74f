//! Tokenizer interchange documents and the family directory layout.
//!
//! A saved tokenizer is a UTF-8 JSON document in the layout third-party NLP
//! tooling reads directly: top-level `version` and `added_tokens`, plus a
//! `model` block with `type: "BPE"`, a `vocab` map of mapped strings to ids,
//! and an ordered `merges` list of mapped-string pairs. Raw bytes are not
//! valid JSON text, so token byte sequences travel through the printable
//! bijection in [`crate::bytemap`].
//!
//! A family is a directory of member documents named `<prefix>-<size>.json`
//! plus a `family.json` index carrying provenance digests. Readers of the
//! interchange document reject unknown top-level fields, so provenance
//! lives in the index, not in the member documents.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bytemap::{bytes_to_mapped, mapped_to_bytes};
use crate::error::{BbpeError, Result};
use crate::trainer::{MergeRule, TokenId};
use crate::vocab::{Provenance, TokenizerFamily, Vocabulary, SPECIAL_TOKEN_NAMES};

pub const DOCUMENT_VERSION: &str = "1.0";

/// One entry in the document's `added_tokens` list.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AddedToken {
    pub id: TokenId,
    pub content: String,
    pub single_word: bool,
    pub lstrip: bool,
    pub rstrip: bool,
    pub normalized: bool,
    pub special: bool,
}

/// The `model` block of the interchange document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelBlock {
    #[serde(rename = "type")]
    pub model_type: String,
    pub dropout: Option<f64>,
    pub unk_token: Option<String>,
    pub continuing_subword_prefix: Option<String>,
    pub end_of_word_suffix: Option<String>,
    pub fuse_unk: bool,
    pub byte_fallback: bool,
    #[serde(default)]
    pub ignore_merges: bool,
    /// Mapped token string -> id. Sorted keys keep output deterministic.
    pub vocab: BTreeMap<String, TokenId>,
    /// Ordered mapped-string pairs, one per merge rank.
    pub merges: Vec<(String, String)>,
}

/// Root of the interchange document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TokenizerDocument {
    pub version: String,
    pub truncation: Option<serde_json::Value>,
    pub padding: Option<serde_json::Value>,
    pub added_tokens: Vec<AddedToken>,
    pub normalizer: Option<serde_json::Value>,
    pub pre_tokenizer: Option<serde_json::Value>,
    pub post_processor: Option<serde_json::Value>,
    pub decoder: Option<serde_json::Value>,
    pub model: ModelBlock,
}

/// Renders a vocabulary as an interchange document.
pub fn tokenizer_to_document(vocab: &Vocabulary) -> TokenizerDocument {
    let mut vocab_map = BTreeMap::new();
    for id in 0..vocab.learned_len() as TokenId {
        let bytes = vocab.token_bytes(id).expect("learned id in range");
        vocab_map.insert(bytes_to_mapped(bytes), id);
    }
    let merges = vocab
        .merges()
        .iter()
        .map(|rule| {
            let left = bytes_to_mapped(vocab.token_bytes(rule.left).expect("left in range"));
            let right = bytes_to_mapped(vocab.token_bytes(rule.right).expect("right in range"));
            (left, right)
        })
        .collect();
    let added_tokens = vocab
        .specials()
        .iter()
        .map(|special| AddedToken {
            id: special.id,
            content: special.name.clone(),
            single_word: false,
            lstrip: false,
            rstrip: false,
            normalized: false,
            special: true,
        })
        .collect();
    TokenizerDocument {
        version: DOCUMENT_VERSION.to_string(),
        truncation: None,
        padding: None,
        added_tokens,
        normalizer: None,
        pre_tokenizer: None,
        post_processor: None,
        decoder: None,
        model: ModelBlock {
            model_type: "BPE".to_string(),
            dropout: None,
            unk_token: None,
            continuing_subword_prefix: None,
            end_of_word_suffix: None,
            fuse_unk: false,
            byte_fallback: false,
            ignore_merges: false,
            vocab: vocab_map,
            merges,
        },
    }
}

/// Reconstructs and fully validates a vocabulary from a document.
pub fn document_to_vocabulary(doc: &TokenizerDocument) -> Result<Vocabulary> {
    let model = &doc.model;
    if model.model_type != "BPE" {
        return Err(BbpeError::Format(format!(
            "model type must be BPE, found {:?}",
            model.model_type
        )));
    }

    // Invert the vocab map and check density.
    let learned = model.vocab.len();
    let mut expansions: Vec<Option<Vec<u8>>> = vec![None; learned];
    for (mapped, &id) in &model.vocab {
        let bytes = mapped_to_bytes(mapped).map_err(|c| {
            BbpeError::Format(format!(
                "vocab entry for id {id} contains unmapped character {c:?}"
            ))
        })?;
        let slot = expansions.get_mut(id as usize).ok_or_else(|| {
            BbpeError::Format(format!(
                "vocab id {id} out of range for {learned} entries (ids must be dense)"
            ))
        })?;
        if slot.replace(bytes).is_some() {
            return Err(BbpeError::Format(format!("vocab id {id} appears twice")));
        }
    }
    if learned < 256 {
        return Err(BbpeError::Format(format!(
            "vocab holds {learned} entries; the 256-byte base alphabet is required"
        )));
    }
    let expansions: Vec<Vec<u8>> = expansions
        .into_iter()
        .enumerate()
        .map(|(id, slot)| {
            slot.ok_or_else(|| BbpeError::Format(format!("vocab id {id} is missing")))
        })
        .collect::<Result<_>>()?;
    for (id, expansion) in expansions.iter().take(256).enumerate() {
        if expansion.as_slice() != [id as u8] {
            return Err(BbpeError::Format(format!(
                "vocab id {id} must be the single byte 0x{id:02x}"
            )));
        }
    }
    if model.merges.len() != learned - 256 {
        return Err(BbpeError::Format(format!(
            "{} merges cannot produce {} learned tokens (need {})",
            model.merges.len(),
            learned,
            learned - 256
        )));
    }

    // Rebuild merge rules by looking both sides up in the vocab map.
    let mut rules = Vec::with_capacity(model.merges.len());
    for (rank, (left_str, right_str)) in model.merges.iter().enumerate() {
        let result = 256 + rank as TokenId;
        let left = *model.vocab.get(left_str).ok_or_else(|| {
            BbpeError::Format(format!(
                "merge {rank}: left side {left_str:?} references an absent token"
            ))
        })?;
        let right = *model.vocab.get(right_str).ok_or_else(|| {
            BbpeError::Format(format!(
                "merge {rank}: right side {right_str:?} references an absent token"
            ))
        })?;
        if left >= result || right >= result {
            return Err(BbpeError::Format(format!(
                "merge {rank}: pair ({left}, {right}) references a token minted later"
            )));
        }
        let mut combined = left_str.clone();
        combined.push_str(right_str);
        match model.vocab.get(&combined) {
            Some(&id) if id == result => {}
            Some(&id) => {
                return Err(BbpeError::Format(format!(
                    "merge {rank}: result should be id {result}, vocab maps it to {id}"
                )));
            }
            None => {
                return Err(BbpeError::Format(format!(
                    "merge {rank}: combined token is not in the vocab map"
                )));
            }
        }
        rules.push(MergeRule {
            rank: rank as u32,
            left,
            right,
            result,
        });
    }

    // Specials: exactly the seven canonical names, contiguous at the tail.
    if doc.added_tokens.len() != SPECIAL_TOKEN_NAMES.len() {
        let present: Vec<&str> = doc.added_tokens.iter().map(|t| t.content.as_str()).collect();
        let missing: Vec<&str> = SPECIAL_TOKEN_NAMES
            .iter()
            .filter(|name| !present.contains(name))
            .copied()
            .collect();
        return Err(BbpeError::Format(format!(
            "expected {} added tokens, found {}; missing: {missing:?}",
            SPECIAL_TOKEN_NAMES.len(),
            doc.added_tokens.len()
        )));
    }
    for (index, (token, name)) in doc
        .added_tokens
        .iter()
        .zip(SPECIAL_TOKEN_NAMES)
        .enumerate()
    {
        if token.content != name {
            return Err(BbpeError::Format(format!(
                "added token {index} must be {name}, found {:?}",
                token.content
            )));
        }
        let expected_id = learned as TokenId + index as TokenId;
        if token.id != expected_id {
            return Err(BbpeError::Format(format!(
                "special {name} must occupy id {expected_id}, found {}",
                token.id
            )));
        }
        if model.vocab.contains_key(name) {
            return Err(BbpeError::Format(format!(
                "special {name} must not appear in the model vocab"
            )));
        }
    }

    let vocabulary = Vocabulary::from_merges(rules)?;
    // The document's expansions must agree with the ones derived from the
    // merge list.
    for (id, expansion) in expansions.iter().enumerate() {
        if vocabulary.token_bytes(id as TokenId) != Some(expansion.as_slice()) {
            return Err(BbpeError::Format(format!(
                "vocab id {id}: stored bytes disagree with the merge-derived expansion"
            )));
        }
    }
    vocabulary.validate()?;
    Ok(vocabulary)
}

/// Writes the interchange document for one vocabulary.
pub fn save_tokenizer(vocab: &Vocabulary, path: &Path) -> Result<()> {
    let doc = tokenizer_to_document(vocab);
    let json = serde_json::to_string_pretty(&doc)?;
    fs::write(path, json.as_bytes())?;
    Ok(())
}

/// Loads and validates an interchange document.
pub fn load_tokenizer(path: &Path) -> Result<Vocabulary> {
    let data = fs::read(path).map_err(|e| BbpeError::Ingest {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    let doc: TokenizerDocument = serde_json::from_slice(&data)
        .map_err(|e| BbpeError::Format(format!("{}: {e}", path.display())))?;
    document_to_vocabulary(&doc)
        .map_err(|e| BbpeError::Format(format!("{}: {e}", path.display())))
}

/// Reference to one member document inside `family.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FamilyMemberRef {
    pub total_size: usize,
    /// File name relative to the family directory.
    pub path: String,
    /// Full hex digest of the member vocabulary.
    pub digest: String,
}

/// The `family.json` index document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FamilyIndex {
    pub version: String,
    pub tool_version: String,
    pub prefix: String,
    pub provenance: Provenance,
    pub members: Vec<FamilyMemberRef>,
}

/// Writes every member as `<prefix>-<size>.json` plus the `family.json`
/// index, and returns the index.
pub fn save_family(family: &TokenizerFamily, dir: &Path, prefix: &str) -> Result<FamilyIndex> {
    fs::create_dir_all(dir)?;
    let mut members = Vec::with_capacity(family.members.len());
    for member in &family.members {
        let file_name = format!("{prefix}-{}.json", member.total_size());
        save_tokenizer(member, &dir.join(&file_name))?;
        members.push(FamilyMemberRef {
            total_size: member.total_size(),
            path: file_name,
            digest: member.digest_hex(),
        });
    }
    let index = FamilyIndex {
        version: DOCUMENT_VERSION.to_string(),
        tool_version: crate::VERSION.to_string(),
        prefix: prefix.to_string(),
        provenance: family.provenance.clone(),
        members,
    };
    let json = serde_json::to_string_pretty(&index)?;
    fs::write(dir.join("family.json"), json.as_bytes())?;
    Ok(index)
}

/// Loads a family directory, checking member digests against the index.
pub fn load_family(dir: &Path) -> Result<(TokenizerFamily, FamilyIndex)> {
    let index_path = dir.join("family.json");
    let data = fs::read(&index_path).map_err(|e| BbpeError::Ingest {
        path: index_path.clone(),
        message: e.to_string(),
    })?;
    let index: FamilyIndex = serde_json::from_slice(&data)
        .map_err(|e| BbpeError::Format(format!("{}: {e}", index_path.display())))?;
    let mut members = Vec::with_capacity(index.members.len());
    for member_ref in &index.members {
        let vocab = load_tokenizer(&dir.join(&member_ref.path))?;
        if vocab.total_size() != member_ref.total_size {
            return Err(BbpeError::Format(format!(
                "{}: index says {} ids, document holds {}",
                member_ref.path,
                member_ref.total_size,
                vocab.total_size()
            )));
        }
        if vocab.digest_hex() != member_ref.digest {
            return Err(BbpeError::Format(format!(
                "{}: digest does not match the family index",
                member_ref.path
            )));
        }
        members.push(vocab);
    }
    if members.is_empty() {
        return Err(BbpeError::Format(format!(
            "{}: family index lists no members",
            index_path.display()
        )));
    }
    for pair in members.windows(2) {
        if pair[0].total_size() >= pair[1].total_size() {
            return Err(BbpeError::Format(
                "family members must be listed in ascending size order".to_string(),
            ));
        }
    }
    let family = TokenizerFamily {
        members,
        provenance: index.provenance.clone(),
    };
    Ok((family, index))
}

/// Resolves a path that may be either a member document or a family
/// directory produced by [`save_family`].
pub fn load_family_or_tokenizer(path: &Path) -> Result<TokenizerFamily> {
    if path.is_dir() {
        return load_family(path).map(|(family, _)| family);
    }
    let vocab = load_tokenizer(path)?;
    Ok(TokenizerFamily {
        members: vec![vocab],
        provenance: Provenance::unknown(),
    })
}
