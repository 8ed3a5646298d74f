//! Vocabulary representation, family slicing, and nesting verification.
//!
//! A [`Vocabulary`] is the 256-byte base alphabet, an ordered merge list
//! (each merge minting token id `256 + rank`), and seven special control
//! tokens occupying the final ids. Families are produced by slicing one
//! fully trained vocabulary at several merge counts, which makes the nested
//! prefix property true by construction; [`verify_nesting`] checks it anyway.

use std::collections::HashSet;
use std::fmt;

use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{BbpeError, Result};
use crate::trainer::{MergeRule, TokenId};

/// The seven control tokens, in canonical order. They are appended after
/// training and never participate in merges or match input bytes.
pub const SPECIAL_TOKEN_NAMES: [&str; 7] = [
    "<|start|>",
    "<|end|>",
    "<|pad|>",
    "<|unk|>",
    "<|cls|>",
    "<|sep|>",
    "<|mask|>",
];

/// A named control token and its id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpecialToken {
    pub name: String,
    pub id: TokenId,
}

/// An immutable trained tokenizer.
#[derive(Debug, Clone)]
pub struct Vocabulary {
    /// Byte expansion per learned id: ids 0..=255 are the base alphabet,
    /// id 256+r is the expansion of merge r.
    tokens: Vec<Vec<u8>>,
    merges: Vec<MergeRule>,
    specials: Vec<SpecialToken>,
    /// (left, right) -> result, for the encoder.
    pair_lookup: FxHashMap<(TokenId, TokenId), TokenId>,
}

impl PartialEq for Vocabulary {
    fn eq(&self, other: &Self) -> bool {
        self.tokens == other.tokens
            && self.merges == other.merges
            && self.specials == other.specials
    }
}

impl Eq for Vocabulary {}

impl Vocabulary {
    /// Builds a vocabulary from an ordered merge list, expanding each learned
    /// token and appending the specials at the tail.
    pub fn from_merges(merges: Vec<MergeRule>) -> Result<Self> {
        let mut tokens: Vec<Vec<u8>> = (0..=255u8).map(|b| vec![b]).collect();
        let mut seen: HashSet<Vec<u8>> = HashSet::with_capacity(256 + merges.len());
        for token in &tokens {
            seen.insert(token.clone());
        }
        for (rank, rule) in merges.iter().enumerate() {
            let expected_result = 256 + rank as TokenId;
            if rule.rank != rank as u32 {
                return Err(BbpeError::Format(format!(
                    "merge {rank}: rank field is {}, expected {rank}",
                    rule.rank
                )));
            }
            if rule.result != expected_result {
                return Err(BbpeError::Format(format!(
                    "merge {rank}: result id {} is not 256 + rank",
                    rule.result
                )));
            }
            if rule.left >= expected_result || rule.right >= expected_result {
                return Err(BbpeError::Format(format!(
                    "merge {rank}: pair ({}, {}) references a token that does not exist yet",
                    rule.left, rule.right
                )));
            }
            let mut expansion = tokens[rule.left as usize].clone();
            expansion.extend_from_slice(&tokens[rule.right as usize]);
            if !seen.insert(expansion.clone()) {
                return Err(BbpeError::Format(format!(
                    "merge {rank}: expansion duplicates an existing token's bytes"
                )));
            }
            tokens.push(expansion);
        }
        let first_special = tokens.len() as TokenId;
        let specials = SPECIAL_TOKEN_NAMES
            .iter()
            .enumerate()
            .map(|(i, name)| SpecialToken {
                name: (*name).to_string(),
                id: first_special + i as TokenId,
            })
            .collect();
        let pair_lookup = merges
            .iter()
            .map(|rule| ((rule.left, rule.right), rule.result))
            .collect();
        Ok(Vocabulary {
            tokens,
            merges,
            specials,
            pair_lookup,
        })
    }

    /// Base alphabet plus specials; no learned merges.
    pub fn base_alphabet() -> Self {
        Self::from_merges(Vec::new()).expect("base alphabet is always valid")
    }

    /// Total id count: learned tokens plus specials.
    pub fn total_size(&self) -> usize {
        self.tokens.len() + self.specials.len()
    }

    /// Learned token count (base alphabet included, specials excluded).
    pub fn learned_len(&self) -> usize {
        self.tokens.len()
    }

    pub fn merges(&self) -> &[MergeRule] {
        &self.merges
    }

    pub fn specials(&self) -> &[SpecialToken] {
        &self.specials
    }

    /// Byte expansion of a learned id; `None` for specials or out of range.
    pub fn token_bytes(&self, id: TokenId) -> Option<&[u8]> {
        self.tokens.get(id as usize).map(Vec::as_slice)
    }

    pub fn is_special(&self, id: TokenId) -> bool {
        (id as usize) >= self.tokens.len() && (id as usize) < self.total_size()
    }

    /// Name of a special id, if it is one.
    pub fn special_name(&self, id: TokenId) -> Option<&str> {
        let idx = (id as usize).checked_sub(self.tokens.len())?;
        self.specials.get(idx).map(|s| s.name.as_str())
    }

    /// Merge result for an adjacent pair, if one was learned.
    pub fn merge_result(&self, left: TokenId, right: TokenId) -> Option<TokenId> {
        self.pair_lookup.get(&(left, right)).copied()
    }

    /// SHA-256 over the canonical content (tokens, merges, special names).
    pub fn digest(&self) -> [u8; 32] {
        let mut hasher = Sha256::new();
        hasher.update((self.tokens.len() as u64).to_le_bytes());
        for token in &self.tokens {
            hasher.update((token.len() as u64).to_le_bytes());
            hasher.update(token);
        }
        hasher.update((self.merges.len() as u64).to_le_bytes());
        for rule in &self.merges {
            hasher.update(rule.left.to_le_bytes());
            hasher.update(rule.right.to_le_bytes());
        }
        for special in &self.specials {
            hasher.update(special.name.as_bytes());
        }
        hasher.finalize().into()
    }

    /// Hex form of [`Vocabulary::digest`].
    pub fn digest_hex(&self) -> String {
        hex::encode(self.digest())
    }

    /// Checks every structural invariant; used after deserialization.
    pub fn validate(&self) -> Result<()> {
        for b in 0..=255usize {
            if self.tokens[b].as_slice() != [b as u8] {
                return Err(BbpeError::Format(format!(
                    "token {b} must be the single byte {b}"
                )));
            }
        }
        if self.tokens.len() != 256 + self.merges.len() {
            return Err(BbpeError::Format(
                "token table length must be 256 + merge count".to_string(),
            ));
        }
        let mut seen: HashSet<&[u8]> = HashSet::with_capacity(self.tokens.len());
        for token in &self.tokens {
            if !seen.insert(token) {
                return Err(BbpeError::Format(format!(
                    "duplicate token byte sequence {:02x?}",
                    token
                )));
            }
        }
        for (rank, rule) in self.merges.iter().enumerate() {
            let result = 256 + rank as TokenId;
            if rule.rank != rank as u32 || rule.result != result {
                return Err(BbpeError::Format(format!("merge {rank}: ids not dense")));
            }
            if rule.left >= result || rule.right >= result {
                return Err(BbpeError::Format(format!(
                    "merge {rank}: parents must precede the result"
                )));
            }
            let mut expansion = self.tokens[rule.left as usize].clone();
            expansion.extend_from_slice(&self.tokens[rule.right as usize]);
            if expansion != self.tokens[result as usize] {
                return Err(BbpeError::Format(format!(
                    "merge {rank}: stored expansion does not match parents"
                )));
            }
        }
        if self.specials.len() != SPECIAL_TOKEN_NAMES.len() {
            return Err(BbpeError::Format(format!(
                "expected {} special tokens, found {}",
                SPECIAL_TOKEN_NAMES.len(),
                self.specials.len()
            )));
        }
        for (i, (special, name)) in self.specials.iter().zip(SPECIAL_TOKEN_NAMES).enumerate() {
            if special.name != name {
                return Err(BbpeError::Format(format!(
                    "special {i} must be named {name}, found {}",
                    special.name
                )));
            }
            if special.id as usize != self.tokens.len() + i {
                return Err(BbpeError::Format(format!(
                    "special {name} must occupy id {}, found {}",
                    self.tokens.len() + i,
                    special.id
                )));
            }
        }
        Ok(())
    }
}

/// Digests identifying what a family was trained from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_digest: String,
    pub corpus_digest: String,
}

impl Provenance {
    pub fn unknown() -> Self {
        Provenance {
            config_digest: "unknown".to_string(),
            corpus_digest: "unknown".to_string(),
        }
    }
}

/// An ascending list of nested vocabularies plus their provenance.
#[derive(Debug, Clone)]
pub struct TokenizerFamily {
    pub members: Vec<Vocabulary>,
    pub provenance: Provenance,
}

/// Slices a fully trained vocabulary into family members, one per target
/// size. The member for target `T` keeps exactly the first
/// `T - 256 - 7` merges and places its specials at ids `T-7..T-1`.
pub fn slice_family(
    full: &Vocabulary,
    target_vocab_sizes: &[usize],
    provenance: Provenance,
) -> Result<TokenizerFamily> {
    if target_vocab_sizes.is_empty() {
        return Err(BbpeError::Slice("no target sizes given".to_string()));
    }
    let specials = SPECIAL_TOKEN_NAMES.len();
    let mut members = Vec::with_capacity(target_vocab_sizes.len());
    let mut previous = 0usize;
    for &target in target_vocab_sizes {
        if target <= previous {
            return Err(BbpeError::Slice(format!(
                "target sizes must be strictly ascending, got {target} after {previous}"
            )));
        }
        previous = target;
        if target < 256 + specials {
            return Err(BbpeError::Slice(format!(
                "target {target} cannot hold the base alphabet plus {specials} specials"
            )));
        }
        let merges_needed = target - 256 - specials;
        if merges_needed > full.merges().len() {
            return Err(BbpeError::Slice(format!(
                "target {target} needs {merges_needed} merges but training produced only {} \
                 (short by {})",
                full.merges().len(),
                merges_needed - full.merges().len()
            )));
        }
        let merges = full.merges()[..merges_needed].to_vec();
        members.push(Vocabulary::from_merges(merges)?);
    }
    Ok(TokenizerFamily {
        members,
        provenance,
    })
}

/// Where two family members first disagree.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NestingDivergence {
    /// Merge lists differ at this rank (or the smaller list is not a prefix).
    MergePrefix {
        smaller_size: usize,
        larger_size: usize,
        rank: usize,
        detail: String,
    },
    /// A shared learned id expands to different bytes.
    TokenBytes {
        smaller_size: usize,
        larger_size: usize,
        id: TokenId,
    },
    /// Special token names differ.
    Specials {
        smaller_size: usize,
        larger_size: usize,
        index: usize,
    },
}

impl fmt::Display for NestingDivergence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NestingDivergence::MergePrefix {
                smaller_size,
                larger_size,
                rank,
                detail,
            } => write!(
                f,
                "members {smaller_size} and {larger_size} diverge at merge rank {rank}: {detail}"
            ),
            NestingDivergence::TokenBytes {
                smaller_size,
                larger_size,
                id,
            } => write!(
                f,
                "members {smaller_size} and {larger_size} expand token id {id} differently"
            ),
            NestingDivergence::Specials {
                smaller_size,
                larger_size,
                index,
            } => write!(
                f,
                "members {smaller_size} and {larger_size} disagree on special token {index}"
            ),
        }
    }
}

/// Outcome of a nesting check over a family.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NestingReport {
    pub passed: bool,
    pub member_sizes: Vec<usize>,
    /// First divergence found, if any.
    pub divergence: Option<NestingDivergence>,
    pub warning: Option<String>,
}

impl NestingReport {
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "nesting: {} ({} members: {})\n",
            if self.passed { "PASS" } else { "FAIL" },
            self.member_sizes.len(),
            self.member_sizes
                .iter()
                .map(usize::to_string)
                .collect::<Vec<_>>()
                .join(" ⊂ ")
        ));
        if let Some(div) = &self.divergence {
            out.push_str(&format!("  first divergence: {div}\n"));
        }
        if let Some(warning) = &self.warning {
            out.push_str(&format!("  warning: {warning}\n"));
        }
        out
    }
}

/// Verifies the nested-prefix property: for every adjacent pair of members,
/// the smaller merge list is a prefix of the larger and every shared learned
/// id expands to identical bytes. Failure is reported, not raised.
pub fn verify_nesting(family: &TokenizerFamily) -> NestingReport {
    let member_sizes: Vec<usize> = family.members.iter().map(Vocabulary::total_size).collect();
    let mut report = NestingReport {
        passed: true,
        member_sizes,
        divergence: None,
        warning: None,
    };
    if family.members.len() < 2 {
        report.warning = Some(format!(
            "family has {} member(s); nesting is vacuously true",
            family.members.len()
        ));
        return report;
    }
    for pair in family.members.windows(2) {
        let (small, large) = (&pair[0], &pair[1]);
        let smaller_size = small.total_size();
        let larger_size = large.total_size();
        if small.merges().len() > large.merges().len() {
            report.passed = false;
            report.divergence = Some(NestingDivergence::MergePrefix {
                smaller_size,
                larger_size,
                rank: large.merges().len(),
                detail: "smaller member has more merges than larger".to_string(),
            });
            return report;
        }
        for (rank, (a, b)) in small.merges().iter().zip(large.merges()).enumerate() {
            if a != b {
                report.passed = false;
                report.divergence = Some(NestingDivergence::MergePrefix {
                    smaller_size,
                    larger_size,
                    rank,
                    detail: format!(
                        "({}, {}) vs ({}, {})",
                        a.left, a.right, b.left, b.right
                    ),
                });
                return report;
            }
        }
        for id in 0..small.learned_len() as TokenId {
            if small.token_bytes(id) != large.token_bytes(id) {
                report.passed = false;
                report.divergence = Some(NestingDivergence::TokenBytes {
                    smaller_size,
                    larger_size,
                    id,
                });
                return report;
            }
        }
        for (index, (a, b)) in small.specials().iter().zip(large.specials()).enumerate() {
            if a.name != b.name {
                report.passed = false;
                report.divergence = Some(NestingDivergence::Specials {
                    smaller_size,
                    larger_size,
                    index,
                });
                return report;
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rule(rank: u32, left: TokenId, right: TokenId) -> MergeRule {
        MergeRule {
            rank,
            left,
            right,
            result: 256 + rank,
        }
    }

    #[test]
    fn base_alphabet_layout() {
        let v = Vocabulary::base_alphabet();
        assert_eq!(v.total_size(), 263);
        assert_eq!(v.learned_len(), 256);
        assert_eq!(v.token_bytes(0x41), Some(&b"A"[..]));
        assert_eq!(v.special_name(256), Some("<|start|>"));
        assert_eq!(v.special_name(262), Some("<|mask|>"));
        assert!(v.is_special(262));
        assert!(!v.is_special(255));
        v.validate().unwrap();
    }

    #[test]
    fn merges_expand_through_parents() {
        // 256 = "AB", 257 = "ABAB"
        let v = Vocabulary::from_merges(vec![rule(0, 0x41, 0x42), rule(1, 256, 256)]).unwrap();
        assert_eq!(v.token_bytes(256), Some(&b"AB"[..]));
        assert_eq!(v.token_bytes(257), Some(&b"ABAB"[..]));
        assert_eq!(v.merge_result(0x41, 0x42), Some(256));
        assert_eq!(v.merge_result(256, 256), Some(257));
        assert_eq!(v.specials()[0].id, 258);
        v.validate().unwrap();
    }

    #[test]
    fn from_merges_rejects_forward_references() {
        let err = Vocabulary::from_merges(vec![rule(0, 0x41, 300)]).unwrap_err();
        assert!(err.to_string().contains("does not exist yet"));
    }

    #[test]
    fn from_merges_rejects_duplicate_expansions() {
        // (A, AB) and (AA, B)? Simpler: two rules that both expand to "AA".
        let rules = vec![rule(0, 0x41, 0x41), rule(1, 0x41, 0x41)];
        let err = Vocabulary::from_merges(rules).unwrap_err();
        assert!(err.to_string().contains("duplicates"));
    }

    #[test]
    fn slice_family_produces_expected_merge_counts() {
        let merges: Vec<MergeRule> = (0..800u32)
            .map(|r| {
                // Chain merges: each merges the previous result with a fresh byte-ish
                // pattern; use (r-th learned, base byte r % 256) to stay valid and
                // distinct.
                if r == 0 {
                    rule(0, 0, 1)
                } else {
                    rule(r, 255 + r, (r % 256) as TokenId)
                }
            })
            .collect();
        let full = Vocabulary::from_merges(merges).unwrap();
        assert_eq!(full.total_size(), 256 + 800 + 7);
        let family = slice_family(&full, &[320, 512, 1024], Provenance::unknown()).unwrap();
        assert_eq!(family.members.len(), 3);
        assert_eq!(family.members[0].merges().len(), 320 - 263);
        assert_eq!(family.members[1].merges().len(), 512 - 263);
        assert_eq!(family.members[2].merges().len(), 1024 - 263);
        // Specials sit at the tail of each member.
        let m = &family.members[0];
        assert_eq!(m.specials()[0].id as usize, 320 - 7);
        assert_eq!(m.specials()[6].id as usize, 319);
        assert!(verify_nesting(&family).passed);
    }

    #[test]
    fn slice_family_degenerate_base_only_member() {
        let full = Vocabulary::from_merges(vec![rule(0, 0x41, 0x42)]).unwrap();
        let family = slice_family(&full, &[263], Provenance::unknown()).unwrap();
        assert_eq!(family.members[0].merges().len(), 0);
        assert_eq!(family.members[0].total_size(), 263);
    }

    #[test]
    fn slice_family_reports_shortfall() {
        let merges: Vec<MergeRule> = (0..100u32)
            .map(|r| if r == 0 { rule(0, 0, 1) } else { rule(r, 255 + r, (r % 256) as TokenId) })
            .collect();
        let full = Vocabulary::from_merges(merges).unwrap();
        let err = slice_family(&full, &[4096], Provenance::unknown()).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("short by"), "got: {msg}");
    }

    #[test]
    fn verify_nesting_detects_altered_merge() {
        let mk = |alter: bool| {
            let mut merges: Vec<MergeRule> = (0..32u32)
                .map(|r| {
                    if r == 0 {
                        rule(0, 0, 1)
                    } else {
                        rule(r, 255 + r, (r % 256) as TokenId)
                    }
                })
                .collect();
            if alter {
                // Re-point merge 10 at a different (still valid) pair.
                merges[10] = rule(10, 2, 3);
            }
            Vocabulary::from_merges(merges).unwrap()
        };
        let small = {
            let full = mk(false);
            slice_family(&full, &[280], Provenance::unknown())
                .unwrap()
                .members
                .remove(0)
        };
        let large = mk(true);
        let family = TokenizerFamily {
            members: vec![small, large],
            provenance: Provenance::unknown(),
        };
        let report = verify_nesting(&family);
        assert!(!report.passed);
        match report.divergence.unwrap() {
            NestingDivergence::MergePrefix { rank, .. } => assert_eq!(rank, 10),
            other => panic!("unexpected divergence {other:?}"),
        }
    }

    #[test]
    fn verify_nesting_single_member_is_vacuous_with_warning() {
        let family = TokenizerFamily {
            members: vec![Vocabulary::base_alphabet()],
            provenance: Provenance::unknown(),
        };
        let report = verify_nesting(&family);
        assert!(report.passed);
        assert!(report.warning.is_some());
    }
}
