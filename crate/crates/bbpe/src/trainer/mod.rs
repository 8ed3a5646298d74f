//! BPE training over the 256-byte base alphabet.
//!
//! [`train`] runs the optimized merge loop: pair counts are maintained
//! incrementally (only the neighborhoods touched by a merge are recounted)
//! and candidates live in a max-heap with lazy invalidation.
//! [`reference::reference_train`] is the deliberately naive
//! recount-everything oracle used to cross-check it; the two must agree
//! merge-for-merge on any corpus within the oracle's size guard.
//!
//! Selection semantics, shared by both paths:
//!
//! * every adjacent position counts, overlapping occurrences included;
//! * a pair is eligible when its count is at least `min_pair_frequency`,
//!   its combined expansion is at most `max_token_len` bytes, and that
//!   expansion does not duplicate an existing token's bytes;
//! * ties break on (count desc, left id asc, right id asc);
//! * replacement scans left to right, so `[a, a, a]` under rule `(a, a)`
//!   becomes `[aa, a]`.

use std::collections::BTreeMap;
use std::time::Instant;

use log::debug;
use serde::{Deserialize, Serialize};

use crate::corpus::{Chunk, TrainingConfig};
use crate::error::{BbpeError, Result};
use crate::vocab::Vocabulary;

mod incremental;
pub mod reference;

pub use reference::reference_train;

/// Token identifier. Ids 0..=255 are the base alphabet; learned tokens and
/// specials follow.
pub type TokenId = u32;

/// An adjacent token pair.
pub type Pair = (TokenId, TokenId);

/// One learned merge: at `rank`, pair (`left`, `right`) becomes `result`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MergeRule {
    pub rank: u32,
    pub left: TokenId,
    pub right: TokenId,
    /// Always `256 + rank`: learned ids are dense after the base alphabet.
    pub result: TokenId,
}

/// A pair and its occurrence count at counting time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairCount {
    pub left: TokenId,
    pub right: TokenId,
    pub count: u64,
}

/// Growing token table used while training: byte expansions for the base
/// alphabet plus every merge result so far.
#[derive(Debug, Clone)]
pub struct TokenTable {
    expansions: Vec<Vec<u8>>,
    lookup: std::collections::HashSet<Vec<u8>>,
}

impl TokenTable {
    /// Table holding only the 256 single-byte tokens.
    pub fn base() -> Self {
        let expansions: Vec<Vec<u8>> = (0..=255u8).map(|b| vec![b]).collect();
        let lookup = expansions.iter().cloned().collect();
        TokenTable { expansions, lookup }
    }

    /// Next id to be minted.
    pub fn next_id(&self) -> TokenId {
        self.expansions.len() as TokenId
    }

    pub fn expansion(&self, id: TokenId) -> &[u8] {
        &self.expansions[id as usize]
    }

    pub fn byte_len(&self, id: TokenId) -> usize {
        self.expansions[id as usize].len()
    }

    /// Concatenated expansion of a pair.
    pub fn combined(&self, pair: Pair) -> Vec<u8> {
        let mut bytes = self.expansions[pair.0 as usize].clone();
        bytes.extend_from_slice(&self.expansions[pair.1 as usize]);
        bytes
    }

    pub fn contains(&self, bytes: &[u8]) -> bool {
        self.lookup.contains(bytes)
    }

    /// Appends the expansion for a freshly minted token.
    pub fn push(&mut self, bytes: Vec<u8>) -> TokenId {
        let id = self.next_id();
        self.lookup.insert(bytes.clone());
        self.expansions.push(bytes);
        id
    }

    /// Total bytes stored across all expansions.
    fn stored_bytes(&self) -> usize {
        self.expansions.iter().map(Vec::len).sum()
    }
}

/// Counts every adjacent pair across all sequences. Overlapping occurrences
/// each count: `[a, a, a, a]` yields `(a, a) -> 3`.
pub fn count_pairs(sequences: &[Vec<TokenId>]) -> BTreeMap<Pair, u64> {
    let mut counts = BTreeMap::new();
    for seq in sequences {
        for window in seq.windows(2) {
            *counts.entry((window[0], window[1])).or_insert(0) += 1;
        }
    }
    counts
}

/// Picks the next merge: the eligible pair with the highest count, ties
/// broken by smaller left id then smaller right id. Returns `None` (the
/// stop signal) when no pair is eligible.
pub fn select_merge(
    counts: &BTreeMap<Pair, u64>,
    table: &TokenTable,
    config: &TrainingConfig,
) -> Option<MergeRule> {
    let mut best: Option<(Pair, u64)> = None;
    for (&pair, &count) in counts {
        if count < config.min_pair_frequency {
            continue;
        }
        if table.byte_len(pair.0) + table.byte_len(pair.1) > config.max_token_len {
            continue;
        }
        if table.contains(&table.combined(pair)) {
            continue;
        }
        // Strictly-greater keeps the earliest pair in (left, right) order on
        // ties, because BTreeMap iterates ascending.
        if best.map_or(true, |(_, best_count)| count > best_count) {
            best = Some((pair, count));
        }
    }
    best.map(|((left, right), _)| {
        let result = table.next_id();
        MergeRule {
            rank: result - 256,
            left,
            right,
            result,
        }
    })
}

/// Replaces every maximal left-to-right, non-overlapping occurrence of the
/// rule's pair in each sequence with the result id.
pub fn apply_merge(sequences: &mut [Vec<TokenId>], rule: &MergeRule) {
    for seq in sequences.iter_mut() {
        apply_merge_to_sequence(seq, rule);
    }
}

fn apply_merge_to_sequence(seq: &mut Vec<TokenId>, rule: &MergeRule) {
    if seq.len() < 2 {
        return;
    }
    let mut out = Vec::with_capacity(seq.len());
    let mut i = 0;
    while i < seq.len() {
        if i + 1 < seq.len() && seq[i] == rule.left && seq[i + 1] == rule.right {
            out.push(rule.result);
            i += 2;
        } else {
            out.push(seq[i]);
            i += 1;
        }
    }
    *seq = out;
}

/// Why the merge loop ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// Every requested merge was learned.
    TargetReached,
    /// No pair satisfied frequency, length, and distinctness constraints.
    NoEligiblePairs,
}

/// Machine-readable training summary.
#[derive(Debug, Clone, Serialize)]
pub struct TrainingSummary {
    pub merges_learned: usize,
    pub requested_merges: usize,
    pub stop_reason: StopReason,
    pub wall_time_secs: f64,
    /// Rough upper estimate of the trainer's working structures at their
    /// largest, in bytes. An estimate, not an RSS measurement.
    pub peak_working_set_estimate_bytes: u64,
    /// Distinct sequences after deduplication.
    pub unique_sequences: usize,
    pub total_sequences: usize,
    pub input_bytes: u64,
}

/// A trained vocabulary plus its training summary.
#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub vocabulary: Vocabulary,
    pub summary: TrainingSummary,
}

/// Trains on filtered chunks up to the largest configured vocabulary size.
///
/// Merges never cross chunk boundaries: each chunk is one working sequence.
/// The output is deterministic for a given corpus and configuration,
/// regardless of thread count.
pub fn train(chunks: &[Chunk], config: &TrainingConfig) -> Result<TrainOutput> {
    let sequences: Vec<&[u8]> = chunks.iter().map(|c| c.bytes.as_slice()).collect();
    train_over(&sequences, config)
}

/// [`train`] over caller-supplied byte sequences (no chunking or filtering).
pub fn train_from_sequences(sequences: &[Vec<u8>], config: &TrainingConfig) -> Result<TrainOutput> {
    let refs: Vec<&[u8]> = sequences.iter().map(Vec::as_slice).collect();
    train_over(&refs, config)
}

fn train_over(sequences: &[&[u8]], config: &TrainingConfig) -> Result<TrainOutput> {
    config.validate()?;
    let input_bytes: u64 = sequences.iter().map(|s| s.len() as u64).sum();
    if sequences.iter().all(|s| s.is_empty()) {
        return Err(BbpeError::Training(
            "no training data after entropy filtering".to_string(),
        ));
    }

    let started = Instant::now();
    let requested = config.requested_merges();
    let outcome = incremental::run(sequences, config, requested)?;

    let stop_reason = if outcome.merges.len() == requested {
        StopReason::TargetReached
    } else {
        StopReason::NoEligiblePairs
    };
    debug!(
        "training finished: {} of {requested} merges, stop reason {stop_reason:?}",
        outcome.merges.len()
    );

    let vocabulary = Vocabulary::from_merges(outcome.merges)?;
    let summary = TrainingSummary {
        merges_learned: vocabulary.merges().len(),
        requested_merges: requested,
        stop_reason,
        wall_time_secs: started.elapsed().as_secs_f64(),
        peak_working_set_estimate_bytes: outcome.peak_working_set_estimate_bytes,
        unique_sequences: outcome.unique_sequences,
        total_sequences: sequences.len(),
        input_bytes,
    };
    Ok(TrainOutput {
        vocabulary,
        summary,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_config(max_total: usize) -> TrainingConfig {
        TrainingConfig {
            target_vocab_sizes: vec![max_total],
            ..TrainingConfig::default()
        }
    }

    #[test]
    fn count_pairs_enumerates_adjacent_positions() {
        let counts = count_pairs(&[vec![0x61, 0x62, 0x61, 0x62]]);
        assert_eq!(counts.get(&(0x61, 0x62)), Some(&2));
        assert_eq!(counts.get(&(0x62, 0x61)), Some(&1));
        assert_eq!(counts.len(), 2);
    }

    #[test]
    fn count_pairs_counts_overlapping_runs() {
        let counts = count_pairs(&[vec![0x61, 0x61, 0x61, 0x61]]);
        assert_eq!(counts.get(&(0x61, 0x61)), Some(&3));
        assert_eq!(counts.len(), 1);
    }

    #[test]
    fn count_pairs_aggregates_across_sequences() {
        let counts = count_pairs(&[vec![0x01, 0x02], vec![0x01, 0x02]]);
        assert_eq!(counts.get(&(0x01, 0x02)), Some(&2));
        assert_eq!(counts.len(), 1);
    }

    #[test]
    fn select_merge_breaks_ties_on_smaller_left_id() {
        let mut counts = BTreeMap::new();
        counts.insert((1, 2), 5);
        counts.insert((3, 4), 5);
        let table = TokenTable::base();
        let rule = select_merge(&counts, &table, &tiny_config(300)).unwrap();
        assert_eq!((rule.left, rule.right), (1, 2));
        assert_eq!(rule.result, 256);
        assert_eq!(rule.rank, 0);
    }

    #[test]
    fn select_merge_stops_below_min_frequency() {
        let mut counts = BTreeMap::new();
        counts.insert((1, 2), 1);
        let table = TokenTable::base();
        assert!(select_merge(&counts, &table, &tiny_config(300)).is_none());
    }

    #[test]
    fn select_merge_skips_pairs_over_length_cap() {
        let mut table = TokenTable::base();
        // Two long tokens whose concatenation exceeds max_token_len = 32.
        let long_a = table.push(vec![0xAA; 17]); // id 256
        let long_b = table.push(vec![0xBB; 16]); // id 257
        let mut counts = BTreeMap::new();
        counts.insert((long_a, long_b), 100); // 33 bytes, ineligible
        counts.insert((0x10, 0x11), 90);
        let rule = select_merge(&counts, &table, &tiny_config(300)).unwrap();
        assert_eq!((rule.left, rule.right), (0x10, 0x11));
    }

    #[test]
    fn select_merge_skips_duplicate_expansions() {
        let mut table = TokenTable::base();
        table.push(vec![0x41, 0x42]); // "AB" already exists as id 256
        let mut counts = BTreeMap::new();
        counts.insert((0x41, 0x42), 50); // would re-create "AB"
        counts.insert((0x43, 0x44), 10);
        let rule = select_merge(&counts, &table, &tiny_config(300)).unwrap();
        assert_eq!((rule.left, rule.right), (0x43, 0x44));
    }

    #[test]
    fn apply_merge_replaces_all_occurrences() {
        let rule = MergeRule {
            rank: 0,
            left: 0x61,
            right: 0x62,
            result: 256,
        };
        let mut seqs = vec![vec![0x61, 0x62, 0x61, 0x62]];
        apply_merge(&mut seqs, &rule);
        assert_eq!(seqs[0], vec![256, 256]);
    }

    #[test]
    fn apply_merge_resolves_overlaps_left_to_right() {
        let rule = MergeRule {
            rank: 0,
            left: 0x61,
            right: 0x61,
            result: 256,
        };
        let mut seqs = vec![vec![0x61, 0x61, 0x61]];
        apply_merge(&mut seqs, &rule);
        assert_eq!(seqs[0], vec![256, 0x61]);
    }

    #[test]
    fn apply_merge_leaves_sequences_without_occurrences_alone() {
        let rule = MergeRule {
            rank: 0,
            left: 0x61,
            right: 0x62,
            result: 256,
        };
        let mut seqs = vec![vec![0x62]];
        apply_merge(&mut seqs, &rule);
        assert_eq!(seqs[0], vec![0x62]);
    }

    #[test]
    fn train_learns_the_only_frequent_pair() {
        let out = train_from_sequences(&[b"ABABAB".to_vec()], &tiny_config(264)).unwrap();
        let merges = out.vocabulary.merges();
        assert_eq!(merges.len(), 1);
        assert_eq!((merges[0].left, merges[0].right), (0x41, 0x42));
        assert_eq!(merges[0].result, 256);
        assert_eq!(out.summary.stop_reason, StopReason::TargetReached);
    }

    #[test]
    fn train_stops_when_counts_fall_below_min_frequency() {
        // "AAAA": first merge (A, A) -> 256 leaves [256, 256] whose only
        // pair occurs once, below min_pair_frequency = 2.
        let out = train_from_sequences(&[b"AAAA".to_vec()], &tiny_config(265)).unwrap();
        let merges = out.vocabulary.merges();
        assert_eq!(merges.len(), 1);
        assert_eq!((merges[0].left, merges[0].right), (0x41, 0x41));
        assert_eq!(out.summary.stop_reason, StopReason::NoEligiblePairs);
    }

    #[test]
    fn train_rejects_empty_corpus() {
        let err = train_from_sequences(&[], &tiny_config(264)).unwrap_err();
        assert!(err
            .to_string()
            .contains("no training data after entropy filtering"));
    }

    #[test]
    fn train_parent_ordering_and_expansion_closure() {
        let corpus: Vec<Vec<u8>> = vec![b"/usr/lib/libc.so /usr/lib/libm.so \x00\x00\x00\x00"
            .repeat(16)
            .to_vec()];
        let out = train_from_sequences(&corpus, &tiny_config(300)).unwrap();
        let v = &out.vocabulary;
        for rule in v.merges() {
            assert!(rule.left < rule.result && rule.right < rule.result);
            let left_len = v.token_bytes(rule.left).unwrap().len();
            let right_len = v.token_bytes(rule.right).unwrap().len();
            let result = v.token_bytes(rule.result).unwrap();
            assert_eq!(result.len(), left_len + right_len);
            assert!(result.len() <= 32);
        }
    }
}
