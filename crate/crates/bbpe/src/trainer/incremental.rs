//! Optimized merge loop with incremental pair-count maintenance.
//!
//! Identical sequences are deduplicated and weighted. Pair counts live in a
//! hash map; candidates in a max-heap ordered by (count desc, left asc,
//! right asc) with lazy invalidation: entries are only trusted when their
//! recorded count matches the live count at pop time. Applying a merge
//! recounts nothing globally — each touched sequence reports count deltas
//! for its changed neighborhoods, and only those are folded back in.
//!
//! Counts of pre-existing pairs never increase (a merge only removes old
//! adjacencies and mints adjacencies involving the new id), so an entry
//! skipped for being below `min_pair_frequency` can never become eligible
//! later; the heap only needs fresh pushes when a live count changes.

use std::cmp::Ordering;
use std::collections::hash_map::Entry;
use std::collections::BinaryHeap;

use log::debug;
use rayon::prelude::*;
use rustc_hash::{FxHashMap, FxHashSet};

use crate::corpus::TrainingConfig;
use crate::error::Result;

use super::{MergeRule, Pair, TokenId, TokenTable};

/// Result of the optimized loop.
pub(super) struct LoopOutcome {
    pub merges: Vec<MergeRule>,
    pub unique_sequences: usize,
    pub peak_working_set_estimate_bytes: u64,
}

/// Heap entry: greatest count first, then smallest pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct PairScore {
    count: u64,
    pair: Pair,
}

impl Ord for PairScore {
    fn cmp(&self, other: &Self) -> Ordering {
        self.count
            .cmp(&other.count)
            .then_with(|| other.pair.cmp(&self.pair))
    }
}

impl PartialOrd for PairScore {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Rough per-entry footprints (bytes) for the working-set estimate.
const PAIR_COUNT_ENTRY: u64 = 48;
const OCCUPANCY_ENTRY: u64 = 16;
const HEAP_ENTRY: u64 = 16;

type Occupancy = FxHashMap<Pair, FxHashSet<u32>>;

struct PairStats {
    counts: FxHashMap<Pair, u64>,
    occupancy: Occupancy,
    heap: BinaryHeap<PairScore>,
    occupancy_entries: u64,
    min_pair_frequency: u64,
}

pub(super) fn run(
    sequences: &[&[u8]],
    config: &TrainingConfig,
    requested: usize,
) -> Result<LoopOutcome> {
    let (mut seqs, weights) = dedup(sequences);
    let unique_sequences = seqs.len();
    debug!(
        "training on {} unique sequences ({} total)",
        unique_sequences,
        sequences.len()
    );

    let (counts, occupancy) = initial_stats(&seqs, &weights);
    let mut heap = BinaryHeap::with_capacity(counts.len());
    for (&pair, &count) in &counts {
        if count >= config.min_pair_frequency {
            heap.push(PairScore { count, pair });
        }
    }
    let mut stats = PairStats {
        occupancy_entries: occupancy.values().map(|s| s.len() as u64).sum(),
        counts,
        occupancy,
        heap,
        min_pair_frequency: config.min_pair_frequency,
    };

    let mut table = TokenTable::base();
    let mut merges: Vec<MergeRule> = Vec::with_capacity(requested);
    let mut live_tokens: u64 = seqs
        .iter()
        .zip(&weights)
        .map(|(s, &w)| s.len() as u64 * w)
        .sum();
    let mut peak: u64 = 0;
    let mut global_deltas: FxHashMap<Pair, i64> = FxHashMap::default();
    let mut local_deltas: FxHashMap<Pair, i64> = FxHashMap::default();

    while merges.len() < requested {
        let estimate = stats.counts.len() as u64 * PAIR_COUNT_ENTRY
            + stats.occupancy_entries * OCCUPANCY_ENTRY
            + stats.heap.len() as u64 * HEAP_ENTRY
            + live_tokens * 4
            + table.stored_bytes() as u64;
        peak = peak.max(estimate);

        let Some((pair, count, combined)) = stats.pop_best(&table, config) else {
            break;
        };

        let result = table.next_id();
        let rule = MergeRule {
            rank: result - 256,
            left: pair.0,
            right: pair.1,
            result,
        };

        global_deltas.clear();
        let mut applied: u64 = 0;
        let touched = stats.occupancy.remove(&pair).unwrap_or_default();
        stats.occupancy_entries -= touched.len() as u64;
        for seq_idx in touched {
            local_deltas.clear();
            let merged =
                merge_in_sequence(&mut seqs[seq_idx as usize], pair, result, &mut local_deltas);
            if merged == 0 {
                // Stale occupancy entry: the pair was destroyed here by an
                // earlier merge.
                continue;
            }
            let weight = weights[seq_idx as usize];
            applied += merged * weight;
            for (&changed, &net) in &local_deltas {
                match net.cmp(&0) {
                    Ordering::Equal => {}
                    Ordering::Greater => {
                        // Net-positive means the pair now occurs in this
                        // sequence; remember where it lives.
                        *global_deltas.entry(changed).or_insert(0) += net * weight as i64;
                        let newly = stats
                            .occupancy
                            .entry(changed)
                            .or_default()
                            .insert(seq_idx);
                        if newly {
                            stats.occupancy_entries += 1;
                        }
                    }
                    Ordering::Less => {
                        *global_deltas.entry(changed).or_insert(0) += net * weight as i64;
                    }
                }
            }
        }
        debug_assert!(applied > 0, "selected pair must occur somewhere");
        live_tokens -= applied;

        for (&changed, &net) in &global_deltas {
            stats.apply_delta(changed, net);
        }

        debug!(
            "merge {}: ({}, {}) -> {} count {} len {}",
            rule.rank,
            rule.left,
            rule.right,
            rule.result,
            count,
            combined.len()
        );
        table.push(combined);
        merges.push(rule);
    }

    Ok(LoopOutcome {
        merges,
        unique_sequences,
        peak_working_set_estimate_bytes: peak,
    })
}

/// Deduplicates sequences, preserving first-seen order, and converts bytes
/// to token ids.
fn dedup(sequences: &[&[u8]]) -> (Vec<Vec<TokenId>>, Vec<u64>) {
    let mut index: FxHashMap<&[u8], usize> = FxHashMap::default();
    let mut seqs: Vec<Vec<TokenId>> = Vec::new();
    let mut weights: Vec<u64> = Vec::new();
    for &seq in sequences {
        if seq.is_empty() {
            continue;
        }
        match index.entry(seq) {
            Entry::Occupied(slot) => weights[*slot.get()] += 1,
            Entry::Vacant(slot) => {
                slot.insert(seqs.len());
                seqs.push(seq.iter().map(|&b| TokenId::from(b)).collect());
                weights.push(1);
            }
        }
    }
    (seqs, weights)
}

/// Counts all pairs and records which sequences contain each pair. Sharded
/// across sequences; the reduction is associative and order-independent, so
/// the result is identical for any thread count.
fn initial_stats(seqs: &[Vec<TokenId>], weights: &[u64]) -> (FxHashMap<Pair, u64>, Occupancy) {
    seqs.par_iter()
        .enumerate()
        .fold(
            || (FxHashMap::default(), Occupancy::default()),
            |(mut counts, mut occupancy), (idx, seq)| {
                let weight = weights[idx];
                for window in seq.windows(2) {
                    let pair = (window[0], window[1]);
                    *counts.entry(pair).or_insert(0) += weight;
                    occupancy.entry(pair).or_default().insert(idx as u32);
                }
                (counts, occupancy)
            },
        )
        .reduce(
            || (FxHashMap::default(), Occupancy::default()),
            |(mut counts_a, mut occ_a), (counts_b, occ_b)| {
                for (pair, count) in counts_b {
                    *counts_a.entry(pair).or_insert(0) += count;
                }
                for (pair, seq_ids) in occ_b {
                    occ_a.entry(pair).or_default().extend(seq_ids);
                }
                (counts_a, occ_a)
            },
        )
}

impl PairStats {
    /// Pops the best live, eligible pair. Entries whose recorded count no
    /// longer matches the live count are stale leftovers and get skipped;
    /// entries for pairs that can never merge (over the length cap, or
    /// duplicating an existing token's bytes) are consumed and dropped.
    fn pop_best(
        &mut self,
        table: &TokenTable,
        config: &TrainingConfig,
    ) -> Option<(Pair, u64, Vec<u8>)> {
        while let Some(score) = self.heap.pop() {
            let live = self.counts.get(&score.pair).copied().unwrap_or(0);
            if live != score.count || live < config.min_pair_frequency {
                continue;
            }
            if table.byte_len(score.pair.0) + table.byte_len(score.pair.1) > config.max_token_len {
                continue;
            }
            let combined = table.combined(score.pair);
            if table.contains(&combined) {
                continue;
            }
            return Some((score.pair, live, combined));
        }
        None
    }

    fn apply_delta(&mut self, pair: Pair, net: i64) {
        match net.cmp(&0) {
            Ordering::Equal => {}
            Ordering::Greater => {
                let count = self.counts.entry(pair).or_insert(0);
                *count += net as u64;
                if *count >= self.min_pair_frequency {
                    self.heap.push(PairScore {
                        count: *count,
                        pair,
                    });
                }
            }
            Ordering::Less => {
                let magnitude = net.unsigned_abs();
                let Entry::Occupied(mut slot) = self.counts.entry(pair) else {
                    debug_assert!(false, "decrement for untracked pair {pair:?}");
                    return;
                };
                debug_assert!(*slot.get() >= magnitude, "pair count underflow {pair:?}");
                let remaining = slot.get().saturating_sub(magnitude);
                if remaining == 0 {
                    slot.remove();
                    if let Some(seq_ids) = self.occupancy.remove(&pair) {
                        self.occupancy_entries -= seq_ids.len() as u64;
                    }
                } else {
                    *slot.get_mut() = remaining;
                    if remaining >= self.min_pair_frequency {
                        self.heap.push(PairScore {
                            count: remaining,
                            pair,
                        });
                    }
                }
            }
        }
    }
}

/// Merges one pair within a sequence, left to right, accumulating unit
/// count deltas for every neighborhood the replacement touches. Returns the
/// number of replacements made in this sequence.
fn merge_in_sequence(
    seq: &mut Vec<TokenId>,
    pair: Pair,
    result: TokenId,
    deltas: &mut FxHashMap<Pair, i64>,
) -> u64 {
    let mut out = Vec::with_capacity(seq.len());
    let mut merged: u64 = 0;
    let mut i = 0;
    while i < seq.len() {
        if i + 1 < seq.len() && seq[i] == pair.0 && seq[i + 1] == pair.1 {
            if let Some(&prev) = out.last() {
                *deltas.entry((prev, pair.0)).or_insert(0) -= 1;
                *deltas.entry((prev, result)).or_insert(0) += 1;
            }
            *deltas.entry(pair).or_insert(0) -= 1;
            if i + 2 < seq.len() {
                let next = seq[i + 2];
                *deltas.entry((pair.1, next)).or_insert(0) -= 1;
                *deltas.entry((result, next)).or_insert(0) += 1;
            }
            out.push(result);
            merged += 1;
            i += 2;
        } else {
            out.push(seq[i]);
            i += 1;
        }
    }
    if merged > 0 {
        *seq = out;
    }
    merged
}
