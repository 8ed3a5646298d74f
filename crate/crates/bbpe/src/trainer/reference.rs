//! Brute-force reference trainer.
//!
//! Recounts every pair from scratch each iteration and scans the full count
//! map for the best eligible pair. Quadratic and proud of it: this path
//! exists only to cross-check the optimized trainer, so it shares none of
//! its incremental machinery. Guarded to small corpora so misuse fails fast
//! instead of running for hours.

use crate::corpus::{Chunk, TrainingConfig};
use crate::error::{BbpeError, Result};

use super::{apply_merge, count_pairs, MergeRule, Pair, TokenId, TokenTable};

/// Largest corpus the oracle will accept, in bytes.
pub const MAX_ORACLE_BYTES: usize = 64 * 1024;
/// Most merges the oracle will compute.
pub const MAX_ORACLE_MERGES: usize = 512;

/// Trains by full recount each iteration. Output contract is identical to
/// [`super::train`]: same merges, same order, same stop condition.
pub fn reference_train(chunks: &[Chunk], config: &TrainingConfig) -> Result<Vec<MergeRule>> {
    let sequences: Vec<&[u8]> = chunks.iter().map(|c| c.bytes.as_slice()).collect();
    reference_train_over(&sequences, config)
}

/// [`reference_train`] over caller-supplied byte sequences.
pub fn reference_train_sequences(
    sequences: &[Vec<u8>],
    config: &TrainingConfig,
) -> Result<Vec<MergeRule>> {
    let refs: Vec<&[u8]> = sequences.iter().map(Vec::as_slice).collect();
    reference_train_over(&refs, config)
}

fn reference_train_over(sequences: &[&[u8]], config: &TrainingConfig) -> Result<Vec<MergeRule>> {
    config.validate()?;
    let total_bytes: usize = sequences.iter().map(|s| s.len()).sum();
    if total_bytes > MAX_ORACLE_BYTES {
        return Err(BbpeError::OracleGuard(format!(
            "reference trainer accepts at most {MAX_ORACLE_BYTES} bytes, got {total_bytes}"
        )));
    }
    let requested = config.requested_merges();
    if requested > MAX_ORACLE_MERGES {
        return Err(BbpeError::OracleGuard(format!(
            "reference trainer computes at most {MAX_ORACLE_MERGES} merges, {requested} requested"
        )));
    }
    if sequences.iter().all(|s| s.is_empty()) {
        return Err(BbpeError::Training(
            "no training data after entropy filtering".to_string(),
        ));
    }

    let mut seqs: Vec<Vec<TokenId>> = sequences
        .iter()
        .filter(|s| !s.is_empty())
        .map(|s| s.iter().map(|&b| TokenId::from(b)).collect())
        .collect();
    let mut table = TokenTable::base();
    let mut merges = Vec::with_capacity(requested);

    while merges.len() < requested {
        let counts = count_pairs(&seqs);
        let mut best: Option<(Pair, u64)> = None;
        for (&pair, &count) in &counts {
            if count < config.min_pair_frequency {
                continue;
            }
            if table.byte_len(pair.0) + table.byte_len(pair.1) > config.max_token_len {
                continue;
            }
            if table.contains(&table.combined(pair)) {
                continue;
            }
            match best {
                Some((_, best_count)) if count <= best_count => {}
                _ => best = Some((pair, count)),
            }
        }
        let Some((pair, _)) = best else {
            break;
        };
        let result = table.next_id();
        let rule = MergeRule {
            rank: result - 256,
            left: pair.0,
            right: pair.1,
            result,
        };
        apply_merge(&mut seqs, &rule);
        let combined = table.combined(pair);
        table.push(combined);
        merges.push(rule);
    }
    Ok(merges)
}
