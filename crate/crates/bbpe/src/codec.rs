//! Encoding and decoding of byte streams against a trained vocabulary.
//!
//! [`encode`] applies merges in global rank order: conceptually rank 0 is
//! replaced everywhere (left to right), then rank 1, and so on. The
//! implementation runs one pass with a position-linked working sequence and
//! a rank-ordered worklist, so a multi-hundred-megabyte input costs memory
//! proportional to its length instead of a rescan per rank.
//! [`reference_encode`] is the literal rank-by-rank rescan used to
//! cross-check it.
//!
//! Encoding is never chunked or entropy-filtered; those are training-time
//! concerns. Specials are never produced — callers wrap sequences with
//! control ids explicitly.

use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{BbpeError, Result};
use crate::trainer::TokenId;
use crate::vocab::Vocabulary;

/// Encoded token ids plus the byte length they decode back to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenSequence {
    pub ids: Vec<TokenId>,
    pub source_len: u64,
}

/// What [`decode`] does when it meets a special id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpecialsPolicy {
    /// Specials decode to nothing.
    Skip,
    /// Specials are an error.
    Error,
}

const NONE: u32 = u32::MAX;
const DEAD: TokenId = TokenId::MAX;

/// Encodes a byte stream into token ids by rank-ordered merge application.
pub fn encode(input: &[u8], vocab: &Vocabulary) -> TokenSequence {
    assert!(
        input.len() < u32::MAX as usize,
        "encode supports inputs below 4 GiB"
    );
    let source_len = input.len() as u64;
    if input.is_empty() {
        return TokenSequence {
            ids: Vec::new(),
            source_len,
        };
    }

    let mut ids: Vec<TokenId> = input.iter().map(|&b| TokenId::from(b)).collect();
    if vocab.merges().is_empty() || ids.len() < 2 {
        return TokenSequence { ids, source_len };
    }

    // next[i]/prev[i] link live positions; DEAD marks consumed slots.
    let n = ids.len();
    let mut next: Vec<u32> = (1..=n as u32).map(|i| if i as usize == n { NONE } else { i }).collect();
    let mut prev: Vec<u32> = (0..n as u32).map(|i| i.checked_sub(1).unwrap_or(NONE)).collect();

    // Worklist of (rank, position), smallest rank first, position breaking
    // ties so equal-rank matches resolve left to right.
    let mut seed: Vec<Reverse<(u32, u32)>> = Vec::new();
    for i in 0..n - 1 {
        if let Some(result) = vocab.merge_result(ids[i], ids[i + 1]) {
            seed.push(Reverse((result - 256, i as u32)));
        }
    }
    let mut worklist = BinaryHeap::from(seed);

    while let Some(Reverse((rank, pos))) = worklist.pop() {
        let pos_usize = pos as usize;
        if ids[pos_usize] == DEAD {
            continue;
        }
        let right = next[pos_usize];
        if right == NONE {
            continue;
        }
        let right_usize = right as usize;
        // The pair may have changed since this entry was pushed.
        match vocab.merge_result(ids[pos_usize], ids[right_usize]) {
            Some(result) if result - 256 == rank => {
                ids[pos_usize] = result;
                ids[right_usize] = DEAD;
                let after = next[right_usize];
                next[pos_usize] = after;
                if after != NONE {
                    prev[after as usize] = pos;
                }
                let before = prev[pos_usize];
                if before != NONE {
                    if let Some(r) = vocab.merge_result(ids[before as usize], result) {
                        worklist.push(Reverse((r - 256, before)));
                    }
                }
                if after != NONE {
                    if let Some(r) = vocab.merge_result(result, ids[after as usize]) {
                        worklist.push(Reverse((r - 256, pos)));
                    }
                }
            }
            _ => continue,
        }
    }

    ids.retain(|&id| id != DEAD);
    TokenSequence { ids, source_len }
}

/// Largest input [`reference_encode`] accepts, in bytes.
pub const MAX_ORACLE_INPUT: usize = 64 * 1024;

/// Literal rank-by-rank encoder: for each merge in rank order, rescan the
/// whole working sequence replacing occurrences left to right. Exists to
/// cross-check [`encode`].
pub fn reference_encode(input: &[u8], vocab: &Vocabulary) -> Result<TokenSequence> {
    if input.len() > MAX_ORACLE_INPUT {
        return Err(BbpeError::OracleGuard(format!(
            "reference encoder accepts at most {MAX_ORACLE_INPUT} bytes, got {}",
            input.len()
        )));
    }
    let mut ids: Vec<TokenId> = input.iter().map(|&b| TokenId::from(b)).collect();
    for rule in vocab.merges() {
        if ids.len() < 2 {
            break;
        }
        let mut out = Vec::with_capacity(ids.len());
        let mut i = 0;
        while i < ids.len() {
            if i + 1 < ids.len() && ids[i] == rule.left && ids[i + 1] == rule.right {
                out.push(rule.result);
                i += 2;
            } else {
                out.push(ids[i]);
                i += 1;
            }
        }
        ids = out;
    }
    Ok(TokenSequence {
        ids,
        source_len: input.len() as u64,
    })
}

/// Concatenates token expansions back into bytes.
pub fn decode(ids: &[TokenId], vocab: &Vocabulary, policy: SpecialsPolicy) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    for (index, &id) in ids.iter().enumerate() {
        if let Some(bytes) = vocab.token_bytes(id) {
            out.extend_from_slice(bytes);
        } else if vocab.is_special(id) {
            match policy {
                SpecialsPolicy::Skip => {}
                SpecialsPolicy::Error => {
                    return Err(BbpeError::Codec(format!(
                        "special token {} ({}) at position {index} with specials policy `error`",
                        id,
                        vocab.special_name(id).unwrap_or("?")
                    )));
                }
            }
        } else {
            return Err(BbpeError::Codec(format!(
                "token id {id} at position {index} is out of range for vocabulary of {}",
                vocab.total_size()
            )));
        }
    }
    Ok(out)
}

/// Compression ratio: input bytes per encoded token.
pub fn bytes_per_token(input: &[u8], vocab: &Vocabulary) -> Result<f64> {
    if input.is_empty() {
        return Err(BbpeError::Codec(
            "bytes per token is undefined for empty input".to_string(),
        ));
    }
    let encoded = encode(input, vocab);
    Ok(input.len() as f64 / encoded.ids.len() as f64)
}

/// Binary token stream header: magic, format version, id width, and a
/// truncated vocabulary digest so streams cannot silently be decoded with
/// the wrong tokenizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamHeader {
    pub version: u8,
    /// Bytes per id: 2 when the producing vocabulary fits 16-bit ids,
    /// else 4.
    pub id_width: u8,
    /// First 8 bytes of the vocabulary digest.
    pub vocab_digest: [u8; 8],
}

pub const STREAM_MAGIC: [u8; 4] = *b"BBPE";
pub const STREAM_VERSION: u8 = 1;
/// Header layout: magic (4) | version (1) | id width (1) | reserved (2,
/// zero) | vocab digest prefix (8).
pub const STREAM_HEADER_LEN: usize = 16;

/// Id width for a vocabulary: 2 bytes while ids fit 16 bits.
pub fn id_width_for(vocab: &Vocabulary) -> u8 {
    if vocab.total_size() <= 65536 {
        2
    } else {
        4
    }
}

fn digest_prefix(vocab: &Vocabulary) -> [u8; 8] {
    let digest = vocab.digest();
    let mut prefix = [0u8; 8];
    prefix.copy_from_slice(&digest[..8]);
    prefix
}

/// Writes header plus little-endian fixed-width ids.
pub fn write_token_stream<W: Write>(
    writer: &mut W,
    ids: &[TokenId],
    vocab: &Vocabulary,
) -> Result<()> {
    let id_width = id_width_for(vocab);
    let mut header = [0u8; STREAM_HEADER_LEN];
    header[..4].copy_from_slice(&STREAM_MAGIC);
    header[4] = STREAM_VERSION;
    header[5] = id_width;
    header[8..].copy_from_slice(&digest_prefix(vocab));
    writer.write_all(&header)?;
    match id_width {
        2 => {
            for &id in ids {
                writer.write_all(&(id as u16).to_le_bytes())?;
            }
        }
        _ => {
            for &id in ids {
                writer.write_all(&id.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

/// Reads a stream written by [`write_token_stream`], validating the header.
pub fn read_token_stream<R: Read>(reader: &mut R) -> Result<(StreamHeader, Vec<TokenId>)> {
    let mut header = [0u8; STREAM_HEADER_LEN];
    reader.read_exact(&mut header).map_err(|_| {
        BbpeError::Codec("token stream shorter than its 16-byte header".to_string())
    })?;
    if header[..4] != STREAM_MAGIC {
        return Err(BbpeError::Codec(format!(
            "bad magic {:02x?}; not a token stream",
            &header[..4]
        )));
    }
    let version = header[4];
    if version != STREAM_VERSION {
        return Err(BbpeError::Codec(format!(
            "unsupported token stream version {version}"
        )));
    }
    let id_width = header[5];
    if id_width != 2 && id_width != 4 {
        return Err(BbpeError::Codec(format!("invalid id width {id_width}")));
    }
    let mut vocab_digest = [0u8; 8];
    vocab_digest.copy_from_slice(&header[8..]);

    let mut payload = Vec::new();
    reader.read_to_end(&mut payload)?;
    if payload.len() % id_width as usize != 0 {
        return Err(BbpeError::Codec(format!(
            "payload of {} bytes is not a multiple of the id width {id_width}",
            payload.len()
        )));
    }
    let ids = match id_width {
        2 => payload
            .chunks_exact(2)
            .map(|c| TokenId::from(u16::from_le_bytes([c[0], c[1]])))
            .collect(),
        _ => payload
            .chunks_exact(4)
            .map(|c| TokenId::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect(),
    };
    Ok((
        StreamHeader {
            version,
            id_width,
            vocab_digest,
        },
        ids,
    ))
}

/// Checks a stream header against the vocabulary meant to decode it.
pub fn check_stream_vocab(header: &StreamHeader, vocab: &Vocabulary) -> Result<()> {
    if header.vocab_digest != digest_prefix(vocab) {
        return Err(BbpeError::Codec(
            "token stream was produced by a different vocabulary (digest mismatch)".to_string(),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trainer::MergeRule;

    fn rule(rank: u32, left: TokenId, right: TokenId) -> MergeRule {
        MergeRule {
            rank,
            left,
            right,
            result: 256 + rank,
        }
    }

    fn ab_vocab() -> Vocabulary {
        Vocabulary::from_merges(vec![rule(0, 0x41, 0x42)]).unwrap()
    }

    #[test]
    fn encode_empty_input() {
        let seq = encode(b"", &ab_vocab());
        assert!(seq.ids.is_empty());
        assert_eq!(seq.source_len, 0);
    }

    #[test]
    fn encode_single_byte_is_base_token() {
        let seq = encode(b"A", &ab_vocab());
        assert_eq!(seq.ids, vec![0x41]);
    }

    #[test]
    fn encode_ababa_matches_hand_application() {
        let seq = encode(b"ABABA", &ab_vocab());
        assert_eq!(seq.ids, vec![256, 256, 0x41]);
        let oracle = reference_encode(b"ABABA", &ab_vocab()).unwrap();
        assert_eq!(oracle.ids, seq.ids);
    }

    #[test]
    fn encode_applies_ranks_in_order() {
        // rank 0: (A, B) -> 256; rank 1: (256, C) -> 257; rank 2: (B, C) -> 258.
        // "ABC" must become [257], not [A, 258]: rank 0 fires first.
        let vocab = Vocabulary::from_merges(vec![
            rule(0, 0x41, 0x42),
            rule(1, 256, 0x43),
            rule(2, 0x42, 0x43),
        ])
        .unwrap();
        let seq = encode(b"ABC", &vocab);
        assert_eq!(seq.ids, vec![257]);
        assert_eq!(reference_encode(b"ABC", &vocab).unwrap().ids, seq.ids);
    }

    #[test]
    fn reference_encode_all_bytes_without_merges() {
        let vocab = Vocabulary::base_alphabet();
        let input: Vec<u8> = (0..=255u8).collect();
        let seq = reference_encode(&input, &vocab).unwrap();
        assert_eq!(seq.ids.len(), 256);
        assert!(seq.ids.iter().zip(0u32..).all(|(&id, i)| id == i));
    }

    #[test]
    fn reference_encode_guards_input_size() {
        let vocab = ab_vocab();
        let big = vec![0u8; MAX_ORACLE_INPUT + 1];
        assert!(matches!(
            reference_encode(&big, &vocab),
            Err(BbpeError::OracleGuard(_))
        ));
    }

    #[test]
    fn decode_round_trip_and_bounds() {
        let vocab = ab_vocab();
        assert_eq!(decode(&[], &vocab, SpecialsPolicy::Error).unwrap(), b"");
        assert_eq!(
            decode(&[0x00, 0xFF], &vocab, SpecialsPolicy::Error).unwrap(),
            vec![0x00, 0xFF]
        );
        let encoded = encode(b"ABABAB", &vocab);
        assert_eq!(
            decode(&encoded.ids, &vocab, SpecialsPolicy::Error).unwrap(),
            b"ABABAB"
        );
        // Out of range id.
        let err = decode(&[9999], &vocab, SpecialsPolicy::Skip).unwrap_err();
        assert!(err.to_string().contains("out of range"));
    }

    #[test]
    fn decode_specials_policy() {
        let vocab = ab_vocab();
        let start = vocab.specials()[0].id;
        let ids = vec![start, 0x41, start];
        assert_eq!(
            decode(&ids, &vocab, SpecialsPolicy::Skip).unwrap(),
            b"A".to_vec()
        );
        let err = decode(&ids, &vocab, SpecialsPolicy::Error).unwrap_err();
        assert!(err.to_string().contains("<|start|>"));
    }

    #[test]
    fn bytes_per_token_arithmetic() {
        let vocab = ab_vocab();
        // 8 bytes -> 4 tokens.
        assert_eq!(bytes_per_token(b"ABABABAB", &vocab).unwrap(), 2.0);
        // Unique unmerged bytes -> 1.0.
        assert_eq!(bytes_per_token(b"XYZ", &vocab).unwrap(), 1.0);
        assert!(bytes_per_token(b"", &vocab).is_err());
    }

    #[test]
    fn token_stream_round_trip_16_bit() {
        let vocab = ab_vocab();
        let encoded = encode(b"ABAB", &vocab);
        let mut buffer = Vec::new();
        write_token_stream(&mut buffer, &encoded.ids, &vocab).unwrap();
        assert_eq!(buffer.len(), STREAM_HEADER_LEN + 2 * encoded.ids.len());
        assert_eq!(&buffer[..4], b"BBPE");
        let (header, ids) = read_token_stream(&mut buffer.as_slice()).unwrap();
        assert_eq!(header.id_width, 2);
        assert_eq!(ids, encoded.ids);
        check_stream_vocab(&header, &vocab).unwrap();
        // A different vocabulary must be rejected.
        let other = Vocabulary::base_alphabet();
        assert!(check_stream_vocab(&header, &other).is_err());
    }

    #[test]
    fn token_stream_rejects_garbage() {
        let mut short = &b"BB"[..];
        assert!(read_token_stream(&mut short).is_err());
        let mut bad_magic = vec![0u8; STREAM_HEADER_LEN];
        assert!(read_token_stream(&mut bad_magic.as_slice()).is_err());
    }
}
