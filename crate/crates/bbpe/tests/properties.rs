//! Property tests for the spec-level invariants.

use proptest::collection::vec;
use proptest::prelude::*;

use bbpe::codec::{decode, encode, reference_encode, SpecialsPolicy};
use bbpe::corpus::{chunk_bytes, filter_chunks, shannon_entropy, ManifestEntry, TrainingConfig};
use bbpe::serialization::{document_to_vocabulary, tokenizer_to_document};
use bbpe::trainer::{count_pairs, reference::reference_train_sequences, train_from_sequences};
use bbpe::vocab::{slice_family, verify_nesting, Provenance};

fn tiny_config(total: usize) -> TrainingConfig {
    TrainingConfig {
        target_vocab_sizes: vec![total],
        ..TrainingConfig::default()
    }
}

/// Bytes drawn from a restricted alphabet so merges actually fire.
fn low_entropy_bytes(alphabet: u8, len: usize) -> impl Strategy<Value = Vec<u8>> {
    vec(0u8..alphabet.max(2), 1..=len)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 32, ..ProptestConfig::default() })]

    #[test]
    fn entropy_bounds_hold(bytes in vec(any::<u8>(), 1..4096)) {
        let entropy = shannon_entropy(&bytes).unwrap();
        let bound = (bytes.len().min(256) as f64).log2();
        prop_assert!(entropy >= 0.0);
        prop_assert!(entropy <= bound + 1e-9);
    }

    #[test]
    fn entropy_is_permutation_invariant(mut bytes in vec(any::<u8>(), 1..2048)) {
        let forward = shannon_entropy(&bytes).unwrap();
        bytes.sort_unstable();
        let sorted = shannon_entropy(&bytes).unwrap();
        prop_assert!((forward - sorted).abs() < 1e-12);
    }

    #[test]
    fn chunks_reassemble_to_the_source(
        bytes in vec(any::<u8>(), 1..40_000),
        chunk_size in 2usize..9000,
    ) {
        let config = TrainingConfig { chunk_size, ..TrainingConfig::default() };
        let entry = std::sync::Arc::new(ManifestEntry::from_path("<memory>"));
        let chunks = chunk_bytes(&bytes, &entry, &config).unwrap();
        let mut offset = 0u64;
        let mut rebuilt = Vec::with_capacity(bytes.len());
        for chunk in &chunks {
            prop_assert_eq!(chunk.offset, offset);
            prop_assert!(chunk.bytes.len() <= chunk_size);
            offset += chunk.bytes.len() as u64;
            rebuilt.extend_from_slice(&chunk.bytes);
        }
        prop_assert_eq!(rebuilt, bytes);
        // Only the final chunk may be short.
        for chunk in &chunks[..chunks.len() - 1] {
            prop_assert_eq!(chunk.bytes.len(), chunk_size);
        }
        // Filtering is idempotent.
        let once = filter_chunks(chunks, &config);
        let count = once.len();
        let twice = filter_chunks(once, &config);
        prop_assert_eq!(twice.len(), count);
    }

    #[test]
    fn round_trip_identity_arbitrary_bytes(
        input in vec(any::<u8>(), 0..6000),
        corpus in low_entropy_bytes(8, 2048),
    ) {
        let out = train_from_sequences(&[corpus], &tiny_config(300)).unwrap();
        let vocab = &out.vocabulary;
        let encoded = encode(&input, vocab);
        prop_assert_eq!(encoded.source_len, input.len() as u64);
        let decoded = decode(&encoded.ids, vocab, SpecialsPolicy::Error).unwrap();
        prop_assert_eq!(decoded, input);
    }

    #[test]
    fn encode_matches_reference_encoder(
        input in low_entropy_bytes(6, 3000),
        corpus in low_entropy_bytes(6, 3000),
    ) {
        let out = train_from_sequences(&[corpus], &tiny_config(320)).unwrap();
        let vocab = &out.vocabulary;
        let fast = encode(&input, vocab);
        let slow = reference_encode(&input, vocab).unwrap();
        prop_assert_eq!(fast.ids, slow.ids);
    }

    #[test]
    fn trainer_matches_reference_trainer(
        seqs in vec(low_entropy_bytes(10, 1024), 1..4),
    ) {
        let config = tiny_config(256 + 7 + 48);
        let optimized = train_from_sequences(&seqs, &config).unwrap();
        let reference = reference_train_sequences(&seqs, &config).unwrap();
        prop_assert_eq!(optimized.vocabulary.merges(), reference.as_slice());
    }

    #[test]
    fn count_pairs_totals_adjacent_positions(seqs in vec(vec(any::<u32>(), 0..64), 0..6)) {
        let counts = count_pairs(&seqs);
        let total: u64 = counts.values().sum();
        let expected: u64 = seqs.iter().map(|s| s.len().saturating_sub(1) as u64).sum();
        prop_assert_eq!(total, expected);
    }

    #[test]
    fn sliced_families_always_nest(corpus in low_entropy_bytes(6, 4096)) {
        let config = tiny_config(360);
        let out = train_from_sequences(&[corpus], &config).unwrap();
        let top = out.vocabulary.total_size();
        if top >= 280 {
            let sizes: Vec<usize> = vec![270, 280, top];
            let family = slice_family(&out.vocabulary, &sizes, Provenance::unknown()).unwrap();
            prop_assert!(verify_nesting(&family).passed);

            // Monotone compression across nested members.
            let sample: Vec<u8> = (0..512u32).map(|i| (i % 6) as u8).collect();
            let mut last = usize::MAX;
            for member in &family.members {
                let tokens = encode(&sample, member).ids.len();
                prop_assert!(tokens <= last);
                last = tokens;
            }
        }
    }

    #[test]
    fn interchange_documents_round_trip(corpus in low_entropy_bytes(12, 2048)) {
        let out = train_from_sequences(&[corpus], &tiny_config(330)).unwrap();
        let doc = tokenizer_to_document(&out.vocabulary);
        let json = serde_json::to_string(&doc).unwrap();
        let parsed: bbpe::serialization::TokenizerDocument =
            serde_json::from_str(&json).unwrap();
        let loaded = document_to_vocabulary(&parsed).unwrap();
        prop_assert_eq!(loaded, out.vocabulary);
    }
}

#[test]
fn encode_never_emits_special_ids() {
    let corpus: Vec<Vec<u8>> = vec![b"<|start|><|end|><|pad|>".repeat(32)];
    let out = train_from_sequences(&corpus, &tiny_config(300)).unwrap();
    let vocab = &out.vocabulary;
    // Feed the literal special-token names as raw bytes: they must encode
    // through learned byte tokens, never as control ids.
    let encoded = encode(b"<|start|>hello<|end|>", vocab);
    for id in &encoded.ids {
        assert!(!vocab.is_special(*id));
    }
    let decoded = decode(&encoded.ids, vocab, SpecialsPolicy::Error).unwrap();
    assert_eq!(decoded, b"<|start|>hello<|end|>");
}
