//! Vocabulary-structure statistics: token lengths, content categories,
//! short-sequence coverage, and member-vs-member visual diffs.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::codec::encode;
use crate::error::{BbpeError, Result};
use crate::trainer::TokenId;
use crate::vocab::{TokenizerFamily, Vocabulary};

/// Six mutually exclusive token content categories, matched in priority
/// order: base alphabet, readable strings, instruction patterns, pure null
/// padding, high bytes only, other. An all-null token can never match the
/// string or instruction rules, so encoding the priority in this order
/// changes nothing for it, but the order is kept explicit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenCategory {
    BaseAlphabet,
    PureNullPadding,
    ReadableStrings,
    InstructionPatterns,
    HighBytesOnly,
    Other,
}

/// x86-64 instruction marker bytes: REX prefixes 0x48–0x4F plus common
/// opcodes for MOV (0x88–0x8B, 0xB8–0xBF), CALL (0xE8, 0xFF), JMP (0xE9,
/// 0xEB), PUSH (0x50–0x57, 0x68, 0x6A), and POP (0x58–0x5F). The set is
/// fixed and versioned with the crate so category counts stay reproducible.
const fn build_instruction_bytes() -> [bool; 256] {
    let mut table = [false; 256];
    let mut b = 0x48usize; // REX prefixes
    while b <= 0x4F {
        table[b] = true;
        b += 1;
    }
    let mut b = 0x88usize; // MOV r/m
    while b <= 0x8B {
        table[b] = true;
        b += 1;
    }
    let mut b = 0xB8usize; // MOV imm
    while b <= 0xBF {
        table[b] = true;
        b += 1;
    }
    table[0xE8] = true; // CALL
    table[0xFF] = true;
    table[0xE9] = true; // JMP
    table[0xEB] = true;
    let mut b = 0x50usize; // PUSH
    while b <= 0x57 {
        table[b] = true;
        b += 1;
    }
    table[0x68] = true;
    table[0x6A] = true;
    let mut b = 0x58usize; // POP
    while b <= 0x5F {
        table[b] = true;
        b += 1;
    }
    table
}

static INSTRUCTION_BYTES: [bool; 256] = build_instruction_bytes();

/// Classifies one token's bytes into its content category.
pub fn classify_token(bytes: &[u8]) -> Result<TokenCategory> {
    if bytes.is_empty() {
        return Err(BbpeError::InvalidConfig(
            "cannot classify an empty token".to_string(),
        ));
    }
    if bytes.len() == 1 {
        return Ok(TokenCategory::BaseAlphabet);
    }
    if bytes.iter().all(|&b| (0x20..=0x7E).contains(&b)) {
        return Ok(TokenCategory::ReadableStrings);
    }
    if bytes.iter().any(|&b| INSTRUCTION_BYTES[b as usize]) {
        return Ok(TokenCategory::InstructionPatterns);
    }
    if bytes.iter().all(|&b| b == 0x00) {
        return Ok(TokenCategory::PureNullPadding);
    }
    if bytes.iter().all(|&b| b >= 0x80) {
        return Ok(TokenCategory::HighBytesOnly);
    }
    Ok(TokenCategory::Other)
}

/// Per-category token counts. Categories partition the tokens considered.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryBreakdown {
    pub base_alphabet: usize,
    pub pure_null_padding: usize,
    pub readable_strings: usize,
    pub instruction_patterns: usize,
    pub high_bytes_only: usize,
    pub other: usize,
}

impl CategoryBreakdown {
    pub fn total(&self) -> usize {
        self.base_alphabet
            + self.pure_null_padding
            + self.readable_strings
            + self.instruction_patterns
            + self.high_bytes_only
            + self.other
    }

    fn add(&mut self, category: TokenCategory) {
        match category {
            TokenCategory::BaseAlphabet => self.base_alphabet += 1,
            TokenCategory::PureNullPadding => self.pure_null_padding += 1,
            TokenCategory::ReadableStrings => self.readable_strings += 1,
            TokenCategory::InstructionPatterns => self.instruction_patterns += 1,
            TokenCategory::HighBytesOnly => self.high_bytes_only += 1,
            TokenCategory::Other => self.other += 1,
        }
    }

    pub fn render_text(&self) -> String {
        let total = self.total().max(1);
        let pct = |n: usize| 100.0 * n as f64 / total as f64;
        let mut out = String::new();
        out.push_str("category               count       %\n");
        let rows = [
            ("base alphabet", self.base_alphabet),
            ("pure null padding", self.pure_null_padding),
            ("readable strings", self.readable_strings),
            ("instruction patterns", self.instruction_patterns),
            ("high bytes only", self.high_bytes_only),
            ("other", self.other),
        ];
        for (name, count) in rows {
            out.push_str(&format!("{name:<20} {count:>8} {:>6.1}\n", pct(count)));
        }
        out.push_str(&format!("total                {:>8}\n", self.total()));
        out
    }
}

/// Categorizes a vocabulary's tokens. Specials count as their name bytes
/// (readable ASCII) when `include_specials` is set, matching the convention
/// that categorizes the full id space; length statistics conventionally
/// exclude them instead.
pub fn category_breakdown(vocab: &Vocabulary, include_specials: bool) -> CategoryBreakdown {
    let mut breakdown = CategoryBreakdown::default();
    for id in 0..vocab.learned_len() as TokenId {
        let bytes = vocab.token_bytes(id).expect("learned id in range");
        breakdown.add(classify_token(bytes).expect("learned tokens are non-empty"));
    }
    if include_specials {
        for special in vocab.specials() {
            breakdown.add(
                classify_token(special.name.as_bytes()).expect("special names are non-empty"),
            );
        }
    }
    breakdown
}

/// Histogram of token byte lengths with derived mean and median.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LengthDistribution {
    /// Length -> token count, ascending.
    pub counts: BTreeMap<usize, usize>,
    pub median: f64,
    pub mean: f64,
    pub tokens: usize,
}

impl LengthDistribution {
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str("length    count\n");
        for (&len, &count) in &self.counts {
            out.push_str(&format!("{len:>6} {count:>8}\n"));
        }
        out.push_str(&format!(
            "tokens {} median {} mean {:.2}\n",
            self.tokens, self.median, self.mean
        ));
        out
    }
}

/// Token length histogram over learned tokens; specials are excluded unless
/// asked for, matching the reporting convention for length tables.
pub fn length_distribution(vocab: &Vocabulary, include_specials: bool) -> LengthDistribution {
    let mut counts: BTreeMap<usize, usize> = BTreeMap::new();
    let mut lengths: Vec<usize> = Vec::with_capacity(vocab.total_size());
    for id in 0..vocab.learned_len() as TokenId {
        let len = vocab.token_bytes(id).expect("learned id in range").len();
        *counts.entry(len).or_insert(0) += 1;
        lengths.push(len);
    }
    if include_specials {
        for special in vocab.specials() {
            let len = special.name.len();
            *counts.entry(len).or_insert(0) += 1;
            lengths.push(len);
        }
    }
    lengths.sort_unstable();
    let tokens = lengths.len();
    let mean = lengths.iter().sum::<usize>() as f64 / tokens as f64;
    let median = if tokens % 2 == 1 {
        lengths[tokens / 2] as f64
    } else {
        (lengths[tokens / 2 - 1] + lengths[tokens / 2]) as f64 / 2.0
    };
    LengthDistribution {
        counts,
        median,
        mean,
        tokens,
    }
}

/// One scaling-summary row per family member.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    pub vocab_size: usize,
    /// Mean byte length over learned tokens.
    pub avg_token_len: f64,
    /// Learned 2-byte tokens over the 65,536 possible 2-byte sequences.
    pub two_byte_coverage: f64,
    /// Learned 3-byte tokens over the total vocabulary size.
    pub three_byte_share: f64,
    /// Fraction of all ids (specials included, counted by name bytes) whose
    /// bytes are < 0x80.
    pub ascii_only_share: f64,
    pub high_byte_share: f64,
}

/// Scaling rows for every member of a family.
pub fn scaling_summary(family: &TokenizerFamily) -> Vec<ScalingRow> {
    family.members.iter().map(scaling_row).collect()
}

/// The scaling-summary row for one vocabulary.
pub fn scaling_row(vocab: &Vocabulary) -> ScalingRow {
    let mut length_sum = 0usize;
    let mut two_byte = 0usize;
    let mut three_byte = 0usize;
    let mut ascii_only = 0usize;
    for id in 0..vocab.learned_len() as TokenId {
        let bytes = vocab.token_bytes(id).expect("learned id in range");
        length_sum += bytes.len();
        match bytes.len() {
            2 => two_byte += 1,
            3 => three_byte += 1,
            _ => {}
        }
        if bytes.iter().all(|&b| b < 0x80) {
            ascii_only += 1;
        }
    }
    // Special names are printable ASCII.
    ascii_only += vocab.specials().len();
    let total = vocab.total_size();
    let ascii_only_share = ascii_only as f64 / total as f64;
    ScalingRow {
        vocab_size: total,
        avg_token_len: length_sum as f64 / vocab.learned_len() as f64,
        two_byte_coverage: two_byte as f64 / 65_536.0,
        three_byte_share: three_byte as f64 / total as f64,
        ascii_only_share,
        high_byte_share: 1.0 - ascii_only_share,
    }
}

pub fn render_scaling_text(rows: &[ScalingRow]) -> String {
    let mut out = String::new();
    out.push_str("vocab    avg len   2B cov   3B share  high-byte  ascii-only\n");
    for row in rows {
        out.push_str(&format!(
            "{:>6}   {:>6.3}   {:>6.2}%   {:>6.2}%   {:>6.1}%   {:>6.1}%\n",
            row.vocab_size,
            row.avg_token_len,
            100.0 * row.two_byte_coverage,
            100.0 * row.three_byte_share,
            100.0 * row.high_byte_share,
            100.0 * row.ascii_only_share,
        ));
    }
    out
}

/// One token row in a visual diff table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiffRow {
    pub seq: usize,
    pub token_id: TokenId,
    pub len: usize,
    /// First bytes in hex, `..` appended when the token is longer.
    pub leading_bytes: String,
}

/// Side-by-side tokenization of one input prefix under two vocabularies.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VisualDiff {
    pub limit: usize,
    pub left_label: String,
    pub right_label: String,
    pub left: Vec<DiffRow>,
    pub right: Vec<DiffRow>,
}

fn leading_hex(bytes: &[u8]) -> String {
    let shown = bytes.iter().take(2).map(|b| format!("{b:02X}"));
    let mut out = shown.collect::<Vec<_>>().join(" ");
    if bytes.len() > 2 {
        out.push_str(" ..");
    }
    out
}

fn diff_rows(input: &[u8], vocab: &Vocabulary, limit: usize) -> Vec<DiffRow> {
    let encoded = encode(input, vocab);
    let mut rows = Vec::new();
    let mut covered = 0usize;
    for (index, &id) in encoded.ids.iter().enumerate() {
        if covered >= limit {
            break;
        }
        let bytes = vocab.token_bytes(id).expect("encode yields learned ids");
        rows.push(DiffRow {
            seq: index + 1,
            token_id: id,
            len: bytes.len(),
            leading_bytes: leading_hex(bytes),
        });
        covered += bytes.len();
    }
    rows
}

/// Tokenizes the first `limit` bytes of the input under both vocabularies.
/// Truncation is at token granularity: the last row may extend past the
/// limit and is shown in full.
pub fn visual_diff(
    input: &[u8],
    left: &Vocabulary,
    right: &Vocabulary,
    limit: usize,
) -> Result<VisualDiff> {
    if limit == 0 {
        return Err(BbpeError::Usage("diff limit must be at least 1".to_string()));
    }
    Ok(VisualDiff {
        limit,
        left_label: format!("{}", left.total_size()),
        right_label: format!("{}", right.total_size()),
        left: diff_rows(input, left, limit),
        right: diff_rows(input, right, limit),
    })
}

impl VisualDiff {
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<28} | {:<28}\n",
            format!("vocab {}", self.left_label),
            format!("vocab {}", self.right_label)
        ));
        out.push_str(&format!(
            "{:>3} {:>7} {:>4} {:<11} | {:>3} {:>7} {:>4} {:<11}\n",
            "seq", "id", "len", "bytes", "seq", "id", "len", "bytes"
        ));
        let rows = self.left.len().max(self.right.len());
        for i in 0..rows {
            let fmt = |row: Option<&DiffRow>| match row {
                Some(r) => format!("{:>3} {:>7} {:>4} {:<11}", r.seq, r.token_id, r.len, r.leading_bytes),
                None => format!("{:>3} {:>7} {:>4} {:<11}", "—", "—", "—", "—"),
            };
            out.push_str(&format!(
                "{} | {}\n",
                fmt(self.left.get(i)),
                fmt(self.right.get(i))
            ));
        }
        out
    }
}
