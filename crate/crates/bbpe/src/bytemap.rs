//! Bijection between raw bytes and printable Unicode codepoints.
//!
//! The tokenizer interchange document stores token byte sequences as JSON
//! strings, so every byte value needs a printable, reversible representation.
//! We use the byte-level table shared by byte-level BPE models across the
//! ecosystem:
//!
//! * bytes 0x21–0x7E, 0xA1–0xAC and 0xAE–0xFF map to their own codepoint;
//! * the remaining 68 bytes (0x00–0x20, 0x7F–0xA0, 0xAD) map, in ascending
//!   byte order, to U+0100, U+0101, … U+0143.
//!
//! The mapping is total over 0..=255 and injective, so any byte sequence
//! round-trips exactly through its mapped string.

/// Bytes that map to their own codepoint.
const fn is_direct_byte(b: u8) -> bool {
    matches!(b, 0x21..=0x7E | 0xA1..=0xAC | 0xAE..=0xFF)
}

const fn build_byte_to_char() -> [char; 256] {
    let mut table = ['\0'; 256];
    let mut shifted = 0u32;
    let mut b = 0usize;
    while b < 256 {
        if is_direct_byte(b as u8) {
            table[b] = match char::from_u32(b as u32) {
                Some(c) => c,
                None => unreachable!(),
            };
        } else {
            table[b] = match char::from_u32(0x100 + shifted) {
                Some(c) => c,
                None => unreachable!(),
            };
            shifted += 1;
        }
        b += 1;
    }
    table
}

/// Inverse table indexed by codepoint. The largest mapped codepoint is
/// U+0143 (= 0x100 + 67), so 0x144 entries suffice.
const INVERSE_LEN: usize = 0x144;

const fn build_char_to_byte() -> [Option<u8>; INVERSE_LEN] {
    let forward = build_byte_to_char();
    let mut table = [None; INVERSE_LEN];
    let mut b = 0usize;
    while b < 256 {
        table[forward[b] as usize] = Some(b as u8);
        b += 1;
    }
    table
}

static BYTE_TO_CHAR: [char; 256] = build_byte_to_char();
static CHAR_TO_BYTE: [Option<u8>; INVERSE_LEN] = build_char_to_byte();

/// Printable codepoint for one byte.
pub fn byte_to_char(b: u8) -> char {
    BYTE_TO_CHAR[b as usize]
}

/// Byte for a mapped codepoint, or `None` if the codepoint is outside the
/// table's image.
pub fn char_to_byte(c: char) -> Option<u8> {
    let idx = c as usize;
    if idx < INVERSE_LEN {
        CHAR_TO_BYTE[idx]
    } else {
        None
    }
}

/// Maps a byte sequence to its printable string form.
pub fn bytes_to_mapped(bytes: &[u8]) -> String {
    bytes.iter().map(|&b| byte_to_char(b)).collect()
}

/// Inverts [`bytes_to_mapped`]. Returns the offending character when the
/// string contains a codepoint outside the mapping.
pub fn mapped_to_bytes(s: &str) -> Result<Vec<u8>, char> {
    s.chars().map(|c| char_to_byte(c).ok_or(c)).collect()
}
