//! Fixed-length packed binary hashes with a Hamming metric and a hex codec.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum HashError {
    #[error("hash lengths differ: {0} vs {1} bits")]
    LengthMismatch(usize, usize),
    #[error("hex string has invalid length {0} (expected an even, nonzero length)")]
    BadHexLength(usize),
    #[error("invalid hex character {0:?}")]
    BadHexChar(char),
}

/// A packed binary hash. Bit `j` of the hash is bit `j % 64` of word
/// `j / 64`; bit order is row-major over the originating hash grid, and
/// unused high bits of the last word are always zero.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct BitHash {
    bits: usize,
    words: Vec<u64>,
}

impl BitHash {
    pub fn zero(bits: usize) -> Self {
        assert!(bits >= 1);
        Self {
            bits,
            words: vec![0; bits.div_ceil(64)],
        }
    }

    /// Packs a row-major slice of bit values.
    pub fn from_bits(values: &[bool]) -> Self {
        let mut h = Self::zero(values.len());
        for (j, &b) in values.iter().enumerate() {
            if b {
                h.words[j / 64] |= 1u64 << (j % 64);
            }
        }
        h
    }

    pub fn bits(&self) -> usize {
        self.bits
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn bit(&self, j: usize) -> bool {
        assert!(j < self.bits);
        (self.words[j / 64] >> (j % 64)) & 1 == 1
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Lowercase hex. Byte order follows word order; within each byte the
    /// lowest-numbered hash bit is printed as the most significant bit, so a
    /// 64-bit hash with only bit 0 set reads `8000000000000000`.
    pub fn to_hex(&self) -> String {
        let nbytes = self.bits.div_ceil(8);
        let mut out = String::with_capacity(nbytes * 2);
        for i in 0..nbytes {
            let raw = ((self.words[i / 8] >> (8 * (i % 8))) & 0xff) as u8;
            out.push_str(&format!("{:02x}", raw.reverse_bits()));
        }
        out
    }

    /// Parses the hex codec produced by [`Self::to_hex`]. The bit length is
    /// four times the string length.
    pub fn from_hex(s: &str) -> Result<Self, HashError> {
        if s.is_empty() || !s.len().is_multiple_of(2) {
            return Err(HashError::BadHexLength(s.len()));
        }
        let bits = s.len() * 4;
        let mut h = Self::zero(bits);
        let chars: Vec<char> = s.chars().collect();
        for i in 0..chars.len() / 2 {
            let hi = chars[2 * i].to_digit(16).ok_or(HashError::BadHexChar(chars[2 * i]))?;
            let lo = chars[2 * i + 1]
                .to_digit(16)
                .ok_or(HashError::BadHexChar(chars[2 * i + 1]))?;
            let byte = ((hi << 4) | lo) as u8;
            h.words[i / 8] |= (byte.reverse_bits() as u64) << (8 * (i % 8));
        }
        Ok(h)
    }
}

/// Hamming distance: popcount of the XOR of the packed words.
pub fn hamming(a: &BitHash, b: &BitHash) -> Result<usize, HashError> {
    if a.bits != b.bits {
        return Err(HashError::LengthMismatch(a.bits, b.bits));
    }
    Ok(a.words
        .iter()
        .zip(&b.words)
        .map(|(x, y)| (x ^ y).count_ones() as usize)
        .sum())
}
