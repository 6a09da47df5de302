use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Processing stage a stream belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    #[default]
    Raw,
    Extracted,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Stage::Raw => write!(f, "raw"),
            Stage::Extracted => write!(f, "extracted"),
        }
    }
}

/// Toeplitz parameters recorded on extracted streams.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractorInfo {
    pub block_in: usize,
    pub block_out: usize,
    pub seed_hex: String,
    /// Always "block-wise": each input block is hashed with the same seed.
    pub mode: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct Provenance {
    pub stage: Stage,
    /// Hash of the configuration that produced the stream, if known.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extractor: Option<ExtractorInfo>,
}

/// Bits packed little-endian into 64-bit words: bit `i` lives in
/// `words[i / 64]` at position `i % 64`. Padding bits past `len` are zero.
#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct BitStream {
    words: Vec<u64>,
    n_bits: usize,
    pub provenance: Provenance,
}

#[inline]
pub(crate) fn words_for(bits: usize) -> usize {
    bits.div_ceil(64)
}

impl BitStream {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_capacity(bits: usize) -> Self {
        BitStream {
            words: Vec::with_capacity(words_for(bits)),
            ..Default::default()
        }
    }

    pub fn zeros(n_bits: usize) -> Self {
        BitStream {
            words: vec![0; words_for(n_bits)],
            n_bits,
            provenance: Provenance::default(),
        }
    }

    /// Build from packed words; bits past `n_bits` are cleared.
    pub fn from_words(mut words: Vec<u64>, n_bits: usize) -> Self {
        words.resize(words_for(n_bits), 0);
        let mut s = BitStream {
            words,
            n_bits,
            provenance: Provenance::default(),
        };
        s.clear_padding();
        s
    }

    pub fn from_bits<I: IntoIterator<Item = bool>>(bits: I) -> Self {
        let mut s = BitStream::new();
        for b in bits {
            s.push(b);
        }
        s
    }

    /// Parse a string of `0`/`1` characters; other characters are ignored.
    pub fn from_str01(s: &str) -> Self {
        Self::from_bits(s.chars().filter_map(|c| match c {
            '0' => Some(false),
            '1' => Some(true),
            _ => None,
        }))
    }

    /// Unpack `ceil(n_bits/8)` little-endian bytes.
    pub fn from_bytes_le(bytes: &[u8], n_bits: usize) -> crate::Result<Self> {
        if bytes.len() != n_bits.div_ceil(8) {
            return Err(crate::Error::validation(format!(
                "{} bytes cannot hold exactly {n_bits} bits",
                bytes.len()
            )));
        }
        let words = bytes
            .chunks(8)
            .map(|c| {
                let mut w = [0u8; 8];
                w[..c.len()].copy_from_slice(c);
                u64::from_le_bytes(w)
            })
            .collect();
        Ok(Self::from_words(words, n_bits))
    }

    pub fn to_bytes_le(&self) -> Vec<u8> {
        let mut out: Vec<u8> = self.words.iter().flat_map(|w| w.to_le_bytes()).collect();
        out.truncate(self.n_bits.div_ceil(8));
        out
    }

    pub fn sha256_hex(&self) -> String {
        hex::encode(Sha256::digest(self.to_bytes_le()))
    }

    pub fn with_stage(mut self, stage: Stage) -> Self {
        self.provenance.stage = stage;
        self
    }

    pub fn len(&self) -> usize {
        self.n_bits
    }

    pub fn is_empty(&self) -> bool {
        self.n_bits == 0
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    #[inline]
    pub fn get(&self, i: usize) -> bool {
        debug_assert!(i < self.n_bits);
        (self.words[i >> 6] >> (i & 63)) & 1 == 1
    }

    /// Bit `i` as 0 or 1.
    #[inline]
    pub fn bit(&self, i: usize) -> u8 {
        ((self.words[i >> 6] >> (i & 63)) & 1) as u8
    }

    pub fn push(&mut self, b: bool) {
        if self.n_bits.is_multiple_of(64) {
            self.words.push(0);
        }
        if b {
            self.words[self.n_bits >> 6] |= 1 << (self.n_bits & 63);
        }
        self.n_bits += 1;
    }

    /// Append the low `n` bits of the packed slice `src`.
    pub fn extend_from_words(&mut self, src: &[u64], n: usize) {
        debug_assert!(src.len() * 64 >= n);
        let shift = self.n_bits & 63;
        if shift == 0 {
            self.words.extend_from_slice(&src[..words_for(n)]);
        } else {
            for (k, &w) in src[..words_for(n)].iter().enumerate() {
                let last = self.words.len() - 1;
                self.words[last] |= w << shift;
                let spill = w >> (64 - shift);
                if (k * 64 + 64 - shift) < n {
                    self.words.push(spill);
                }
            }
        }
        self.n_bits += n;
        self.words.truncate(words_for(self.n_bits));
        self.clear_padding();
    }

    pub fn extend(&mut self, other: &BitStream) {
        self.extend_from_words(&other.words, other.n_bits);
    }

    /// Copy bits `[start, start+len)` into freshly aligned words.
    pub fn slice_words(&self, start: usize, len: usize) -> Vec<u64> {
        assert!(start + len <= self.n_bits, "slice out of range");
        let n_out = words_for(len);
        let mut out = vec![0u64; n_out];
        let w0 = start >> 6;
        let shift = start & 63;
        for (k, o) in out.iter_mut().enumerate() {
            let lo = self.words.get(w0 + k).copied().unwrap_or(0);
            *o = if shift == 0 {
                lo
            } else {
                let hi = self.words.get(w0 + k + 1).copied().unwrap_or(0);
                (lo >> shift) | (hi << (64 - shift))
            };
        }
        if !len.is_multiple_of(64) {
            out[n_out - 1] &= (1u64 << (len % 64)) - 1;
        }
        out
    }

    pub fn slice(&self, start: usize, len: usize) -> BitStream {
        BitStream {
            words: self.slice_words(start, len),
            n_bits: len,
            provenance: self.provenance.clone(),
        }
    }

    pub fn truncate(&mut self, n: usize) {
        if n < self.n_bits {
            self.n_bits = n;
            self.words.truncate(words_for(n));
            self.clear_padding();
        }
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = bool> + '_ {
        (0..self.n_bits).map(move |i| self.get(i))
    }

    /// Bits as a `Vec<u8>` of 0/1 values.
    pub fn to_u8_vec(&self) -> Vec<u8> {
        (0..self.n_bits).map(|i| self.bit(i)).collect()
    }

    fn clear_padding(&mut self) {
        let r = self.n_bits % 64;
        if r != 0 {
            if let Some(last) = self.words.last_mut() {
                *last &= (1u64 << r) - 1;
            }
        }
    }
}

impl FromIterator<bool> for BitStream {
    fn from_iter<I: IntoIterator<Item = bool>>(iter: I) -> Self {
        Self::from_bits(iter)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn byte_packing_is_little_endian() {
        let s = BitStream::from_str01("1000000001");
        assert_eq!(s.to_bytes_le(), vec![0b0000_0001, 0b0000_0010]);
        let back = BitStream::from_bytes_le(&s.to_bytes_le(), 10).unwrap();
        assert_eq!(back, s);
        assert!(BitStream::from_bytes_le(&[0, 0, 0], 10).is_err());
    }

    #[test]
    fn sizes() {
        assert_eq!(BitStream::zeros(64).to_bytes_le().len(), 8);
        assert_eq!(BitStream::zeros(4_500_000).to_bytes_le().len(), 562_500);
    }

    #[test]
    fn padding_is_cleared() {
        let s = BitStream::from_words(vec![u64::MAX], 3);
        assert_eq!(s.words(), &[0b111]);
        assert_eq!(s.count_ones(), 3);
    }

    proptest! {
        #[test]
        fn extend_and_slice_agree_with_bitwise(a in proptest::collection::vec(any::<bool>(), 0..300),
                                              b in proptest::collection::vec(any::<bool>(), 0..300),
                                              start in 0usize..300, len in 0usize..300) {
            let mut s = BitStream::from_bits(a.iter().copied());
            s.extend(&BitStream::from_bits(b.iter().copied()));
            let all: Vec<bool> = a.iter().chain(b.iter()).copied().collect();
            prop_assert_eq!(s.iter().collect::<Vec<_>>(), all.clone());
            prop_assert_eq!(s.count_ones(), all.iter().filter(|&&x| x).count());
            if start + len <= all.len() {
                let sl = s.slice(start, len);
                prop_assert_eq!(sl.iter().collect::<Vec<_>>(), all[start..start + len].to_vec());
            }
        }
    }
}
