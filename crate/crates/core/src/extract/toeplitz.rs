use super::bitstream::{words_for, BitStream};
use crate::error::{Error, Result};
use rand::Rng;

/// Seed of an `m × n` Toeplitz matrix: `n + m − 1` bits, with
/// `T[i][j] = seed[i − j + n − 1]`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ToeplitzSeed {
    bits: BitStream,
    n: usize,
    m: usize,
}

impl ToeplitzSeed {
    pub fn new(bits: BitStream, n: usize, m: usize) -> Result<Self> {
        if m == 0 || m >= n {
            return Err(Error::validation(format!(
                "Toeplitz output length m={m} must satisfy 0 < m < n={n}"
            )));
        }
        if bits.len() != n + m - 1 {
            return Err(Error::validation(format!(
                "Toeplitz seed must have n+m-1 = {} bits, got {}",
                n + m - 1,
                bits.len()
            )));
        }
        Ok(ToeplitzSeed { bits, n, m })
    }

    pub fn random(n: usize, m: usize, rng: &mut impl Rng) -> Result<Self> {
        let len = n + m.max(1) - 1;
        let words: Vec<u64> = (0..words_for(len)).map(|_| rng.random()).collect();
        Self::new(BitStream::from_words(words, len), n, m)
    }

    pub fn from_hex(hex_str: &str, n: usize, m: usize) -> Result<Self> {
        let bytes = hex::decode(hex_str).map_err(|e| Error::validation(format!("bad seed hex: {e}")))?;
        Self::new(BitStream::from_bytes_le(&bytes, n + m - 1)?, n, m)
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.bits.to_bytes_le())
    }

    pub fn input_bits(&self) -> usize {
        self.n
    }

    pub fn output_bits(&self) -> usize {
        self.m
    }

    pub fn bit(&self, k: usize) -> bool {
        self.bits.get(k)
    }
}

/// Toeplitz matrix expanded into packed rows, ready for repeated hashing.
///
/// Row `i` as a function of column `j` reads `seed[n − 1 + i − j]`; with the
/// seed reversed (`r[k] = seed[n + m − 2 − k]`) that is the contiguous window
/// `r[m − 1 − i .. m − 1 − i + n]`.
#[derive(Clone, Debug)]
pub struct ToeplitzHasher {
    n: usize,
    m: usize,
    row_words: usize,
    rows: Vec<u64>,
}

impl ToeplitzHasher {
    pub fn new(seed: &ToeplitzSeed) -> Self {
        let (n, m) = (seed.n, seed.m);
        let len = n + m - 1;
        let reversed: BitStream = (0..len).map(|k| seed.bits.get(len - 1 - k)).collect();
        let row_words = words_for(n);
        let mut rows = Vec::with_capacity(m * row_words);
        for i in 0..m {
            rows.extend(reversed.slice_words(m - 1 - i, n));
        }
        ToeplitzHasher { n, m, row_words, rows }
    }

    pub fn input_bits(&self) -> usize {
        self.n
    }

    pub fn output_bits(&self) -> usize {
        self.m
    }

    /// Hash one aligned `n`-bit block (padding bits must be zero) into `m`
    /// packed output bits.
    pub fn hash_words(&self, x: &[u64]) -> Vec<u64> {
        debug_assert_eq!(x.len(), self.row_words);
        let mut out = vec![0u64; words_for(self.m)];
        for (i, row) in self.rows.chunks_exact(self.row_words).enumerate() {
            let mut acc = 0u64;
            for (r, v) in row.iter().zip(x) {
                acc ^= r & v;
            }
            out[i >> 6] |= ((acc.count_ones() & 1) as u64) << (i & 63);
        }
        out
    }

    pub fn hash(&self, x: &BitStream) -> Result<BitStream> {
        if x.len() != self.n {
            return Err(Error::validation(format!(
                "Toeplitz input has {} bits, seed expects {}",
                x.len(),
                self.n
            )));
        }
        Ok(BitStream::from_words(self.hash_words(x.words()), self.m))
    }
}

/// `y = T x` over GF(2).
pub fn toeplitz_hash(x: &BitStream, seed: &ToeplitzSeed) -> Result<BitStream> {
    if x.len() != seed.n {
        return Err(Error::validation(format!(
            "Toeplitz input has {} bits, seed expects {}",
            x.len(),
            seed.n
        )));
    }
    ToeplitzHasher::new(seed).hash(x)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Dense bit-matrix oracle built straight from the index formula.
    pub(crate) fn naive_hash(x: &[bool], seed: &[bool], n: usize, m: usize) -> Vec<bool> {
        (0..m)
            .map(|i| (0..n).fold(false, |acc, j| acc ^ (seed[i + n - 1 - j] & x[j])))
            .collect()
    }

    #[test]
    fn worked_three_by_two_example() {
        let seed = ToeplitzSeed::new(BitStream::from_str01("1011"), 3, 2).unwrap();
        let y = toeplitz_hash(&BitStream::from_str01("110"), &seed).unwrap();
        assert_eq!(y, BitStream::from_str01("10"));
        assert_eq!(naive_hash(&[true, true, false], &[true, false, true, true], 3, 2), vec![true, false]);
    }

    #[test]
    fn zero_input_hashes_to_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let seed = ToeplitzSeed::random(500, 130, &mut rng).unwrap();
        let y = toeplitz_hash(&BitStream::zeros(500), &seed).unwrap();
        assert_eq!(y.count_ones(), 0);
        assert_eq!(y.len(), 130);
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let seed = ToeplitzSeed::new(BitStream::from_str01("1011"), 3, 2).unwrap();
        assert!(toeplitz_hash(&BitStream::from_str01("1101"), &seed).is_err());
        assert!(ToeplitzSeed::new(BitStream::from_str01("101"), 3, 2).is_err());
        assert!(ToeplitzSeed::new(BitStream::from_str01("10111"), 3, 3).is_err());
    }

    #[test]
    fn packed_matches_naive_on_random_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..1000 {
            let n = rng.random_range(2..=64);
            let m = rng.random_range(1..=32.min(n - 1));
            let seed_bits: Vec<bool> = (0..n + m - 1).map(|_| rng.random()).collect();
            let x: Vec<bool> = (0..n).map(|_| rng.random()).collect();
            let seed = ToeplitzSeed::new(seed_bits.iter().copied().collect(), n, m).unwrap();
            let y = toeplitz_hash(&x.iter().copied().collect(), &seed).unwrap();
            assert_eq!(y.iter().collect::<Vec<_>>(), naive_hash(&x, &seed_bits, n, m));
        }
    }

    #[test]
    fn gf2_linearity() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..200 {
            let n = rng.random_range(65..700);
            let m = rng.random_range(1..n);
            let seed = ToeplitzSeed::random(n, m, &mut rng).unwrap();
            let x: BitStream = (0..n).map(|_| rng.random::<bool>()).collect();
            let xp: BitStream = (0..n).map(|_| rng.random::<bool>()).collect();
            let sum: BitStream = x.iter().zip(xp.iter()).map(|(a, b)| a ^ b).collect();
            let h = ToeplitzHasher::new(&seed);
            let lhs = h.hash(&sum).unwrap();
            let rhs: BitStream = h.hash(&x).unwrap().iter().zip(h.hash(&xp).unwrap().iter()).map(|(a, b)| a ^ b).collect();
            assert_eq!(lhs, rhs);
        }
    }

    #[test]
    fn seed_hex_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let seed = ToeplitzSeed::random(4500, 1200, &mut rng).unwrap();
        let back = ToeplitzSeed::from_hex(&seed.to_hex(), 4500, 1200).unwrap();
        assert_eq!(back, seed);
    }
}
