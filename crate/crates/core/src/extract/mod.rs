//! Toeplitz-hash randomness extraction over GF(2).
//!
//! Raw streams are cut into `n`-bit blocks and every block is hashed to `m`
//! bits with the same Toeplitz seed; a trailing partial block is dropped.

mod bitstream;
mod toeplitz;

pub use bitstream::{BitStream, ExtractorInfo, Provenance, Stage};
pub use toeplitz::{toeplitz_hash, ToeplitzHasher, ToeplitzSeed};

use crate::certify::min_entropy;
use crate::error::{Error, Result};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Output-to-input ratio of the reference dataset reduction (4.5 M → 1.2 M).
pub const RATIO_NUM: usize = 4;
pub const RATIO_DEN: usize = 15;

/// How the output block length `m` is chosen.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum OutputLength {
    /// `m = n · 4/15`, the 4.5 M → 1.2 M reduction.
    DatasetRatio,
    /// Leftover-hash sizing `m = ⌊n·h − 2·log₂(1/ε)⌋`. With `h_inf = None`
    /// the min-entropy is measured on the raw stream.
    LeftoverHash {
        #[serde(default)]
        h_inf: Option<f64>,
    },
    Fixed { m: usize },
}

/// Where the Toeplitz seed comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SeedSource {
    Rng { seed: u64 },
    Hex { hex: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtractorConfig {
    /// Input block length `n`.
    pub block_bits: usize,
    pub output: OutputLength,
    /// Security parameter for leftover-hash sizing.
    pub epsilon: f64,
    pub seed: SeedSource,
}

impl Default for ExtractorConfig {
    fn default() -> Self {
        ExtractorConfig {
            block_bits: 4500,
            output: OutputLength::DatasetRatio,
            epsilon: 2f64.powi(-100),
            seed: SeedSource::Rng { seed: 0 },
        }
    }
}

impl ExtractorConfig {
    /// Resolve `m` for this config, measuring min-entropy on `raw` if needed.
    pub fn output_bits(&self, raw: Option<&BitStream>) -> Result<usize> {
        let n = self.block_bits;
        match &self.output {
            OutputLength::DatasetRatio => {
                let m = n * RATIO_NUM / RATIO_DEN;
                if m == 0 {
                    return Err(Error::validation(format!("block length {n} too small for the 4/15 ratio")));
                }
                Ok(m)
            }
            OutputLength::Fixed { m } => Ok(*m),
            OutputLength::LeftoverHash { h_inf } => {
                let h = match (h_inf, raw) {
                    (Some(h), _) => *h,
                    (None, Some(raw)) => min_entropy(raw)?.h_inf,
                    (None, None) => {
                        return Err(Error::validation("leftover-hash sizing needs h_inf or a raw stream"))
                    }
                };
                choose_output_length(n, h, self.epsilon)
            }
        }
    }

    pub fn toeplitz_seed(&self, m: usize) -> Result<ToeplitzSeed> {
        match &self.seed {
            SeedSource::Rng { seed } => {
                ToeplitzSeed::random(self.block_bits, m, &mut crate::seed::rng_from_seed(*seed))
            }
            SeedSource::Hex { hex } => ToeplitzSeed::from_hex(hex, self.block_bits, m),
        }
    }
}

/// Leftover-hash output length `⌊n·h_inf − 2·log₂(1/ε)⌋`.
pub fn choose_output_length(n: usize, h_inf: f64, epsilon: f64) -> Result<usize> {
    if !(h_inf > 0.0 && h_inf <= 1.0) {
        return Err(Error::validation(format!("h_inf = {h_inf} outside (0, 1]")));
    }
    if !(epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::validation(format!("epsilon = {epsilon} outside (0, 1)")));
    }
    let m = (n as f64 * h_inf - 2.0 * (1.0 / epsilon).log2()).floor();
    if m < 1.0 {
        return Err(Error::validation(format!(
            "n={n}, h_inf={h_inf}, epsilon={epsilon:e} leave no extractable bits"
        )));
    }
    Ok(m as usize)
}

/// Hash every complete `n`-bit block of `raw` with one shared seed.
pub fn extract_stream(raw: &BitStream, cfg: &ExtractorConfig) -> Result<BitStream> {
    if raw.provenance.stage == Stage::Extracted {
        return Err(Error::validation("stream is already extracted"));
    }
    let n = cfg.block_bits;
    if raw.len() < n {
        return Err(Error::TooShort {
            what: "Toeplitz extraction".into(),
            required: n,
            actual: raw.len(),
        });
    }
    let m = cfg.output_bits(Some(raw))?;
    let seed = cfg.toeplitz_seed(m)?;
    extract_with_seed(raw, &seed)
}

/// Block-wise extraction with an explicit seed. Blocks are hashed in
/// parallel; the output is identical to sequential hashing.
pub fn extract_with_seed(raw: &BitStream, seed: &ToeplitzSeed) -> Result<BitStream> {
    let n = seed.input_bits();
    let m = seed.output_bits();
    if raw.len() < n {
        return Err(Error::TooShort {
            what: "Toeplitz extraction".into(),
            required: n,
            actual: raw.len(),
        });
    }
    let hasher = ToeplitzHasher::new(seed);
    let blocks = raw.len() / n;
    let hashed: Vec<Vec<u64>> = (0..blocks)
        .into_par_iter()
        .map(|b| hasher.hash_words(&raw.slice_words(b * n, n)))
        .collect();
    let mut out = BitStream::with_capacity(blocks * m);
    for h in &hashed {
        out.extend_from_words(h, m);
    }
    out.provenance = Provenance {
        stage: Stage::Extracted,
        source_hash: raw.provenance.source_hash.clone(),
        extractor: Some(ExtractorInfo {
            block_in: n,
            block_out: m,
            seed_hex: seed.to_hex(),
            mode: "block-wise".into(),
        }),
    };
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn leftover_hash_lengths() {
        assert_eq!(choose_output_length(4500, 0.9997, 2f64.powi(-100)).unwrap(), 4298);
        // ε → 1 approaches n from below; the floor keeps m < n.
        let m = choose_output_length(4500, 1.0, 1.0 - 1e-12).unwrap();
        assert!(m == 4499 || m == 4500);
        assert!(choose_output_length(100, 0.5, 2f64.powi(-100)).is_err());
        assert!(choose_output_length(100, 0.0, 0.5).is_err());
        assert!(choose_output_length(100, 0.5, 1.0).is_err());
    }

    #[test]
    fn dataset_ratio_block() {
        let cfg = ExtractorConfig::default();
        assert_eq!(cfg.output_bits(None).unwrap(), 1200);
    }

    #[test]
    fn one_block_gives_m_bits() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let raw: BitStream = (0..4500).map(|_| rng.random::<bool>()).collect();
        let out = extract_stream(&raw, &ExtractorConfig::default()).unwrap();
        assert_eq!(out.len(), 1200);
        assert_eq!(out.provenance.stage, Stage::Extracted);
        assert!(extract_stream(&out, &ExtractorConfig::default()).is_err());
        assert!(extract_stream(&raw.slice(0, 4499), &ExtractorConfig::default()).is_err());
    }

    #[test]
    fn partial_block_is_dropped_and_blocks_match_single_hash() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let raw: BitStream = (0..3 * 700 + 123).map(|_| rng.random::<bool>()).collect();
        let seed = ToeplitzSeed::random(700, 200, &mut rng).unwrap();
        let out = extract_with_seed(&raw, &seed).unwrap();
        assert_eq!(out.len(), 600);
        for b in 0..3 {
            let single = toeplitz_hash(&raw.slice(b * 700, 700).with_stage(Stage::Raw), &seed).unwrap();
            assert_eq!(out.slice(b * 200, 200).iter().collect::<Vec<_>>(), single.iter().collect::<Vec<_>>());
        }
    }

    #[test]
    fn same_seed_same_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let raw: BitStream = (0..45_000).map(|_| rng.random::<bool>()).collect();
        let cfg = ExtractorConfig {
            seed: SeedSource::Rng { seed: 99 },
            ..Default::default()
        };
        assert_eq!(extract_stream(&raw, &cfg).unwrap(), extract_stream(&raw, &cfg).unwrap());
    }
}
