//! On-disk formats: packed bit files with JSON sidecars, HOM scan CSV, and
//! pretty-printed JSON documents.

use crate::error::{Error, Result};
use crate::extract::{BitStream, ExtractorInfo, Provenance, Stage};
use crate::source::{EventStats, HomScan};
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::{Path, PathBuf};

/// Metadata written next to every bit file as `<file>.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BitSidecar {
    pub n_bits: usize,
    pub stage: Stage,
    pub sha256: String,
    /// Toeplitz seed for extracted streams.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed_hex: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_hash: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub extractor: Option<ExtractorInfo>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub event_stats: Option<EventStats>,
}

pub fn sidecar_path(bits_path: &Path) -> PathBuf {
    let mut s = bits_path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

/// Write `bits` as little-endian packed bytes plus its sidecar.
pub fn write_bits(path: &Path, bits: &BitStream, event_stats: Option<EventStats>) -> Result<BitSidecar> {
    let sidecar = BitSidecar {
        n_bits: bits.len(),
        stage: bits.provenance.stage,
        sha256: bits.sha256_hex(),
        seed_hex: bits.provenance.extractor.as_ref().map(|e| e.seed_hex.clone()),
        source_hash: bits.provenance.source_hash.clone(),
        extractor: bits.provenance.extractor.clone(),
        event_stats,
    };
    fs::write(path, bits.to_bytes_le())?;
    write_json(&sidecar_path(path), &sidecar)?;
    Ok(sidecar)
}

/// Read a bit file through its sidecar, checking length and digest.
pub fn read_bits(path: &Path) -> Result<BitStream> {
    let side_path = sidecar_path(path);
    let sidecar: BitSidecar = serde_json::from_str(&fs::read_to_string(&side_path).map_err(|e| {
        std::io::Error::new(e.kind(), format!("cannot read sidecar {}: {e}", side_path.display()))
    })?)?;
    let bytes = fs::read(path)?;
    let mut bits = BitStream::from_bytes_le(&bytes, sidecar.n_bits)?;
    let digest = bits.sha256_hex();
    if digest != sidecar.sha256 {
        return Err(Error::validation(format!(
            "{}: sha256 {digest} does not match sidecar {}",
            path.display(),
            sidecar.sha256
        )));
    }
    bits.provenance = Provenance {
        stage: sidecar.stage,
        source_hash: sidecar.source_hash,
        extractor: sidecar.extractor,
    };
    Ok(bits)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

/// `# dwell_s=<d> rng_seed=<s>` header, a column line, then one
/// `position_nm,counts` row per point.
pub fn hom_scan_csv(scan: &HomScan) -> String {
    let mut out = format!("# dwell_s={} rng_seed={}\nposition_nm,counts\n", scan.dwell_s, scan.rng_seed);
    for (p, c) in scan.positions_nm.iter().zip(&scan.counts) {
        out.push_str(&format!("{p},{c}\n"));
    }
    out
}

pub fn parse_hom_scan_csv(text: &str) -> Result<HomScan> {
    let bad = |msg: String| Error::validation(format!("HOM scan CSV: {msg}"));
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| bad("empty file".into()))?;
    let mut dwell_s = None;
    let mut rng_seed = None;
    for field in header.trim_start_matches('#').split_whitespace() {
        match field.split_once('=') {
            Some(("dwell_s", v)) => dwell_s = v.parse::<f64>().ok(),
            Some(("rng_seed", v)) => rng_seed = v.parse::<u64>().ok(),
            _ => {}
        }
    }
    let (Some(dwell_s), Some(rng_seed)) = (dwell_s, rng_seed) else {
        return Err(bad(format!("header {header:?} lacks dwell_s or rng_seed")));
    };
    if lines.next().map(str::trim) != Some("position_nm,counts") {
        return Err(bad("missing position_nm,counts column line".into()));
    }
    let mut positions_nm = Vec::new();
    let mut counts = Vec::new();
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let (p, c) = line.split_once(',').ok_or_else(|| bad(format!("row {} has no comma", i + 1)))?;
        positions_nm.push(p.trim().parse().map_err(|_| bad(format!("row {}: bad position {p:?}", i + 1)))?);
        counts.push(c.trim().parse().map_err(|_| bad(format!("row {}: bad count {c:?}", i + 1)))?);
    }
    Ok(HomScan {
        positions_nm,
        counts,
        dwell_s,
        rng_seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bit_file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("raw.bin");
        let bits = BitStream::from_str01("1011001110001").with_stage(Stage::Raw);
        let side = write_bits(&path, &bits, None).unwrap();
        assert_eq!(fs::read(&path).unwrap().len(), 2);
        assert_eq!(side.n_bits, 13);
        let json: serde_json::Value = read_json(&sidecar_path(&path)).unwrap();
        assert_eq!(json["stage"], "raw");
        assert_eq!(json["n_bits"], 13);
        assert_eq!(read_bits(&path).unwrap(), bits);
    }

    #[test]
    fn tampered_file_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("raw.bin");
        write_bits(&path, &BitStream::from_str01("10110011"), None).unwrap();
        fs::write(&path, [0u8]).unwrap();
        assert!(read_bits(&path).is_err());
        assert!(read_bits(&dir.path().join("missing.bin")).is_err());
    }

    #[test]
    fn hom_csv_round_trip() {
        let scan = HomScan {
            positions_nm: vec![-100.0, 0.0, 100.5],
            counts: vec![10, 2, 11],
            dwell_s: 0.5,
            rng_seed: 42,
        };
        let text = hom_scan_csv(&scan);
        assert!(text.starts_with("# dwell_s=0.5 rng_seed=42\nposition_nm,counts\n-100,10\n"));
        assert_eq!(parse_hom_scan_csv(&text).unwrap(), scan);
        assert!(parse_hom_scan_csv("position_nm,counts\n1,2\n").is_err());
        assert!(parse_hom_scan_csv("# dwell_s=1 rng_seed=0\nposition_nm,counts\n1;2\n").is_err());
    }
}
