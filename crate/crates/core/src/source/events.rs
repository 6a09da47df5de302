use super::{state_at_delay, SourceConfig};
use crate::certify::CoincidenceQuad;
use crate::error::{Error, Result};
use crate::extract::{BitStream, Provenance, Stage};
use crate::qmath::{born_unchecked, ket, Projector};
use crate::seed;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// Pair slots simulated per independent RNG chunk.
const CHUNK_PAIRS: u64 = 1 << 16;

/// Heralded H/V detections turned into raw bits (`H → 0`, `V → 1`).
#[derive(Clone, Debug, PartialEq)]
pub struct EventStream {
    pub bits: BitStream,
    pub stats: EventStats,
    pub config: SourceConfig,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventStats {
    /// Pair emission slots simulated.
    pub n_pairs: u64,
    /// Herald clicks (true or dark).
    pub n_heralds: u64,
    /// Heralds with no click on either H or V detector.
    pub n_herald_only: u64,
    /// Heralds with both H and V clicking; discarded.
    pub n_double_dark: u64,
}

impl EventStats {
    fn add(&mut self, o: &EventStats) {
        self.n_pairs += o.n_pairs;
        self.n_heralds += o.n_heralds;
        self.n_herald_only += o.n_herald_only;
        self.n_double_dark += o.n_double_dark;
    }
}

struct Probabilities {
    eta: f64,
    p_h: f64,
    /// Dark click on an arm-B detector within one coincidence window.
    p_dark_window: f64,
    /// Dark herald click in one pair slot.
    p_dark_herald: f64,
}

impl Probabilities {
    fn new(cfg: &SourceConfig) -> Result<Self> {
        let rho = state_at_delay(cfg)?;
        let h_b = Projector::second("IH", &ket::H);
        Ok(Probabilities {
            eta: cfg.det_efficiency,
            p_h: born_unchecked(&rho, h_b.matrix()).clamp(0.0, 1.0),
            p_dark_window: -(-cfg.dark_rate * cfg.coincidence_window_s).exp_m1(),
            p_dark_herald: if cfg.pair_rate > 0.0 { -(-cfg.dark_rate / cfg.pair_rate).exp_m1() } else { 0.0 },
        })
    }
}

/// Simulate one chunk, stopping early once `cap` bits are collected.
fn run_chunk(cfg: &SourceConfig, pr: &Probabilities, index: u64, cap: Option<usize>) -> (BitStream, EventStats) {
    let mut rng = seed::chunk_rng(cfg.rng_seed, "events", index);
    let mut bits = BitStream::with_capacity(CHUNK_PAIRS as usize);
    let mut st = EventStats::default();
    let darks = pr.p_dark_window > 0.0;
    for _ in 0..CHUNK_PAIRS {
        if cap.is_some_and(|c| bits.len() >= c) {
            break;
        }
        st.n_pairs += 1;
        let true_herald = rng.random::<f64>() < pr.eta;
        let dark_herald = pr.p_dark_herald > 0.0 && rng.random::<f64>() < pr.p_dark_herald;
        if !true_herald && !dark_herald {
            continue;
        }
        st.n_heralds += 1;
        let (mut click_h, mut click_v) = (false, false);
        if true_herald && rng.random::<f64>() < pr.eta {
            if rng.random::<f64>() < pr.p_h {
                click_h = true;
            } else {
                click_v = true;
            }
        }
        if darks {
            click_h |= rng.random::<f64>() < pr.p_dark_window;
            click_v |= rng.random::<f64>() < pr.p_dark_window;
        }
        match (click_h, click_v) {
            (true, false) => bits.push(false),
            (false, true) => bits.push(true),
            (true, true) => st.n_double_dark += 1,
            (false, false) => st.n_herald_only += 1,
        }
    }
    (bits, st)
}

/// Generate `n_bits` raw bits from heralded detections.
///
/// The pair stream is split into fixed-size chunks, each with its own
/// derived RNG; chunks run in parallel and are concatenated in order, so the
/// output depends only on the config.
pub fn generate_events(cfg: &SourceConfig, n_bits: usize) -> Result<EventStream> {
    cfg.validate()?;
    if cfg.det_efficiency == 0.0 || cfg.pair_rate == 0.0 {
        return Err(Error::NoCoincidences);
    }
    let pr = Probabilities::new(cfg)?;
    let batch = (rayon::current_num_threads() * 2).max(4) as u64;
    let mut bits = BitStream::with_capacity(n_bits);
    let mut stats = EventStats::default();
    let mut next = 0u64;
    while bits.len() < n_bits {
        let results: Vec<(BitStream, EventStats)> = (next..next + batch)
            .into_par_iter()
            .map(|k| run_chunk(cfg, &pr, k, None))
            .collect();
        for (k, (chunk_bits, chunk_stats)) in results.into_iter().enumerate() {
            let remaining = n_bits - bits.len();
            if chunk_bits.len() < remaining {
                bits.extend(&chunk_bits);
                stats.add(&chunk_stats);
            } else {
                // Replay the final chunk only up to the last needed bit so the
                // diagnostics match the emitted stream exactly.
                let (tail, tail_stats) = run_chunk(cfg, &pr, next + k as u64, Some(remaining));
                bits.extend(&tail);
                stats.add(&tail_stats);
                break;
            }
        }
        next += batch;
        if bits.is_empty() && next >= 1 << 12 {
            return Err(Error::NoCoincidences);
        }
    }
    bits.provenance = Provenance {
        stage: Stage::Raw,
        ..Default::default()
    };
    Ok(EventStream {
        bits,
        stats,
        config: cfg.clone(),
    })
}

/// Coincidences behind polarizers at `alpha`/`beta` degrees for `n_pairs`
/// emitted pairs: both photons must be detected, and the joint outcome is
/// drawn from the Born probabilities of the state at the configured delay.
pub fn generate_analyzer_events(cfg: &SourceConfig, alpha: f64, beta: f64, n_pairs: u64) -> Result<CoincidenceQuad> {
    let rho = state_at_delay(cfg)?;
    let probs: Vec<f64> = CoincidenceQuad::projectors(alpha, beta)
        .iter()
        .map(|p| born_unchecked(&rho, p.matrix()).max(0.0))
        .collect();
    let total: f64 = probs.iter().sum();
    let eta2 = cfg.det_efficiency * cfg.det_efficiency;
    let mut rng = seed::chunk_rng(cfg.rng_seed, "analyzer", 0);
    let mut n = [0u64; 4];
    for _ in 0..n_pairs {
        if rng.random::<f64>() >= eta2 {
            continue;
        }
        let mut u = rng.random::<f64>() * total;
        let mut k = 0;
        while k < 3 && u >= probs[k] {
            u -= probs[k];
            k += 1;
        }
        n[k] += 1;
    }
    Ok(CoincidenceQuad {
        n_ab: n[0],
        n_ab_perp: n[1],
        n_aperp_b: n[2],
        n_aperp_bperp: n[3],
    })
}
