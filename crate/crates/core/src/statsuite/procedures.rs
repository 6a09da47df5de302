//! The individual test procedures over a 0/1 byte slice. Length
//! requirements are checked by the caller.

use super::special::{erfc, igamc, log2, normal_cdf};
use num_complex::Complex;
use rayon::prelude::*;
use serde_json::{json, Value};
use std::collections::BTreeMap;

/// Raw outcome of one procedure.
#[derive(Clone, Debug, Default, PartialEq)]
pub(crate) struct Computed {
    pub p_values: Vec<f64>,
    pub params: BTreeMap<String, Value>,
    /// Set when the data did not meet a condition of the procedure.
    pub not_applicable: Option<String>,
}

impl Computed {
    pub(crate) fn new(p_values: Vec<f64>) -> Self {
        Computed {
            p_values: p_values.into_iter().map(|p| p.clamp(0.0, 1.0)).collect(),
            ..Default::default()
        }
    }

    pub(crate) fn param(mut self, k: &str, v: Value) -> Self {
        self.params.insert(k.to_string(), v);
        self
    }
}

pub(crate) fn frequency(e: &[u8]) -> Computed {
    let n = e.len() as f64;
    let s: i64 = e.iter().map(|&b| 2 * b as i64 - 1).sum();
    let s_obs = (s.abs() as f64) / n.sqrt();
    Computed::new(vec![erfc(s_obs / std::f64::consts::SQRT_2)])
}

pub(crate) fn block_frequency(e: &[u8], m: usize) -> Computed {
    let blocks = e.len() / m;
    let chi2: f64 = e
        .chunks_exact(m)
        .take(blocks)
        .map(|b| {
            let pi = b.iter().map(|&x| x as f64).sum::<f64>() / m as f64;
            (pi - 0.5) * (pi - 0.5)
        })
        .sum::<f64>()
        * 4.0
        * m as f64;
    Computed::new(vec![igamc(blocks as f64 / 2.0, chi2 / 2.0)]).param("M", json!(m)).param("N", json!(blocks))
}

pub(crate) fn runs(e: &[u8]) -> Computed {
    let n = e.len() as f64;
    let pi = e.iter().map(|&b| b as f64).sum::<f64>() / n;
    if (pi - 0.5).abs() >= 2.0 / n.sqrt() {
        return Computed {
            p_values: vec![0.0],
            not_applicable: Some(format!("frequency pre-test failed (ones fraction {pi:.6})")),
            ..Default::default()
        };
    }
    let v_obs = 1 + e.windows(2).filter(|w| w[0] != w[1]).count();
    let q = pi * (1.0 - pi);
    let p = erfc((v_obs as f64 - 2.0 * n * q).abs() / (2.0 * (2.0 * n).sqrt() * q));
    Computed::new(vec![p])
}

/// `(block length, lowest bin, highest bin, bin probabilities)` by stream length.
fn longest_run_table(n: usize) -> (usize, usize, usize, &'static [f64]) {
    if n < 6272 {
        (8, 1, 4, &[0.21484375, 0.3671875, 0.23046875, 0.1875])
    } else if n < 750_000 {
        (128, 4, 9, &[0.1174035788, 0.242955959, 0.249363483, 0.17517706, 0.102701071, 0.112398847])
    } else {
        (10_000, 10, 16, &[0.0882, 0.2092, 0.2483, 0.1933, 0.1208, 0.0675, 0.0727])
    }
}

pub(crate) fn longest_run(e: &[u8]) -> Computed {
    let (m, lo, hi, pi) = longest_run_table(e.len());
    let blocks = e.len() / m;
    let mut v = vec![0usize; pi.len()];
    for b in e.chunks_exact(m).take(blocks) {
        let (mut run, mut best) = (0usize, 0usize);
        for &x in b {
            if x == 1 {
                run += 1;
                best = best.max(run);
            } else {
                run = 0;
            }
        }
        v[best.clamp(lo, hi) - lo] += 1;
    }
    let nb = blocks as f64;
    let chi2: f64 = v.iter().zip(pi).map(|(&vi, &p)| (vi as f64 - nb * p).powi(2) / (nb * p)).sum();
    let k = (pi.len() - 1) as f64;
    Computed::new(vec![igamc(k / 2.0, chi2 / 2.0)]).param("M", json!(m)).param("N", json!(blocks))
}

/// Rank of a bit matrix whose rows are packed into `u32`s.
pub(crate) fn gf2_rank(rows: &mut [u32], cols: usize) -> usize {
    let mut rank = 0;
    for c in 0..cols {
        let bit = 1u32 << c;
        let Some(p) = (rank..rows.len()).find(|&r| rows[r] & bit != 0) else {
            continue;
        };
        rows.swap(rank, p);
        let pivot = rows[rank];
        for (r, row) in rows.iter_mut().enumerate() {
            if r != rank && *row & bit != 0 {
                *row ^= pivot;
            }
        }
        rank += 1;
    }
    rank
}

/// Probability that a random `m × q` GF(2) matrix has rank `r`.
pub(crate) fn rank_probability(r: usize, m: usize, q: usize) -> f64 {
    let mut p = 2f64.powi((r * (q + m - r)) as i32 - (m * q) as i32);
    for i in 0..r {
        let i = i as i32;
        p *= (1.0 - 2f64.powi(i - q as i32)) * (1.0 - 2f64.powi(i - m as i32)) / (1.0 - 2f64.powi(i - r as i32));
    }
    p
}

pub(crate) fn rank(e: &[u8]) -> Computed {
    const M: usize = 32;
    let blocks = e.len() / (M * M);
    let ranks: Vec<usize> = e
        .par_chunks_exact(M * M)
        .take(blocks)
        .map(|b| {
            let mut rows: Vec<u32> = b
                .chunks_exact(M)
                .map(|r| r.iter().enumerate().fold(0u32, |acc, (j, &x)| acc | ((x as u32) << j)))
                .collect();
            gf2_rank(&mut rows, M)
        })
        .collect();
    let full = ranks.iter().filter(|&&r| r == M).count() as f64;
    let minus1 = ranks.iter().filter(|&&r| r == M - 1).count() as f64;
    let rest = blocks as f64 - full - minus1;
    let p_full = rank_probability(M, M, M);
    let p_minus1 = rank_probability(M - 1, M, M);
    let p_rest = 1.0 - p_full - p_minus1;
    let nb = blocks as f64;
    let chi2 = (full - p_full * nb).powi(2) / (p_full * nb)
        + (minus1 - p_minus1 * nb).powi(2) / (p_minus1 * nb)
        + (rest - p_rest * nb).powi(2) / (p_rest * nb);
    Computed::new(vec![(-chi2 / 2.0).exp()]).param("M", json!(M)).param("Q", json!(M)).param("N", json!(blocks))
}

pub(crate) fn dft(e: &[u8]) -> Computed {
    let n = e.len();
    let mut x: Vec<Complex<f64>> = e.iter().map(|&b| Complex::new(2.0 * b as f64 - 1.0, 0.0)).collect();
    rustfft::FftPlanner::new().plan_fft_forward(n).process(&mut x);
    let nf = n as f64;
    let threshold = ((1.0f64 / 0.05).ln() * nf).sqrt();
    let n0 = 0.95 * nf / 2.0;
    let n1 = x[..n / 2].iter().filter(|c| c.norm() < threshold).count() as f64;
    let d = (n1 - n0) / (nf * 0.95 * 0.05 / 4.0).sqrt();
    Computed::new(vec![erfc(d.abs() / std::f64::consts::SQRT_2)])
        .param("threshold", json!(threshold))
        .param("N0", json!(n0))
        .param("N1", json!(n1))
}

/// `m`-bit templates that cannot overlap a shifted copy of themselves, in
/// lexicographic order (first bit most significant).
pub fn aperiodic_templates(m: usize) -> Vec<u32> {
    (0u32..1 << m)
        .filter(|&t| {
            (1..m).all(|k| {
                // Suffix of length m−k vs prefix of length m−k.
                let len = m - k;
                let suffix = t & ((1 << len) - 1);
                let prefix = t >> k;
                suffix != prefix
            })
        })
        .collect()
}

/// Value of the `m`-bit window starting at every position, first bit most
/// significant.
fn windows(e: &[u8], m: usize) -> Vec<u32> {
    if e.len() < m {
        return Vec::new();
    }
    let mask = (1u32 << m) - 1;
    let mut out = Vec::with_capacity(e.len() - m + 1);
    let mut v = 0u32;
    for (i, &b) in e.iter().enumerate() {
        v = ((v << 1) | b as u32) & mask;
        if i + 1 >= m {
            out.push(v);
        }
    }
    out
}

pub(crate) fn non_overlapping(e: &[u8], m: usize, n_blocks: usize, templates: &[u32]) -> Computed {
    let block = e.len() / n_blocks;
    let w = windows(e, m);
    let mf = block as f64;
    let mu = (mf - m as f64 + 1.0) / 2f64.powi(m as i32);
    let var = mf * (1.0 / 2f64.powi(m as i32) - (2.0 * m as f64 - 1.0) / 2f64.powi(2 * m as i32));
    let p: Vec<f64> = templates
        .par_iter()
        .map(|&t| {
            let chi2: f64 = (0..n_blocks)
                .map(|j| {
                    let (start, end) = (j * block, j * block + block - m);
                    let mut count = 0usize;
                    let mut i = start;
                    while i <= end {
                        if w[i] == t {
                            count += 1;
                            i += m;
                        } else {
                            i += 1;
                        }
                    }
                    (count as f64 - mu).powi(2) / var
                })
                .sum();
            igamc(n_blocks as f64 / 2.0, chi2 / 2.0)
        })
        .collect();
    Computed::new(p)
        .param("m", json!(m))
        .param("N", json!(n_blocks))
        .param("M", json!(block))
        .param("templates", json!(templates.len()))
}

/// Probability of `u` overlapping template hits in a block with mean
/// `2·eta` window matches.
fn overlapping_pr(u: usize, eta: f64) -> f64 {
    use super::special::ln_gamma;
    if u == 0 {
        return (-eta).exp();
    }
    (1..=u)
        .map(|l| {
            let (l, uf) = (l as f64, u as f64);
            (-eta - uf * std::f64::consts::LN_2 + l * eta.ln() - ln_gamma(l + 1.0) + ln_gamma(uf) - ln_gamma(l)
                - ln_gamma(uf - l + 1.0))
                .exp()
        })
        .sum()
}

pub(crate) fn overlapping(e: &[u8], m: usize, block: usize) -> Computed {
    const K: usize = 5;
    let pi: Vec<f64> = if m == 9 && block == 1032 {
        vec![0.364091, 0.185659, 0.139381, 0.100571, 0.0704323, 0.139865]
    } else {
        let eta = (block - m + 1) as f64 / 2f64.powi(m as i32) / 2.0;
        let mut pi: Vec<f64> = (0..K).map(|u| overlapping_pr(u, eta)).collect();
        pi.push(1.0 - pi.iter().sum::<f64>());
        pi
    };
    let n_blocks = e.len() / block;
    let target = (1u32 << m) - 1;
    let mut v = [0usize; K + 1];
    for b in e.chunks_exact(block).take(n_blocks) {
        let hits = windows(b, m).iter().filter(|&&w| w == target).count();
        v[hits.min(K)] += 1;
    }
    let nb = n_blocks as f64;
    let chi2: f64 = v.iter().zip(&pi).map(|(&vi, &p)| (vi as f64 - nb * p).powi(2) / (nb * p)).sum();
    Computed::new(vec![igamc(K as f64 / 2.0, chi2 / 2.0)])
        .param("m", json!(m))
        .param("M", json!(block))
        .param("N", json!(n_blocks))
}

/// Minimum stream length for each block length `L = 6..=16`.
pub(crate) const UNIVERSAL_MIN_N: [usize; 11] = [
    387_840,
    904_960,
    2_068_480,
    4_654_080,
    10_342_400,
    22_753_280,
    49_643_520,
    107_560_960,
    231_669_760,
    496_435_200,
    1_059_061_760,
];
const UNIVERSAL_EXPECTED: [f64; 11] = [
    5.2177052, 6.1962507, 7.1836656, 8.1764248, 9.1723243, 10.170032, 11.168765, 12.168070, 13.167693, 14.167488,
    15.167379,
];
const UNIVERSAL_VARIANCE: [f64; 11] = [2.954, 3.125, 3.238, 3.311, 3.356, 3.384, 3.401, 3.410, 3.416, 3.419, 3.421];

pub(crate) fn universal(e: &[u8]) -> Computed {
    let idx = UNIVERSAL_MIN_N.iter().rposition(|&m| e.len() >= m).expect("length checked by caller");
    let l = 6 + idx;
    let q = 10 * (1usize << l);
    let k = e.len() / l - q;
    let mut table = vec![0usize; 1 << l];
    let block = |i: usize| e[i * l..(i + 1) * l].iter().fold(0usize, |acc, &b| (acc << 1) | b as usize);
    for i in 0..q {
        table[block(i)] = i + 1;
    }
    let mut sum = 0.0;
    for i in q..q + k {
        let b = block(i);
        sum += log2((i + 1 - table[b]) as f64);
        table[b] = i + 1;
    }
    let fn_ = sum / k as f64;
    let (lf, kf) = (l as f64, k as f64);
    let c = 0.7 - 0.8 / lf + (4.0 + 32.0 / lf) * kf.powf(-3.0 / lf) / 15.0;
    let sigma = c * (UNIVERSAL_VARIANCE[idx] / kf).sqrt();
    let p = erfc((fn_ - UNIVERSAL_EXPECTED[idx]).abs() / (std::f64::consts::SQRT_2 * sigma));
    Computed::new(vec![p])
        .param("L", json!(l))
        .param("Q", json!(q))
        .param("K", json!(k))
        .param("fn", json!(fn_))
}

/// Counts of every cyclic `m`-bit pattern.
fn cyclic_counts(e: &[u8], m: usize) -> Vec<u64> {
    let mut counts = vec![0u64; 1 << m];
    if m == 0 {
        counts[0] = e.len() as u64;
        return counts;
    }
    let mut ext = e.to_vec();
    ext.extend_from_slice(&e[..m - 1]);
    for w in windows(&ext, m) {
        counts[w as usize] += 1;
    }
    counts
}

pub(crate) fn approximate_entropy(e: &[u8], m: usize) -> Computed {
    let n = e.len() as f64;
    let phi = |mm: usize| -> f64 {
        if mm == 0 {
            return 0.0;
        }
        cyclic_counts(e, mm)
            .iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let p = c as f64 / n;
                p * p.ln()
            })
            .sum()
    };
    let apen = phi(m) - phi(m + 1);
    let chi2 = 2.0 * n * (std::f64::consts::LN_2 - apen);
    Computed::new(vec![igamc(2f64.powi(m as i32 - 1), chi2 / 2.0)])
        .param("m", json!(m))
        .param("ApEn", json!(apen))
}

pub(crate) fn serial(e: &[u8], m: usize) -> Computed {
    let n = e.len() as f64;
    let psi2 = |mm: isize| -> f64 {
        if mm <= 0 {
            return 0.0;
        }
        let sum: f64 = cyclic_counts(e, mm as usize).iter().map(|&c| (c as f64) * (c as f64)).sum();
        2f64.powi(mm as i32) / n * sum - n
    };
    let mi = m as isize;
    let (a, b, c) = (psi2(mi), psi2(mi - 1), psi2(mi - 2));
    let d1 = a - b;
    let d2 = a - 2.0 * b + c;
    Computed::new(vec![igamc(2f64.powi(mi as i32 - 2), d1 / 2.0), igamc(2f64.powi(mi as i32 - 3), d2 / 2.0)])
        .param("m", json!(m))
}

/// Cycles of the ±1 random walk: `(number of cycles, per-cycle visit
/// counts for each state in −limit..=limit)`.
fn excursion_cycles(e: &[u8], limit: i64) -> (usize, Vec<Vec<u32>>) {
    let width = (2 * limit + 1) as usize;
    let mut cycles = Vec::new();
    let mut cur = vec![0u32; width];
    let mut s = 0i64;
    for &b in e {
        s += 2 * b as i64 - 1;
        if s == 0 {
            cycles.push(std::mem::replace(&mut cur, vec![0u32; width]));
        } else if s.abs() <= limit {
            cur[(s + limit) as usize] += 1;
        }
    }
    if s != 0 {
        cycles.push(cur);
    }
    (cycles.len(), cycles)
}

/// `π_k(x)`, the probability of exactly `k` visits (5 meaning ≥ 5) to state
/// `x` in one cycle.
pub(crate) fn excursion_pi(x: i64, k: usize) -> f64 {
    let ax = x.unsigned_abs() as f64;
    let q = 1.0 - 1.0 / (2.0 * ax);
    match k {
        0 => q,
        1..=4 => 1.0 / (4.0 * ax * ax) * q.powi(k as i32 - 1),
        _ => 1.0 / (2.0 * ax) * q.powi(4),
    }
}

/// Fewest cycles for which the excursion tests are meaningful.
pub(crate) fn min_cycles(n: usize) -> usize {
    ((0.005 * (n as f64).sqrt()).ceil() as usize).max(500)
}

pub(crate) fn random_excursions(e: &[u8], min_j: usize) -> Computed {
    let (j, cycles) = excursion_cycles(e, 4);
    if j < min_j {
        return Computed {
            not_applicable: Some(format!("only {j} cycles, need {min_j}")),
            ..Default::default()
        }
        .param("J", json!(j));
    }
    let jf = j as f64;
    let states = [-4i64, -3, -2, -1, 1, 2, 3, 4];
    let p = states
        .iter()
        .map(|&x| {
            let mut nu = [0usize; 6];
            for c in &cycles {
                nu[(c[(x + 4) as usize] as usize).min(5)] += 1;
            }
            let chi2: f64 = (0..6)
                .map(|k| {
                    let expect = jf * excursion_pi(x, k);
                    (nu[k] as f64 - expect).powi(2) / expect
                })
                .sum();
            igamc(2.5, chi2 / 2.0)
        })
        .collect();
    Computed::new(p).param("J", json!(j))
}

pub(crate) fn random_excursions_variant(e: &[u8], min_j: usize) -> Computed {
    let (j, cycles) = excursion_cycles(e, 9);
    if j < min_j {
        return Computed {
            not_applicable: Some(format!("only {j} cycles, need {min_j}")),
            ..Default::default()
        }
        .param("J", json!(j));
    }
    let jf = j as f64;
    let p = (-9i64..=9)
        .filter(|&x| x != 0)
        .map(|x| {
            let xi: f64 = cycles.iter().map(|c| c[(x + 9) as usize] as f64).sum();
            erfc((xi - jf).abs() / (2.0 * jf * (4.0 * x.abs() as f64 - 2.0)).sqrt())
        })
        .collect();
    Computed::new(p).param("J", json!(j))
}

fn cusum_p(n: i64, z: i64) -> f64 {
    let nf = n as f64;
    let zf = z as f64;
    let sq = nf.sqrt();
    // Integer division truncates toward zero, matching the reference code.
    let mut sum1 = 0.0;
    let mut k = (-n / z + 1) / 4;
    while k <= (n / z - 1) / 4 {
        let kf = k as f64;
        sum1 += normal_cdf((4.0 * kf + 1.0) * zf / sq) - normal_cdf((4.0 * kf - 1.0) * zf / sq);
        k += 1;
    }
    let mut sum2 = 0.0;
    let mut k = (-n / z - 3) / 4;
    while k <= (n / z - 1) / 4 {
        let kf = k as f64;
        sum2 += normal_cdf((4.0 * kf + 3.0) * zf / sq) - normal_cdf((4.0 * kf + 1.0) * zf / sq);
        k += 1;
    }
    1.0 - sum1 + sum2
}

pub(crate) fn cumulative_sums(e: &[u8]) -> Computed {
    let n = e.len() as i64;
    let max_excursion = |it: &mut dyn Iterator<Item = &u8>| {
        let mut s = 0i64;
        let mut z = 0i64;
        for &b in it {
            s += 2 * b as i64 - 1;
            z = z.max(s.abs());
        }
        z.max(1)
    };
    let zf = max_excursion(&mut e.iter());
    let zb = max_excursion(&mut e.iter().rev());
    Computed::new(vec![cusum_p(n, zf), cusum_p(n, zb)])
        .param("z_forward", json!(zf))
        .param("z_backward", json!(zb))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::extract::BitStream;

    fn bits(s: &str) -> Vec<u8> {
        BitStream::from_str01(s).to_u8_vec()
    }

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn frequency_vector() {
        let p = frequency(&bits("1011010101")).p_values[0];
        assert!(close(p, erfc(2.0 / 10f64.sqrt() / 2f64.sqrt()), 1e-15));
        assert!(close(p, 0.527089, 1e-6));
    }

    #[test]
    fn block_frequency_vector() {
        let p = block_frequency(&bits("0110011010"), 3).p_values[0];
        assert!(close(p, 0.801252, 1e-6), "{p}");
    }

    #[test]
    fn runs_vector() {
        let p = runs(&bits("1001101011")).p_values[0];
        // π = 0.6, V_obs = 7.
        let want = erfc((7.0f64 - 2.0 * 10.0 * 0.24).abs() / (2.0 * 20f64.sqrt() * 0.24));
        assert!(close(p, want, 1e-15));
        assert!(close(p, 0.147232, 1e-6));
        let r = runs(&[1u8; 100]);
        assert!(r.not_applicable.is_some() && r.p_values == vec![0.0]);
    }

    #[test]
    fn longest_run_vector() {
        let s = "11001100000101010110110001001100111000000000001001001101010100010001001111010110100000001101011111001100111001101101100010110010";
        let p = longest_run(&bits(s)).p_values[0];
        // Bin counts [4, 9, 3, 0] give χ² = 4.882457 with the exact bin
        // probabilities; four-decimal probabilities shift p to 0.180598.
        assert!(close(p, igamc(1.5, 4.882457 / 2.0), 1e-6), "{p}");
        assert!(close(p, 0.180609, 1e-6), "{p}");
    }

    /// Naive O(n²) transform for the spectral test.
    fn naive_dft_p(e: &[u8]) -> f64 {
        let n = e.len();
        let t = (20f64.ln() * n as f64).sqrt();
        let n1 = (0..n / 2)
            .filter(|&k| {
                let (mut re, mut im) = (0.0f64, 0.0f64);
                for (j, &b) in e.iter().enumerate() {
                    let ang = -2.0 * std::f64::consts::PI * (k * j) as f64 / n as f64;
                    let x = 2.0 * b as f64 - 1.0;
                    re += x * ang.cos();
                    im += x * ang.sin();
                }
                re.hypot(im) < t
            })
            .count() as f64;
        let d = (n1 - 0.95 * n as f64 / 2.0) / (n as f64 * 0.95 * 0.05 / 4.0).sqrt();
        erfc(d.abs() / std::f64::consts::SQRT_2)
    }

    #[test]
    fn dft_matches_naive_transform() {
        // All five moduli of this vector fall below the threshold: N1 = 5.
        let c = dft(&bits("1001010011"));
        assert_eq!(c.params["N0"], json!(4.75));
        assert_eq!(c.params["N1"], json!(5.0));
        assert!(close(c.p_values[0], 0.468160, 1e-6), "{c:?}");
        let mut x = 0x2545F4914F6CDD1Du64;
        let e: Vec<u8> = (0..1000)
            .map(|_| {
                x ^= x << 13;
                x ^= x >> 7;
                x ^= x << 17;
                (x & 1) as u8
            })
            .collect();
        assert!(close(dft(&e).p_values[0], naive_dft_p(&e), 1e-12));
    }

    #[test]
    fn dft_rejects_periodic_stream() {
        let e: Vec<u8> = (0..100_000).map(|i| ((i / 4) % 2) as u8).collect();
        assert!(dft(&e).p_values[0] < 1e-6);
    }

    #[test]
    fn non_overlapping_vector() {
        let c = non_overlapping(&bits("10100100101110010110"), 3, 2, &[0b001]);
        assert!(close(c.p_values[0], 0.344154, 1e-6), "{c:?}");
    }

    #[test]
    fn aperiodic_template_counts() {
        assert_eq!(aperiodic_templates(2), vec![0b01, 0b10]);
        assert_eq!(aperiodic_templates(3), vec![0b001, 0b011, 0b100, 0b110]);
        assert_eq!(aperiodic_templates(9).len(), 148);
    }

    #[test]
    fn serial_vector() {
        let c = serial(&bits("0011011101"), 3);
        assert!(close(c.p_values[0], 0.808792, 1e-6), "{c:?}");
        assert!(close(c.p_values[1], 0.670320, 1e-6), "{c:?}");
    }

    #[test]
    fn approximate_entropy_vector() {
        let c = approximate_entropy(&bits("0100110101"), 3);
        assert!(close(c.p_values[0], 0.261961, 1e-6), "{c:?}");
    }

    #[test]
    fn cumulative_sums_vector() {
        let c = cumulative_sums(&bits("1011010111"));
        assert!(close(c.p_values[0], 0.4116588, 1e-6), "{c:?}");
        let alt: Vec<u8> = (0..100_000).map(|i| (i % 2) as u8).collect();
        assert!(cumulative_sums(&alt).p_values.iter().all(|&p| p > 0.999));
    }

    #[test]
    fn excursion_vectors() {
        let e = bits("0110110101");
        let v = random_excursions_variant(&e, 0);
        // ξ(+1) = 4 visits over J = 3 cycles.
        assert_eq!(v.params["J"], json!(3));
        assert!(close(v.p_values[9], 0.683091, 1e-6), "{v:?}");
        let r = random_excursions(&e, 0);
        // State +1: one cycle each with 0, 1 and 3 visits.
        let nu = [1.0, 1.0, 0.0, 1.0, 0.0, 0.0];
        let chi2: f64 = (0..6).map(|k| (nu[k] - 3.0 * excursion_pi(1, k)).powi(2) / (3.0 * excursion_pi(1, k))).sum();
        assert!(close(chi2, 4.333333, 1e-5));
        assert!(close(r.p_values[4], igamc(2.5, chi2 / 2.0), 1e-15));
        assert!(close(r.p_values[4], 0.502529, 2e-4));
        assert!(random_excursions(&e, 500).not_applicable.is_some());
    }

    #[test]
    fn excursion_probabilities_sum_to_one() {
        for x in 1..=4 {
            let s: f64 = (0..6).map(|k| excursion_pi(x, k)).sum();
            assert!(close(s, 1.0, 1e-14));
        }
    }

    #[test]
    fn rank_probabilities() {
        assert!(close(rank_probability(32, 32, 32), 0.2888, 1e-4));
        assert!(close(rank_probability(31, 32, 32), 0.5776, 1e-4));
        let mut id: Vec<u32> = (0..32).map(|i| 1u32 << i).collect();
        assert_eq!(gf2_rank(&mut id, 32), 32);
        let mut dup = vec![5u32, 5, 3];
        assert_eq!(gf2_rank(&mut dup, 32), 2);
    }

    #[test]
    fn rank_detects_repeated_matrix() {
        let pattern: Vec<u8> = (0..1024).map(|i| ((i / 32) == (i % 32)) as u8).collect();
        let e: Vec<u8> = pattern.iter().copied().cycle().take(1024 * 100).collect();
        assert!(rank(&e).p_values[0] < 1e-10);
    }

    #[test]
    fn overlapping_probabilities() {
        let eta = (1032.0 - 9.0 + 1.0) / 512.0 / 2.0;
        let p0 = overlapping_pr(0, eta);
        assert!(close(p0, (-1.0f64).exp(), 1e-15));
        let total: f64 = (0..5).map(|u| overlapping_pr(u, eta)).sum();
        assert!(total < 1.0 && total > 0.8);
    }
}
