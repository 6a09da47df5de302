use super::procedures::Computed;
use super::special::igamc;
use rayon::prelude::*;
use serde_json::json;

/// Length of the shortest LFSR generating `s` (Berlekamp–Massey over GF(2)).
pub fn berlekamp_massey(s: &[u8]) -> usize {
    let n = s.len();
    let mut c = vec![0u8; n + 1];
    let mut b = vec![0u8; n + 1];
    c[0] = 1;
    b[0] = 1;
    let mut l = 0usize;
    let mut m: isize = -1;
    for i in 0..n {
        let mut d = s[i];
        for j in 1..=l {
            d ^= c[j] & s[i - j];
        }
        if d == 1 {
            let t = c.clone();
            let shift = (i as isize - m) as usize;
            for j in 0..=n - shift {
                c[j + shift] ^= b[j];
            }
            if 2 * l <= i {
                l = i + 1 - l;
                m = i as isize;
                b = t;
            }
        }
    }
    l
}

const PI: [f64; 7] = [1.0 / 96.0, 1.0 / 32.0, 1.0 / 8.0, 1.0 / 2.0, 1.0 / 4.0, 1.0 / 16.0, 1.0 / 48.0];

pub(crate) fn linear_complexity(e: &[u8], m: usize) -> Computed {
    let n_blocks = e.len() / m;
    let mf = m as f64;
    let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
    let mu = mf / 2.0 + (9.0 + -sign) / 36.0 - (mf / 3.0 + 2.0 / 9.0) / 2f64.powf(mf);
    let mut v = [0usize; 7];
    let ls: Vec<usize> = e.par_chunks_exact(m).take(n_blocks).map(berlekamp_massey).collect();
    for l in ls {
        let t = sign * (l as f64 - mu) + 2.0 / 9.0;
        let bin = if t <= -2.5 {
            0
        } else if t <= -1.5 {
            1
        } else if t <= -0.5 {
            2
        } else if t <= 0.5 {
            3
        } else if t <= 1.5 {
            4
        } else if t <= 2.5 {
            5
        } else {
            6
        };
        v[bin] += 1;
    }
    let nb = n_blocks as f64;
    let chi2: f64 = v.iter().zip(PI).map(|(&vi, p)| (vi as f64 - nb * p).powi(2) / (nb * p)).sum();
    Computed::new(vec![igamc(3.0, chi2 / 2.0)])
        .param("M", json!(m))
        .param("N", json!(n_blocks))
}
