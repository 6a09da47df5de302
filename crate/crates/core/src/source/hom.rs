use super::{poisson, SourceConfig};
use crate::error::{Error, Result};
use crate::qmath::solve_real;
use crate::seed;
use serde::{Deserialize, Serialize};

/// Minimum number of scan points accepted by the dip fit.
pub const MIN_FIT_POINTS: usize = 7;

/// Expected coincidence rate at path delay `tau_nm`:
/// `R₀·(1 − v₀·exp(−τ²/(2σ²)))` with `R₀ = ½·pair_rate·η²`.
pub fn hom_coincidence_rate(cfg: &SourceConfig, tau_nm: f64) -> f64 {
    cfg.base_coincidence_rate() * (1.0 - cfg.overlap_at(tau_nm))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HomScan {
    pub positions_nm: Vec<f64>,
    pub counts: Vec<u64>,
    pub dwell_s: f64,
    pub rng_seed: u64,
}

/// Poisson coincidence counts at each delay, `dwell_s` seconds per point.
pub fn scan_hom(cfg: &SourceConfig, positions_nm: &[f64], dwell_s: f64) -> Result<HomScan> {
    cfg.validate()?;
    if !(dwell_s > 0.0 && dwell_s.is_finite()) {
        return Err(Error::validation(format!("dwell time {dwell_s} s must be > 0")));
    }
    let mut rng = seed::chunk_rng(cfg.rng_seed, "hom-scan", 0);
    let counts = positions_nm
        .iter()
        .map(|&tau| poisson(&mut rng, hom_coincidence_rate(cfg, tau) * dwell_s))
        .collect();
    Ok(HomScan {
        positions_nm: positions_nm.to_vec(),
        counts,
        dwell_s,
        rng_seed: cfg.rng_seed,
    })
}

/// Fitted dip `C(τ) = C_max·(1 − v·exp(−(τ−τ₀)²/(2σ²)))`. The visibility
/// `(C_max − C_min)/C_max` of this curve is `v`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HomFit {
    pub visibility: f64,
    pub visibility_err: f64,
    pub c_max: f64,
    pub center_nm: f64,
    pub sigma_nm: f64,
    pub chi2: f64,
    pub dof: usize,
    pub iterations: usize,
}

const N_PAR: usize = 4;

fn model(p: &[f64; N_PAR], tau: f64) -> (f64, [f64; N_PAR]) {
    let [c, v, t0, s] = *p;
    let d = tau - t0;
    let g = (-0.5 * d * d / (s * s)).exp();
    let f = c * (1.0 - v * g);
    let grad = [1.0 - v * g, -c * g, -c * v * g * d / (s * s), -c * v * g * d * d / (s * s * s)];
    (f, grad)
}

struct Normal {
    jtj: [[f64; N_PAR]; N_PAR],
    jtr: [f64; N_PAR],
    chi2: f64,
}

fn normal_equations(x: &[f64], y: &[f64], w: &[f64], p: &[f64; N_PAR]) -> Normal {
    let mut jtj = [[0.0; N_PAR]; N_PAR];
    let mut jtr = [0.0; N_PAR];
    let mut chi2 = 0.0;
    for ((&tau, &yi), &wi) in x.iter().zip(y).zip(w) {
        let (f, g) = model(p, tau);
        let r = yi - f;
        chi2 += wi * r * r;
        for a in 0..N_PAR {
            jtr[a] += wi * g[a] * r;
            for b in 0..N_PAR {
                jtj[a][b] += wi * g[a] * g[b];
            }
        }
    }
    Normal { jtj, jtr, chi2 }
}

/// Damped Gauss-Newton step; parameters flagged in `fixed` do not move.
fn solve_damped(n: &Normal, lambda: f64, fixed: [bool; N_PAR]) -> Option<[f64; N_PAR]> {
    let max_diag = (0..N_PAR).map(|a| n.jtj[a][a]).fold(0.0, f64::max);
    let mut a: Vec<Vec<f64>> = n.jtj.iter().map(|r| r.to_vec()).collect();
    let mut b = n.jtr.to_vec();
    for k in 0..N_PAR {
        if fixed[k] {
            for j in 0..N_PAR {
                a[k][j] = 0.0;
                a[j][k] = 0.0;
            }
            a[k][k] = 1.0;
            b[k] = 0.0;
        } else {
            a[k][k] += lambda * (n.jtj[k][k] + 1e-12 * max_diag);
        }
    }
    let d = solve_real(a, b, 0.0)?;
    Some([d[0], d[1], d[2], d[3]])
}

fn initial_guess(x: &[f64], y: &[f64]) -> [f64; N_PAR] {
    let mut sorted = y.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let top = sorted.len().min(3);
    let c = (sorted[..top].iter().sum::<f64>() / top as f64).max(1.0);
    let (i_min, y_min) = y
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
    let t0 = x[i_min];
    let v = (1.0 - y_min / c).clamp(0.0, 1.0);
    let span = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - x.iter().cloned().fold(f64::INFINITY, f64::min);
    // Second moment of the dip depth.
    let (mut m0, mut m2) = (0.0, 0.0);
    for (&tau, &yi) in x.iter().zip(y) {
        let depth = (c - yi).max(0.0);
        m0 += depth;
        m2 += depth * (tau - t0) * (tau - t0);
    }
    let mut s = if m0 > 0.0 { (m2 / m0).sqrt() } else { 0.0 };
    if !(s > 0.0) || s > span || v < 0.05 {
        s = (span / 6.0).max(f64::MIN_POSITIVE);
    }
    [c, v, t0, s]
}

/// Poisson-weighted Levenberg–Marquardt fit of the Gaussian dip.
pub fn visibility_from_scan(scan: &HomScan) -> Result<HomFit> {
    let n = scan.positions_nm.len();
    if n != scan.counts.len() {
        return Err(Error::validation("scan positions and counts differ in length"));
    }
    if n < MIN_FIT_POINTS {
        return Err(Error::TooShort {
            what: "HOM dip fit".into(),
            required: MIN_FIT_POINTS,
            actual: n,
        });
    }
    if scan.positions_nm.iter().any(|x| !x.is_finite()) {
        return Err(Error::validation("non-finite scan position"));
    }
    let x = &scan.positions_nm;
    let y: Vec<f64> = scan.counts.iter().map(|&c| c as f64).collect();
    if y.iter().all(|&c| c == 0.0) {
        return Err(Error::FitFailed {
            reason: "scan has no coincidences".into(),
            iterations: 0,
            chi2: f64::NAN,
        });
    }
    let w: Vec<f64> = y.iter().map(|&c| 1.0 / c.max(1.0)).collect();

    // A dip narrower than the point spacing or wider than the scan is not
    // resolvable; keep the width inside that window.
    let mut sorted_x = x.clone();
    sorted_x.sort_by(f64::total_cmp);
    let sigma_lo = sorted_x.windows(2).map(|w| w[1] - w[0]).filter(|d| *d > 0.0).fold(f64::INFINITY, f64::min);
    let sigma_hi = sorted_x[n - 1] - sorted_x[0];
    if !(sigma_lo.is_finite() && sigma_hi > 0.0) {
        return Err(Error::validation("scan needs at least two distinct positions"));
    }
    let mut p = initial_guess(x, &y);
    p[3] = p[3].clamp(sigma_lo, sigma_hi);
    let mut cur = normal_equations(x, &y, &w, &p);
    let mut lambda = 1e-3;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < 500 {
        iterations += 1;
        let Some(mut delta) = solve_damped(&cur, lambda, [false; N_PAR]) else {
            lambda *= 10.0;
            continue;
        };
        let at_lo = p[3] <= sigma_lo && delta[3] < 0.0;
        let at_hi = p[3] >= sigma_hi && delta[3] > 0.0;
        if at_lo || at_hi {
            match solve_damped(&cur, lambda, [false, false, false, true]) {
                Some(d) => delta = d,
                None => {
                    lambda *= 10.0;
                    continue;
                }
            }
        }
        let mut trial = p;
        for k in 0..N_PAR {
            trial[k] += delta[k];
        }
        trial[3] = trial[3].abs().clamp(sigma_lo, sigma_hi);
        let next = normal_equations(x, &y, &w, &trial);
        if next.chi2.is_finite() && next.chi2 <= cur.chi2 {
            let small_step = (0..N_PAR).all(|k| (trial[k] - p[k]).abs() <= 1e-10 * (trial[k].abs() + 1e-10));
            let small_gain = cur.chi2 - next.chi2 <= 1e-9 * (cur.chi2 + 1.0);
            p = trial;
            cur = next;
            lambda = (lambda * 0.3).max(1e-12);
            if small_step || small_gain {
                converged = true;
                break;
            }
        } else {
            lambda *= 10.0;
            if lambda > 1e12 {
                // No damped step improves χ²: a (local) minimum.
                converged = true;
                break;
            }
        }
    }
    if !converged || !p.iter().all(|v| v.is_finite()) {
        return Err(Error::FitFailed {
            reason: "Levenberg-Marquardt did not converge".into(),
            iterations,
            chi2: cur.chi2,
        });
    }

    let dof = n - N_PAR;
    let cov_v = covariance_vv(&cur).unwrap_or(f64::NAN);
    let scale = (cur.chi2 / dof as f64).max(1.0);
    Ok(HomFit {
        visibility: p[1],
        visibility_err: (cov_v * scale).sqrt(),
        c_max: p[0],
        center_nm: p[2],
        sigma_nm: p[3],
        chi2: cur.chi2,
        dof,
        iterations,
    })
}

/// `[(JᵀWJ)⁻¹]_vv`, with a tiny ridge so unidentifiable width and center
/// (flat scans) do not make the inversion fail.
fn covariance_vv(n: &Normal) -> Option<f64> {
    let max_diag = (0..N_PAR).map(|a| n.jtj[a][a]).fold(0.0, f64::max);
    let mut a: Vec<Vec<f64>> = n.jtj.iter().map(|r| r.to_vec()).collect();
    for (k, row) in a.iter_mut().enumerate() {
        row[k] += 1e-12 * max_diag;
    }
    let mut e = vec![0.0; N_PAR];
    e[1] = 1.0;
    solve_real(a, e, 0.0).map(|col| col[1])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn positions(k: usize, half_span: f64) -> Vec<f64> {
        (0..k).map(|i| -half_span + 2.0 * half_span * i as f64 / (k - 1) as f64).collect()
    }

    #[test]
    fn rate_limits() {
        let cfg = SourceConfig {
            visibility_v0: 1.0,
            ..Default::default()
        };
        assert_eq!(hom_coincidence_rate(&cfg, 0.0), 0.0);
        let far = hom_coincidence_rate(&cfg, 1e9);
        assert!((far - cfg.base_coincidence_rate()).abs() < 1e-9);
        assert!((cfg.base_coincidence_rate() - 0.5 * 50_000.0 * 0.36).abs() < 1e-9);
    }

    #[test]
    fn noiseless_fit_recovers_visibility() {
        let cfg = SourceConfig::default();
        let x = positions(61, 3000.0);
        let counts = x.iter().map(|&t| (hom_coincidence_rate(&cfg, t) * 1e6).round() as u64).collect();
        let fit = visibility_from_scan(&HomScan {
            positions_nm: x,
            counts,
            dwell_s: 1e6,
            rng_seed: 0,
        })
        .unwrap();
        assert!((fit.visibility - 0.97).abs() < 1e-6, "{fit:?}");
        assert!((fit.sigma_nm - 1000.0).abs() < 1e-3);
        assert!(fit.center_nm.abs() < 1e-3);
    }

    #[test]
    fn fit_recovers_shifted_dip() {
        let x = positions(41, 4000.0);
        let counts = x
            .iter()
            .map(|&t| (5000.0 * (1.0 - 0.6 * (-0.5 * ((t - 800.0) / 650.0).powi(2)).exp())).round() as u64)
            .collect();
        let fit = visibility_from_scan(&HomScan {
            positions_nm: x,
            counts,
            dwell_s: 1.0,
            rng_seed: 0,
        })
        .unwrap();
        assert!((fit.visibility - 0.6).abs() < 1e-3);
        assert!((fit.center_nm - 800.0).abs() < 2.0);
        assert!((fit.sigma_nm.abs() - 650.0).abs() < 2.0);
    }

    #[test]
    fn noisy_scan_is_within_error_bars() {
        let cfg = SourceConfig::default();
        let x = positions(61, 3000.0);
        let dwell = 1e4 / cfg.base_coincidence_rate();
        let mut within = 0;
        for seed in 0..20 {
            let scan = scan_hom(&SourceConfig { rng_seed: seed, ..cfg.clone() }, &x, dwell).unwrap();
            let fit = visibility_from_scan(&scan).unwrap();
            assert!(fit.visibility_err > 0.0 && fit.visibility_err < 0.01);
            if (fit.visibility - 0.97).abs() < 2.0 * fit.visibility_err {
                within += 1;
            }
        }
        assert!(within >= 15, "{within}/20");
    }

    #[test]
    fn flat_scan_gives_zero_visibility() {
        let cfg = SourceConfig {
            visibility_v0: 0.0,
            ..Default::default()
        };
        let x = positions(31, 3000.0);
        let scan = scan_hom(&cfg, &x, 1.0).unwrap();
        let fit = visibility_from_scan(&scan).unwrap();
        assert!(fit.visibility.abs() < 0.05_f64.max(3.0 * fit.visibility_err), "{fit:?}");
    }

    #[test]
    fn too_few_points() {
        let scan = HomScan {
            positions_nm: vec![0.0; 6],
            counts: vec![1; 6],
            dwell_s: 1.0,
            rng_seed: 0,
        };
        assert!(matches!(visibility_from_scan(&scan), Err(Error::TooShort { .. })));
    }

    #[test]
    fn scan_is_deterministic() {
        let cfg = SourceConfig::default();
        let x = positions(21, 3000.0);
        assert_eq!(scan_hom(&cfg, &x, 1.0).unwrap(), scan_hom(&cfg, &x, 1.0).unwrap());
        assert!(scan_hom(&cfg, &x, 0.0).is_err());
    }
}
