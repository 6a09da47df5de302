use super::{ls_invert, Diagnostics, Method, ProjectorSet, TomoCounts, TomoResult};
use crate::error::{Error, Result};
use crate::qmath::{hermitian_eigen, is_physical, Mat4, TwoQubitState, C64, PHYSICAL_TOL};
use serde::{Deserialize, Serialize};

/// Statistical model of the counts.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Likelihood {
    /// `Σ n_k log(p_k / Σ_j p_j)`: counts conditioned on their total.
    #[default]
    Multinomial,
    /// `Σ n_k log μ_k − μ_k` with `μ_k = acquisition_total · p_k`.
    Poisson,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MleConfig {
    pub max_iters: usize,
    /// Stop once the per-count log-likelihood gains less than this on two
    /// consecutive steps.
    pub tolerance: f64,
    #[serde(default)]
    pub likelihood: Likelihood,
}

impl Default for MleConfig {
    fn default() -> Self {
        MleConfig {
            max_iters: 5000,
            tolerance: 1e-10,
            likelihood: Likelihood::Multinomial,
        }
    }
}

/// Real parameters of the lower-triangular factor `T` with `ρ ∝ T†T`.
pub const N_PARAMS: usize = 16;

/// Strictly-lower entries of `T` in parameter order.
const OFF_DIAG: [(usize, usize); 6] = [(1, 0), (2, 0), (2, 1), (3, 0), (3, 1), (3, 2)];

/// Lower-triangular `T`: four real diagonal entries, then the real and
/// imaginary parts of each strictly-lower entry.
pub(crate) fn t_matrix(t: &[f64; N_PARAMS]) -> Mat4 {
    let mut m = Mat4::zeros();
    for a in 0..4 {
        m.0[a][a] = C64::new(t[a], 0.0);
    }
    for (k, &(a, b)) in OFF_DIAG.iter().enumerate() {
        m.0[a][b] = C64::new(t[4 + 2 * k], t[5 + 2 * k]);
    }
    m
}

pub(crate) fn params_to_state(t: &[f64; N_PARAMS]) -> Option<TwoQubitState> {
    let tm = t_matrix(t);
    TwoQubitState::normalized(tm.adjoint() * tm).ok()
}

/// Parameters `t` with `T†T = ρ`, for positive-definite `ρ`.
///
/// With `J` the exchange matrix, Cholesky gives `JρJ = L L†`; then
/// `T = J L† J` is lower triangular and `T†T = ρ`.
pub(crate) fn state_to_params(rho: &Mat4) -> Option<[f64; N_PARAMS]> {
    let j = |k: usize| 3 - k;
    let flipped = Mat4::from_fn(|a, b| rho.0[j(a)][j(b)]);
    let mut l = Mat4::zeros();
    for c in 0..4 {
        let mut d = flipped.0[c][c].re;
        for k in 0..c {
            d -= l.0[c][k].norm_sqr();
        }
        if !(d > 0.0) {
            return None;
        }
        let d = d.sqrt();
        l.0[c][c] = C64::new(d, 0.0);
        for r in c + 1..4 {
            let mut s = flipped.0[r][c];
            for k in 0..c {
                s -= l.0[r][k] * l.0[c][k].conj();
            }
            l.0[r][c] = s / d;
        }
    }
    let tm = Mat4::from_fn(|a, b| l.0[j(b)][j(a)].conj());
    let mut t = [0.0; N_PARAMS];
    for a in 0..4 {
        t[a] = tm.0[a][a].re;
    }
    for (k, &(a, b)) in OFF_DIAG.iter().enumerate() {
        t[4 + 2 * k] = tm.0[a][b].re;
        t[5 + 2 * k] = tm.0[a][b].im;
    }
    Some(t)
}

pub(crate) struct Objective<'a> {
    projectors: Vec<Mat4>,
    sum_p: Mat4,
    counts: &'a [u64],
    n: f64,
    acquisition_total: f64,
    model: Likelihood,
}

impl<'a> Objective<'a> {
    pub(crate) fn new(counts: &'a TomoCounts, set: &ProjectorSet, model: Likelihood) -> Self {
        let projectors: Vec<Mat4> = set.projectors.iter().map(|p| *p.matrix()).collect();
        let sum_p = projectors.iter().fold(Mat4::zeros(), |acc, p| acc + *p);
        Objective {
            projectors,
            sum_p,
            counts: &counts.counts,
            n: counts.total() as f64,
            acquisition_total: counts.acquisition_total as f64,
            model,
        }
    }

    /// Per-count log-likelihood of the (unnormalized) matrix `r`, and its
    /// matrix gradient `G` with `dℓ = Tr(G dr)`.
    fn value_and_matrix_grad(&self, r: &Mat4, want_grad: bool) -> (f64, Mat4) {
        let q: Vec<f64> = self.projectors.iter().map(|p| p.trace_product(r).re).collect();
        let qsum: f64 = q.iter().sum();
        let tr = r.trace().re;
        let mut ll = 0.0;
        let mut g = Mat4::zeros();
        for ((&n, &qk), p) in self.counts.iter().zip(&q).zip(&self.projectors) {
            if n > 0 {
                if qk <= 0.0 {
                    return (f64::NEG_INFINITY, g);
                }
                ll += n as f64 * qk.ln();
                if want_grad {
                    g = g + p.scale_re(n as f64 / qk);
                }
            }
        }
        match self.model {
            Likelihood::Multinomial => {
                ll -= self.n * qsum.ln();
                if want_grad {
                    g = g - self.sum_p.scale_re(self.n / qsum);
                }
            }
            Likelihood::Poisson => {
                let a = self.acquisition_total;
                ll += self.n * (a / tr).ln() - a * qsum / tr;
                if want_grad {
                    let diag = -self.n / tr + a * qsum / (tr * tr);
                    g = g - self.sum_p.scale_re(a / tr) + Mat4::identity().scale_re(diag);
                }
            }
        }
        (ll / self.n, g.scale_re(1.0 / self.n))
    }

    #[cfg(test)]
    pub(crate) fn value(&self, r: &Mat4) -> f64 {
        self.value_and_matrix_grad(r, false).0
    }

    /// Per-count log-likelihood at parameters `t` and its gradient.
    pub(crate) fn eval(&self, t: &[f64; N_PARAMS]) -> (f64, [f64; N_PARAMS]) {
        let tm = t_matrix(t);
        let r = tm.adjoint() * tm;
        let (ll, g) = self.value_and_matrix_grad(&r, true);
        // dℓ = 2 Re Tr(G T† dT) = Σ 2 Re(M_ba dT_ab), M = G T†.
        let m = g * tm.adjoint();
        let mut grad = [0.0; N_PARAMS];
        for a in 0..4 {
            grad[a] = 2.0 * m.0[a][a].re;
        }
        for (k, &(a, b)) in OFF_DIAG.iter().enumerate() {
            grad[4 + 2 * k] = 2.0 * m.0[b][a].re;
            grad[5 + 2 * k] = -2.0 * m.0[b][a].im;
        }
        (ll, grad)
    }
}

fn dot(a: &[f64; N_PARAMS], b: &[f64; N_PARAMS]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn normalize(t: &mut [f64; N_PARAMS]) {
    let n = dot(t, t).sqrt();
    for x in t.iter_mut() {
        *x /= n;
    }
}

/// Starting point: the least-squares estimate with negative eigenvalues
/// clipped, mixed with a little of `I/4` so that it is full rank.
fn initial_params(counts: &TomoCounts, set: &ProjectorSet) -> [f64; N_PARAMS] {
    let fallback = {
        let mut t = [0.0; N_PARAMS];
        t[..4].fill(0.5);
        t
    };
    let Ok(ls) = ls_invert(counts, set) else {
        return fallback;
    };
    let clipped = hermitian_eigen(ls.rho_est.matrix()).map_values(|x| x.max(0.0));
    let tr = clipped.trace().re;
    if !(tr > 0.0) {
        return fallback;
    }
    let eps = 1e-3;
    let start = clipped.scale_re((1.0 - eps) / tr) + Mat4::identity().scale_re(eps / 4.0);
    state_to_params(&start).unwrap_or(fallback)
}

/// Per-count log-likelihood of `counts` at factor parameters `t` and its
/// analytic gradient with respect to `t`.
pub fn log_likelihood(
    counts: &TomoCounts,
    set: &ProjectorSet,
    model: Likelihood,
    t: &[f64; N_PARAMS],
) -> Result<(f64, [f64; N_PARAMS])> {
    counts.check(set)?;
    Ok(Objective::new(counts, set, model).eval(t))
}

/// Maximum-likelihood state over `ρ = T†T / Tr(T†T)`.
pub fn mle_estimate(counts: &TomoCounts, set: &ProjectorSet, cfg: &MleConfig) -> Result<TomoResult> {
    counts.check(set)?;
    if counts.total() == 0 {
        return Err(Error::validation("MLE needs at least one positive count"));
    }
    if cfg.likelihood == Likelihood::Poisson && counts.acquisition_total == 0 {
        return Err(Error::validation("Poisson likelihood needs acquisition_total > 0"));
    }
    let obj = Objective::new(counts, set, cfg.likelihood);
    let mut t = initial_params(counts, set);
    normalize(&mut t);
    let (mut ll, mut g) = obj.eval(&t);
    if !ll.is_finite() {
        return Err(Error::validation("initial point has zero likelihood"));
    }
    let mut step = 1.0;
    let mut small = 0;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iters {
        iterations += 1;
        let gg = dot(&g, &g);
        if gg.sqrt() < 1e-14 {
            converged = true;
            break;
        }
        // Armijo backtracking from the Barzilai-Borwein trial step.
        let mut alpha = step;
        let mut accepted = None;
        for _ in 0..80 {
            let mut trial = t;
            for k in 0..N_PARAMS {
                trial[k] += alpha * g[k];
            }
            normalize(&mut trial);
            let (ll_new, g_new) = obj.eval(&trial);
            if ll_new.is_finite() && ll_new >= ll + 1e-4 * alpha * gg {
                accepted = Some((trial, ll_new, g_new));
                break;
            }
            alpha *= 0.5;
        }
        let Some((t_new, ll_new, g_new)) = accepted else {
            // No ascent direction left at double precision.
            converged = true;
            break;
        };
        let s: [f64; N_PARAMS] = std::array::from_fn(|k| t_new[k] - t[k]);
        let y: [f64; N_PARAMS] = std::array::from_fn(|k| g[k] - g_new[k]);
        let sy = dot(&s, &y);
        step = if sy > 0.0 { (dot(&s, &s) / sy).clamp(1e-8, 1e8) } else { (alpha * 2.0).min(1e8) };
        let gain = ll_new - ll;
        t = t_new;
        ll = ll_new;
        g = g_new;
        if gain < cfg.tolerance {
            small += 1;
            if small >= 2 {
                converged = true;
                break;
            }
        } else {
            small = 0;
        }
    }
    let rho = params_to_state(&t).ok_or_else(|| Error::validation("MLE iterate collapsed to zero"))?;
    let gradient_norm = dot(&g, &g).sqrt();
    if !converged {
        return Err(Error::NotConverged {
            method: "MLE",
            iterations,
            gradient_norm,
            last_iterate: Some(Box::new(rho)),
        });
    }
    let report = is_physical(&rho, PHYSICAL_TOL);
    Ok(TomoResult {
        rho_est: rho,
        method: Method::MLE,
        physical: report.physical,
        diagnostics: Diagnostics {
            iterations: Some(iterations),
            log_likelihood: Some(ll * counts.total() as f64),
            gradient_norm: Some(gradient_norm),
            min_eigenvalue: Some(report.min_eigenvalue),
            ..Default::default()
        },
        std_of_functionals: None,
    })
}
