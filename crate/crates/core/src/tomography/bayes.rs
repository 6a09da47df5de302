use super::{ls_invert, Diagnostics, Likelihood, Method, ProjectorSet, TomoCounts, TomoResult};
use crate::certify::chsh_from_rho;
use crate::error::{Error, Result};
use crate::qmath::{hermitian_eigen, is_physical, Mat4, TwoQubitState, C64, PHYSICAL_TOL};
use crate::seed;
use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Reals per mixture component: one Gamma weight and a complex 4-vector.
const PER_COMPONENT: usize = 9;
const TARGET_ACCEPTANCE: f64 = 0.3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BayesConfig {
    /// Retained samples.
    #[serde(rename = "R")]
    pub r: usize,
    /// Chain steps discarded before sampling; the step size adapts only here.
    pub burn_in: usize,
    /// Steps between retained samples.
    pub thin: usize,
    /// Initial random-walk scale.
    pub step: f64,
    /// Mixture components.
    #[serde(rename = "K")]
    pub k: usize,
    pub rng_seed: u64,
    #[serde(default)]
    pub likelihood: Likelihood,
}

impl Default for BayesConfig {
    fn default() -> Self {
        BayesConfig {
            r: 5000,
            burn_in: 2000,
            thin: 5,
            step: 0.05,
            k: 4,
            rng_seed: 0,
            likelihood: Likelihood::Multinomial,
        }
    }
}

impl BayesConfig {
    pub fn validate(&self) -> Result<()> {
        if self.r < 100 {
            return Err(Error::validation(format!("R = {} must be at least 100", self.r)));
        }
        if self.r < self.burn_in {
            return Err(Error::validation(format!("R = {} is smaller than burn_in = {}", self.r, self.burn_in)));
        }
        if self.thin == 0 || self.k == 0 {
            return Err(Error::validation("thin and K must be positive"));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::validation("step must be > 0"));
        }
        Ok(())
    }
}

/// Post-burn-in, thinned chain states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSamples {
    pub samples: Vec<Vec<f64>>,
    pub acceptance_rate: f64,
    #[serde(rename = "R")]
    pub r: usize,
    #[serde(rename = "K")]
    pub k: usize,
}

impl PosteriorSamples {
    pub fn state(&self, i: usize) -> TwoQubitState {
        mixture_state(&self.samples[i])
    }

    pub fn states(&self) -> impl Iterator<Item = TwoQubitState> + '_ {
        self.samples.iter().map(|x| mixture_state(x))
    }
}

/// `ρ(x) = Σ_k w_k |ψ_k⟩⟨ψ_k|` with `w = g/Σg` and normalized `ψ_k`.
fn mixture_matrix(x: &[f64]) -> Mat4 {
    let gsum: f64 = x.chunks_exact(PER_COMPONENT).map(|c| c[0]).sum();
    let mut m = Mat4::zeros();
    for c in x.chunks_exact(PER_COMPONENT) {
        let psi: [C64; 4] = std::array::from_fn(|a| C64::new(c[1 + 2 * a], c[2 + 2 * a]));
        let norm2: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
        if norm2 > 0.0 && gsum > 0.0 {
            m = m + Mat4::outer(&psi, &psi).scale_re(c[0] / (gsum * norm2));
        }
    }
    m
}

fn mixture_state(x: &[f64]) -> TwoQubitState {
    TwoQubitState::from_matrix_unchecked(mixture_matrix(x))
}

/// `log π₀(x)`: unit-rate exponential weights, standard-normal amplitudes.
fn log_prior(x: &[f64]) -> f64 {
    x.chunks_exact(PER_COMPONENT)
        .map(|c| -c[0] - 0.5 * c[1..].iter().map(|a| a * a).sum::<f64>())
        .sum()
}

struct LogLikelihood {
    projectors: Vec<Mat4>,
    counts: Vec<f64>,
    n: f64,
    acquisition_total: f64,
    model: Likelihood,
}

impl LogLikelihood {
    fn eval(&self, rho: &Mat4) -> f64 {
        if self.n == 0.0 {
            return 0.0;
        }
        let q: Vec<f64> = self.projectors.iter().map(|p| p.trace_product(rho).re).collect();
        let mut ll = 0.0;
        for (&n, &qk) in self.counts.iter().zip(&q) {
            if n > 0.0 {
                if qk <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                ll += n * qk.ln();
            }
        }
        let qsum: f64 = q.iter().sum();
        match self.model {
            Likelihood::Multinomial => ll - self.n * qsum.ln(),
            Likelihood::Poisson => ll + self.n * self.acquisition_total.ln() - self.acquisition_total * qsum,
        }
    }
}

fn prior_draw(k: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..k * PER_COMPONENT)
        .map(|i| {
            if i % PER_COMPONENT == 0 {
                rng.sample::<f64, _>(Exp1)
            } else {
                rng.sample::<f64, _>(StandardNormal)
            }
        })
        .collect()
}

/// Chain start: components along the eigenvectors of the clipped LS
/// estimate, weighted by its eigenvalues, with prior-typical scales.
fn initial_point(counts: &TomoCounts, set: &ProjectorSet, k: usize, rng: &mut impl Rng) -> Vec<f64> {
    if counts.total() == 0 {
        return prior_draw(k, rng);
    }
    let Ok(ls) = ls_invert(counts, set) else {
        return prior_draw(k, rng);
    };
    let eig = hermitian_eigen(ls.rho_est.matrix());
    let amp_norm = 8f64.sqrt();
    let mut x = Vec::with_capacity(k * PER_COMPONENT);
    for c in 0..k {
        let idx = 3 - (c % 4);
        let lambda = eig.values[idx].max(0.0);
        x.push((lambda * k as f64).max(1e-3));
        let v = eig.vectors.column(idx);
        for z in v {
            x.push(z.re * amp_norm);
            x.push(z.im * amp_norm);
        }
    }
    x
}

/// Posterior mean state under the mixture prior, sampled by random-walk
/// Metropolis–Hastings. Only likelihood ratios are needed, so the evidence
/// normalizer is never computed.
pub fn bayesian_estimate(
    counts: &TomoCounts,
    set: &ProjectorSet,
    cfg: &BayesConfig,
) -> Result<(TomoResult, PosteriorSamples)> {
    cfg.validate()?;
    counts.check(set)?;
    let loglik = LogLikelihood {
        projectors: set.projectors.iter().map(|p| *p.matrix()).collect(),
        counts: counts.counts.iter().map(|&c| c as f64).collect(),
        n: counts.total() as f64,
        acquisition_total: counts.acquisition_total as f64,
        model: cfg.likelihood,
    };
    let mut rng = seed::rng_from_seed(cfg.rng_seed);
    let mut x = initial_point(counts, set, cfg.k, &mut rng);
    let mut log_post = loglik.eval(&mixture_matrix(&x)) + log_prior(&x);
    if !log_post.is_finite() {
        return Err(Error::validation("chain start has zero posterior density"));
    }
    // Burn-in adapts a global scale toward the target acceptance and, from
    // its second quarter on, per-coordinate scales from the chain's running
    // variance. Both are frozen for the sampling phase.
    let dim = x.len();
    let mut log_step = cfg.step.ln();
    let mut scales = vec![1.0; dim];
    let (mut w_n, mut w_mean, mut w_m2) = (0.0, vec![0.0; dim], vec![0.0; dim]);
    let (mut late_sum, mut late_n) = (0.0, 0.0);
    let mut samples = Vec::with_capacity(cfg.r);
    let mut accepted_after_burn = 0usize;
    let total_steps = cfg.burn_in + cfg.r * cfg.thin;
    let mut proposal = vec![0.0; dim];
    for t in 0..total_steps {
        if t == cfg.burn_in && late_n > 0.0 {
            log_step = late_sum / late_n;
        }
        let step = log_step.exp();
        for (i, (p, &xi)) in proposal.iter_mut().zip(&x).enumerate() {
            let z: f64 = rng.sample(StandardNormal);
            *p = xi + step * scales[i] * z;
            // Reflecting at zero keeps the weight proposal symmetric.
            if i % PER_COMPONENT == 0 {
                *p = p.abs();
            }
        }
        let cand = loglik.eval(&mixture_matrix(&proposal)) + log_prior(&proposal);
        let accept = cand.is_finite() && (cand >= log_post || rng.random::<f64>().ln() < cand - log_post);
        if accept {
            std::mem::swap(&mut x, &mut proposal);
            log_post = cand;
        }
        if t < cfg.burn_in {
            let gain = 1.0 / (1.0 + t as f64 / 20.0).powf(0.6);
            log_step += gain * (if accept { 1.0 } else { 0.0 } - TARGET_ACCEPTANCE);
            if t >= cfg.burn_in / 4 {
                w_n += 1.0;
                for i in 0..dim {
                    let d = x[i] - w_mean[i];
                    w_mean[i] += d / w_n;
                    w_m2[i] += d * (x[i] - w_mean[i]);
                }
                if w_n >= 100.0 && (t - cfg.burn_in / 4) % 100 == 0 {
                    let sd: Vec<f64> = w_m2.iter().map(|m| (m / (w_n - 1.0)).sqrt()).collect();
                    let mean_sd = sd.iter().sum::<f64>() / dim as f64;
                    if mean_sd > 0.0 {
                        for i in 0..dim {
                            scales[i] = (sd[i] / mean_sd).clamp(0.05, 20.0);
                        }
                    }
                }
            }
            if t >= 3 * cfg.burn_in / 4 {
                late_sum += log_step;
                late_n += 1.0;
            }
        } else {
            if accept {
                accepted_after_burn += 1;
            }
            if (t - cfg.burn_in + 1) % cfg.thin == 0 {
                samples.push(x.clone());
            }
        }
    }
    let acceptance_rate = accepted_after_burn as f64 / (cfg.r * cfg.thin) as f64;
    let post = PosteriorSamples {
        samples,
        acceptance_rate,
        r: cfg.r,
        k: cfg.k,
    };

    let mean = post
        .samples
        .iter()
        .fold(Mat4::zeros(), |acc, s| acc + mixture_matrix(s))
        .scale_re(1.0 / cfg.r as f64);
    let rho = TwoQubitState::normalized(mean)?;
    let report = is_physical(&rho, PHYSICAL_TOL);

    let mut warnings = Vec::new();
    if !(0.01..=0.95).contains(&acceptance_rate) {
        warnings.push(format!("acceptance rate {acceptance_rate:.3} outside [0.01, 0.95]"));
    }
    let mut stds = BTreeMap::new();
    let (_, s_std) = posterior_functional(&post, |r| chsh_from_rho(r).unwrap_or(f64::NAN))?;
    stds.insert("chsh".to_string(), s_std);
    let (_, p_std) = posterior_functional(&post, |r| r.purity())?;
    stds.insert("purity".to_string(), p_std);

    let result = TomoResult {
        rho_est: rho,
        method: Method::Bayesian,
        physical: report.physical,
        diagnostics: Diagnostics {
            iterations: Some(total_steps),
            log_likelihood: Some(loglik.eval(rho.matrix())),
            acceptance_rate: Some(acceptance_rate),
            min_eigenvalue: Some(report.min_eigenvalue),
            warnings,
            ..Default::default()
        },
        std_of_functionals: Some(stds),
    };
    Ok((result, post))
}

/// Sample mean and standard deviation of `phi` over the posterior samples.
pub fn posterior_functional(samples: &PosteriorSamples, phi: impl Fn(&TwoQubitState) -> f64) -> Result<(f64, f64)> {
    let n = samples.samples.len();
    if n < 2 {
        return Err(Error::TooShort {
            what: "posterior functional".into(),
            required: 2,
            actual: n,
        });
    }
    let vals: Vec<f64> = samples.states().map(|s| phi(&s)).collect();
    let mean = vals.iter().sum::<f64>() / n as f64;
    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    Ok((mean, var.sqrt()))
}
