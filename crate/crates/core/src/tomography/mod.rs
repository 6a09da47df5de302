//! Two-qubit state estimation from 16 projective coincidence counts:
//! linear least-squares inversion, maximum likelihood, and Bayesian mean
//! estimation by Metropolis–Hastings.

mod bayes;
mod mle;

pub use bayes::{bayesian_estimate, posterior_functional, BayesConfig, PosteriorSamples};
pub use mle::{log_likelihood, mle_estimate, Likelihood, MleConfig, N_PARAMS};

use crate::error::{Error, Result};
use crate::qmath::{is_physical, ket, pauli, real_rank, solve_real, Mat4, Projector, TwoQubitState, C64, PHYSICAL_TOL};
use crate::seed;
use crate::source::simulate_counts;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

/// Measurement order of the standard 16-setting two-qubit scheme. The first
/// letter is the heralding arm A, the second arm B.
pub const KWIAT_LABELS: [&str; 16] = [
    "HH", "HV", "VV", "VH", "RH", "RV", "DV", "DH", "DR", "DD", "RD", "HD", "VD", "VL", "HL", "RL",
];

fn polarization(c: char) -> [C64; 2] {
    match c {
        'H' => ket::H,
        'V' => ket::V,
        'D' => ket::D,
        'A' => ket::A,
        'R' => ket::R,
        'L' => ket::L,
        _ => unreachable!("unknown polarization label {c}"),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProjectorSet {
    pub projectors: Vec<Projector>,
}

impl ProjectorSet {
    pub fn labels(&self) -> Vec<String> {
        self.projectors.iter().map(|p| p.label.clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.projectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.projectors.is_empty()
    }

    /// Row `k`, column `4i + j` holds `Tr(P_k σ_i⊗σ_j)/4`, so that
    /// `p_k = Σ u_ij · row_k[4i+j]` for `ρ = ¼ Σ u_ij σ_i⊗σ_j`.
    pub fn pauli_design(&self) -> Vec<Vec<f64>> {
        let basis: Vec<Mat4> = (0..16).map(|ij| pauli(ij / 4).kron(&pauli(ij % 4))).collect();
        self.projectors
            .iter()
            .map(|p| basis.iter().map(|s| 0.25 * p.matrix().trace_product(s).re).collect())
            .collect()
    }

    /// Rank of the Born-map design matrix; 16 means informationally complete.
    pub fn design_rank(&self) -> usize {
        real_rank(self.pauli_design(), 1e-10)
    }
}

/// The 16 projectors in [`KWIAT_LABELS`] order.
pub fn kwiat_projectors() -> ProjectorSet {
    let projectors = KWIAT_LABELS
        .iter()
        .map(|l| {
            let mut c = l.chars();
            let a = polarization(c.next().unwrap());
            let b = polarization(c.next().unwrap());
            Projector::product(*l, &a, &b)
        })
        .collect();
    ProjectorSet { projectors }
}

/// Coincidence counts aligned with a projector set. `acquisition_total` is
/// the expected number of pairs per setting, so `counts/acquisition_total`
/// estimates the Born probabilities.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TomoCounts {
    pub labels: Vec<String>,
    pub counts: Vec<u64>,
    pub acquisition_total: u64,
}

impl TomoCounts {
    pub fn new(set: &ProjectorSet, counts: Vec<u64>, acquisition_total: u64) -> Result<Self> {
        let c = TomoCounts {
            labels: set.labels(),
            counts,
            acquisition_total,
        };
        c.check(set)?;
        Ok(c)
    }

    pub fn check(&self, set: &ProjectorSet) -> Result<()> {
        if self.counts.len() != set.len() || self.labels.len() != set.len() {
            return Err(Error::validation(format!(
                "expected {} labels and counts, got {} and {}",
                set.len(),
                self.labels.len(),
                self.counts.len()
            )));
        }
        for (l, p) in self.labels.iter().zip(&set.projectors) {
            if *l != p.label {
                return Err(Error::validation(format!("count label {l} does not match projector {}", p.label)));
            }
        }
        Ok(())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Poisson counts for every projector in `set`, each drawn from its own
/// seed derived from `rng_seed`.
pub fn simulate_tomo_counts(rho: &TwoQubitState, set: &ProjectorSet, acquisition_total: u64, rng_seed: u64) -> TomoCounts {
    let counts = set
        .projectors
        .iter()
        .enumerate()
        .map(|(k, p)| simulate_counts(rho, p, acquisition_total as f64, seed::derive_seed(rng_seed, "tomo", k as u64)))
        .collect();
    TomoCounts {
        labels: set.labels(),
        counts,
        acquisition_total,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Method {
    LS,
    MLE,
    Bayesian,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub iterations: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub log_likelihood: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gradient_norm: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub acceptance_rate: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_eigenvalue: Option<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TomoResult {
    pub rho_est: TwoQubitState,
    pub method: Method,
    pub physical: bool,
    pub diagnostics: Diagnostics,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std_of_functionals: Option<BTreeMap<String, f64>>,
}

/// Unconstrained linear inversion: least squares over Hermitian unit-trace
/// matrices. The estimate is returned even when it is not positive
/// semi-definite; `physical` reports which case occurred.
pub fn ls_invert(counts: &TomoCounts, set: &ProjectorSet) -> Result<TomoResult> {
    counts.check(set)?;
    if counts.acquisition_total == 0 {
        return Err(Error::validation("acquisition_total must be > 0"));
    }
    let design = set.pauli_design();
    let n_total = counts.acquisition_total as f64;
    // u_00 = 1 fixes the trace; solve for the remaining 15 coefficients.
    let rhs: Vec<f64> = counts
        .counts
        .iter()
        .zip(&design)
        .map(|(&n, row)| n as f64 / n_total - row[0])
        .collect();
    let mut ata = vec![vec![0.0; 15]; 15];
    let mut atb = vec![0.0; 15];
    for (row, &f) in design.iter().zip(&rhs) {
        for a in 0..15 {
            atb[a] += row[a + 1] * f;
            for b in 0..15 {
                ata[a][b] += row[a + 1] * row[b + 1];
            }
        }
    }
    let u = solve_real(ata, atb, 1e-12).ok_or_else(|| Error::validation("tomography design matrix is rank deficient"))?;
    let mut m = Mat4::identity().scale_re(0.25);
    for (k, uk) in u.iter().enumerate() {
        let ij = k + 1;
        m = m + pauli(ij / 4).kron(&pauli(ij % 4)).scale_re(0.25 * uk);
    }
    let rho = TwoQubitState::from_matrix_unchecked(m.hermitian_part());
    let report = is_physical(&rho, PHYSICAL_TOL);
    Ok(TomoResult {
        rho_est: rho,
        method: Method::LS,
        physical: report.physical,
        diagnostics: Diagnostics {
            min_eigenvalue: Some(report.min_eigenvalue),
            ..Default::default()
        },
        std_of_functionals: None,
    })
}

/// Counts equal to `acquisition_total · p_k`, rounded: noise-free data.
pub fn exact_tomo_counts(rho: &TwoQubitState, set: &ProjectorSet, acquisition_total: u64) -> TomoCounts {
    let counts = set
        .projectors
        .iter()
        .map(|p| (acquisition_total as f64 * p.matrix().trace_product(rho.matrix()).re).round().max(0.0) as u64)
        .collect();
    TomoCounts {
        labels: set.labels(),
        counts,
        acquisition_total,
    }
}
