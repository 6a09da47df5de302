//! Stochastic model of the photon-pair source: HOM dip scans, the
//! post-selected polarization state behind the quantum eraser, and heralded
//! H/V detection events.

mod events;
mod hom;

pub use events::{generate_analyzer_events, generate_events, EventStats, EventStream};
pub use hom::{hom_coincidence_rate, scan_hom, visibility_from_scan, HomFit, HomScan};

use crate::certify::{ChshCounts, ChshSettings, CoincidenceQuad};
use crate::error::{Error, Result};
use crate::qmath::{born_unchecked, ket, Mat4, Projector, TwoQubitState, C64};
use crate::seed;
use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

/// How partial distinguishability degrades the post-selected state.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateModel {
    /// The singlet's `|HV⟩⟨VH|` coherence is scaled by the overlap.
    #[default]
    Dephased,
    /// `v·singlet + (1 − v)·I/4`.
    Werner,
}

/// Physical parameters of the simulated source.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SourceConfig {
    /// Peak HOM visibility.
    pub visibility_v0: f64,
    /// Gaussian dip 1/e half-width parameter σ, in nm of path length.
    pub dip_sigma_nm: f64,
    /// Path-length offset from the dip center, in nm.
    pub delay_nm: f64,
    /// Emitted pairs per second.
    pub pair_rate: f64,
    /// Dark counts per second per detector.
    pub dark_rate: f64,
    pub det_efficiency: f64,
    pub coincidence_window_s: f64,
    pub rng_seed: u64,
    #[serde(default)]
    pub state_model: StateModel,
}

impl Default for SourceConfig {
    fn default() -> Self {
        SourceConfig {
            visibility_v0: 0.97,
            dip_sigma_nm: 1000.0,
            delay_nm: 0.0,
            pair_rate: 50_000.0,
            dark_rate: 100.0,
            det_efficiency: 0.6,
            coincidence_window_s: 1e-9,
            rng_seed: 0,
            state_model: StateModel::Dephased,
        }
    }
}

impl SourceConfig {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, msg: &str| if ok { Ok(()) } else { Err(Error::validation(msg.to_string())) };
        check((0.0..=1.0).contains(&self.visibility_v0), "visibility_v0 must lie in [0, 1]")?;
        check(self.dip_sigma_nm > 0.0 && self.dip_sigma_nm.is_finite(), "dip_sigma_nm must be > 0")?;
        check(self.delay_nm.is_finite(), "delay_nm must be finite")?;
        check(self.pair_rate >= 0.0 && self.pair_rate.is_finite(), "pair_rate must be >= 0")?;
        check(self.dark_rate >= 0.0 && self.dark_rate.is_finite(), "dark_rate must be >= 0")?;
        check((0.0..=1.0).contains(&self.det_efficiency), "det_efficiency must lie in [0, 1]")?;
        check(
            self.coincidence_window_s >= 0.0 && self.coincidence_window_s.is_finite(),
            "coincidence_window_s must be >= 0",
        )?;
        Ok(())
    }

    /// Indistinguishability overlap at the configured delay,
    /// `v0 · exp(−τ²/(2σ²))`.
    pub fn overlap(&self) -> f64 {
        self.overlap_at(self.delay_nm)
    }

    pub fn overlap_at(&self, tau_nm: f64) -> f64 {
        let z = tau_nm / self.dip_sigma_nm;
        self.visibility_v0 * (-0.5 * z * z).exp()
    }

    /// Far-from-dip coincidence rate `½ · pair_rate · η²`: distinguishable
    /// photons split at the beam splitter half of the time.
    pub fn base_coincidence_rate(&self) -> f64 {
        0.5 * self.pair_rate * self.det_efficiency * self.det_efficiency
    }
}

/// σ that places coherence `target` at delay `tau_nm` for peak `v0`.
pub fn sigma_for_coherence(v0: f64, tau_nm: f64, target: f64) -> Result<f64> {
    if !(target > 0.0 && target < v0) || tau_nm == 0.0 {
        return Err(Error::validation(format!(
            "cannot reach coherence {target} from peak {v0} at delay {tau_nm} nm"
        )));
    }
    Ok(tau_nm.abs() / (2.0 * (v0 / target).ln()).sqrt())
}

/// Post-selected coincidence state and its post-selection probability.
#[derive(Clone, Debug, PartialEq)]
pub struct PostSelected {
    pub rho: TwoQubitState,
    pub probability: f64,
}

/// Two photons meet at a symmetric 50:50 beam splitter: photon 1 is `H`, the
/// polarization of photon 2 is rotated by a half-wave plate at `hwp_deg`
/// (`H → cos 2θ H + sin 2θ V`), and `overlap = |⟨ξ₁|ξ₂⟩|²` is their spectral
/// indistinguishability. Keeping only one-photon-per-port events leaves
///
/// `ρ̃ = ¼[|Hp⟩⟨Hp| + |pH⟩⟨pH| − overlap·(|Hp⟩⟨pH| + |pH⟩⟨Hp|)]`,
///
/// with `Tr ρ̃` the post-selection probability. At `θ = 45°` this is the
/// dephased singlet with coherence `overlap`.
pub fn eraser_postselected_state(hwp_deg: f64, overlap: f64) -> Result<PostSelected> {
    if !(0.0..=45.0).contains(&hwp_deg) {
        return Err(Error::validation(format!("HWP angle {hwp_deg}° outside [0°, 45°]")));
    }
    if !(0.0..=1.0).contains(&overlap) {
        return Err(Error::validation(format!("overlap {overlap} outside [0, 1]")));
    }
    let p = ket::linear(2.0 * hwp_deg);
    let hp = ket::product(&ket::H, &p);
    let ph = ket::product(&p, &ket::H);
    let cross = Mat4::outer(&hp, &ph) + Mat4::outer(&ph, &hp);
    let unnorm = (Mat4::outer(&hp, &hp) + Mat4::outer(&ph, &ph) - cross.scale_re(overlap)).scale_re(0.25);
    let probability = unnorm.trace().re.max(0.0);
    let rho = if probability > 1e-15 {
        TwoQubitState::normalized(unnorm)?
    } else {
        // Perfect bunching: the limit of the normalized state is the
        // symmetric combination.
        TwoQubitState::normalized(Mat4::outer(&hp, &hp) + Mat4::outer(&ph, &ph) + cross)?
    };
    Ok(PostSelected { rho, probability })
}

/// Dephased singlet `½(|HV⟩⟨HV| + |VH⟩⟨VH|) − (v/2)(|HV⟩⟨VH| + |VH⟩⟨HV|)`.
pub fn dephased_singlet(v: f64) -> TwoQubitState {
    let mut m = Mat4::zeros();
    m.0[1][1] = C64::new(0.5, 0.0);
    m.0[2][2] = C64::new(0.5, 0.0);
    m.0[1][2] = C64::new(-0.5 * v, 0.0);
    m.0[2][1] = C64::new(-0.5 * v, 0.0);
    TwoQubitState::from_matrix_unchecked(m)
}

/// Post-selected state produced at the configured delay.
pub fn state_at_delay(cfg: &SourceConfig) -> Result<TwoQubitState> {
    cfg.validate()?;
    let v = cfg.overlap();
    Ok(match cfg.state_model {
        StateModel::Dephased => eraser_postselected_state(45.0, v)?.rho,
        StateModel::Werner => TwoQubitState::werner(v),
    })
}

pub(crate) fn poisson(rng: &mut impl Rng, lambda: f64) -> u64 {
    if lambda <= 0.0 || !lambda.is_finite() {
        return 0;
    }
    Poisson::new(lambda).map(|d| d.sample(rng) as u64).unwrap_or(0)
}

/// `count ~ Poisson(expected_total · Tr(P ρ))`.
pub fn simulate_counts(rho: &TwoQubitState, proj: &Projector, expected_total: f64, rng_seed: u64) -> u64 {
    let p = born_unchecked(rho, proj.matrix()).clamp(0.0, 1.0);
    poisson(&mut seed::rng_from_seed(rng_seed), expected_total * p)
}

/// Poisson coincidence counts for the four CHSH setting pairs, each pair
/// acquiring `pairs_per_setting` expected coincidences.
pub fn simulate_chsh_counts(
    rho: &TwoQubitState,
    settings: &ChshSettings,
    pairs_per_setting: f64,
    rng_seed: u64,
) -> Result<ChshCounts> {
    settings.validate()?;
    let mut counts = ChshCounts::default();
    for (k, &(alpha, beta)) in settings.pairs().iter().enumerate() {
        let projectors = CoincidenceQuad::projectors(alpha, beta);
        let n: Vec<u64> = projectors
            .iter()
            .enumerate()
            .map(|(j, p)| simulate_counts(rho, p, pairs_per_setting, seed::derive_seed(rng_seed, "chsh", (4 * k + j) as u64)))
            .collect();
        counts.pairs[k] = CoincidenceQuad {
            n_ab: n[0],
            n_ab_perp: n[1],
            n_aperp_b: n[2],
            n_aperp_bperp: n[3],
        };
    }
    Ok(counts)
}
