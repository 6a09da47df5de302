//! Config-driven orchestration of the stages: HOM calibration, raw bit
//! generation, certification, extraction and statistical testing.
//!
//! Every stage takes its randomness from a seed derived from the config's
//! `global_seed` and the stage's label in `seed_labels`.

mod config;
pub mod io;

pub use config::{
    ChshStageConfig, HomScanConfig, PipelineConfig, Preset, SeedLabels, SeedPlan, StateOverride, SuiteStageConfig,
    TomoStageConfig, DATASET_A_COHERENCE, DATASET_B_COHERENCE, DATASET_B_DELAY_NM,
};

use crate::certify::{chsh_direct, chsh_from_rho, min_entropy, ChshResult, MinEntropyResult, VIOLATION_SIGMAS};
use crate::error::{Error, Result};
use crate::extract::{extract_stream, BitStream, Stage};
use crate::qmath::TwoQubitState;
use crate::source::{
    generate_events, scan_hom, simulate_chsh_counts, state_at_delay, visibility_from_scan, EventStream, HomFit,
    HomScan,
};
use crate::statsuite::{run_suite, SuiteReport, TestName, REFERENCE_P_VALUES};
use crate::tomography::{
    bayesian_estimate, kwiat_projectors, ls_invert, mle_estimate, simulate_tomo_counts, TomoCounts, TomoResult,
};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

pub const HOM_SCAN_FILE: &str = "hom_scan.csv";
pub const HOM_FIT_FILE: &str = "hom_fit.json";
pub const RAW_BITS_FILE: &str = "raw.bin";
pub const EXTRACTED_BITS_FILE: &str = "extracted.bin";
pub const CERTIFY_FILE: &str = "certify.json";
pub const SUITE_FILE: &str = "suite.json";
pub const SUITE_CSV_FILE: &str = "suite.csv";
pub const RUN_REPORT_FILE: &str = "run_report.json";
pub const CONFIG_FILE: &str = "config.json";

/// Process exit code for an error: 1 for invalid input, 2 for a stage that
/// failed while running.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Validation(_) | Error::TooShort { .. } | Error::Json(_) => 1,
        _ => 2,
    }
}

#[derive(Debug)]
pub struct StageFailure {
    pub stage: &'static str,
    pub error: Error,
}

impl fmt::Display for StageFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "stage {} failed: {}", self.stage, self.error)
    }
}

impl std::error::Error for StageFailure {}

trait InStage<T> {
    fn in_stage(self, stage: &'static str) -> std::result::Result<T, StageFailure>;
}

impl<T> InStage<T> for Result<T> {
    fn in_stage(self, stage: &'static str) -> std::result::Result<T, StageFailure> {
        self.map_err(|error| StageFailure { stage, error })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum StageStatus {
    Ok,
    Failed { error: String },
    Skipped { reason: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HomReport {
    pub visibility: f64,
    pub stderr: f64,
    pub fit: HomFit,
}

impl From<&HomFit> for HomReport {
    fn from(fit: &HomFit) -> Self {
        HomReport {
            visibility: fit.visibility,
            stderr: fit.visibility_err,
            fit: fit.clone(),
        }
    }
}

/// Scan the HOM dip and fit its visibility.
pub fn simulate_hom(cfg: &PipelineConfig) -> Result<(HomScan, HomFit)> {
    cfg.validate()?;
    let scan = scan_hom(&cfg.source_with_seed(cfg.seeds().hom), &cfg.hom.positions(), cfg.hom.dwell_s)?;
    let fit = visibility_from_scan(&scan)?;
    Ok((scan, fit))
}

/// Heralded raw bits; the stream records the config hash.
pub fn generate(cfg: &PipelineConfig, n_bits: usize) -> Result<EventStream> {
    cfg.validate()?;
    if n_bits == 0 {
        return Err(Error::validation("n_bits must be >= 1"));
    }
    let mut ev = generate_events(&cfg.source_with_seed(cfg.seeds().events), n_bits)?;
    ev.bits.provenance.source_hash = Some(cfg.hash());
    Ok(ev)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Entangled,
    NotEntangled,
    Undetermined,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RhoChsh {
    #[serde(rename = "S")]
    pub s: f64,
    pub physical: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BayesChsh {
    /// Posterior mean of `S(ρ)`.
    pub mean: f64,
    /// Posterior standard deviation of `S(ρ)`.
    pub std: f64,
    /// `S` of the posterior mean state.
    pub s_of_mean_state: f64,
    pub acceptance_rate: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ChshRhoReport {
    pub ls: Option<RhoChsh>,
    pub mle: Option<RhoChsh>,
    pub bayes: Option<BayesChsh>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertifyReport {
    /// Coherence of the modelled source state, or `None` under an override.
    pub coherence: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub state_override: Option<StateOverride>,
    /// `S` of the true simulated state.
    pub model_chsh: f64,
    pub chsh_direct: Option<ChshResult>,
    pub verdict: Verdict,
    pub chsh_rho: ChshRhoReport,
    pub min_entropy: Option<MinEntropyResult>,
    pub tomo_counts: TomoCounts,
    pub estimates: BTreeMap<String, TomoResult>,
    pub stages: BTreeMap<String, StageStatus>,
    pub notes: Vec<String>,
}

fn true_state(cfg: &PipelineConfig) -> Result<TwoQubitState> {
    Ok(match cfg.state_override {
        Some(StateOverride::MaximallyMixed) => TwoQubitState::maximally_mixed(),
        Some(StateOverride::Singlet) => TwoQubitState::singlet(),
        None => state_at_delay(&cfg.source)?,
    })
}

fn status<T>(r: &Result<T>) -> StageStatus {
    match r {
        Ok(_) => StageStatus::Ok,
        Err(e) => StageStatus::Failed { error: e.to_string() },
    }
}

/// Direct CHSH from fresh coincidence counts, tomography with all three
/// estimators, the Horodecki bound of each estimate, and the min-entropy of
/// `raw` when given. Estimator failures are reported per stage.
pub fn certify(cfg: &PipelineConfig, raw: Option<&BitStream>) -> Result<CertifyReport> {
    cfg.validate()?;
    let seeds = cfg.seeds();
    let rho = true_state(cfg)?;
    let mut stages = BTreeMap::new();
    let mut notes = Vec::new();

    let direct = simulate_chsh_counts(&rho, &cfg.chsh.settings, cfg.chsh.pairs_per_setting, seeds.chsh)
        .and_then(|c| chsh_direct(&c));
    stages.insert("chsh_direct".to_string(), status(&direct));
    let direct = direct.ok();
    let verdict = match &direct {
        Some(d) if d.significant_violation(VIOLATION_SIGMAS) => Verdict::Entangled,
        Some(_) => Verdict::NotEntangled,
        None => Verdict::Undetermined,
    };

    let set = kwiat_projectors();
    let counts = simulate_tomo_counts(&rho, &set, cfg.tomo.acquisition_total, seeds.tomo);
    let mut estimates = BTreeMap::new();
    let mut chsh_rho = ChshRhoReport::default();

    let ls = ls_invert(&counts, &set);
    stages.insert("ls".to_string(), status(&ls));
    if let Ok(r) = ls {
        if !r.physical {
            notes.push(format!(
                "least-squares estimate is not positive semi-definite (min eigenvalue {:.3e})",
                r.diagnostics.min_eigenvalue.unwrap_or(f64::NAN)
            ));
        }
        chsh_rho.ls = chsh_from_rho(&r.rho_est).ok().map(|s| RhoChsh { s, physical: r.physical });
        estimates.insert("ls".to_string(), r);
    }

    let mle = mle_estimate(&counts, &set, &cfg.tomo.mle);
    stages.insert("mle".to_string(), status(&mle));
    if let Ok(r) = mle {
        chsh_rho.mle = chsh_from_rho(&r.rho_est).ok().map(|s| RhoChsh { s, physical: r.physical });
        estimates.insert("mle".to_string(), r);
    }

    let bayes = bayesian_estimate(&counts, &set, &cfg.bayes_resolved());
    stages.insert("bayes".to_string(), status(&bayes));
    if let Ok((r, samples)) = bayes {
        let std = r.std_of_functionals.as_ref().and_then(|m| m.get("chsh").copied());
        let mean = crate::tomography::posterior_functional(&samples, |st| chsh_from_rho(st).unwrap_or(f64::NAN))
            .map(|(m, _)| m)
            .ok();
        if let (Some(mean), Some(std), Ok(s_mean)) = (mean, std, chsh_from_rho(&r.rho_est)) {
            chsh_rho.bayes = Some(BayesChsh {
                mean,
                std,
                s_of_mean_state: s_mean,
                acceptance_rate: samples.acceptance_rate,
            });
        }
        notes.push(format!(
            "Bayesian prior: isotropic {}-component mixture of random pure states with Exp(1) weights",
            cfg.tomo.bayes.k
        ));
        estimates.insert("bayes".to_string(), r);
    }

    let min_entropy = match raw {
        Some(bits) => {
            let m = min_entropy(bits);
            stages.insert("min_entropy".to_string(), status(&m));
            m.ok()
        }
        None => {
            stages.insert(
                "min_entropy".to_string(),
                StageStatus::Skipped {
                    reason: "no bit stream given".into(),
                },
            );
            None
        }
    };

    Ok(CertifyReport {
        coherence: cfg.state_override.is_none().then(|| cfg.source.overlap()),
        state_override: cfg.state_override,
        model_chsh: chsh_from_rho(&rho)?,
        chsh_direct: direct,
        verdict,
        chsh_rho,
        min_entropy,
        tomo_counts: counts,
        estimates,
        stages,
        notes,
    })
}

/// Toeplitz extraction of a raw stream with the configured extractor.
pub fn extract(cfg: &PipelineConfig, raw: &BitStream) -> Result<BitStream> {
    cfg.validate()?;
    extract_stream(raw, &cfg.extractor_resolved())
}

/// Published values for the reference datasets, kept beside (never merged
/// into) the simulated results.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReferenceValues {
    pub dataset: String,
    pub hom_visibility: f64,
    pub chsh_direct: f64,
    pub chsh_direct_err: f64,
    pub chsh_mle: f64,
    pub chsh_bayes: f64,
    pub chsh_bayes_err: f64,
    pub min_entropy: f64,
    pub suite_p_values: BTreeMap<String, f64>,
}

impl ReferenceValues {
    pub fn for_preset(p: Preset) -> Option<Self> {
        let a = match p {
            Preset::DatasetA => true,
            Preset::DatasetB => false,
            Preset::ClassicalSource => return None,
        };
        let suite_p_values = REFERENCE_P_VALUES
            .iter()
            .map(|&(name, pa, pb): &(TestName, f64, f64)| (name.label().to_string(), if a { pa } else { pb }))
            .collect();
        Some(if a {
            ReferenceValues {
                dataset: "A".into(),
                hom_visibility: 0.97,
                chsh_direct: 2.78,
                chsh_direct_err: 0.03,
                chsh_mle: 2.65,
                chsh_bayes: 2.81,
                chsh_bayes_err: 0.02,
                min_entropy: 0.999735,
                suite_p_values,
            }
        } else {
            ReferenceValues {
                dataset: "B".into(),
                hom_visibility: 0.97,
                chsh_direct: 2.51,
                chsh_direct_err: 0.02,
                chsh_mle: 2.40,
                chsh_bayes: 2.47,
                chsh_bayes_err: 0.01,
                min_entropy: 0.999038,
                suite_p_values,
            }
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunProvenance {
    pub config_hash: String,
    pub config: PipelineConfig,
    pub seeds: SeedPlan,
    pub raw_sha256: Option<String>,
    pub extracted_sha256: Option<String>,
    pub started_unix_s: u64,
    pub finished_unix_s: u64,
    pub version: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub hom: HomReport,
    pub chsh_direct: Option<ChshResult>,
    pub verdict: Verdict,
    pub model_chsh: f64,
    pub chsh_rho: ChshRhoReport,
    pub min_entropy_raw: Option<MinEntropyResult>,
    pub min_entropy_extracted: Option<MinEntropyResult>,
    pub suite: SuiteReport,
    pub stages: BTreeMap<String, StageStatus>,
    pub notes: Vec<String>,
    /// Published values for human comparison; absent for non-reference presets.
    pub reference: Option<ReferenceValues>,
    pub provenance: RunProvenance,
}

fn unix_now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

/// Write `hom_scan.csv` and `hom_fit.json` under `out`.
pub fn cmd_simulate_hom(cfg: &PipelineConfig, out: &Path) -> Result<HomReport> {
    let (scan, fit) = simulate_hom(cfg)?;
    create_dir(out)?;
    std::fs::write(out.join(HOM_SCAN_FILE), io::hom_scan_csv(&scan))?;
    let report = HomReport::from(&fit);
    io::write_json(&out.join(HOM_FIT_FILE), &report)?;
    Ok(report)
}

/// Write `raw.bin` and its sidecar under `out`.
pub fn cmd_generate(cfg: &PipelineConfig, n_bits: usize, out: &Path) -> Result<io::BitSidecar> {
    let ev = generate(cfg, n_bits)?;
    create_dir(out)?;
    io::write_bits(&out.join(RAW_BITS_FILE), &ev.bits, Some(ev.stats))
}

pub fn cmd_certify(cfg: &PipelineConfig, bits_in: Option<&Path>, out: &Path) -> Result<CertifyReport> {
    let raw = bits_in.map(io::read_bits).transpose()?;
    let report = certify(cfg, raw.as_ref())?;
    create_dir(out)?;
    io::write_json(&out.join(CERTIFY_FILE), &report)?;
    Ok(report)
}

pub fn cmd_extract(cfg: &PipelineConfig, bits_in: &Path, out: &Path) -> Result<io::BitSidecar> {
    let raw = io::read_bits(bits_in)?;
    let extracted = extract(cfg, &raw)?;
    create_dir(out)?;
    io::write_bits(&out.join(EXTRACTED_BITS_FILE), &extracted, None)
}

/// Write `suite.json` and `suite.csv` under `out`.
pub fn cmd_test(bits_in: &Path, threshold: f64, out: &Path) -> Result<SuiteReport> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::validation(format!("threshold {threshold} outside (0, 1)")));
    }
    let bits = io::read_bits(bits_in)?;
    let report = run_suite(&bits, threshold);
    create_dir(out)?;
    io::write_json(&out.join(SUITE_FILE), &report)?;
    std::fs::write(out.join(SUITE_CSV_FILE), report.to_csv())?;
    Ok(report)
}

/// Every stage in order, with artifacts under `cfg.output_dir`. A failing
/// stage stops the run; files already written stay in place.
pub fn cmd_run_all(cfg: &PipelineConfig) -> std::result::Result<RunReport, StageFailure> {
    let started = unix_now();
    cfg.validate().in_stage("config")?;
    let out = cfg.output_dir.clone();
    create_dir(&out).in_stage("config")?;
    io::write_json(&out.join(CONFIG_FILE), cfg).in_stage("config")?;

    let hom = cmd_simulate_hom(cfg, &out).in_stage("simulate-hom")?;
    cmd_generate(cfg, cfg.n_bits, &out).in_stage("generate")?;
    let raw_path = out.join(RAW_BITS_FILE);
    let raw = io::read_bits(&raw_path).in_stage("generate")?;
    let cert = cmd_certify(cfg, Some(&raw_path), &out).in_stage("certify")?;
    cmd_extract(cfg, &raw_path, &out).in_stage("extract")?;
    let ext_path = out.join(EXTRACTED_BITS_FILE);
    let extracted = io::read_bits(&ext_path).in_stage("extract")?;
    let suite = cmd_test(&ext_path, cfg.suite.threshold, &out).in_stage("test")?;
    let min_entropy_extracted = min_entropy(&extracted).ok();

    let mut stages = cert.stages.clone();
    for s in ["simulate-hom", "generate", "extract", "test"] {
        stages.insert(s.to_string(), StageStatus::Ok);
    }
    let report = RunReport {
        hom,
        chsh_direct: cert.chsh_direct,
        verdict: cert.verdict,
        model_chsh: cert.model_chsh,
        chsh_rho: cert.chsh_rho,
        min_entropy_raw: cert.min_entropy,
        min_entropy_extracted,
        suite,
        stages,
        notes: cert.notes,
        reference: cfg.preset.and_then(ReferenceValues::for_preset),
        provenance: RunProvenance {
            config_hash: cfg.hash(),
            config: cfg.clone(),
            seeds: cfg.seeds(),
            raw_sha256: Some(raw.sha256_hex()),
            extracted_sha256: Some(extracted.sha256_hex()),
            started_unix_s: started,
            finished_unix_s: unix_now(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        },
    };
    debug_assert_eq!(extracted.provenance.stage, Stage::Extracted);
    io::write_json(&out.join(RUN_REPORT_FILE), &report).in_stage("report")?;
    Ok(report)
}

/// Config embedded in a report, for replaying it.
pub fn replay_config(report_path: &Path, output_dir: PathBuf) -> Result<PipelineConfig> {
    let report: RunReport = io::read_json(report_path)?;
    let mut cfg = report.provenance.config;
    if cfg.hash() != report.provenance.config_hash {
        return Err(Error::validation("embedded config does not match its recorded hash"));
    }
    cfg.output_dir = output_dir;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(preset: Preset) -> PipelineConfig {
        let mut cfg = preset.config();
        cfg.tomo.bayes.r = 2000;
        cfg.tomo.bayes.burn_in = 1000;
        cfg
    }

    #[test]
    fn certify_dataset_a() {
        let r = certify(&small(Preset::DatasetA), None).unwrap();
        assert!((r.model_chsh - 2.78).abs() < 5e-4);
        let d = r.chsh_direct.as_ref().unwrap();
        assert!((d.s.abs() - 2.78).abs() < 0.05, "{}", d.s);
        assert_eq!(r.verdict, Verdict::Entangled);
        assert!((r.chsh_rho.mle.as_ref().unwrap().s - 2.78).abs() < 0.08);
        assert!(r.chsh_rho.bayes.as_ref().unwrap().std < 0.05);
        assert!(matches!(r.stages["min_entropy"], StageStatus::Skipped { .. }));
        assert_eq!(r.stages["mle"], StageStatus::Ok);
        let v = serde_json::to_value(&r).unwrap();
        assert!(v["chsh_direct"]["S"].is_number());
        assert!(v["chsh_rho"]["mle"]["S"].is_number());
        assert!(v.get("min_entropy").is_some());
    }

    #[test]
    fn maximally_mixed_override_is_not_entangled() {
        let mut cfg = small(Preset::DatasetA);
        cfg.state_override = Some(StateOverride::MaximallyMixed);
        let r = certify(&cfg, None).unwrap();
        assert_eq!(r.model_chsh, 0.0);
        assert!(r.chsh_direct.as_ref().unwrap().s.abs() < 0.1);
        // Count noise biases the singular-value bound upward from 0.
        assert!(r.chsh_rho.mle.as_ref().unwrap().s < 0.5, "{:?}", r.chsh_rho);
        assert!(r.chsh_rho.bayes.as_ref().unwrap().mean < 0.5, "{:?}", r.chsh_rho);
        assert_eq!(r.verdict, Verdict::NotEntangled);
        assert_eq!(r.coherence, None);
    }

    #[test]
    fn classical_source_never_flags_a_violation() {
        // |S| sits exactly on the classical limit, so a bare |S| > 2 would
        // fire on about half the seeds.
        for seed in 0..20 {
            let mut cfg = small(Preset::ClassicalSource);
            cfg.global_seed = seed;
            cfg.tomo.bayes.r = 200;
            cfg.tomo.bayes.burn_in = 100;
            let r = certify(&cfg, None).unwrap();
            assert_eq!(r.verdict, Verdict::NotEntangled, "seed {seed}");
        }
    }

    #[test]
    fn generate_records_config_hash() {
        let cfg = Preset::DatasetA.config();
        let ev = generate(&cfg, 64).unwrap();
        assert_eq!(ev.bits.len(), 64);
        assert_eq!(ev.bits.provenance.source_hash.as_deref(), Some(cfg.hash().as_str()));
        assert!(generate(&cfg, 0).is_err());
    }

    #[test]
    fn hom_stage_recovers_visibility() {
        let (_, fit) = simulate_hom(&Preset::DatasetA.config()).unwrap();
        assert!((fit.visibility - 0.97).abs() <= 0.01, "{}", fit.visibility);
        let (_, fit) = simulate_hom(&Preset::ClassicalSource.config()).unwrap();
        assert!(fit.visibility.abs() < 0.05);
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Error::validation("x")), 1);
        assert_eq!(exit_code(&Error::NoCoincidences), 2);
    }

    #[test]
    fn reference_values_only_for_datasets() {
        assert!(ReferenceValues::for_preset(Preset::ClassicalSource).is_none());
        let a = ReferenceValues::for_preset(Preset::DatasetA).unwrap();
        assert_eq!(a.suite_p_values.len(), 15);
        assert_eq!(a.suite_p_values["Runs"], 0.858);
    }
}
