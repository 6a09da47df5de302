use crate::certify::ChshSettings;
use crate::error::{Error, Result};
use crate::extract::{ExtractorConfig, SeedSource};
use crate::seed::derive_seed;
use crate::source::{sigma_for_coherence, SourceConfig};
use crate::statsuite::DEFAULT_THRESHOLD;
use crate::tomography::{BayesConfig, MleConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

/// Built-in operating points.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Preset {
    /// Zero delay: coherence 0.9655, CHSH value 2.78.
    #[serde(rename = "dataset_A")]
    DatasetA,
    /// 700 nm off the dip: coherence 0.758, CHSH value 2.51.
    #[serde(rename = "dataset_B")]
    DatasetB,
    /// No two-photon interference; the post-selected state is classically
    /// correlated.
    #[serde(rename = "classical_source")]
    ClassicalSource,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::DatasetA, Preset::DatasetB, Preset::ClassicalSource];

    pub fn name(self) -> &'static str {
        match self {
            Preset::DatasetA => "dataset_A",
            Preset::DatasetB => "dataset_B",
            Preset::ClassicalSource => "classical_source",
        }
    }

    /// Coherence of the post-selected state at the preset's delay.
    pub fn coherence(self) -> f64 {
        match self {
            Preset::DatasetA => DATASET_A_COHERENCE,
            Preset::DatasetB => DATASET_B_COHERENCE,
            Preset::ClassicalSource => 0.0,
        }
    }

    pub fn config(self) -> PipelineConfig {
        let mut cfg = PipelineConfig {
            preset: Some(self),
            ..Default::default()
        };
        let v = self.coherence();
        match self {
            Preset::DatasetA => {
                cfg.source.visibility_v0 = DATASET_A_COHERENCE;
            }
            Preset::DatasetB => {
                cfg.source.visibility_v0 = DATASET_A_COHERENCE;
                cfg.source.delay_nm = DATASET_B_DELAY_NM;
                cfg.source.dip_sigma_nm = sigma_for_coherence(DATASET_A_COHERENCE, DATASET_B_DELAY_NM, v)
                    .expect("preset coherence is reachable");
            }
            Preset::ClassicalSource => {
                cfg.source.visibility_v0 = 0.0;
            }
        }
        cfg.chsh.settings = ChshSettings::optimal_for_coherence(v);
        cfg
    }
}

/// `2√(1+v²) = 2.78`.
pub const DATASET_A_COHERENCE: f64 = 0.9655;
/// `2√(1+v²) = 2.51`.
pub const DATASET_B_COHERENCE: f64 = 0.758;
pub const DATASET_B_DELAY_NM: f64 = 700.0;

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::validation(format!("unknown preset {s:?}; expected dataset_A, dataset_B or classical_source")))
    }
}

/// Delay scan used to calibrate the source.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HomScanConfig {
    pub start_nm: f64,
    pub stop_nm: f64,
    pub points: usize,
    pub dwell_s: f64,
}

impl Default for HomScanConfig {
    fn default() -> Self {
        HomScanConfig {
            start_nm: -4000.0,
            stop_nm: 4000.0,
            points: 81,
            dwell_s: 1.0,
        }
    }
}

impl HomScanConfig {
    pub fn positions(&self) -> Vec<f64> {
        if self.points < 2 {
            return vec![self.start_nm; self.points];
        }
        let step = (self.stop_nm - self.start_nm) / (self.points - 1) as f64;
        (0..self.points).map(|i| self.start_nm + step * i as f64).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChshStageConfig {
    pub settings: ChshSettings,
    /// Expected coincidences per analyzer setting and outcome projector.
    pub pairs_per_setting: f64,
}

impl Default for ChshStageConfig {
    fn default() -> Self {
        ChshStageConfig {
            settings: ChshSettings::optimal_for_coherence(SourceConfig::default().visibility_v0),
            pairs_per_setting: 1e4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
pub struct TomoStageConfig {
    pub acquisition_total: u64,
    pub mle: MleConfig,
    /// `rng_seed` is replaced by the derived estimator seed.
    pub bayes: BayesConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteStageConfig {
    pub threshold: f64,
}

impl Default for SuiteStageConfig {
    fn default() -> Self {
        SuiteStageConfig {
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

/// Derivation labels of the per-stage seeds. Every stage seed is
/// `derive_seed(global_seed, label, 0)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedLabels {
    pub hom: String,
    pub events: String,
    pub chsh: String,
    pub tomo: String,
    pub bayes: String,
    pub extractor: String,
}

impl Default for SeedLabels {
    fn default() -> Self {
        SeedLabels {
            hom: "hom".into(),
            events: "events".into(),
            chsh: "chsh".into(),
            tomo: "tomo".into(),
            bayes: "bayes".into(),
            extractor: "extractor".into(),
        }
    }
}

/// Seeds actually used by each stage.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedPlan {
    pub global: u64,
    pub hom: u64,
    pub events: u64,
    pub chsh: u64,
    pub tomo: u64,
    pub bayes: u64,
    pub extractor: u64,
}

/// Source states the certify stage can substitute for the modelled one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateOverride {
    MaximallyMixed,
    Singlet,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub preset: Option<Preset>,
    /// `rng_seed` is replaced by the derived HOM and event seeds.
    pub source: SourceConfig,
    pub hom: HomScanConfig,
    pub chsh: ChshStageConfig,
    pub tomo: TomoStageConfig,
    /// An `rng` seed source is replaced by the derived extractor seed; a hex
    /// seed is used as given.
    pub extractor: ExtractorConfig,
    pub suite: SuiteStageConfig,
    /// Raw bits produced by the generate stage.
    pub n_bits: usize,
    pub output_dir: PathBuf,
    pub global_seed: u64,
    pub seed_labels: SeedLabels,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub state_override: Option<StateOverride>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            preset: None,
            source: SourceConfig::default(),
            hom: HomScanConfig::default(),
            chsh: ChshStageConfig::default(),
            tomo: TomoStageConfig {
                acquisition_total: 10_000,
                ..Default::default()
            },
            extractor: ExtractorConfig::default(),
            suite: SuiteStageConfig::default(),
            n_bits: 4_500_000,
            output_dir: PathBuf::from("out"),
            global_seed: 0,
            seed_labels: SeedLabels::default(),
            state_override: None,
        }
    }
}

impl PipelineConfig {
    pub fn from_json(s: &str) -> Result<Self> {
        let cfg: PipelineConfig = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.source.validate()?;
        self.chsh.settings.validate()?;
        if !(self.chsh.pairs_per_setting > 0.0 && self.chsh.pairs_per_setting.is_finite()) {
            return Err(Error::validation("chsh.pairs_per_setting must be > 0"));
        }
        if self.tomo.acquisition_total == 0 {
            return Err(Error::validation("tomo.acquisition_total must be > 0"));
        }
        self.tomo.bayes.validate()?;
        if self.tomo.mle.max_iters == 0 || !(self.tomo.mle.tolerance > 0.0) {
            return Err(Error::validation("tomo.mle needs max_iters > 0 and tolerance > 0"));
        }
        if self.extractor.block_bits == 0 {
            return Err(Error::validation("extractor.block_bits must be > 0"));
        }
        if !(self.suite.threshold > 0.0 && self.suite.threshold < 1.0) {
            return Err(Error::validation("suite.threshold must lie in (0, 1)"));
        }
        if self.n_bits == 0 {
            return Err(Error::validation("n_bits must be >= 1"));
        }
        if self.hom.points == 0 || !(self.hom.dwell_s > 0.0) || !(self.hom.stop_nm > self.hom.start_nm) {
            return Err(Error::validation("hom scan needs points > 0, dwell_s > 0 and stop_nm > start_nm"));
        }
        let l = &self.seed_labels;
        let labels = [&l.hom, &l.events, &l.chsh, &l.tomo, &l.bayes, &l.extractor];
        for (i, a) in labels.iter().enumerate() {
            if labels[i + 1..].contains(a) {
                return Err(Error::validation(format!("seed label {a:?} is used by two stages")));
            }
        }
        Ok(())
    }

    pub fn seeds(&self) -> SeedPlan {
        let l = &self.seed_labels;
        let d = |label: &str| derive_seed(self.global_seed, label, 0);
        SeedPlan {
            global: self.global_seed,
            hom: d(&l.hom),
            events: d(&l.events),
            chsh: d(&l.chsh),
            tomo: d(&l.tomo),
            bayes: d(&l.bayes),
            extractor: d(&l.extractor),
        }
    }

    /// SHA-256 of the JSON config with `output_dir` cleared, so a run can
    /// be identified independently of where its files went.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        hex::encode(Sha256::digest(serde_json::to_vec(&c).expect("config serializes")))
    }

    pub(crate) fn source_with_seed(&self, seed: u64) -> SourceConfig {
        SourceConfig {
            rng_seed: seed,
            ..self.source.clone()
        }
    }

    pub(crate) fn extractor_resolved(&self) -> ExtractorConfig {
        let mut e = self.extractor.clone();
        if let SeedSource::Rng { .. } = e.seed {
            e.seed = SeedSource::Rng {
                seed: self.seeds().extractor,
            };
        }
        e
    }

    pub(crate) fn bayes_resolved(&self) -> BayesConfig {
        BayesConfig {
            rng_seed: self.seeds().bayes,
            ..self.tomo.bayes.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::certify::chsh_from_rho;
    use crate::source::state_at_delay;

    #[test]
    fn presets_hit_their_chsh_values() {
        let s = |p: Preset| chsh_from_rho(&state_at_delay(&p.config().source).unwrap()).unwrap();
        assert!((s(Preset::DatasetA) - 2.78).abs() < 5e-4);
        assert!((s(Preset::DatasetB) - 2.51).abs() < 5e-4);
        assert!((s(Preset::ClassicalSource) - 2.0).abs() < 1e-12);
        let b = Preset::DatasetB.config().source;
        assert!((b.overlap() - DATASET_B_COHERENCE).abs() < 1e-12);
    }

    #[test]
    fn presets_parse_and_validate() {
        for p in Preset::ALL {
            assert_eq!(p.name().parse::<Preset>().unwrap(), p);
            p.config().validate().unwrap();
            let back = PipelineConfig::from_json(&p.config().to_json()).unwrap();
            assert_eq!(back, p.config());
        }
        assert!("dataset_C".parse::<Preset>().is_err());
    }

    #[test]
    fn partial_json_uses_defaults() {
        let cfg = PipelineConfig::from_json(r#"{"global_seed": 9, "n_bits": 64}"#).unwrap();
        assert_eq!(cfg.global_seed, 9);
        assert_eq!(cfg.tomo.acquisition_total, 10_000);
        assert!(PipelineConfig::from_json(r#"{"n_bits": 0}"#).is_err());
    }

    #[test]
    fn seeds_are_domain_separated() {
        let cfg = PipelineConfig::default();
        let s = cfg.seeds();
        let all = [s.hom, s.events, s.chsh, s.tomo, s.bayes, s.extractor];
        for i in 0..all.len() {
            for j in i + 1..all.len() {
                assert_ne!(all[i], all[j]);
            }
        }
        let mut other = cfg.clone();
        other.seed_labels.bayes = "bayes-2".into();
        let t = other.seeds();
        assert_ne!(t.bayes, s.bayes);
        assert_eq!((t.events, t.extractor, t.tomo), (s.events, s.extractor, s.tomo));
        other.seed_labels.bayes = "tomo".into();
        assert!(other.validate().is_err());
    }

    #[test]
    fn hash_ignores_output_dir() {
        let a = PipelineConfig::default();
        let mut b = a.clone();
        b.output_dir = "elsewhere".into();
        assert_eq!(a.hash(), b.hash());
        b.global_seed = 1;
        assert_ne!(a.hash(), b.hash());
    }
}
