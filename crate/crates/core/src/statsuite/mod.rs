//! The fifteen SP 800-22 randomness tests, a Kolmogorov–Smirnov uniformity
//! aggregate, and suite-level reports.
//!
//! Procedures work on an unpacked 0/1 byte copy of the stream. A suite run
//! unpacks once and runs the tests in parallel.

mod complexity;
mod procedures;
mod special;

pub use complexity::berlekamp_massey;
pub use procedures::aperiodic_templates;
pub use special::{erfc, igam, igamc, ln_gamma};

use crate::error::{Error, Result};
use crate::extract::{BitStream, Stage};
use procedures::Computed;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

pub const DEFAULT_THRESHOLD: f64 = 0.01;

/// Tests with at least this many p-values pass on the Sidak-adjusted
/// smallest p-value rather than on every individual p-value.
pub const FAMILY_RULE_MIN_VALUES: usize = 5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TestName {
    ApproximateEntropy,
    BlockFrequency,
    CumulativeSums,
    Fft,
    Frequency,
    LinearComplexity,
    LongestRuns,
    NonOverlappingTemplate,
    OverlappingTemplate,
    RandomExcursions,
    RandomExcursionsVariant,
    Rank,
    Runs,
    Serial,
    Universal,
}

impl TestName {
    /// All fifteen tests in report order.
    pub const ALL: [TestName; 15] = [
        TestName::ApproximateEntropy,
        TestName::BlockFrequency,
        TestName::CumulativeSums,
        TestName::Fft,
        TestName::Frequency,
        TestName::LinearComplexity,
        TestName::LongestRuns,
        TestName::NonOverlappingTemplate,
        TestName::OverlappingTemplate,
        TestName::RandomExcursions,
        TestName::RandomExcursionsVariant,
        TestName::Rank,
        TestName::Runs,
        TestName::Serial,
        TestName::Universal,
    ];

    pub fn label(self) -> &'static str {
        match self {
            TestName::ApproximateEntropy => "Approximate Entropy",
            TestName::BlockFrequency => "Block Frequency",
            TestName::CumulativeSums => "Cumulative Sums",
            TestName::Fft => "FFT",
            TestName::Frequency => "Frequency",
            TestName::LinearComplexity => "Linear Complexity",
            TestName::LongestRuns => "Longest Runs",
            TestName::NonOverlappingTemplate => "Non Overlapping Template Matching",
            TestName::OverlappingTemplate => "Overlapping Template Matching",
            TestName::RandomExcursions => "Random Excursions",
            TestName::RandomExcursionsVariant => "Random Excursions Variant",
            TestName::Rank => "Rank",
            TestName::Runs => "Runs",
            TestName::Serial => "Serial",
            TestName::Universal => "Universal",
        }
    }
}

impl fmt::Display for TestName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for TestName {
    type Err = Error;

    /// Accepts the report label or any spelling that matches it after
    /// dropping case, spaces, underscores, dashes and apostrophes.
    fn from_str(s: &str) -> Result<Self> {
        let norm = |x: &str| {
            x.chars()
                .filter(|c| c.is_alphanumeric())
                .flat_map(char::to_lowercase)
                .collect::<String>()
        };
        let want = norm(s);
        TestName::ALL
            .into_iter()
            .find(|t| norm(t.label()) == want || norm(&format!("{t:?}")) == want)
            .ok_or_else(|| Error::validation(format!("unknown test name {s:?}")))
    }
}

/// Test parameters; defaults follow the SP 800-22 recommendations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteParams {
    pub threshold: f64,
    pub block_frequency_m: usize,
    pub template_m: usize,
    pub template_blocks: usize,
    pub overlapping_m: usize,
    pub overlapping_block: usize,
    pub approximate_entropy_m: usize,
    pub serial_m: usize,
    pub linear_complexity_m: usize,
}

impl Default for SuiteParams {
    fn default() -> Self {
        SuiteParams {
            threshold: DEFAULT_THRESHOLD,
            block_frequency_m: 128,
            template_m: 9,
            template_blocks: 8,
            overlapping_m: 9,
            overlapping_block: 1032,
            approximate_entropy_m: 10,
            serial_m: 16,
            linear_complexity_m: 500,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PassRule {
    /// Every p-value must reach the threshold.
    AllP,
    /// `1 - (1 - p_min)^k` over the test's `k` p-values must reach the
    /// threshold. Exact for independent p-values and conservative for the
    /// positively correlated ones these tests produce.
    SidakMinP,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    pub name: String,
    pub p_values: Vec<f64>,
    pub passed: bool,
    /// The value compared with the threshold: the smallest p-value under
    /// [`PassRule::AllP`], the adjusted one otherwise. `None` when not applicable.
    pub p_value: Option<f64>,
    pub rule: PassRule,
    /// KS uniformity p-value of the test's own p-values, for tests with
    /// several of them. Reported only; correlated p-values make it reject
    /// far more often than its nominal level.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ks_p_value: Option<f64>,
    pub applicable: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
    pub params: BTreeMap<String, Value>,
}

impl TestResult {
    fn from_computed(name: TestName, c: Computed, threshold: f64) -> Self {
        let rule = if c.p_values.len() >= FAMILY_RULE_MIN_VALUES {
            PassRule::SidakMinP
        } else {
            PassRule::AllP
        };
        let mut r = TestResult {
            name: name.label().to_string(),
            p_values: c.p_values,
            passed: false,
            p_value: None,
            rule,
            ks_p_value: None,
            applicable: c.not_applicable.is_none(),
            note: c.not_applicable,
            params: c.params,
        };
        r.apply_threshold(threshold);
        r
    }

    fn not_applicable(name: TestName, note: String) -> Self {
        TestResult {
            name: name.label().to_string(),
            p_values: Vec::new(),
            passed: false,
            p_value: None,
            rule: PassRule::AllP,
            ks_p_value: None,
            applicable: false,
            note: Some(note),
            params: BTreeMap::new(),
        }
    }

    /// Recompute `p_value` and `passed` for `threshold`.
    ///
    /// A test that could not run because the data lacked a property it needs
    /// (too few random-walk cycles) and produced no p-values counts as
    /// passed; a failed pre-test reports p = 0 and fails.
    pub fn apply_threshold(&mut self, threshold: f64) {
        if self.p_values.is_empty() {
            self.p_value = None;
            self.ks_p_value = None;
            self.passed = self.note.as_deref().is_some_and(|n| n.contains("cycles"));
            return;
        }
        let p_min = self.p_values.iter().copied().fold(f64::INFINITY, f64::min);
        let summary = match self.rule {
            PassRule::AllP => p_min,
            PassRule::SidakMinP => sidak(p_min, self.p_values.len()),
        };
        self.ks_p_value = ks_uniformity(&self.p_values).ok();
        self.p_value = Some(summary);
        self.passed = self.applicable && summary >= threshold;
    }
}

/// Family-wise p-value of the smallest of `k` p-values.
pub fn sidak(p_min: f64, k: usize) -> f64 {
    // -expm1(k ln(1-p)) keeps precision for tiny p_min.
    (-(k as f64 * (-p_min).ln_1p()).exp_m1()).clamp(0.0, 1.0)
}

/// Shortest stream each test accepts under `params`.
pub fn min_length(name: TestName, params: &SuiteParams) -> usize {
    match name {
        TestName::Frequency | TestName::Runs | TestName::CumulativeSums => 100,
        TestName::BlockFrequency => params.block_frequency_m.max(100),
        TestName::LongestRuns => 128,
        TestName::Rank => 38 * 32 * 32,
        TestName::Fft => 1000,
        TestName::NonOverlappingTemplate => params.template_blocks * (1 << params.template_m),
        TestName::OverlappingTemplate | TestName::LinearComplexity => 1_000_000,
        TestName::RandomExcursions | TestName::RandomExcursionsVariant => 1_000_000,
        TestName::Universal => procedures::UNIVERSAL_MIN_N[0],
        // m < ⌊log₂ n⌋ − 5 and m < ⌊log₂ n⌋ − 2.
        TestName::ApproximateEntropy => 1 << (params.approximate_entropy_m + 6),
        TestName::Serial => 1 << (params.serial_m + 3),
    }
}

fn check_params(name: TestName, p: &SuiteParams) -> Result<()> {
    let bad = |what: &str| Err(Error::validation(format!("{name}: {what}")));
    match name {
        TestName::BlockFrequency if p.block_frequency_m == 0 => bad("block length must be > 0"),
        TestName::NonOverlappingTemplate if !(2..=21).contains(&p.template_m) || p.template_blocks == 0 => {
            bad("template length must be in 2..=21 and block count > 0")
        }
        TestName::OverlappingTemplate if !(2..=21).contains(&p.overlapping_m) || p.overlapping_block <= p.overlapping_m => {
            bad("template length must be in 2..=21 and shorter than the block")
        }
        TestName::ApproximateEntropy if p.approximate_entropy_m > 24 => bad("m must be ≤ 24"),
        TestName::Serial if !(2..=24).contains(&p.serial_m) => bad("m must be in 2..=24"),
        TestName::LinearComplexity if p.linear_complexity_m < 2 => bad("block length must be ≥ 2"),
        _ => Ok(()),
    }
}

fn evaluate(name: TestName, e: &[u8], params: &SuiteParams) -> Result<TestResult> {
    let required = min_length(name, params);
    if e.len() < required {
        check_params(name, params)?;
        return Err(Error::TooShort {
            what: format!("{name} test"),
            required,
            actual: e.len(),
        });
    }
    evaluate_any_length(name, e, params)
}

fn evaluate_any_length(name: TestName, e: &[u8], params: &SuiteParams) -> Result<TestResult> {
    check_params(name, params)?;
    if e.is_empty() {
        return Err(Error::validation(format!("{name} test on an empty stream")));
    }
    let c = match name {
        TestName::Frequency => procedures::frequency(e),
        TestName::BlockFrequency => procedures::block_frequency(e, params.block_frequency_m),
        TestName::Runs => procedures::runs(e),
        TestName::LongestRuns => procedures::longest_run(e),
        TestName::Rank => procedures::rank(e),
        TestName::Fft => procedures::dft(e),
        TestName::NonOverlappingTemplate => {
            let templates = aperiodic_templates(params.template_m);
            procedures::non_overlapping(e, params.template_m, params.template_blocks, &templates)
        }
        TestName::OverlappingTemplate => procedures::overlapping(e, params.overlapping_m, params.overlapping_block),
        TestName::Universal => procedures::universal(e),
        TestName::LinearComplexity => complexity::linear_complexity(e, params.linear_complexity_m),
        TestName::Serial => procedures::serial(e, params.serial_m),
        TestName::ApproximateEntropy => procedures::approximate_entropy(e, params.approximate_entropy_m),
        TestName::CumulativeSums => procedures::cumulative_sums(e),
        TestName::RandomExcursions => procedures::random_excursions(e, procedures::min_cycles(e.len())),
        TestName::RandomExcursionsVariant => {
            procedures::random_excursions_variant(e, procedures::min_cycles(e.len()))
        }
    };
    Ok(TestResult::from_computed(name, c, params.threshold))
}

/// Run one test with explicit parameters.
pub fn run_named_test(name: TestName, bits: &BitStream, params: &SuiteParams) -> Result<TestResult> {
    evaluate(name, &bits.to_u8_vec(), params)
}

/// Like [`run_named_test`] but Frequency, Runs and Cumulative Sums skip the
/// 100-bit minimum, for short worked examples. Other tests keep their checks.
/// Results on short streams have no statistical standing.
pub fn run_named_test_any_length(name: TestName, bits: &BitStream, params: &SuiteParams) -> Result<TestResult> {
    match name {
        TestName::Frequency | TestName::Runs | TestName::CumulativeSums => {
            evaluate_any_length(name, &bits.to_u8_vec(), params)
        }
        _ => run_named_test(name, bits, params),
    }
}

/// Monobit frequency test.
pub fn frequency_test(bits: &BitStream) -> Result<TestResult> {
    run_named_test(TestName::Frequency, bits, &SuiteParams::default())
}

pub fn runs_test(bits: &BitStream) -> Result<TestResult> {
    run_named_test(TestName::Runs, bits, &SuiteParams::default())
}

pub fn linear_complexity_test(bits: &BitStream, block_m: usize) -> Result<TestResult> {
    if bits.len() < block_m {
        return Err(Error::TooShort {
            what: "Linear Complexity block".into(),
            required: block_m,
            actual: bits.len(),
        });
    }
    let params = SuiteParams {
        linear_complexity_m: block_m,
        ..Default::default()
    };
    run_named_test(TestName::LinearComplexity, bits, &params)
}

/// One-sample Kolmogorov–Smirnov test of `p_values` against Uniform[0, 1],
/// returning the asymptotic p-value.
pub fn ks_uniformity(p_values: &[f64]) -> Result<f64> {
    if p_values.len() < 5 {
        return Err(Error::validation(format!("KS uniformity needs at least 5 values, got {}", p_values.len())));
    }
    if p_values.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::validation("KS uniformity values must lie in [0, 1]"));
    }
    let d = ks_statistic(p_values);
    let n = (p_values.len() as f64).sqrt();
    Ok(kolmogorov_survival((n + 0.12 + 0.11 / n) * d))
}

/// `sup |F_n(x) − x|` for the empirical CDF of `values`.
pub fn ks_statistic(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    v.iter()
        .enumerate()
        .map(|(i, &x)| ((i + 1) as f64 / n - x).max(x - i as f64 / n))
        .fold(0.0, f64::max)
}

/// `P(K > λ)` for the Kolmogorov distribution.
fn kolmogorov_survival(lambda: f64) -> f64 {
    use std::f64::consts::PI;
    if lambda <= 0.0 {
        return 1.0;
    }
    let q = if lambda < 1.18 {
        // Series for the CDF, fast for small λ.
        let c = -PI * PI / (8.0 * lambda * lambda);
        let cdf: f64 = (1..=20).map(|k| ((2 * k - 1) as f64).powi(2) * c).map(f64::exp).sum::<f64>()
            * (2.0 * PI).sqrt()
            / lambda;
        1.0 - cdf
    } else {
        2.0 * (1..=100)
            .map(|k| {
                let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
                sign * (-2.0 * (k * k) as f64 * lambda * lambda).exp()
            })
            .sum::<f64>()
    };
    q.clamp(0.0, 1.0)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamMetadata {
    pub n_bits: usize,
    pub ones_fraction: f64,
    pub sha256: String,
    pub stage: Stage,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source_hash: Option<String>,
}

impl StreamMetadata {
    pub fn of(bits: &BitStream) -> Self {
        StreamMetadata {
            n_bits: bits.len(),
            ones_fraction: if bits.is_empty() { 0.0 } else { bits.count_ones() as f64 / bits.len() as f64 },
            sha256: bits.sha256_hex(),
            stage: bits.provenance.stage,
            source_hash: bits.provenance.source_hash.clone(),
        }
    }
}

/// Results of all fifteen tests, keyed by test label.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub tests: BTreeMap<String, TestResult>,
    pub threshold: f64,
    /// KS uniformity p-value of every p-value produced by the suite.
    pub ks_aggregate: Option<f64>,
    pub all_passed: bool,
    pub stream: StreamMetadata,
    #[serde(default)]
    pub warnings: Vec<String>,
    #[serde(default)]
    pub notes: Vec<String>,
}

/// Recommended minimum stream length for a full suite run.
pub const RECOMMENDED_BITS: usize = 1_000_000;

/// p-values reported for the two reference datasets, in report order.
pub const REFERENCE_P_VALUES: [(TestName, f64, f64); 15] = [
    (TestName::ApproximateEntropy, 0.985, 0.546),
    (TestName::BlockFrequency, 0.380, 0.129),
    (TestName::CumulativeSums, 0.973, 0.557),
    (TestName::Fft, 0.979, 0.973),
    (TestName::Frequency, 0.840, 0.465),
    (TestName::LinearComplexity, 0.840, 0.965),
    (TestName::LongestRuns, 0.060, 0.966),
    (TestName::NonOverlappingTemplate, 0.069, 0.325),
    (TestName::OverlappingTemplate, 0.721, 0.590),
    (TestName::RandomExcursions, 0.843, 0.383),
    (TestName::RandomExcursionsVariant, 0.435, 0.621),
    (TestName::Rank, 0.993, 0.084),
    (TestName::Runs, 0.858, 0.325),
    (TestName::Serial, 0.403, 0.356),
    (TestName::Universal, 0.285, 0.210),
];

/// Run all fifteen tests with default parameters.
pub fn run_suite(bits: &BitStream, threshold: f64) -> SuiteReport {
    let params = SuiteParams {
        threshold,
        ..Default::default()
    };
    run_suite_with(bits, &params)
}

pub fn run_suite_with(bits: &BitStream, params: &SuiteParams) -> SuiteReport {
    let e = bits.to_u8_vec();
    let results: Vec<TestResult> = TestName::ALL
        .par_iter()
        .map(|&name| evaluate(name, &e, params).unwrap_or_else(|err| TestResult::not_applicable(name, err.to_string())))
        .collect();
    let pooled: Vec<f64> = results.iter().flat_map(|r| r.p_values.iter().copied()).collect();
    let mut warnings = Vec::new();
    if bits.len() < RECOMMENDED_BITS {
        warnings.push(format!("stream has {} bits; at least {RECOMMENDED_BITS} are recommended", bits.len()));
    }
    let notes = vec![
        "ks_aggregate is a Kolmogorov-Smirnov test of uniformity on [0,1] over all p-values of the run".to_string(),
        format!(
            "tests with at least {FAMILY_RULE_MIN_VALUES} p-values pass when the Sidak-adjusted smallest p-value 1-(1-p_min)^k reaches the threshold; other tests need every p-value to reach it. ks_p_value per test is the KS uniformity of its own p-values, reported only"
        ),
    ];
    let all_passed = results.iter().all(|r| r.passed);
    SuiteReport {
        tests: results.into_iter().map(|r| (r.name.clone(), r)).collect(),
        threshold: params.threshold,
        ks_aggregate: ks_uniformity(&pooled).ok(),
        all_passed,
        stream: StreamMetadata::of(bits),
        warnings,
        notes,
    }
}

impl SuiteReport {
    pub fn get(&self, name: TestName) -> Option<&TestResult> {
        self.tests.get(name.label())
    }

    pub fn failed(&self) -> Vec<&str> {
        self.tests.values().filter(|r| !r.passed).map(|r| r.name.as_str()).collect()
    }

    /// One row per test with the reference dataset values alongside.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("test,p_value,passed,applicable,n_p_values,rule,reference_dataset_A,reference_dataset_B\n");
        for (name, a, b) in REFERENCE_P_VALUES {
            let Some(r) = self.get(name) else { continue };
            let p = r.p_value.map(|p| format!("{p:.6}")).unwrap_or_default();
            let rule = match r.rule {
                PassRule::AllP => "all_p",
                PassRule::SidakMinP => "sidak_min_p",
            };
            out.push_str(&format!(
                "{},{p},{},{},{},{rule},{a:.3},{b:.3}\n",
                r.name,
                r.passed,
                r.applicable,
                r.p_values.len()
            ));
        }
        out
    }
}
