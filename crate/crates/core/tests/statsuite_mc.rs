use qrng_core::pipeline::{self, Preset};
use qrng_core::statsuite::{ks_uniformity, run_suite, SuiteReport, TestName};
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::sync::OnceLock;

/// Suite reports of 50 extracted dataset_A streams (seeds 100..150).
fn reports() -> &'static [SuiteReport] {
    static REPORTS: OnceLock<Vec<SuiteReport>> = OnceLock::new();
    REPORTS.get_or_init(|| {
        (100..150u64)
            .into_par_iter()
            .map(|seed| {
                let mut cfg = Preset::DatasetA.config();
                cfg.global_seed = seed;
                let raw = pipeline::generate(&cfg, cfg.n_bits).unwrap().bits;
                let ext = pipeline::extract(&cfg, &raw).unwrap();
                assert_eq!(ext.len(), 1_200_000);
                run_suite(&ext, 0.01)
            })
            .collect()
    })
}

/// Under the null each test's first p-value is uniform across streams.
#[test]
fn p_values_are_uniform_on_extracted_streams() {
    let mut firsts: BTreeMap<TestName, Vec<f64>> = BTreeMap::new();
    for r in reports() {
        for name in TestName::ALL {
            let t = r.get(name).unwrap();
            if t.applicable {
                firsts.entry(name).or_default().push(t.p_values[0]);
            }
        }
    }
    for (name, ps) in &firsts {
        let ks = ks_uniformity(ps).unwrap();
        assert!(ks >= 0.001, "{name}: KS p {ks} over {} streams", ps.len());
    }
    assert_eq!(firsts[&TestName::Frequency].len(), 50);
    assert!(firsts[&TestName::RandomExcursions].len() >= 20);
}

#[test]
fn extracted_streams_pass_the_remaining_twelve() {
    let twelve: Vec<TestName> = TestName::ALL
        .into_iter()
        .filter(|t| !matches!(t, TestName::Frequency | TestName::Runs | TestName::LinearComplexity))
        .collect();
    let mut passes: BTreeMap<TestName, usize> = BTreeMap::new();
    for r in &reports()[..10] {
        for &name in &twelve {
            *passes.entry(name).or_default() += r.get(name).unwrap().passed as usize;
        }
    }
    for (name, n) in passes {
        assert!(n >= 9, "{name} passed on {n}/10 streams");
    }
}
