//! Every file format re-parses to an equal value.

use haarperm::harness::random::{random_series, trial_rng};
use haarperm::harness::{gen_permutation, run_suite, GeneratorKind, GeneratorSpec, SuiteConfig, SuiteReport};
use haarperm::{
    run_decomposition, verify_certificate, Budgets, CarlesonExponent, CoefficientSeries, DecompositionCertificate,
    Normalization, Param, PermutationMap,
};
use num_rational::Rational64;

#[test]
fn permutations_round_trip() {
    for kind in GeneratorKind::ALL {
        for depth in [0, 1, 4] {
            let pi = gen_permutation(GeneratorSpec::new(kind, depth, 5)).unwrap();
            let text = pi.to_json_string().unwrap();
            assert_eq!(PermutationMap::from_json_str(&text).unwrap(), pi);
        }
    }
}

#[test]
fn series_round_trip() {
    let normalizations = [
        Normalization::Linf,
        Normalization::lambda(Rational64::new(2, 3)).unwrap(),
        Normalization::hp(Rational64::new(1, 2)).unwrap(),
    ];
    for (n, norm) in normalizations.into_iter().enumerate() {
        let x = random_series(4, norm, &mut trial_rng(3, n as u64));
        let text = x.to_json_string().unwrap();
        assert_eq!(CoefficientSeries::from_json_str(&text).unwrap(), x);
    }
}

#[test]
fn certificates_round_trip_and_reverify() {
    let pi = gen_permutation(GeneratorSpec::new(GeneratorKind::RandomBijection, 3, 2)).unwrap();
    let exponents = [
        CarlesonExponent::BMO,
        CarlesonExponent::integer(2).unwrap(),
        CarlesonExponent::from_alpha(Rational64::new(3, 2)).unwrap(),
    ];
    for (n, alpha) in exponents.iter().enumerate() {
        let x = random_series(3, Normalization::for_exponent(alpha), &mut trial_rng(4, n as u64));
        let cert = run_decomposition(&pi, &x, Param::Auto, alpha, Param::Auto, &Budgets::default()).unwrap();
        let parsed = DecompositionCertificate::from_json_str(&cert.to_json_string().unwrap()).unwrap();
        assert_eq!(parsed, cert);
        let report = verify_certificate(&parsed);
        assert_eq!(report.passed(), cert.stored_pass());
        let recomputed: Vec<_> = report.checks.iter().filter(|c| c.name != "stored_report").cloned().collect();
        assert_eq!(recomputed, cert.report);
        assert!(report.get("stored_report").unwrap().pass);
    }
}

#[test]
fn suite_reports_round_trip() {
    let config = SuiteConfig {
        depth: 2,
        trials: 2,
        ..SuiteConfig::default()
    };
    let report = run_suite(&config).unwrap();
    let text = report.to_json_string().unwrap();
    let parsed: SuiteReport = serde_json::from_str(&text).unwrap();
    assert_eq!(parsed, report);
}
