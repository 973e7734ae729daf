use driftbench_core::metrics::{aggregate, drift_deltas, pearson, quantile, FiveNumberSummary, PermutationResult};
use driftbench_core::schedule::{Paradigm, Permutation, PhaseMetrics, PhasePlan};
use driftbench_core::seed::rng_from_seed;
use driftbench_core::Error;
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Signed, ToPrimitive, Zero};
use proptest::prelude::*;
use rand::Rng;

/// Definitional Pearson in exact rational arithmetic; only the final square
/// root is taken in floating point.
fn exact_pearson(x: &[f64], y: &[f64]) -> f64 {
    let q = |v: f64| BigRational::from_float(v).expect("finite");
    let n = BigRational::from_integer(BigInt::from(x.len()));
    let xs: Vec<BigRational> = x.iter().map(|&v| q(v)).collect();
    let ys: Vec<BigRational> = y.iter().map(|&v| q(v)).collect();
    let mx = xs.iter().fold(BigRational::zero(), |a, b| a + b) / &n;
    let my = ys.iter().fold(BigRational::zero(), |a, b| a + b) / &n;
    let (mut sxy, mut sxx, mut syy) = (BigRational::zero(), BigRational::zero(), BigRational::zero());
    for (a, b) in xs.iter().zip(&ys) {
        let (dx, dy) = (a - &mx, b - &my);
        sxy += &dx * &dy;
        sxx += &dx * &dx;
        syy += &dy * &dy;
    }
    let r2 = (&sxy * &sxy) / (sxx * syy);
    let r = r2.to_f64().unwrap().sqrt();
    if sxy.is_negative() {
        -r
    } else {
        r
    }
}

#[test]
fn pearson_fixtures() {
    assert_eq!(pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap(), 1.0);
    assert_eq!(pearson(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]).unwrap(), -1.0);
    let x = [1.0, 2.0, 3.0, 4.0];
    let y = [1.0, 3.0, 2.0, 5.0];
    assert!((pearson(&x, &y).unwrap() - exact_pearson(&x, &y)).abs() < 1e-12);
    assert!(matches!(pearson(&[0.5; 4], &y), Err(Error::DegenerateSeries(_))));
    assert!(matches!(pearson(&x, &[0.7; 4]), Err(Error::DegenerateSeries(_))));
    assert!(pearson(&[1.0], &[2.0]).is_err());
    assert!(pearson(&[1.0, 2.0], &[2.0]).is_err());
}

#[test]
fn pearson_matches_exact_oracle_on_random_series() {
    let mut rng = rng_from_seed(17);
    for _ in 0..50 {
        let n = rng.random_range(2..40);
        let x: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
        let y: Vec<f64> = x.iter().map(|v| 0.3 * v + rng.random_range(-5.0..5.0)).collect();
        let got = pearson(&x, &y).unwrap();
        let want = exact_pearson(&x, &y);
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
    }
}

proptest! {
    #[test]
    fn pearson_symmetry_and_affine_invariance(
        pts in prop::collection::vec((-100.0f64..100.0, -100.0f64..100.0), 3..30),
        scale in 0.1f64..10.0,
        shift in -50.0f64..50.0,
    ) {
        let x: Vec<f64> = pts.iter().map(|p| p.0).collect();
        let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
        let r = pearson(&x, &y).unwrap();
        prop_assert!((-1.0..=1.0).contains(&r));
        prop_assert!((r - pearson(&y, &x).unwrap()).abs() < 1e-12);
        let xt: Vec<f64> = x.iter().map(|v| scale * v + shift).collect();
        prop_assert!((r - pearson(&xt, &y).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn five_number_summary_is_ordered(values in prop::collection::vec(-1.0f64..1.0, 1..40)) {
        let s = FiveNumberSummary::from_values(&values).unwrap();
        prop_assert!(s.min <= s.q1 && s.q1 <= s.median && s.median <= s.q3 && s.q3 <= s.max);
    }
}

#[test]
fn type7_quantiles() {
    let v: Vec<f64> = (1..=8).map(|i| f64::from(i) / 10.0).collect();
    let s = FiveNumberSummary::from_values(&v).unwrap();
    // h = 7p: 1.75, 3.5, 5.25 between order statistics
    assert!((s.median - 0.45).abs() < 1e-12);
    assert!((s.q1 - 0.275).abs() < 1e-12);
    assert!((s.q3 - 0.625).abs() < 1e-12);
    assert_eq!(quantile(&[3.0], 0.5), 3.0);
}

fn phases(train: [f64; 4], auc: [f64; 4]) -> Vec<PhaseMetrics> {
    (0..4)
        .map(|k| PhaseMetrics {
            phase_index: k,
            train_accuracy: train[k],
            test_accuracy: train[k] / 2.0,
            mia_auc: auc[k],
            member_count: 10,
            nonmember_count: 10,
            model_digest: String::new(),
        })
        .collect()
}

fn result(perm: &str, train: [f64; 4], auc: [f64; 4]) -> PermutationResult {
    PermutationResult {
        plan: PhasePlan {
            permutation: perm.parse::<Permutation>().unwrap(),
            paradigm: Paradigm::Uniform,
        },
        phases: phases(train, auc),
    }
}

#[test]
fn deltas_telescope() {
    let m = phases([0.1, 0.2, 0.3, 0.4], [0.5, 0.6, 0.55, 0.7]);
    let d = drift_deltas(&m).unwrap();
    let want = [0.1, -0.05, 0.15];
    for (got, w) in d.iter().zip(want) {
        assert!((got.delta_auc - w).abs() < 1e-12);
    }
    let sum: f64 = d.iter().map(|x| x.delta_auc).sum();
    assert!((sum - (0.7 - 0.5)).abs() < 1e-12);
    assert!(drift_deltas(&m[..1]).is_err());
}

#[test]
fn aggregation_is_order_free_and_excludes_degenerate_series() {
    let results = vec![
        result("ABCD", [0.5, 0.6, 0.7, 0.8], [0.5, 0.55, 0.6, 0.7]),
        result("BACD", [0.5, 0.7, 0.6, 0.9], [0.52, 0.5, 0.58, 0.66]),
        result("DCBA", [0.6, 0.6, 0.6, 0.6], [0.5, 0.51, 0.52, 0.5]),
    ];
    let report = aggregate(&results, 2, "digest").unwrap();
    assert_eq!(report.degenerate_count, 1);
    assert_eq!(report.permutations.len(), 3);
    let summary = report.correlation_summary.unwrap();
    assert!(summary.min > 0.0);
    let mut reversed = results.clone();
    reversed.reverse();
    assert_eq!(aggregate(&reversed, 2, "digest").unwrap(), report);
    let m0 = (0.5 + 0.5 + 0.6) / 3.0;
    assert!((report.phase_means[0].train_accuracy - m0).abs() < 1e-12);
    assert_eq!(report.to_csv().lines().count(), 1 + 12);
    let back = driftbench_core::metrics::DriftReport::from_json(&report.to_json().unwrap()).unwrap();
    assert_eq!(back, report);
}

#[test]
fn singleton_and_constant_aggregation() {
    let r = result("CABD", [0.4, 0.5, 0.6, 0.9], [0.5, 0.52, 0.6, 0.61]);
    let report = aggregate(std::slice::from_ref(&r), 1, "").unwrap();
    let p = pearson(&[0.4, 0.5, 0.6, 0.9], &[0.5, 0.52, 0.6, 0.61]).unwrap();
    let s = report.correlation_summary.unwrap();
    assert!([s.min, s.q1, s.median, s.q3, s.max].iter().all(|&v| v == p));
    for (k, m) in report.phase_means.iter().enumerate() {
        assert_eq!(m.train_accuracy, r.phases[k].train_accuracy);
    }
    let flat = vec![result("ABCD", [0.3; 4], [0.5; 4]), result("ABDC", [0.3; 4], [0.5; 4])];
    let report = aggregate(&flat, 1, "").unwrap();
    assert!(report
        .phase_means
        .iter()
        .all(|m| m.train_accuracy == 0.3 && m.mia_auc == 0.5));
    assert!(report.correlation_summary.is_none() && report.mean_pearson.is_none());
    assert!(aggregate(&[], 1, "").is_err());
}
