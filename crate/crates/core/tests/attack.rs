use driftbench_core::attack::{
    build_eval_records, build_matched_eval_records, mia_score, roc_auc, roc_curve, roc_sweep_auc, ConfidenceOracle,
    MiaRecord,
};
use driftbench_core::data::{Dataset, LabeledExample};
use driftbench_core::model::ConfidenceVector;
use driftbench_core::seed::rng_from_seed;
use proptest::prelude::*;
use rand::Rng;

fn record(id: u64, score: f64, is_member: bool) -> MiaRecord {
    MiaRecord {
        example_id: id,
        score,
        is_member,
    }
}

/// Brute force over all member/non-member pairs.
fn pair_count_auc(records: &[MiaRecord]) -> f64 {
    let (mut wins2, mut pairs) = (0u64, 0u64);
    for m in records.iter().filter(|r| r.is_member) {
        for n in records.iter().filter(|r| !r.is_member) {
            pairs += 1;
            wins2 += match m.score.partial_cmp(&n.score).unwrap() {
                std::cmp::Ordering::Greater => 2,
                std::cmp::Ordering::Equal => 1,
                std::cmp::Ordering::Less => 0,
            };
        }
    }
    wins2 as f64 / (2 * pairs) as f64
}

/// Scores on a coarse grid so that ties are frequent.
fn tied_records(rng: &mut impl Rng) -> Vec<MiaRecord> {
    let n = rng.random_range(2..=50);
    let mut out: Vec<MiaRecord> = (0..n)
        .map(|i| record(i as u64, rng.random_range(0..8) as f64 / 8.0, rng.random_bool(0.5)))
        .collect();
    out[0].is_member = true;
    out[1].is_member = false;
    // copy a member's score onto a non-member to guarantee at least one tie
    out[1].score = out[0].score;
    out
}

#[test]
fn worked_example() {
    let records = [
        record(0, 0.9, true),
        record(1, 0.4, true),
        record(2, 0.5, false),
        record(3, 0.1, false),
    ];
    assert_eq!(roc_auc(&records).unwrap().auc, 0.75);
    assert_eq!(roc_sweep_auc(&records).unwrap(), 0.75);
}

#[test]
fn pair_counting_and_roc_sweep_agree_on_tied_sets() {
    let mut rng = rng_from_seed(5);
    for _ in 0..100 {
        let records = tied_records(&mut rng);
        let oracle = pair_count_auc(&records);
        let result = roc_auc(&records).unwrap();
        assert!(result.tie_count >= 1);
        assert!((result.auc - oracle).abs() < 1e-12);
        assert!((roc_sweep_auc(&records).unwrap() - oracle).abs() < 1e-12);
    }
}

proptest! {
    #[test]
    fn auc_properties(
        scores in prop::collection::vec((0u8..16, any::<bool>()), 2..60),
    ) {
        let mut records: Vec<MiaRecord> =
            scores.iter().enumerate().map(|(i, &(s, m))| record(i as u64, f64::from(s) / 16.0, m)).collect();
        records[0].is_member = true;
        records[1].is_member = false;
        let auc = roc_auc(&records).unwrap().auc;
        prop_assert!((0.0..=1.0).contains(&auc));
        prop_assert!((auc - pair_count_auc(&records)).abs() < 1e-12);

        // strictly increasing transform keeps the ranking
        let shifted: Vec<MiaRecord> = records.iter().map(|r| record(r.example_id, 2.0 * r.score + 1.0, r.is_member)).collect();
        prop_assert_eq!(roc_auc(&shifted).unwrap().auc, auc);

        // swapping roles reflects the AUC
        let flipped: Vec<MiaRecord> = records.iter().map(|r| record(r.example_id, r.score, !r.is_member)).collect();
        prop_assert!((roc_auc(&flipped).unwrap().auc - (1.0 - auc)).abs() < 1e-12);

        // record order is irrelevant
        let mut reversed = records.clone();
        reversed.reverse();
        prop_assert_eq!(roc_auc(&reversed).unwrap(), roc_auc(&records).unwrap());

        let curve = roc_curve(&records).unwrap();
        prop_assert_eq!(curve[0], (0, 0));
        prop_assert!(curve.windows(2).all(|w| w[1].0 >= w[0].0 && w[1].1 >= w[0].1));
    }
}

#[test]
fn one_sided_records_are_rejected() {
    assert!(roc_auc(&[record(0, 0.5, true), record(1, 0.2, true)]).is_err());
    assert!(roc_sweep_auc(&[record(0, 0.5, false)]).is_err());
    assert!(roc_auc(&[]).is_err());
}

/// Confidence in the true label is 0.9 for even ids (encoded in the first feature), 0.3 otherwise.
struct ParityOracle;

impl ConfidenceOracle for ParityOracle {
    fn num_classes(&self) -> usize {
        2
    }

    fn query(&self, features: &[f64]) -> driftbench_core::Result<ConfidenceVector> {
        let p = if (features[0] as u64).is_multiple_of(2) {
            0.9
        } else {
            0.3
        };
        Ok(ConfidenceVector {
            probs: vec![p, 1.0 - p],
        })
    }
}

fn parity_dataset() -> Dataset {
    let examples = (0..40)
        .map(|i| LabeledExample {
            id: i,
            features: vec![i as f64],
            label: (i as usize / 2) % 2,
        })
        .collect();
    Dataset::new(examples, 2, 1).unwrap()
}

#[test]
fn attack_only_uses_the_query_interface() {
    let ds = parity_dataset();
    let ex = ds.get(4).unwrap();
    assert_eq!(
        mia_score(&ParityOracle, ex).unwrap(),
        if ex.label == 0 { 0.9 } else { 0.1 }
    );

    let members: Vec<u64> = (0..20).collect();
    let nonmembers: Vec<u64> = (20..40).collect();
    let records = build_eval_records(&ParityOracle, &ds, &members, &nonmembers, 8, 1).unwrap();
    assert_eq!(records.iter().filter(|r| r.is_member).count(), 8);
    assert_eq!(records.iter().filter(|r| !r.is_member).count(), 8);
    assert_eq!(
        records,
        build_eval_records(&ParityOracle, &ds, &members, &nonmembers, 8, 1).unwrap()
    );

    let matched = build_matched_eval_records(&ParityOracle, &ds, &members, &nonmembers, 10, 2).unwrap();
    let label_of = |r: &MiaRecord| ds.get(r.example_id).unwrap().label;
    for class in 0..2 {
        let m = matched.iter().filter(|r| r.is_member && label_of(r) == class).count();
        let n = matched.iter().filter(|r| !r.is_member && label_of(r) == class).count();
        assert_eq!(m, n);
    }

    assert!(build_eval_records(&ParityOracle, &ds, &members, &members, 4, 0).is_err());
}
