use std::collections::BTreeSet;

use driftbench_core::data::{
    cifar100_coarse_mapping, coarsen_labels, parse_cifar, parse_csv, partition_noniid, shard_for_clients,
    synthesize_dataset, CifarLabelMode, Dataset, PartitionParams, SplitId, SplitSet, SynthesisParams,
};
use driftbench_core::Error;
use proptest::prelude::*;

fn dataset(num_classes: usize, per_class: usize, seed: u64) -> Dataset {
    synthesize_dataset(&SynthesisParams {
        num_classes,
        per_class,
        feature_dim: 3,
        seed,
        ..Default::default()
    })
    .unwrap()
}

/// Independent structural check: every id exactly once, halves nonempty.
fn assert_exact_cover(splits: &SplitSet, ds: &Dataset) {
    let mut seen = BTreeSet::new();
    let mut total = 0;
    for s in SplitId::ALL {
        let h = splits.split(s);
        assert!(!h.train.is_empty() && !h.test.is_empty());
        for id in h.train.iter().chain(&h.test) {
            total += 1;
            seen.insert(*id);
        }
    }
    assert_eq!(total, seen.len(), "an id appears twice");
    assert_eq!(seen, ds.ids().collect::<BTreeSet<_>>());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn partitions_are_disjoint_exact_covers(
        classes in 2usize..8,
        per_class in 40usize..120,
        alpha in 0.05f64..50.0,
        test_fraction in 0.1f64..0.5,
        seed in any::<u64>(),
    ) {
        let ds = dataset(classes, per_class, seed);
        match partition_noniid(&ds, &PartitionParams { alpha, test_fraction, seed }) {
            Ok(splits) => {
                assert_exact_cover(&splits, &ds);
                prop_assert!(splits.validate(&ds).is_ok());
                let hist = splits.class_histogram(&ds).unwrap();
                for (row, count) in hist.iter().zip(ds.class_counts()) {
                    prop_assert_eq!(row.iter().sum::<usize>(), count);
                }
            }
            Err(Error::Partition(msg)) => prop_assert!(msg.contains("alpha")),
            Err(e) => prop_assert!(false, "unexpected error {e}"),
        }
    }

    #[test]
    fn shards_are_balanced_disjoint_covers(n in 1usize..300, clients in 1usize..12, seed in any::<u64>()) {
        prop_assume!(clients <= n);
        let ids: Vec<u64> = (0..n as u64).map(|i| i * 3 + 1).collect();
        let shards = shard_for_clients(&ids, clients, seed).unwrap();
        prop_assert_eq!(shards.num_clients(), clients);
        let sizes: Vec<usize> = shards.shards.iter().map(Vec::len).collect();
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
        let mut all: Vec<u64> = shards.shards.concat();
        all.sort_unstable();
        prop_assert_eq!(all, ids);
    }
}

#[test]
fn huge_alpha_gives_near_even_class_shares() {
    let ds = dataset(8, 250, 4);
    let splits = partition_noniid(
        &ds,
        &PartitionParams {
            alpha: 1e6,
            ..Default::default()
        },
    )
    .unwrap();
    let hist = splits.class_histogram(&ds).unwrap();
    for (row, count) in hist.iter().zip(ds.class_counts()) {
        for &c in row {
            assert!((c as f64 / count as f64 - 0.25).abs() < 0.05, "{row:?}");
        }
    }
}

fn mean_max_share(alpha: f64) -> f64 {
    let mut acc = 0.0;
    for seed in 0..20 {
        let ds = dataset(6, 100, seed);
        let splits = partition_noniid(
            &ds,
            &PartitionParams {
                alpha,
                test_fraction: 0.2,
                seed,
            },
        )
        .unwrap();
        let hist = splits.class_histogram(&ds).unwrap();
        let shares: f64 = hist.iter().map(|r| *r.iter().max().unwrap() as f64 / 100.0).sum();
        acc += shares / hist.len() as f64;
    }
    acc / 20.0
}

#[test]
fn small_alpha_skews_class_shares() {
    let skewed = mean_max_share(0.5);
    let even = mean_max_share(1000.0);
    assert!(skewed > even + 0.15, "alpha 0.5: {skewed}, alpha 1000: {even}");
}

#[test]
fn partition_is_seed_deterministic_and_round_trips() {
    let ds = dataset(4, 60, 1);
    let p = PartitionParams {
        alpha: 0.8,
        test_fraction: 0.25,
        seed: 3,
    };
    let a = partition_noniid(&ds, &p).unwrap();
    let b = partition_noniid(&ds, &p).unwrap();
    assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
    assert_eq!(SplitSet::from_json(&a.to_json().unwrap()).unwrap(), a);
    let c = partition_noniid(&ds, &PartitionParams { seed: 4, ..p }).unwrap();
    assert_ne!(a, c);
}

#[test]
fn csv_and_cifar_loaders() {
    let ds = parse_csv("1,0.5,0.25\n0,1.0,-1.0\n2,0,0\n").unwrap();
    assert_eq!((ds.len(), ds.num_classes(), ds.feature_dim()), (3, 3, 2));
    assert_eq!(ds.get(0).unwrap().features, vec![0.5, 0.25]);
    assert!(parse_csv("").is_err());

    let mut record = vec![0u8; 3074];
    record[0] = 19;
    record[1] = 99;
    record[2] = 255;
    let coarse = parse_cifar(&record, CifarLabelMode::Coarse).unwrap();
    assert_eq!(coarse.get(0).unwrap().label, 19);
    assert_eq!(coarse.get(0).unwrap().features[0], 1.0);
    let fine = parse_cifar(&record, CifarLabelMode::Fine).unwrap();
    assert_eq!(fine.get(0).unwrap().label, 99);
    match parse_cifar(&record[..3000], CifarLabelMode::Coarse) {
        Err(Error::Parse { record, .. }) => assert_eq!(record, 0),
        other => panic!("expected parse error, got {other:?}"),
    }
}

#[test]
fn cifar100_mapping_coarsens_to_twenty_classes() {
    let mapping = cifar100_coarse_mapping();
    assert_eq!(mapping.len(), 100);
    let examples = (0..100)
        .map(|i| driftbench_core::data::LabeledExample {
            id: i as u64,
            features: vec![0.0],
            label: i,
        })
        .collect();
    let fine = Dataset::new(examples, 100, 1).unwrap();
    let coarse = coarsen_labels(&fine, &mapping).unwrap();
    assert_eq!(coarse.num_classes(), 20);
    assert!(coarse.class_counts().iter().all(|&c| c == 5));
}

#[test]
fn load_dataset_reads_files_by_format() {
    use driftbench_core::data::{load_dataset, DatasetFormat};
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("d.csv");
    std::fs::write(&path, "0,1.5\n1,2.5\n").unwrap();
    let ds = load_dataset(&path, DatasetFormat::Csv).unwrap();
    assert_eq!(ds.len(), 2);
    assert!(load_dataset(dir.path().join("missing.csv"), DatasetFormat::Csv).is_err());
}
