use driftbench_core::data::{partition_noniid, synthesize_dataset, Dataset, PartitionParams, SynthesisParams};
use driftbench_core::federation::{fedavg, run_federated_phase, ClientUpdate, FederatedTrainer, FederationConfig};
use driftbench_core::model::{Activation, ArchitectureSpec, Layer, ModelState, OptimizerConfig, Tensor};
use driftbench_core::schedule::{CentralizedTrainer, PhaseTrainer};
use driftbench_core::seed::rng_from_seed;
use driftbench_core::Error;
use rand::Rng;

fn small_dataset(seed: u64) -> Dataset {
    synthesize_dataset(&SynthesisParams {
        num_classes: 3,
        per_class: 30,
        feature_dim: 4,
        seed,
        ..Default::default()
    })
    .unwrap()
}

fn random_model(rng: &mut impl Rng, arch: &ArchitectureSpec) -> ModelState {
    ModelState::init(arch.clone(), OptimizerConfig::default(), rng.random()).unwrap()
}

#[test]
fn single_client_federation_is_centralized_training() {
    let mut rng = rng_from_seed(99);
    for _ in 0..6 {
        let ds = small_dataset(rng.random());
        let splits = partition_noniid(
            &ds,
            &PartitionParams {
                alpha: 5.0,
                test_fraction: 0.2,
                seed: rng.random(),
            },
        )
        .unwrap();
        let hidden = (0..rng.random_range(0..3)).map(|_| rng.random_range(2..8)).collect();
        let activation = if rng.random_bool(0.5) {
            Activation::Relu
        } else {
            Activation::Tanh
        };
        let arch = ArchitectureSpec::new(4, hidden, 3, activation);
        let model = ModelState::init(arch, OptimizerConfig::adam(rng.random_range(1e-4..1e-2)), rng.random()).unwrap();
        let config = FederationConfig {
            num_clients: 1,
            rounds_per_phase: rng.random_range(1..4),
            local_epochs: rng.random_range(1..4),
            batch_size: rng.random_range(1..10),
        };
        let seed = rng.random();
        let phase = rng.random_range(0..4);
        let train = &splits.split(driftbench_core::data::SplitId::ALL[phase]).train;
        let fed = FederatedTrainer { config, seed }
            .train_phase(model.clone(), &ds, train, phase)
            .unwrap();
        let central = CentralizedTrainer {
            rounds: config.rounds_per_phase,
            epochs_per_round: config.local_epochs,
            batch_size: config.batch_size,
            seed,
        }
        .train_phase(model, &ds, train, phase)
        .unwrap();
        assert_eq!(fed.param_digest(), central.param_digest());
    }
}

#[test]
fn fedavg_matches_elementwise_weighted_mean() {
    let mut rng = rng_from_seed(4);
    let arch = ArchitectureSpec::new(3, vec![4], 2, Activation::Tanh);
    for _ in 0..10 {
        let k = rng.random_range(1..6);
        let updates: Vec<ClientUpdate> = (0..k)
            .map(|id| ClientUpdate {
                client_id: id,
                model: random_model(&mut rng, &arch),
                shard_size: rng.random_range(1..50),
            })
            .collect();
        let total: usize = updates.iter().map(|u| u.shard_size).sum();
        let agg = fedavg(&updates).unwrap();
        let flat = |m: &ModelState| {
            m.layers()
                .iter()
                .flat_map(|l| l.values().copied().collect::<Vec<_>>())
                .collect::<Vec<f64>>()
        };
        let per_client: Vec<Vec<f64>> = updates.iter().map(|u| flat(&u.model)).collect();
        for (i, got) in flat(&agg).iter().enumerate() {
            let want: f64 = updates
                .iter()
                .zip(&per_client)
                .map(|(u, p)| p[i] * u.shard_size as f64)
                .sum::<f64>()
                / total as f64;
            assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        }
        let mut reversed = updates.clone();
        reversed.reverse();
        assert_eq!(fedavg(&reversed).unwrap().param_digest(), agg.param_digest());
    }
}

fn constant_model(v: f64) -> ModelState {
    let arch = ArchitectureSpec::new(1, vec![], 2, Activation::Relu);
    let layer = Layer {
        weight: Tensor::new(vec![1, 2], vec![v, v]).unwrap(),
        bias: Tensor::new(vec![2], vec![v, v]).unwrap(),
    };
    ModelState::from_params(arch, vec![layer], OptimizerConfig::default()).unwrap()
}

#[test]
fn fedavg_fixtures() {
    let u = |id, v, n| ClientUpdate {
        client_id: id,
        model: constant_model(v),
        shard_size: n,
    };
    let agg = fedavg(&[u(0, 3.0, 1), u(1, 6.0, 2), u(2, 9.0, 3)]).unwrap();
    assert!(agg.layers()[0].values().all(|&v| v == 7.0));
    let agg = fedavg(&[u(0, 0.37, 5), u(1, -0.37, 5)]).unwrap();
    assert!(agg.layers()[0].values().all(|&v| v == 0.0));
    let a = fedavg(&[u(2, 0.1, 3), u(0, 0.9, 1), u(1, -0.4, 7)]).unwrap();
    let b = fedavg(&[u(1, -0.4, 7), u(2, 0.1, 3), u(0, 0.9, 1)]).unwrap();
    assert_eq!(a.param_digest(), b.param_digest());
    assert!(matches!(fedavg(&[]), Err(Error::Aggregation(_))));
    assert!(matches!(
        fedavg(&[u(0, 1.0, 1), u(0, 2.0, 1)]),
        Err(Error::Aggregation(_))
    ));
    assert!(matches!(fedavg(&[u(0, 1.0, 0)]), Err(Error::Aggregation(_))));
}

#[test]
fn federated_phase_traces_and_thread_independence() {
    let ds = small_dataset(8);
    let ids: Vec<u64> = ds.ids().collect();
    let arch = ArchitectureSpec::new(4, vec![6], 3, Activation::Relu);
    let model = ModelState::init(arch, OptimizerConfig::adam(0.01), 3).unwrap();
    let cfg = FederationConfig {
        num_clients: 4,
        rounds_per_phase: 3,
        local_epochs: 2,
        batch_size: 5,
    };
    let run_with = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| run_federated_phase(&model, &ds, &ids, &cfg, 42).unwrap())
    };
    let (m1, traces) = run_with(1);
    let (m4, traces4) = run_with(4);
    assert_eq!(m1.param_digest(), m4.param_digest());
    assert_eq!(traces, traces4);
    assert_eq!(traces.len(), 3);
    for (r, t) in traces.iter().enumerate() {
        assert_eq!(t.round_index, r);
        assert_eq!(
            t.clients.iter().map(|c| c.client_id).collect::<Vec<_>>(),
            vec![0, 1, 2, 3]
        );
        assert_eq!(t.clients.iter().map(|c| c.shard_size).sum::<usize>(), ids.len());
    }
    assert_eq!(traces.last().unwrap().aggregate_digest, m1.param_digest());
    assert_ne!(m1.param_digest(), model.param_digest());

    let too_many = FederationConfig {
        num_clients: ids.len() + 1,
        ..cfg
    };
    assert!(matches!(
        run_federated_phase(&model, &ds, &ids, &too_many, 0),
        Err(Error::Shard(_))
    ));
    assert!(run_federated_phase(&model, &ds, &ids, &FederationConfig { num_clients: 0, ..cfg }, 0).is_err());
}
