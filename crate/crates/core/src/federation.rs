//! In-process FedAvg simulation.
//!
//! Each round broadcasts the global model, trains a copy on every client
//! shard (fresh optimizer moments per round), then replaces the global
//! parameters with the shard-size-weighted mean. One client reproduces
//! [`CentralizedTrainer`](crate::schedule::CentralizedTrainer) bit for bit.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{shard_for_clients, Dataset};
use crate::error::{Error, Result};
use crate::model::{Layer, ModelState};
use crate::schedule::{round_client_seed, PhaseTrainer};
use crate::seed::derive_seed;

/// Stream index reserved for shard assignment within a phase seed.
const SHARD_STREAM: u64 = u64::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FederationConfig {
    pub num_clients: usize,
    pub rounds_per_phase: usize,
    pub local_epochs: usize,
    pub batch_size: usize,
}

impl Default for FederationConfig {
    fn default() -> Self {
        Self {
            num_clients: 1,
            rounds_per_phase: 5,
            local_epochs: 10,
            batch_size: 8,
        }
    }
}

impl FederationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_clients == 0 || self.rounds_per_phase == 0 || self.local_epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config(format!("federation fields must all be >= 1: {self:?}")));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct ClientUpdate {
    pub client_id: usize,
    pub model: ModelState,
    pub shard_size: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientTrace {
    pub client_id: usize,
    pub shard_size: usize,
    pub digest: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundTrace {
    pub round_index: usize,
    pub clients: Vec<ClientTrace>,
    pub aggregate_digest: String,
}

/// One JSON object per line.
pub fn traces_to_jsonl(traces: &[RoundTrace]) -> Result<String> {
    let mut out = String::new();
    for t in traces {
        out.push_str(&serde_json::to_string(t)?);
        out.push('\n');
    }
    Ok(out)
}

/// Trains a private copy of `global` on one client's shard.
pub fn local_train(
    global: &ModelState,
    dataset: &Dataset,
    client_id: usize,
    shard: &[u64],
    cfg: &FederationConfig,
    seed: u64,
) -> Result<ModelState> {
    if shard.is_empty() {
        return Err(Error::Shard(format!("client {client_id} has an empty shard")));
    }
    let examples = dataset.gather(shard)?;
    let mut local = global.clone();
    local.reset_optimizer();
    local.train_epochs(&examples, cfg.local_epochs, cfg.batch_size, seed)?;
    Ok(local)
}

/// Shard-size-weighted parameter mean, folded in ascending client id so the
/// result does not depend on input order. The aggregate gets fresh optimizer state.
pub fn fedavg(updates: &[ClientUpdate]) -> Result<ModelState> {
    let mut sorted: Vec<&ClientUpdate> = updates.iter().collect();
    sorted.sort_by_key(|u| u.client_id);
    let Some(first) = sorted.first() else {
        return Err(Error::Aggregation("no client updates".into()));
    };
    if sorted.windows(2).any(|w| w[0].client_id == w[1].client_id) {
        return Err(Error::Aggregation("duplicate client id".into()));
    }
    if let Some(u) = sorted.iter().find(|u| u.shard_size == 0) {
        return Err(Error::Aggregation(format!(
            "client {} reported an empty shard",
            u.client_id
        )));
    }
    if let Some(u) = sorted.iter().find(|u| u.model.arch() != first.model.arch()) {
        return Err(Error::Aggregation(format!(
            "client {} has a different architecture",
            u.client_id
        )));
    }
    // running weighted mean: agg += (p - agg) * n_i / N_i
    let mut agg: Vec<Layer> = first.model.layers().to_vec();
    let mut seen = first.shard_size as f64;
    for u in &sorted[1..] {
        let n = u.shard_size as f64;
        seen += n;
        for (a, p) in agg.iter_mut().zip(u.model.layers()) {
            for (av, pv) in a.values_mut().zip(p.values()) {
                *av += (pv - *av) * n / seen;
            }
        }
    }
    ModelState::from_params(first.model.arch().clone(), agg, first.model.optimizer().config)
}

/// `rounds_per_phase` rounds of broadcast, local training and FedAvg over
/// `train_ids` sharded across `cfg.num_clients` clients.
pub fn run_federated_phase(
    global: &ModelState,
    dataset: &Dataset,
    train_ids: &[u64],
    cfg: &FederationConfig,
    phase_seed: u64,
) -> Result<(ModelState, Vec<RoundTrace>)> {
    cfg.validate()?;
    let shards = shard_for_clients(train_ids, cfg.num_clients, derive_seed(phase_seed, &[SHARD_STREAM]))?;
    let mut model = global.clone();
    let mut traces = Vec::with_capacity(cfg.rounds_per_phase);
    for round in 0..cfg.rounds_per_phase {
        let updates = shards
            .shards
            .par_iter()
            .enumerate()
            .map(|(client_id, shard)| {
                let seed = round_client_seed(phase_seed, round, client_id);
                Ok(ClientUpdate {
                    client_id,
                    model: local_train(&model, dataset, client_id, shard, cfg, seed)?,
                    shard_size: shard.len(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        model = fedavg(&updates)?;
        traces.push(RoundTrace {
            round_index: round,
            clients: updates
                .iter()
                .map(|u| ClientTrace {
                    client_id: u.client_id,
                    shard_size: u.shard_size,
                    digest: u.model.param_digest(),
                })
                .collect(),
            aggregate_digest: model.param_digest(),
        });
    }
    Ok((model, traces))
}

/// Phase trainer that runs [`run_federated_phase`] with a per-phase seed.
#[derive(Debug, Clone, Copy)]
pub struct FederatedTrainer {
    pub config: FederationConfig,
    pub seed: u64,
}

impl FederatedTrainer {
    pub fn phase_seed(&self, phase_index: usize) -> u64 {
        derive_seed(self.seed, &[phase_index as u64])
    }
}

impl PhaseTrainer for FederatedTrainer {
    fn train_phase(
        &self,
        model: ModelState,
        dataset: &Dataset,
        train_ids: &[u64],
        phase_index: usize,
    ) -> Result<ModelState> {
        run_federated_phase(&model, dataset, train_ids, &self.config, self.phase_seed(phase_index)).map(|(m, _)| m)
    }
}
