use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::Gamma;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::seed::rng_from_seed;

pub const NUM_SPLITS: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum SplitId {
    A,
    B,
    C,
    D,
}

impl SplitId {
    pub const ALL: [SplitId; NUM_SPLITS] = [SplitId::A, SplitId::B, SplitId::C, SplitId::D];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_char(self) -> char {
        (b'A' + self as u8) as char
    }
}

impl fmt::Display for SplitId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.as_char())
    }
}

impl TryFrom<char> for SplitId {
    type Error = Error;

    fn try_from(c: char) -> Result<Self> {
        SplitId::ALL
            .into_iter()
            .find(|s| s.as_char() == c)
            .ok_or_else(|| Error::Config(format!("unknown split {c:?}")))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitHalves {
    pub train: Vec<u64>,
    pub test: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PartitionParams {
    /// Dirichlet concentration; small values skew class proportions harder.
    pub alpha: f64,
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for PartitionParams {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            test_fraction: 0.2,
            seed: 0,
        }
    }
}

/// The four mutually exclusive splits, each with a train and a test half.
/// Id lists are sorted ascending.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSet {
    pub seed: u64,
    pub alpha: f64,
    pub test_fraction: f64,
    pub dataset_digest: String,
    pub splits: BTreeMap<SplitId, SplitHalves>,
}

impl SplitSet {
    pub fn split(&self, id: SplitId) -> &SplitHalves {
        &self.splits[&id]
    }

    /// Test halves of every split, merged and sorted.
    pub fn all_test_ids(&self) -> Vec<u64> {
        let mut ids: Vec<u64> = self.splits.values().flat_map(|s| s.test.iter().copied()).collect();
        ids.sort_unstable();
        ids
    }

    /// Checks disjointness, full coverage of `dataset` and nonempty halves.
    pub fn validate(&self, dataset: &Dataset) -> Result<()> {
        if self.splits.len() != NUM_SPLITS || SplitId::ALL.iter().any(|s| !self.splits.contains_key(s)) {
            return Err(Error::Partition("split set must contain exactly A, B, C and D".into()));
        }
        let mut seen = BTreeSet::new();
        for (id, halves) in &self.splits {
            if halves.train.is_empty() || halves.test.is_empty() {
                return Err(Error::Partition(format!("split {id} has an empty train or test half")));
            }
            for &ex in halves.train.iter().chain(&halves.test) {
                if !seen.insert(ex) {
                    return Err(Error::Partition(format!("example {ex} appears in more than one list")));
                }
            }
        }
        let expected: BTreeSet<u64> = dataset.ids().collect();
        if seen != expected {
            return Err(Error::Partition(format!(
                "splits cover {} ids, dataset has {}",
                seen.len(),
                expected.len()
            )));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Rows are classes, columns are splits: how many examples (train + test)
    /// of each class landed in each split.
    pub fn class_histogram(&self, dataset: &Dataset) -> Result<Vec<[usize; NUM_SPLITS]>> {
        let mut hist = vec![[0; NUM_SPLITS]; dataset.num_classes()];
        for (id, halves) in &self.splits {
            for ex in dataset
                .gather(&halves.train)?
                .into_iter()
                .chain(dataset.gather(&halves.test)?)
            {
                hist[ex.label][id.index()] += 1;
            }
        }
        Ok(hist)
    }
}

/// Draws split proportions from a symmetric Dirichlet(alpha).
fn dirichlet<R: Rng>(rng: &mut R, alpha: f64, k: usize) -> Result<Vec<f64>> {
    let gamma = Gamma::new(alpha, 1.0).map_err(|e| Error::Config(format!("bad alpha {alpha}: {e}")))?;
    let draws: Vec<f64> = (0..k).map(|_| rng.sample(gamma)).collect();
    let total: f64 = draws.iter().sum();
    if total > 0.0 && total.is_finite() {
        return Ok(draws.into_iter().map(|g| g / total).collect());
    }
    // every draw underflowed (tiny alpha): the limit puts all mass on one split
    let mut out = vec![0.0; k];
    out[rng.random_range(0..k)] = 1.0;
    Ok(out)
}

/// Integer counts summing to `n` closest to `props * n`. Leftover units go to
/// the largest fractional parts, lower index first on ties.
pub fn largest_remainder(props: &[f64], n: usize) -> Vec<usize> {
    let quotas: Vec<f64> = props.iter().map(|p| p * n as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..props.len()).collect();
    order.sort_by(|&a, &b| {
        let (ra, rb) = (quotas[a] - quotas[a].floor(), quotas[b] - quotas[b].floor());
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Splits `dataset` into four non-IID partitions.
///
/// Each class is shuffled and dealt to the splits in Dirichlet(alpha)
/// proportions; inside every split a `test_fraction` share of each class is
/// held out as the test half.
pub fn partition_noniid(dataset: &Dataset, params: &PartitionParams) -> Result<SplitSet> {
    if !(params.alpha > 0.0 && params.alpha.is_finite()) {
        return Err(Error::Config(format!("alpha must be positive, got {}", params.alpha)));
    }
    if !(params.test_fraction > 0.0 && params.test_fraction < 1.0) {
        return Err(Error::Config(format!(
            "test_fraction must lie in (0, 1), got {}",
            params.test_fraction
        )));
    }
    let mut by_class: Vec<Vec<u64>> = vec![Vec::new(); dataset.num_classes()];
    for ex in dataset.examples() {
        by_class[ex.label].push(ex.id);
    }
    for (class, ids) in by_class.iter().enumerate() {
        if !ids.is_empty() && ids.len() < NUM_SPLITS {
            return Err(Error::Partition(format!(
                "class {class} has {} examples, need at least {NUM_SPLITS}",
                ids.len()
            )));
        }
    }

    let mut rng = rng_from_seed(params.seed);
    let mut splits: BTreeMap<SplitId, SplitHalves> =
        SplitId::ALL.iter().map(|&s| (s, SplitHalves::default())).collect();
    for ids in by_class.iter_mut() {
        ids.sort_unstable();
        ids.shuffle(&mut rng);
        let props = dirichlet(&mut rng, params.alpha, NUM_SPLITS)?;
        let counts = largest_remainder(&props, ids.len());
        let mut rest = ids.as_slice();
        for (split, count) in SplitId::ALL.iter().zip(counts) {
            let (chunk, tail) = rest.split_at(count);
            rest = tail;
            let n_test = ((count as f64) * params.test_fraction).round() as usize;
            let halves = splits.get_mut(split).expect("all splits present");
            halves.test.extend_from_slice(&chunk[..n_test.min(count)]);
            halves.train.extend_from_slice(&chunk[n_test.min(count)..]);
        }
    }
    for (id, halves) in splits.iter_mut() {
        halves.train.sort_unstable();
        halves.test.sort_unstable();
        if halves.train.is_empty() || halves.test.is_empty() {
            return Err(Error::Partition(format!(
                "split {id} received an empty {} half; use a larger dataset or a larger alpha",
                if halves.train.is_empty() { "train" } else { "test" }
            )));
        }
    }
    Ok(SplitSet {
        seed: params.seed,
        alpha: params.alpha,
        test_fraction: params.test_fraction,
        dataset_digest: dataset.digest(),
        splits,
    })
}

/// Disjoint, size-balanced client shards. Index in `shards` is the client id.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClientShards {
    pub seed: u64,
    pub shards: Vec<Vec<u64>>,
}

impl ClientShards {
    pub fn num_clients(&self) -> usize {
        self.shards.len()
    }
}

/// Shuffles `ids` and deals them round-robin to `num_clients` clients.
///
/// A single client gets the input list unchanged, which keeps one-client
/// federation identical to centralized training over the same list.
pub fn shard_for_clients(ids: &[u64], num_clients: usize, seed: u64) -> Result<ClientShards> {
    if num_clients == 0 {
        return Err(Error::Config("num_clients must be at least 1".into()));
    }
    if num_clients > ids.len() {
        return Err(Error::Shard(format!(
            "{num_clients} clients but only {} examples; every client needs at least one",
            ids.len()
        )));
    }
    if num_clients == 1 {
        return Ok(ClientShards {
            seed,
            shards: vec![ids.to_vec()],
        });
    }
    let mut shuffled = ids.to_vec();
    shuffled.shuffle(&mut rng_from_seed(seed));
    let mut shards = vec![Vec::with_capacity(ids.len() / num_clients + 1); num_clients];
    for (i, id) in shuffled.into_iter().enumerate() {
        shards[i % num_clients].push(id);
    }
    Ok(ClientShards { seed, shards })
}
