//! Incremental training over an ordering of the four splits, with
//! evaluation after every phase.

use std::fmt;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::attack::{build_eval_records, build_matched_eval_records, matched_capacity, roc_auc, EvalSampling};
use crate::data::{Dataset, SplitId, SplitSet, NUM_SPLITS};
use crate::error::{Error, Result};
use crate::model::{ArchitectureSpec, ModelState, OptimizerConfig};
use crate::seed::{derive_seed, rng_from_seed};

pub const NUM_PHASES: usize = NUM_SPLITS;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Paradigm {
    /// Every phase is tested on the union of all four test halves.
    Uniform,
    /// Phase k is tested on the test halves of the first k+1 splits trained.
    Additive,
}

impl fmt::Display for Paradigm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Paradigm::Uniform => "uniform",
            Paradigm::Additive => "additive",
        })
    }
}

/// An ordering of A, B, C, D.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Permutation([SplitId; NUM_SPLITS]);

impl Permutation {
    pub fn new(order: [SplitId; NUM_SPLITS]) -> Result<Self> {
        let mut seen = [false; NUM_SPLITS];
        for s in order {
            if std::mem::replace(&mut seen[s.index()], true) {
                return Err(Error::Config(format!("split {s} repeated in permutation")));
            }
        }
        Ok(Self(order))
    }

    pub fn splits(&self) -> &[SplitId; NUM_SPLITS] {
        &self.0
    }

    /// All 24 orderings in lexicographic order.
    pub fn all() -> Vec<Permutation> {
        let mut out = Vec::with_capacity(24);
        for a in SplitId::ALL {
            for b in SplitId::ALL {
                for c in SplitId::ALL {
                    for d in SplitId::ALL {
                        if let Ok(p) = Permutation::new([a, b, c, d]) {
                            out.push(p);
                        }
                    }
                }
            }
        }
        out
    }
}

impl fmt::Display for Permutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.iter().try_for_each(|s| write!(f, "{s}"))
    }
}

impl TryFrom<String> for Permutation {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        let ids = s.chars().map(SplitId::try_from).collect::<Result<Vec<_>>>()?;
        let order: [SplitId; NUM_SPLITS] = ids
            .try_into()
            .map_err(|_| Error::Config(format!("permutation {s:?} must name four splits")))?;
        Permutation::new(order)
    }
}

impl From<Permutation> for String {
    fn from(p: Permutation) -> String {
        p.to_string()
    }
}

impl std::str::FromStr for Permutation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Permutation::try_from(s.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct PhasePlan {
    pub permutation: Permutation,
    pub paradigm: Paradigm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseMetrics {
    pub phase_index: usize,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub mia_auc: f64,
    pub member_count: usize,
    pub nonmember_count: usize,
    /// Parameter digest of the model leaving this phase.
    pub model_digest: String,
}

/// `count` distinct orderings sampled without replacement from all 24.
pub fn enumerate_permutations(count: usize, seed: u64) -> Result<Vec<Permutation>> {
    if count == 0 || count > 24 {
        return Err(Error::Config(format!(
            "permutation count must be in [1, 24], got {count}"
        )));
    }
    let mut all = Permutation::all();
    all.shuffle(&mut rng_from_seed(seed));
    all.truncate(count);
    Ok(all)
}

fn check_phase(phase_index: usize) -> Result<()> {
    if phase_index >= NUM_PHASES {
        return Err(Error::Config(format!(
            "phase index {phase_index} outside [0, {NUM_PHASES})"
        )));
    }
    Ok(())
}

/// Test ids evaluated at `phase_index`, sorted.
pub fn test_set_for_phase(splits: &SplitSet, plan: &PhasePlan, phase_index: usize) -> Result<Vec<u64>> {
    check_phase(phase_index)?;
    let included: &[SplitId] = match plan.paradigm {
        Paradigm::Uniform => &SplitId::ALL,
        Paradigm::Additive => &plan.permutation.splits()[..=phase_index],
    };
    let mut ids: Vec<u64> = included
        .iter()
        .flat_map(|&s| splits.split(s).test.iter().copied())
        .collect();
    ids.sort_unstable();
    Ok(ids)
}

/// Train ids seen up to and including `phase_index`, sorted.
pub fn member_set_for_phase(splits: &SplitSet, plan: &PhasePlan, phase_index: usize) -> Result<Vec<u64>> {
    check_phase(phase_index)?;
    let mut ids: Vec<u64> = plan.permutation.splits()[..=phase_index]
        .iter()
        .flat_map(|&s| splits.split(s).train.iter().copied())
        .collect();
    ids.sort_unstable();
    Ok(ids)
}

/// Trains a model on one phase's split.
pub trait PhaseTrainer {
    fn train_phase(
        &self,
        model: ModelState,
        dataset: &Dataset,
        train_ids: &[u64],
        phase_index: usize,
    ) -> Result<ModelState>;
}

/// Leaves the model untouched: the untrained baseline.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoopTrainer;

impl PhaseTrainer for NoopTrainer {
    fn train_phase(&self, model: ModelState, _: &Dataset, _: &[u64], _: usize) -> Result<ModelState> {
        Ok(model)
    }
}

/// Single-site training. Each phase runs `rounds` blocks of `epochs_per_round`
/// epochs, every block with fresh optimizer moments and a shuffle seed drawn
/// from the same sequence a one-client federation uses.
#[derive(Debug, Clone, Copy)]
pub struct CentralizedTrainer {
    pub rounds: usize,
    pub epochs_per_round: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl PhaseTrainer for CentralizedTrainer {
    fn train_phase(
        &self,
        mut model: ModelState,
        dataset: &Dataset,
        train_ids: &[u64],
        phase_index: usize,
    ) -> Result<ModelState> {
        let examples = dataset.gather(train_ids)?;
        let phase_seed = derive_seed(self.seed, &[phase_index as u64]);
        for round in 0..self.rounds {
            model.reset_optimizer();
            model.train_epochs(
                &examples,
                self.epochs_per_round,
                self.batch_size,
                round_client_seed(phase_seed, round, 0),
            )?;
        }
        Ok(model)
    }
}

/// Shuffle seed of `client` in `round`; shared by the centralized and the
/// federated paths so that one-client federation replays centralized training.
pub fn round_client_seed(phase_seed: u64, round: usize, client: usize) -> u64 {
    derive_seed(phase_seed, &[round as u64, client as u64])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IncrementalConfig {
    pub arch: ArchitectureSpec,
    pub optimizer: OptimizerConfig,
    pub model_seed: u64,
    /// Upper bound on members (and on non-members) scored per phase.
    pub eval_cap: usize,
    pub attack_seed: u64,
    #[serde(default)]
    pub sampling: EvalSampling,
}

/// Runs the four phases of `plan`, carrying the model across phases.
///
/// Members are the train halves seen so far; the non-member pool is every
/// test half. Errors are tagged with the permutation and phase.
pub fn run_incremental<T: PhaseTrainer + ?Sized>(
    cfg: &IncrementalConfig,
    dataset: &Dataset,
    splits: &SplitSet,
    plan: &PhasePlan,
    trainer: &T,
) -> Result<Vec<PhaseMetrics>> {
    let tag = |phase: usize| {
        move |e: Error| Error::Phase {
            permutation: plan.permutation.to_string(),
            phase,
            source: Box::new(e),
        }
    };
    if cfg.eval_cap == 0 {
        return Err(Error::Config("eval_cap must be at least 1".into()));
    }
    let mut model = ModelState::init(cfg.arch.clone(), cfg.optimizer, cfg.model_seed)?;
    let nonmembers = splits.all_test_ids();
    let mut out = Vec::with_capacity(NUM_PHASES);
    for (phase, &split) in plan.permutation.splits().iter().enumerate() {
        let mut step = || -> Result<PhaseMetrics> {
            let trained = trainer.train_phase(model.clone(), dataset, &splits.split(split).train, phase)?;
            let members = member_set_for_phase(splits, plan, phase)?;
            let test_ids = test_set_for_phase(splits, plan, phase)?;
            let train_accuracy = trained.accuracy(&dataset.gather(&members)?)?;
            let test_accuracy = trained.accuracy(&dataset.gather(&test_ids)?)?;
            let attack_seed = derive_seed(cfg.attack_seed, &[phase as u64]);
            let records = match cfg.sampling {
                EvalSampling::Uniform => {
                    let per_side = members.len().min(nonmembers.len()).min(cfg.eval_cap);
                    build_eval_records(&trained, dataset, &members, &nonmembers, per_side, attack_seed)?
                }
                EvalSampling::LabelMatched => {
                    let per_side = matched_capacity(dataset, &members, &nonmembers)?.min(cfg.eval_cap);
                    build_matched_eval_records(&trained, dataset, &members, &nonmembers, per_side, attack_seed)?
                }
            };
            let auc = roc_auc(&records)?;
            let metrics = PhaseMetrics {
                phase_index: phase,
                train_accuracy,
                test_accuracy,
                mia_auc: auc.auc,
                member_count: auc.num_members,
                nonmember_count: auc.num_nonmembers,
                model_digest: trained.param_digest(),
            };
            model = trained;
            Ok(metrics)
        };
        out.push(step().map_err(tag(phase))?);
    }
    Ok(out)
}
