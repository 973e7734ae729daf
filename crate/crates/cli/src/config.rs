//! Declarative experiment description, read from JSON or TOML.
//!
//! Every field has a default, so an empty file describes the full default
//! experiment: synthetic data, both paradigms, client counts 1/2/5/10 and
//! eight permutations.

use std::path::{Path, PathBuf};

use anyhow::{bail, ensure, Context, Result};
use driftbench_core::attack::EvalSampling;
use driftbench_core::data::{DatasetFormat, PartitionParams, SynthesisParams};
use driftbench_core::federation::FederationConfig;
use driftbench_core::model::{Activation, ArchitectureSpec, OptimizerConfig};
use driftbench_core::schedule::Paradigm;
use driftbench_core::seed::derive_seed;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSection,
    /// Label coarsening applied after loading: `"cifar100"` or a list whose
    /// i-th entry is the coarse label of fine label i.
    pub coarsen: Option<CoarsenSpec>,
    pub partition: PartitionParams,
    pub schedule: ScheduleSection,
    pub federation: FederationSection,
    pub model: ModelSection,
    pub attack: AttackSection,
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: DatasetSection::default(),
            coarsen: None,
            partition: PartitionParams::default(),
            schedule: ScheduleSection::default(),
            federation: FederationSection::default(),
            model: ModelSection::default(),
            attack: AttackSection::default(),
            output_dir: PathBuf::from("results"),
        }
    }
}

/// A file dataset when `path` is set, otherwise a synthetic one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub path: Option<PathBuf>,
    pub format: DatasetFormat,
    pub synthetic: SynthesisParams,
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self {
            path: None,
            format: DatasetFormat::Csv,
            synthetic: SynthesisParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CoarsenSpec {
    Named(String),
    Table(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScheduleSection {
    pub permutation_count: usize,
    pub paradigms: Vec<Paradigm>,
    pub seed: u64,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        Self {
            permutation_count: 8,
            paradigms: vec![Paradigm::Uniform, Paradigm::Additive],
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FederationSection {
    pub client_counts: Vec<usize>,
    pub rounds_per_phase: usize,
    pub local_epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for FederationSection {
    fn default() -> Self {
        let f = FederationConfig::default();
        Self {
            client_counts: vec![1, 2, 5, 10],
            rounds_per_phase: f.rounds_per_phase,
            local_epochs: f.local_epochs,
            batch_size: f.batch_size,
            seed: 0,
        }
    }
}

impl FederationSection {
    pub fn for_clients(&self, num_clients: usize) -> FederationConfig {
        FederationConfig {
            num_clients,
            rounds_per_phase: self.rounds_per_phase,
            local_epochs: self.local_epochs,
            batch_size: self.batch_size,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub hidden_dims: Vec<usize>,
    pub activation: Activation,
    pub optimizer: OptimizerConfig,
    pub seed: u64,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            hidden_dims: vec![64, 64],
            activation: Activation::Relu,
            optimizer: OptimizerConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackSection {
    /// Upper bound on members, and separately on non-members, scored per phase.
    pub per_side_cap: usize,
    pub sampling: EvalSampling,
    pub seed: u64,
}

impl Default for AttackSection {
    fn default() -> Self {
        Self {
            per_side_cap: 1000,
            sampling: EvalSampling::LabelMatched,
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    /// Reads a `.toml` or `.json` file (other extensions: JSON, then TOML).
    /// A relative dataset path is taken relative to the config file.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
        let mut cfg = match ext.as_deref() {
            Some("toml") => Self::from_toml(&text),
            Some("json") => Self::from_json(&text),
            _ => Self::from_json(&text).or_else(|_| Self::from_toml(&text)),
        }
        .with_context(|| format!("parsing config {}", path.display()))?;
        if let (Some(data), Some(dir)) = (&cfg.dataset.path, path.parent()) {
            if data.is_relative() {
                cfg.dataset.path = Some(dir.join(data));
            }
        }
        cfg.validate()
            .with_context(|| format!("invalid config {}", path.display()))?;
        Ok(cfg)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.schedule;
        ensure!(
            (1..=24).contains(&s.permutation_count),
            "schedule.permutation_count must be in [1, 24]"
        );
        ensure!(!s.paradigms.is_empty(), "schedule.paradigms must not be empty");
        ensure!(!has_duplicates(&s.paradigms), "schedule.paradigms contains duplicates");
        let f = &self.federation;
        ensure!(
            !f.client_counts.is_empty(),
            "federation.client_counts must not be empty"
        );
        ensure!(
            f.client_counts.iter().all(|&c| c >= 1),
            "federation.client_counts must all be >= 1"
        );
        ensure!(
            !has_duplicates(&f.client_counts),
            "federation.client_counts contains duplicates"
        );
        f.for_clients(1).validate()?;
        self.model.optimizer.validate()?;
        ensure!(self.attack.per_side_cap >= 1, "attack.per_side_cap must be >= 1");
        if let Some(CoarsenSpec::Named(name)) = &self.coarsen {
            if name != "cifar100" {
                bail!("unknown coarsen mapping {name:?}; expected \"cifar100\" or a list");
            }
        }
        Ok(())
    }

    /// Replaces every seed with one derived from `base`, each field on its own stream.
    pub fn apply_seed_override(&mut self, base: u64) {
        self.dataset.synthetic.seed = derive_seed(base, &[0]);
        self.partition.seed = derive_seed(base, &[1]);
        self.schedule.seed = derive_seed(base, &[2]);
        self.federation.seed = derive_seed(base, &[3]);
        self.model.seed = derive_seed(base, &[4]);
        self.attack.seed = derive_seed(base, &[5]);
    }

    pub fn architecture(&self, input_dim: usize, num_classes: usize) -> ArchitectureSpec {
        ArchitectureSpec::new(
            input_dim,
            self.model.hidden_dims.clone(),
            num_classes,
            self.model.activation,
        )
    }

    /// Canonical JSON of the effective config.
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// SHA-256 of the canonical JSON, ignoring where results are written.
    pub fn digest(&self) -> Result<String> {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        Ok(hex::encode(Sha256::digest(serde_json::to_vec(&c)?)))
    }
}

fn has_duplicates<T: PartialEq>(items: &[T]) -> bool {
    items.iter().enumerate().any(|(i, a)| items[..i].contains(a))
}
