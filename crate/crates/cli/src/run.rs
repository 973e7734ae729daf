//! The experiment matrix: paradigm × client count × permutation.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Instant;

use anyhow::{Context, Result};
use driftbench_core::data::Dataset;
use driftbench_core::federation::{run_federated_phase, FederatedTrainer, RoundTrace};
use driftbench_core::metrics::{aggregate, PermutationResult};
use driftbench_core::model::ModelState;
use driftbench_core::schedule::{
    enumerate_permutations, run_incremental, CentralizedTrainer, IncrementalConfig, Paradigm, Permutation,
    PhaseMetrics, PhasePlan, PhaseTrainer,
};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::experiment::{prepare, write_partition, Prepared};
use crate::io::write_atomic;

pub const METRICS_FILE: &str = "metrics.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const REPORTS_DIR: &str = "reports";
pub const TRACES_DIR: &str = "traces";
pub const METRICS_HEADER: &str = "paradigm,clients,permutation,phase,train_acc,test_acc,mia_auc";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Cell {
    pub paradigm: Paradigm,
    pub clients: usize,
    pub permutation: Permutation,
}

impl Cell {
    fn label(&self) -> String {
        format!("{}_c{}_{}", self.paradigm, self.clients, self.permutation)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum CellStatus {
    Ok,
    Failed { error: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellRecord {
    #[serde(flatten)]
    pub cell: Cell,
    #[serde(flatten)]
    pub status: CellStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub config_digest: String,
    pub effective_config: ExperimentConfig,
    /// Output files relative to the results directory.
    pub artifacts: Vec<PathBuf>,
    pub cells: Vec<CellRecord>,
    pub failed_cells: usize,
    pub duration_secs: f64,
}

impl RunManifest {
    pub fn report_paths(&self) -> impl Iterator<Item = &PathBuf> {
        self.artifacts.iter().filter(|p| p.starts_with(REPORTS_DIR))
    }
}

pub fn report_file_name(paradigm: Paradigm, clients: usize) -> String {
    format!("{paradigm}_c{clients}.json")
}

/// A round trace tagged with the phase it belongs to.
#[derive(Serialize)]
struct PhaseRoundTrace<'a> {
    phase_index: usize,
    #[serde(flatten)]
    trace: &'a RoundTrace,
}

/// Federated trainer that keeps the per-round traces.
struct TracingTrainer {
    inner: FederatedTrainer,
    traces: Mutex<Vec<(usize, RoundTrace)>>,
}

impl PhaseTrainer for TracingTrainer {
    fn train_phase(
        &self,
        model: ModelState,
        dataset: &Dataset,
        train_ids: &[u64],
        phase_index: usize,
    ) -> driftbench_core::Result<ModelState> {
        let seed = self.inner.phase_seed(phase_index);
        let (model, traces) = run_federated_phase(&model, dataset, train_ids, &self.inner.config, seed)?;
        self.traces
            .lock()
            .expect("trace lock")
            .extend(traces.into_iter().map(|t| (phase_index, t)));
        Ok(model)
    }
}

fn incremental_config(cfg: &ExperimentConfig, dataset: &Dataset) -> IncrementalConfig {
    IncrementalConfig {
        arch: cfg.architecture(dataset.feature_dim(), dataset.num_classes()),
        optimizer: cfg.model.optimizer,
        model_seed: cfg.model.seed,
        eval_cap: cfg.attack.per_side_cap,
        attack_seed: cfg.attack.seed,
        sampling: cfg.attack.sampling,
    }
}

struct CellOutput {
    metrics: Vec<PhaseMetrics>,
    trace_file: Option<PathBuf>,
}

/// One client count trains centrally; more clients run FedAvg and leave a
/// JSONL trace of every round.
fn run_cell(
    cfg: &ExperimentConfig,
    prep: &Prepared,
    inc: &IncrementalConfig,
    cell: &Cell,
    out_dir: &Path,
) -> Result<CellOutput> {
    let plan = PhasePlan {
        permutation: cell.permutation,
        paradigm: cell.paradigm,
    };
    let fed = &cfg.federation;
    if cell.clients == 1 {
        let trainer = CentralizedTrainer {
            rounds: fed.rounds_per_phase,
            epochs_per_round: fed.local_epochs,
            batch_size: fed.batch_size,
            seed: fed.seed,
        };
        let metrics = run_incremental(inc, &prep.dataset, &prep.splits, &plan, &trainer)?;
        return Ok(CellOutput {
            metrics,
            trace_file: None,
        });
    }
    let trainer = TracingTrainer {
        inner: FederatedTrainer {
            config: fed.for_clients(cell.clients),
            seed: fed.seed,
        },
        traces: Mutex::new(Vec::new()),
    };
    let metrics = run_incremental(inc, &prep.dataset, &prep.splits, &plan, &trainer)?;
    let mut jsonl = String::new();
    for (phase_index, trace) in trainer.traces.into_inner().expect("trace lock").iter() {
        jsonl.push_str(&serde_json::to_string(&PhaseRoundTrace {
            phase_index: *phase_index,
            trace,
        })?);
        jsonl.push('\n');
    }
    let rel = Path::new(TRACES_DIR).join(format!("{}.jsonl", cell.label()));
    write_atomic(&out_dir.join(&rel), jsonl)?;
    Ok(CellOutput {
        metrics,
        trace_file: Some(rel),
    })
}

/// Enumerates the matrix in output order: paradigm, then client count, then permutation.
pub fn cells(cfg: &ExperimentConfig) -> Result<Vec<Cell>> {
    let perms = enumerate_permutations(cfg.schedule.permutation_count, cfg.schedule.seed)?;
    let mut out = Vec::new();
    for &paradigm in &cfg.schedule.paradigms {
        for &clients in &cfg.federation.client_counts {
            out.extend(perms.iter().map(|&permutation| Cell {
                paradigm,
                clients,
                permutation,
            }));
        }
    }
    Ok(out)
}

pub fn metrics_csv<'a>(rows: impl IntoIterator<Item = (&'a Cell, &'a [PhaseMetrics])>) -> String {
    let mut out = format!("{METRICS_HEADER}\n");
    for (cell, metrics) in rows {
        for m in metrics {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{}",
                cell.paradigm,
                cell.clients,
                cell.permutation,
                m.phase_index,
                m.train_accuracy,
                m.test_accuracy,
                m.mia_auc
            );
        }
    }
    out
}

/// Runs every cell with at most `jobs` in flight, continuing past failed
/// cells, and writes the results tree under `cfg.output_dir`. The manifest is
/// written last. Returns an error only if the run could not start or its
/// shared outputs could not be written; failed cells are reported in the
/// manifest.
pub fn run(cfg: &ExperimentConfig, jobs: usize) -> Result<RunManifest> {
    let started = Instant::now();
    let out_dir = cfg.output_dir.as_path();
    let digest = cfg.digest()?;
    let prep = prepare(cfg)?;
    let inc = incremental_config(cfg, &prep.dataset);
    let cells = cells(cfg)?;

    let mut artifacts: Vec<PathBuf> = write_partition(&prep, out_dir)?
        .into_iter()
        .map(|p| p.strip_prefix(out_dir).map(Path::to_path_buf).unwrap_or(p))
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .context("building thread pool")?;
    let outcomes: Vec<Result<CellOutput>> = pool.install(|| {
        cells
            .par_iter()
            .map(|cell| {
                let r = run_cell(cfg, &prep, &inc, cell, out_dir);
                match &r {
                    Ok(_) => eprintln!("done   {}", cell.label()),
                    Err(e) => eprintln!("FAILED {}: {e:#}", cell.label()),
                }
                r
            })
            .collect()
    });

    let mut records = Vec::with_capacity(cells.len());
    let mut ok_rows: Vec<(&Cell, &[PhaseMetrics])> = Vec::new();
    for (cell, outcome) in cells.iter().zip(&outcomes) {
        let status = match outcome {
            Ok(out) => {
                ok_rows.push((cell, &out.metrics));
                artifacts.extend(out.trace_file.clone());
                CellStatus::Ok
            }
            Err(e) => CellStatus::Failed {
                error: format!("{e:#}"),
            },
        };
        records.push(CellRecord { cell: *cell, status });
    }

    write_atomic(&out_dir.join(METRICS_FILE), metrics_csv(ok_rows.iter().copied()))?;
    artifacts.push(METRICS_FILE.into());

    for &paradigm in &cfg.schedule.paradigms {
        for &clients in &cfg.federation.client_counts {
            let group: Vec<PermutationResult> = ok_rows
                .iter()
                .filter(|(c, _)| c.paradigm == paradigm && c.clients == clients)
                .map(|(c, m)| PermutationResult {
                    plan: PhasePlan {
                        permutation: c.permutation,
                        paradigm,
                    },
                    phases: m.to_vec(),
                })
                .collect();
            if group.is_empty() {
                continue;
            }
            let report = aggregate(&group, clients, &digest)?;
            let rel = Path::new(REPORTS_DIR).join(report_file_name(paradigm, clients));
            write_atomic(&out_dir.join(&rel), report.to_json()?)?;
            artifacts.push(rel);
        }
    }

    let failed_cells = records.iter().filter(|r| r.status != CellStatus::Ok).count();
    artifacts.push(MANIFEST_FILE.into());
    let manifest = RunManifest {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_digest: digest,
        effective_config: cfg.clone(),
        artifacts,
        cells: records,
        failed_cells,
        duration_secs: started.elapsed().as_secs_f64(),
    };
    write_atomic(&out_dir.join(MANIFEST_FILE), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}
