//! Dataset preparation shared by `partition` and `run`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use driftbench_core::data::{
    cifar100_coarse_mapping, coarsen_labels, load_dataset, partition_noniid, synthesize_dataset, Dataset, SplitId,
    SplitSet,
};

use crate::config::{CoarsenSpec, ExperimentConfig};
use crate::io::write_atomic;

pub const SPLITS_FILE: &str = "splits.json";
pub const HISTOGRAM_FILE: &str = "split_histogram.csv";

pub struct Prepared {
    pub dataset: Dataset,
    pub splits: SplitSet,
}

pub fn load_or_synthesize(cfg: &ExperimentConfig) -> Result<Dataset> {
    let dataset = match &cfg.dataset.path {
        Some(path) => load_dataset(path, cfg.dataset.format).with_context(|| format!("loading {}", path.display()))?,
        None => synthesize_dataset(&cfg.dataset.synthetic).context("synthesizing dataset")?,
    };
    let mapping = match &cfg.coarsen {
        None => return Ok(dataset),
        Some(CoarsenSpec::Named(_)) => cifar100_coarse_mapping(),
        Some(CoarsenSpec::Table(table)) => table.iter().copied().enumerate().collect(),
    };
    coarsen_labels(&dataset, &mapping).context("coarsening labels")
}

/// Loads the dataset and builds the validated four-way split.
pub fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    let dataset = load_or_synthesize(cfg)?;
    let splits = partition_noniid(&dataset, &cfg.partition).context("partitioning dataset")?;
    splits.validate(&dataset).context("validating splits")?;
    Ok(Prepared { dataset, splits })
}

/// `class,A,B,C,D,total`: examples of each class per split, train and test halves together.
pub fn histogram_csv(prep: &Prepared) -> Result<String> {
    let mut out = String::from("class");
    for s in SplitId::ALL {
        let _ = write!(out, ",{s}");
    }
    out.push_str(",total\n");
    for (class, row) in prep.splits.class_histogram(&prep.dataset)?.iter().enumerate() {
        let _ = write!(out, "{class}");
        for c in row {
            let _ = write!(out, ",{c}");
        }
        let _ = writeln!(out, ",{}", row.iter().sum::<usize>());
    }
    Ok(out)
}

/// Writes the splits file and class histogram into `out_dir`; returns their paths.
pub fn write_partition(prep: &Prepared, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let splits = out_dir.join(SPLITS_FILE);
    let hist = out_dir.join(HISTOGRAM_FILE);
    write_atomic(&splits, prep.splits.to_json()?)?;
    write_atomic(&hist, histogram_csv(prep)?)?;
    Ok(vec![splits, hist])
}
