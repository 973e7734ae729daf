//! Datasets, label coarsening, non-IID splits and client sharding.

mod partition;

pub use partition::{
    largest_remainder, partition_noniid, shard_for_clients, ClientShards, PartitionParams, SplitHalves, SplitId,
    SplitSet, NUM_SPLITS,
};

use std::collections::{BTreeMap, HashMap};
use std::io::Read;
use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::seed::rng_from_seed;

/// Bytes in one CIFAR-100 binary record: coarse label, fine label, 32x32x3 pixels.
pub const CIFAR_RECORD_LEN: usize = 2 + 3072;
pub const CIFAR100_COARSE_CLASSES: usize = 20;
pub const CIFAR100_FINE_CLASSES: usize = 100;

/// Fine-to-coarse label table for CIFAR-100: index is the fine label.
pub const CIFAR100_FINE_TO_COARSE: [usize; CIFAR100_FINE_CLASSES] = [
    4, 1, 14, 8, 0, 6, 7, 7, 18, 3, 3, 14, 9, 18, 7, 11, 3, 9, 7, 11, 6, 11, 5, 10, 7, 6, 13, 15, 3, 15, 0, 11, 1, 10,
    12, 14, 16, 9, 11, 5, 5, 19, 8, 8, 15, 13, 14, 17, 18, 10, 16, 4, 17, 4, 2, 0, 17, 4, 18, 17, 10, 3, 2, 12, 12, 16,
    12, 1, 9, 19, 2, 10, 0, 1, 16, 12, 9, 13, 15, 13, 16, 19, 2, 4, 6, 19, 5, 5, 8, 19, 18, 1, 2, 15, 6, 0, 17, 8, 14,
    13,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample {
    pub id: u64,
    pub features: Vec<f64>,
    pub label: usize,
}

/// A labeled feature matrix with unique example ids.
#[derive(Debug, Clone)]
pub struct Dataset {
    examples: Vec<LabeledExample>,
    num_classes: usize,
    feature_dim: usize,
    index: HashMap<u64, usize>,
}

impl PartialEq for Dataset {
    fn eq(&self, other: &Self) -> bool {
        self.examples == other.examples
            && self.num_classes == other.num_classes
            && self.feature_dim == other.feature_dim
    }
}

impl Dataset {
    pub fn new(examples: Vec<LabeledExample>, num_classes: usize, feature_dim: usize) -> Result<Self> {
        if num_classes == 0 || feature_dim == 0 {
            return Err(Error::Config("dataset needs at least one class and one feature".into()));
        }
        let mut index = HashMap::with_capacity(examples.len());
        for (pos, ex) in examples.iter().enumerate() {
            if ex.features.len() != feature_dim {
                return Err(Error::dim(format!(
                    "example {} has {} features, expected {feature_dim}",
                    ex.id,
                    ex.features.len()
                )));
            }
            if ex.label >= num_classes {
                return Err(Error::data(format!(
                    "example {} has label {} outside [0, {num_classes})",
                    ex.id, ex.label
                )));
            }
            if index.insert(ex.id, pos).is_some() {
                return Err(Error::data(format!("duplicate example id {}", ex.id)));
            }
        }
        Ok(Self {
            examples,
            num_classes,
            feature_dim,
            index,
        })
    }

    pub fn examples(&self) -> &[LabeledExample] {
        &self.examples
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.examples.iter().map(|e| e.id)
    }

    pub fn get(&self, id: u64) -> Option<&LabeledExample> {
        self.index.get(&id).map(|&pos| &self.examples[pos])
    }

    /// Resolves ids to examples, preserving the order of `ids`.
    pub fn gather(&self, ids: &[u64]) -> Result<Vec<&LabeledExample>> {
        ids.iter()
            .map(|&id| {
                self.get(id)
                    .ok_or_else(|| Error::data(format!("unknown example id {id}")))
            })
            .collect()
    }

    /// Number of examples per class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for ex in &self.examples {
            counts[ex.label] += 1;
        }
        counts
    }

    /// SHA-256 over ids, labels and feature bit patterns, hex encoded.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        h.update((self.num_classes as u64).to_le_bytes());
        h.update((self.feature_dim as u64).to_le_bytes());
        for ex in &self.examples {
            h.update(ex.id.to_le_bytes());
            h.update((ex.label as u64).to_le_bytes());
            for v in &ex.features {
                h.update(v.to_bits().to_le_bytes());
            }
        }
        hex::encode(h.finalize())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CifarLabelMode {
    Coarse,
    Fine,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum DatasetFormat {
    /// One example per line, label first, then the features.
    Csv,
    /// CIFAR-100 binary records.
    BinaryCifar { label_mode: CifarLabelMode },
}

pub fn load_dataset(path: impl AsRef<Path>, format: DatasetFormat) -> Result<Dataset> {
    let mut bytes = Vec::new();
    std::fs::File::open(path.as_ref())?.read_to_end(&mut bytes)?;
    match format {
        DatasetFormat::Csv => {
            let text = std::str::from_utf8(&bytes).map_err(|e| Error::Parse {
                record: 0,
                message: format!("not UTF-8: {e}"),
            })?;
            parse_csv(text)
        }
        DatasetFormat::BinaryCifar { label_mode } => parse_cifar(&bytes, label_mode),
    }
}

/// Parses label-first CSV rows. Ids are assigned in row order.
pub fn parse_csv(text: &str) -> Result<Dataset> {
    let mut examples = Vec::new();
    let mut feature_dim = None;
    for (record, line) in text.lines().filter(|l| !l.trim().is_empty()).enumerate() {
        let mut fields = line.split(',').map(str::trim);
        let label_field = fields.next().unwrap_or_default();
        let label: i64 = label_field.parse().map_err(|_| Error::Parse {
            record,
            message: format!("label {label_field:?} is not an integer"),
        })?;
        if label < 0 {
            return Err(Error::data(format!("record {record}: label {label} out of range")));
        }
        let features = fields
            .map(|f| {
                f.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| Error::Parse {
                        record,
                        message: format!("bad feature {f:?}"),
                    })
            })
            .collect::<Result<Vec<_>>>()?;
        if features.is_empty() {
            return Err(Error::Parse {
                record,
                message: "row has no features".into(),
            });
        }
        match feature_dim {
            None => feature_dim = Some(features.len()),
            Some(d) if d != features.len() => {
                return Err(Error::Parse {
                    record,
                    message: format!("expected {d} features, found {}", features.len()),
                })
            }
            _ => {}
        }
        examples.push(LabeledExample {
            id: record as u64,
            features,
            label: label as usize,
        });
    }
    let Some(feature_dim) = feature_dim else {
        return Err(Error::Parse {
            record: 0,
            message: "no records".into(),
        });
    };
    let num_classes = examples.iter().map(|e| e.label).max().unwrap_or(0) + 1;
    Dataset::new(examples, num_classes.max(2), feature_dim)
}

/// Parses CIFAR-100 binary records, scaling pixels to [0, 1].
pub fn parse_cifar(bytes: &[u8], mode: CifarLabelMode) -> Result<Dataset> {
    if bytes.is_empty() {
        return Err(Error::Parse {
            record: 0,
            message: "no records".into(),
        });
    }
    if !bytes.len().is_multiple_of(CIFAR_RECORD_LEN) {
        return Err(Error::Parse {
            record: bytes.len() / CIFAR_RECORD_LEN,
            message: format!("truncated record ({} trailing bytes)", bytes.len() % CIFAR_RECORD_LEN),
        });
    }
    let num_classes = match mode {
        CifarLabelMode::Coarse => CIFAR100_COARSE_CLASSES,
        CifarLabelMode::Fine => CIFAR100_FINE_CLASSES,
    };
    let examples = bytes
        .chunks_exact(CIFAR_RECORD_LEN)
        .enumerate()
        .map(|(record, rec)| {
            let (coarse, fine) = (rec[0] as usize, rec[1] as usize);
            if coarse >= CIFAR100_COARSE_CLASSES || fine >= CIFAR100_FINE_CLASSES {
                return Err(Error::data(format!(
                    "record {record}: labels (coarse {coarse}, fine {fine}) out of range"
                )));
            }
            let label = match mode {
                CifarLabelMode::Coarse => coarse,
                CifarLabelMode::Fine => fine,
            };
            let features = rec[2..].iter().map(|&p| f64::from(p) / 255.0).collect();
            Ok(LabeledExample {
                id: record as u64,
                features,
                label,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(examples, num_classes, CIFAR_RECORD_LEN - 2)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthesisParams {
    pub num_classes: usize,
    pub per_class: usize,
    pub feature_dim: usize,
    pub class_separation: f64,
    pub noise_std: f64,
    pub seed: u64,
}

impl Default for SynthesisParams {
    fn default() -> Self {
        Self {
            num_classes: 8,
            per_class: 250,
            feature_dim: 16,
            class_separation: 1.0,
            noise_std: 1.0,
            seed: 0,
        }
    }
}

/// Gaussian blobs, one mean per class, class means pairwise at least
/// `class_separation` apart and centered on the origin. Labels are interleaved
/// so ids cycle through the classes.
pub fn synthesize_dataset(p: &SynthesisParams) -> Result<Dataset> {
    if p.num_classes < 2 || p.per_class == 0 || p.feature_dim == 0 {
        return Err(Error::Config(
            "synthesis needs >= 2 classes, >= 1 example per class and >= 1 feature".into(),
        ));
    }
    if !(p.class_separation > 0.0 && p.class_separation.is_finite()) {
        return Err(Error::Config("class_separation must be positive".into()));
    }
    if !(p.noise_std >= 0.0 && p.noise_std.is_finite()) {
        return Err(Error::Config("noise_std must be non-negative".into()));
    }
    let mut rng = rng_from_seed(p.seed);
    let mut means: Vec<Vec<f64>> = (0..p.num_classes)
        .map(|_| {
            (0..p.feature_dim)
                .map(|_| rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect();
    // center on the origin
    let centroid: Vec<f64> = (0..p.feature_dim)
        .map(|j| means.iter().map(|m| m[j]).sum::<f64>() / p.num_classes as f64)
        .collect();
    for m in means.iter_mut() {
        for (v, c) in m.iter_mut().zip(&centroid) {
            *v -= c;
        }
    }
    let min_dist = min_pairwise_distance(&means);
    if min_dist <= 1e-12 {
        return Err(Error::Config("class means collapsed; increase feature_dim".into()));
    }
    // scale up so the closest pair sits at the requested separation (with a
    // hair of slack against rounding)
    let scale = p.class_separation / min_dist * (1.0 + 1e-12);
    for m in means.iter_mut() {
        m.iter_mut().for_each(|v| *v *= scale);
    }
    let n = p.num_classes * p.per_class;
    let examples = (0..n)
        .map(|i| {
            let label = i % p.num_classes;
            let features = means[label]
                .iter()
                .map(|&mu| mu + p.noise_std * rng.sample::<f64, _>(StandardNormal))
                .collect();
            LabeledExample {
                id: i as u64,
                features,
                label,
            }
        })
        .collect();
    Dataset::new(examples, p.num_classes, p.feature_dim)
}

pub(crate) fn min_pairwise_distance(points: &[Vec<f64>]) -> f64 {
    let mut best = f64::INFINITY;
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            let d = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
            best = best.min(d);
        }
    }
    best
}

/// Replaces every label through `mapping` (fine label -> coarse label).
///
/// The mapped values must cover a contiguous range `[0, K)`; the result has
/// `K` classes. Ids and features are untouched.
pub fn coarsen_labels(dataset: &Dataset, mapping: &BTreeMap<usize, usize>) -> Result<Dataset> {
    let num_coarse = mapping.values().max().map_or(0, |m| m + 1);
    let mut seen = vec![false; num_coarse];
    for &c in mapping.values() {
        seen[c] = true;
    }
    if num_coarse == 0 || seen.iter().any(|s| !s) {
        return Err(Error::Config(format!(
            "coarse labels must form the contiguous range [0, {num_coarse})"
        )));
    }
    let examples = dataset
        .examples
        .iter()
        .map(|ex| {
            let label = *mapping
                .get(&ex.label)
                .ok_or_else(|| Error::data(format!("label {} has no coarse mapping", ex.label)))?;
            Ok(LabeledExample { label, ..ex.clone() })
        })
        .collect::<Result<Vec<_>>>()?;
    Dataset::new(examples, num_coarse, dataset.feature_dim)
}

pub fn cifar100_coarse_mapping() -> BTreeMap<usize, usize> {
    CIFAR100_FINE_TO_COARSE.iter().copied().enumerate().collect()
}
