//! Drift analytics: Pearson correlation, per-phase deltas and aggregation
//! across permutations.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::schedule::{Paradigm, PhaseMetrics, PhasePlan, NUM_PHASES};

/// Sample Pearson correlation, clamped to `[-1, 1]`.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::DegenerateSeries(format!(
            "need two equal-length series of at least 2 points, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let constant = |s: &[f64]| s.iter().all(|&v| v == s[0]);
    if constant(x) || constant(y) {
        return Err(Error::DegenerateSeries("zero variance".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::DegenerateSeries("zero variance".into()));
    }
    let r = sxy / (sxx * syy).sqrt();
    if !r.is_finite() {
        return Err(Error::DegenerateSeries(format!("correlation is {r}")));
    }
    Ok(r.clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftDelta {
    pub phase_index: usize,
    pub delta_auc: f64,
    pub delta_train_acc: f64,
}

/// Phase-to-phase changes in MIA AUC and training accuracy.
pub fn drift_deltas(metrics: &[PhaseMetrics]) -> Result<Vec<DriftDelta>> {
    if metrics.len() < 2 {
        return Err(Error::Config(format!(
            "drift needs at least 2 phases, got {}",
            metrics.len()
        )));
    }
    Ok(metrics
        .windows(2)
        .map(|w| DriftDelta {
            phase_index: w[1].phase_index,
            delta_auc: w[1].mia_auc - w[0].mia_auc,
            delta_train_acc: w[1].train_accuracy - w[0].train_accuracy,
        })
        .collect())
}

/// Linear-interpolation quantile over sorted data (R type 7).
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of an empty series");
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FiveNumberSummary {
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl FiveNumberSummary {
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        Some(Self {
            min: v[0],
            q1: quantile(&v, 0.25),
            median: quantile(&v, 0.5),
            q3: quantile(&v, 0.75),
            max: v[v.len() - 1],
        })
    }
}

/// Metrics of one permutation run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationResult {
    pub plan: PhasePlan,
    pub phases: Vec<PhaseMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PermutationSummary {
    pub plan: PhasePlan,
    pub phases: Vec<PhaseMetrics>,
    /// `None` when either series is constant.
    pub pearson_train_auc: Option<f64>,
    pub deltas: Vec<DriftDelta>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseMean {
    pub phase_index: usize,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
    pub mia_auc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriftReport {
    pub config_digest: String,
    pub paradigm: Paradigm,
    pub client_count: usize,
    /// Sorted by permutation.
    pub permutations: Vec<PermutationSummary>,
    pub phase_means: Vec<PhaseMean>,
    pub correlation_summary: Option<FiveNumberSummary>,
    pub mean_pearson: Option<f64>,
    /// Permutations left out of the summary because their correlation was undefined.
    pub degenerate_count: usize,
    /// Correlation over all (train accuracy, AUC) points pooled across permutations.
    pub pooled_pearson: Option<f64>,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    sum / n as f64
}

/// Summarizes permutation runs of one (paradigm, client count) cell group.
/// The result does not depend on the order of `results`.
pub fn aggregate(results: &[PermutationResult], client_count: usize, config_digest: &str) -> Result<DriftReport> {
    let Some(first) = results.first() else {
        return Err(Error::Config("aggregation needs at least one permutation".into()));
    };
    let paradigm = first.plan.paradigm;
    for r in results {
        if r.plan.paradigm != paradigm {
            return Err(Error::Config("cannot aggregate across paradigms".into()));
        }
        if r.phases.len() != NUM_PHASES {
            return Err(Error::Config(format!(
                "permutation {} has {} phases, expected {NUM_PHASES}",
                r.plan.permutation,
                r.phases.len()
            )));
        }
    }
    let mut sorted: Vec<&PermutationResult> = results.iter().collect();
    sorted.sort_by(|a, b| {
        a.plan.cmp(&b.plan).then_with(|| {
            let key = |r: &PermutationResult| -> Vec<u64> {
                r.phases
                    .iter()
                    .flat_map(|m| [m.train_accuracy, m.test_accuracy, m.mia_auc])
                    .map(f64::to_bits)
                    .collect()
            };
            key(a).cmp(&key(b))
        })
    });

    let permutations = sorted
        .iter()
        .map(|r| {
            let train: Vec<f64> = r.phases.iter().map(|m| m.train_accuracy).collect();
            let auc: Vec<f64> = r.phases.iter().map(|m| m.mia_auc).collect();
            Ok(PermutationSummary {
                plan: r.plan,
                phases: r.phases.clone(),
                pearson_train_auc: pearson(&train, &auc).ok(),
                deltas: drift_deltas(&r.phases)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let phase_means = (0..NUM_PHASES)
        .map(|k| PhaseMean {
            phase_index: k,
            train_accuracy: mean(sorted.iter().map(|r| r.phases[k].train_accuracy)),
            test_accuracy: mean(sorted.iter().map(|r| r.phases[k].test_accuracy)),
            mia_auc: mean(sorted.iter().map(|r| r.phases[k].mia_auc)),
        })
        .collect();

    let valid: Vec<f64> = permutations.iter().filter_map(|p| p.pearson_train_auc).collect();
    let pooled_train: Vec<f64> = sorted
        .iter()
        .flat_map(|r| r.phases.iter().map(|m| m.train_accuracy))
        .collect();
    let pooled_auc: Vec<f64> = sorted.iter().flat_map(|r| r.phases.iter().map(|m| m.mia_auc)).collect();
    Ok(DriftReport {
        config_digest: config_digest.to_string(),
        paradigm,
        client_count,
        degenerate_count: permutations.len() - valid.len(),
        correlation_summary: FiveNumberSummary::from_values(&valid),
        mean_pearson: (!valid.is_empty()).then(|| mean(valid.iter().copied())),
        pooled_pearson: pearson(&pooled_train, &pooled_auc).ok(),
        permutations,
        phase_means,
    })
}

impl DriftReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// `permutation,phase,train_acc,test_acc,mia_auc`, one row per phase.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("permutation,phase,train_acc,test_acc,mia_auc\n");
        for p in &self.permutations {
            for m in &p.phases {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{}",
                    p.plan.permutation, m.phase_index, m.train_accuracy, m.test_accuracy, m.mia_auc
                );
            }
        }
        out
    }
}
