//! Membership inference through confidence queries only.
//!
//! The attacker never sees parameters or gradients: everything goes through
//! [`ConfidenceOracle`], which returns a probability vector per query. The
//! score of an example is the confidence assigned to its true label; AUC is
//! the Mann-Whitney statistic of member scores against non-member scores.

use std::collections::HashSet;
use std::fmt::Write as _;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, LabeledExample};
use crate::error::{Error, Result};
use crate::model::{ConfidenceVector, ModelState};
use crate::seed::rng_from_seed;

/// Black-box query access to a trained classifier.
pub trait ConfidenceOracle {
    fn num_classes(&self) -> usize;
    fn query(&self, features: &[f64]) -> Result<ConfidenceVector>;
}

impl ConfidenceOracle for ModelState {
    fn num_classes(&self) -> usize {
        ModelState::num_classes(self)
    }

    fn query(&self, features: &[f64]) -> Result<ConfidenceVector> {
        self.predict_confidences(features)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MiaRecord {
    pub example_id: u64,
    pub score: f64,
    pub is_member: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AucResult {
    pub auc: f64,
    pub num_members: usize,
    pub num_nonmembers: usize,
    /// Member/non-member pairs with equal scores.
    pub tie_count: u64,
}

/// Confidence the oracle assigns to the example's true label.
pub fn mia_score<O: ConfidenceOracle + ?Sized>(oracle: &O, example: &LabeledExample) -> Result<f64> {
    if example.label >= oracle.num_classes() {
        return Err(Error::data(format!(
            "example {} has label {} outside [0, {})",
            example.id,
            example.label,
            oracle.num_classes()
        )));
    }
    Ok(oracle.query(&example.features)?.probs[example.label])
}

/// Draws `per_side` ids from each pool and scores them. Member records come
/// first, each side in ascending id order.
pub fn build_eval_records<O: ConfidenceOracle + ?Sized>(
    oracle: &O,
    dataset: &Dataset,
    members: &[u64],
    nonmembers: &[u64],
    per_side: usize,
    seed: u64,
) -> Result<Vec<MiaRecord>> {
    check_pools(members, nonmembers)?;
    if per_side == 0 || per_side > members.len().min(nonmembers.len()) {
        return Err(Error::Evaluation(format!(
            "per_side {per_side} must be in [1, {}]",
            members.len().min(nonmembers.len())
        )));
    }
    let mut rng = rng_from_seed(seed);
    let picked = [members, nonmembers].map(|pool| {
        index::sample(&mut rng, pool.len(), per_side)
            .into_iter()
            .map(|i| pool[i])
            .collect()
    });
    score_sides(oracle, dataset, picked)
}

/// How member and non-member ids are drawn for scoring.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalSampling {
    /// Independent uniform subsample of each pool.
    Uniform,
    /// Both sides drawn with the same per-class counts, so class composition
    /// cannot separate the pools on its own.
    #[default]
    LabelMatched,
}

fn ids_by_class(dataset: &Dataset, ids: &[u64]) -> Result<Vec<Vec<u64>>> {
    let mut out = vec![Vec::new(); dataset.num_classes()];
    for ex in dataset.gather(ids)? {
        out[ex.label].push(ex.id);
    }
    Ok(out)
}

/// Largest `per_side` that label-matched sampling can serve:
/// the sum over classes of `min(members_c, nonmembers_c)`.
pub fn matched_capacity(dataset: &Dataset, members: &[u64], nonmembers: &[u64]) -> Result<usize> {
    let m = ids_by_class(dataset, members)?;
    let n = ids_by_class(dataset, nonmembers)?;
    Ok(m.iter().zip(&n).map(|(a, b)| a.len().min(b.len())).sum())
}

/// Like [`build_eval_records`], but both sides share one label histogram.
///
/// Per-class quotas are `min(members_c, nonmembers_c)` scaled down to
/// `per_side` in total by largest-remainder rounding.
pub fn build_matched_eval_records<O: ConfidenceOracle + ?Sized>(
    oracle: &O,
    dataset: &Dataset,
    members: &[u64],
    nonmembers: &[u64],
    per_side: usize,
    seed: u64,
) -> Result<Vec<MiaRecord>> {
    check_pools(members, nonmembers)?;
    let m = ids_by_class(dataset, members)?;
    let n = ids_by_class(dataset, nonmembers)?;
    let caps: Vec<usize> = m.iter().zip(&n).map(|(a, b)| a.len().min(b.len())).collect();
    let capacity: usize = caps.iter().sum();
    if per_side == 0 || per_side > capacity {
        return Err(Error::Evaluation(format!(
            "per_side {per_side} must be in [1, {capacity}] for label-matched sampling"
        )));
    }
    let props: Vec<f64> = caps.iter().map(|&c| c as f64 / capacity as f64).collect();
    let quotas = crate::data::largest_remainder(&props, per_side);
    let mut rng = rng_from_seed(seed);
    let mut picked = [Vec::with_capacity(per_side), Vec::with_capacity(per_side)];
    for (class, &q) in quotas.iter().enumerate() {
        for (side, pool) in [&m[class], &n[class]].into_iter().enumerate() {
            picked[side].extend(index::sample(&mut rng, pool.len(), q).into_iter().map(|i| pool[i]));
        }
    }
    score_sides(oracle, dataset, picked)
}

fn check_pools(members: &[u64], nonmembers: &[u64]) -> Result<()> {
    if members.is_empty() || nonmembers.is_empty() {
        return Err(Error::Evaluation("member and non-member pools must be nonempty".into()));
    }
    let member_set: HashSet<u64> = members.iter().copied().collect();
    if let Some(id) = nonmembers.iter().find(|id| member_set.contains(id)) {
        return Err(Error::Evaluation(format!("example {id} is in both pools")));
    }
    Ok(())
}

fn score_sides<O: ConfidenceOracle + ?Sized>(
    oracle: &O,
    dataset: &Dataset,
    picked: [Vec<u64>; 2],
) -> Result<Vec<MiaRecord>> {
    let mut records = Vec::with_capacity(picked[0].len() + picked[1].len());
    for (mut ids, is_member) in picked.into_iter().zip([true, false]) {
        ids.sort_unstable();
        for ex in dataset.gather(&ids)? {
            records.push(MiaRecord {
                example_id: ex.id,
                score: mia_score(oracle, ex)?,
                is_member,
            });
        }
    }
    Ok(records)
}

fn split_scores(records: &[MiaRecord]) -> Result<(Vec<f64>, Vec<f64>)> {
    if let Some(r) = records.iter().find(|r| !r.score.is_finite()) {
        return Err(Error::Evaluation(format!(
            "record {} has a non-finite score",
            r.example_id
        )));
    }
    let members: Vec<f64> = records.iter().filter(|r| r.is_member).map(|r| r.score).collect();
    let nonmembers: Vec<f64> = records.iter().filter(|r| !r.is_member).map(|r| r.score).collect();
    if members.is_empty() || nonmembers.is_empty() {
        return Err(Error::Evaluation(
            "AUC needs at least one member and one non-member".into(),
        ));
    }
    Ok((members, nonmembers))
}

/// Mann-Whitney AUC: the fraction of (member, non-member) pairs where the
/// member scores higher, ties counting one half.
pub fn roc_auc(records: &[MiaRecord]) -> Result<AucResult> {
    let (mut members, mut nonmembers) = split_scores(records)?;
    members.sort_by(f64::total_cmp);
    nonmembers.sort_by(f64::total_cmp);
    // for each member, count non-members strictly below and equal via a merge walk
    let (mut wins, mut ties) = (0u64, 0u64);
    let (mut below, mut upto) = (0usize, 0usize);
    for &m in &members {
        while below < nonmembers.len() && nonmembers[below] < m {
            below += 1;
        }
        upto = upto.max(below);
        while upto < nonmembers.len() && nonmembers[upto] <= m {
            upto += 1;
        }
        wins += below as u64;
        ties += (upto - below) as u64;
    }
    let pairs = members.len() as u64 * nonmembers.len() as u64;
    Ok(AucResult {
        auc: (2 * wins + ties) as f64 / (2 * pairs) as f64,
        num_members: members.len(),
        num_nonmembers: nonmembers.len(),
        tie_count: ties,
    })
}

/// ROC operating points `(false positives, true positives)` in counts,
/// sweeping the threshold down through every distinct score.
pub fn roc_curve(records: &[MiaRecord]) -> Result<Vec<(usize, usize)>> {
    split_scores(records)?;
    let mut sorted: Vec<&MiaRecord> = records.iter().collect();
    sorted.sort_by(|a, b| b.score.total_cmp(&a.score));
    let mut points = vec![(0, 0)];
    let (mut fp, mut tp) = (0, 0);
    for (i, r) in sorted.iter().enumerate() {
        if r.is_member {
            tp += 1;
        } else {
            fp += 1;
        }
        let group_ends = sorted.get(i + 1).is_none_or(|next| next.score != r.score);
        if group_ends {
            points.push((fp, tp));
        }
    }
    Ok(points)
}

/// Trapezoidal area under [`roc_curve`], accumulated in integer counts.
pub fn roc_sweep_auc(records: &[MiaRecord]) -> Result<f64> {
    let points = roc_curve(records)?;
    let (fp_total, tp_total) = *points.last().expect("curve has an end point");
    let twice_area: u64 = points
        .windows(2)
        .map(|w| ((w[1].0 - w[0].0) * (w[0].1 + w[1].1)) as u64)
        .sum();
    Ok(twice_area as f64 / (2 * fp_total as u64 * tp_total as u64) as f64)
}

/// `example_id,score,is_member` with a header row.
pub fn records_to_csv(records: &[MiaRecord]) -> String {
    let mut out = String::from("example_id,score,is_member\n");
    for r in records {
        let _ = writeln!(out, "{},{},{}", r.example_id, r.score, r.is_member);
    }
    out
}
