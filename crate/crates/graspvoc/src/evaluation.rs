//! Grasp-region evaluation against multi-annotator ground truth, plus the
//! exact binomial preference test.
//!
//! Ground-truth points carry a weight equal to the fraction of annotators
//! that selected them. Predicted points outside the ground truth are
//! penalized at the smallest nonzero weight `1/K` (one dissenting
//! annotator): a zero penalty would reward unbounded over-prediction,
//! while a full penalty of 1 would drag precision below what coexisting
//! high-precision / lower-IoU results allow.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("point index {index} outside [0, {n_points})")]
    OutOfRange { index: usize, n_points: usize },
    #[error("no selections given")]
    NoSelections,
    #[error("ground truth selects no points")]
    EmptyGroundTruth,
    #[error("metrics list is empty")]
    EmptyList,
    #[error("no responses chose any grasp")]
    NoGraspResponses,
    #[error("null probability {0} outside (0, 1)")]
    BadNullProbability(f64),
    #[error("tally parts sum to {parts}, expected n_responses = {expected}")]
    InconsistentTally { parts: u64, expected: u64 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("bad ground-truth file: {0}")]
    BadFile(#[from] serde_json::Error),
}

/// Consolidated multi-annotator ground truth: per-point selection counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroundTruth {
    counts: Vec<u32>,
    n_participants: u32,
}

impl GroundTruth {
    pub fn n_points(&self) -> usize {
        self.counts.len()
    }

    pub fn n_participants(&self) -> u32 {
        self.n_participants
    }

    /// Per-point selection counts (the Fig.-4-style heat values).
    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    /// Points selected by at least one participant.
    pub fn selected_points(&self) -> BTreeSet<usize> {
        self.counts
            .iter()
            .enumerate()
            .filter_map(|(i, &c)| (c > 0).then_some(i))
            .collect()
    }
}

/// Merges per-participant selections into per-point counts.
pub fn consolidate(
    selections: &[BTreeSet<usize>],
    n_points: usize,
) -> Result<GroundTruth, EvalError> {
    if selections.is_empty() {
        return Err(EvalError::NoSelections);
    }
    let mut counts = vec![0u32; n_points];
    for sel in selections {
        for &i in sel {
            if i >= n_points {
                return Err(EvalError::OutOfRange { index: i, n_points });
            }
            counts[i] += 1;
        }
    }
    if counts.iter().all(|&c| c == 0) {
        return Err(EvalError::EmptyGroundTruth);
    }
    Ok(GroundTruth {
        counts,
        n_participants: selections.len() as u32,
    })
}

/// Weighted region metrics, each in [0, 1].
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct RegionMetrics {
    pub weighted_iou: f64,
    pub precision: f64,
    pub recall: f64,
}

/// Compares a predicted point set against the consolidated ground truth.
///
/// With `w(i) = counts[i] / K` and `GT = {i : counts[i] ≥ 1}`:
///
/// * `weighted_iou = Σ_{pred ∩ GT} w / (Σ_GT w + |pred ∖ GT| / K)`
/// * `precision   = Σ_{pred ∩ GT} w / (Σ_{pred ∩ GT} w + |pred ∖ GT| / K)`
/// * `recall      = Σ_{pred ∩ GT} w / Σ_GT w`
///
/// An empty prediction scores 0 on all three.
pub fn region_metrics(
    pred: &BTreeSet<usize>,
    gt: &GroundTruth,
) -> Result<RegionMetrics, EvalError> {
    let n = gt.n_points();
    if let Some(&bad) = pred.iter().find(|&&i| i >= n) {
        return Err(EvalError::OutOfRange {
            index: bad,
            n_points: n,
        });
    }
    if pred.is_empty() {
        return Ok(RegionMetrics {
            weighted_iou: 0.0,
            precision: 0.0,
            recall: 0.0,
        });
    }
    let k = gt.n_participants() as f64;
    let mut intersection = 0.0; // Σ w over pred ∩ GT
    let mut pred_only = 0usize; // |pred ∖ GT|
    for &i in pred {
        if gt.counts[i] > 0 {
            intersection += gt.counts[i] as f64 / k;
        } else {
            pred_only += 1;
        }
    }
    let gt_weight: f64 = gt.counts.iter().map(|&c| c as f64 / k).sum();
    let pred_only_weight = pred_only as f64 / k;

    Ok(RegionMetrics {
        weighted_iou: intersection / (gt_weight + pred_only_weight),
        precision: intersection / (intersection + pred_only_weight),
        recall: intersection / gt_weight,
    })
}

/// Field-wise arithmetic mean over repeated runs. Identical runs average
/// to themselves exactly (no sum/divide round-off), so deterministic
/// repeats stay byte-stable.
pub fn average_runs(runs: &[RegionMetrics]) -> Result<RegionMetrics, EvalError> {
    if runs.is_empty() {
        return Err(EvalError::EmptyList);
    }
    if runs.iter().all(|m| m == &runs[0]) {
        return Ok(runs[0]);
    }
    let n = runs.len() as f64;
    Ok(RegionMetrics {
        weighted_iou: runs.iter().map(|m| m.weighted_iou).sum::<f64>() / n,
        precision: runs.iter().map(|m| m.precision).sum::<f64>() / n,
        recall: runs.iter().map(|m| m.recall).sum::<f64>() / n,
    })
}

/// Survey outcome of one preference study: how often each option was chosen.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct PreferenceTally {
    pub n_responses: u64,
    pub chosen_optimal: u64,
    pub chosen_controls: [u64; 3],
    pub chosen_none: u64,
}

impl PreferenceTally {
    pub fn validate(&self) -> Result<(), EvalError> {
        let parts = self.chosen_optimal
            + self.chosen_controls.iter().sum::<u64>()
            + self.chosen_none;
        if parts != self.n_responses {
            return Err(EvalError::InconsistentTally {
                parts,
                expected: self.n_responses,
            });
        }
        Ok(())
    }

    /// Responses that chose any grasp ("none" answers are excluded: the
    /// null hypothesis is over the four grasp options).
    pub fn n_grasp_responses(&self) -> u64 {
        self.chosen_optimal + self.chosen_controls.iter().sum::<u64>()
    }
}

/// One-sided exact binomial test: P[X ≥ chosen_optimal] for
/// X ~ Binomial(n, p0) with n the grasp-choosing responses. `p0` defaults
/// to 1/4 in callers (four grasp options under the equal-choice null).
pub fn binomial_preference_test(tally: &PreferenceTally, p0: f64) -> Result<f64, EvalError> {
    tally.validate()?;
    if !(p0 > 0.0 && p0 < 1.0) {
        return Err(EvalError::BadNullProbability(p0));
    }
    let n = tally.n_grasp_responses();
    if n == 0 {
        return Err(EvalError::NoGraspResponses);
    }
    Ok(binomial_upper_tail(n, tally.chosen_optimal, p0))
}

/// Exact upper-tail probability P[X ≥ k] for X ~ Binomial(n, p).
///
/// Terms are accumulated from log-factorials, which stays in range for
/// n up to 1e5 and beyond. Single-term tails (k = 0, 1, n) are computed by
/// direct powers instead, avoiding exp/ln round-off on closed forms.
pub fn binomial_upper_tail(n: u64, k: u64, p: f64) -> f64 {
    debug_assert!(p > 0.0 && p < 1.0);
    if k == 0 {
        return 1.0;
    }
    if k > n {
        return 0.0;
    }
    let q = 1.0 - p;
    if k == 1 {
        // P[X ≥ 1] = 1 − q^n
        return 1.0 - pow_u64(q, n);
    }
    if k == n {
        return pow_u64(p, n);
    }

    // cumulative log-factorials: lnfact[i] = ln(i!)
    let n_us = n as usize;
    let mut lnfact = vec![0.0f64; n_us + 1];
    for i in 1..=n_us {
        lnfact[i] = lnfact[i - 1] + (i as f64).ln();
    }
    let ln_p = p.ln();
    let ln_q = q.ln();

    // summing j from n down to k makes P[X ≥ k] ≥ P[X ≥ k+1] exact:
    // the partial sums of the larger tail are a prefix of the smaller one
    let mut sum = 0.0f64;
    let mut j = n;
    loop {
        let ln_term = lnfact[n_us] - lnfact[j as usize] - lnfact[(n - j) as usize]
            + j as f64 * ln_p
            + (n - j) as f64 * ln_q;
        sum += ln_term.exp();
        if j == k {
            break;
        }
        j -= 1;
    }
    sum.min(1.0)
}

/// Plain repeated multiplication; exact for dyadic bases at small exponents.
fn pow_u64(base: f64, exp: u64) -> f64 {
    let mut out = 1.0;
    for _ in 0..exp {
        out *= base;
        if out == 0.0 {
            break;
        }
    }
    out
}

/// Ground-truth file: per-participant point-index selections for one
/// task-object pair. Counts are derived on load.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq, Eq)]
pub struct GroundTruthFile {
    pub object_label: String,
    pub task: String,
    pub n_points: usize,
    pub selections: Vec<Vec<usize>>,
}

impl GroundTruthFile {
    pub fn read(path: impl AsRef<Path>) -> Result<Self, EvalError> {
        let text = fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), EvalError> {
        let mut s = serde_json::to_string_pretty(self).expect("ground truth serializes");
        s.push('\n');
        fs::write(path, s)?;
        Ok(())
    }

    pub fn consolidate(&self) -> Result<GroundTruth, EvalError> {
        let sets: Vec<BTreeSet<usize>> = self
            .selections
            .iter()
            .map(|s| s.iter().copied().collect())
            .collect();
        consolidate(&sets, self.n_points)
    }
}

/// Metrics for one task-object pair.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PairMetrics {
    pub object_label: String,
    pub task: String,
    #[serde(flatten)]
    pub metrics: RegionMetrics,
}

/// Full evaluation report: per-pair rows plus the uniform macro average.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MetricsReport {
    pub pairs: Vec<PairMetrics>,
    pub macro_average: RegionMetrics,
}

impl MetricsReport {
    /// Builds a report with pairs sorted by (object_label, task) and a
    /// uniformly weighted macro average.
    pub fn new(mut pairs: Vec<PairMetrics>) -> Result<Self, EvalError> {
        if pairs.is_empty() {
            return Err(EvalError::EmptyList);
        }
        pairs.sort_by(|a, b| {
            (a.object_label.as_str(), a.task.as_str())
                .cmp(&(b.object_label.as_str(), b.task.as_str()))
        });
        let metrics: Vec<RegionMetrics> = pairs.iter().map(|p| p.metrics).collect();
        let macro_average = average_runs(&metrics)?;
        Ok(Self {
            pairs,
            macro_average,
        })
    }

    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// One CSV row per pair plus a final macro-average row.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("object_label,task,weighted_iou,precision,recall\n");
        for p in &self.pairs {
            out.push_str(&format!(
                "{},{},{:.6},{:.6},{:.6}\n",
                p.object_label, p.task, p.metrics.weighted_iou, p.metrics.precision,
                p.metrics.recall
            ));
        }
        out.push_str(&format!(
            "macro_average,,{:.6},{:.6},{:.6}\n",
            self.macro_average.weighted_iou,
            self.macro_average.precision,
            self.macro_average.recall
        ));
        out
    }
}
