//! Density scoring, percentile thresholds, and rule-based supervision.

mod mad;
mod mcd;
mod rule;
mod threshold;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::operator::Classifier;
use crate::point::{LabeledPoint, Point};
use crate::query::McdParams;

pub use mad::{median_in_place, MadModel};
pub use mcd::{train_fastmcd, train_fastmcd_traced, DeterminantTrace, McdModel};
pub use rule::{hybrid_or, Comparison, RulePredicate, RuleTarget};
pub use threshold::{classify, ThresholdState};

/// Mean / standard-deviation baseline. Not robust to contamination.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ZScoreModel {
    pub mean: f64,
    pub sd: f64,
}

impl ZScoreModel {
    pub fn new(mean: f64, sd: f64) -> Result<Self> {
        if !(sd > 0.0) {
            return Err(Error::Degenerate(format!("z-score needs sd > 0, got {sd}")));
        }
        Ok(Self { mean, sd })
    }

    /// Population mean and standard deviation.
    pub fn train(sample: &[f64]) -> Result<Self> {
        if sample.is_empty() {
            return Err(Error::Empty("z-score training sample"));
        }
        let n = sample.len() as f64;
        let mean = sample.iter().sum::<f64>() / n;
        let var = sample.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        Self::new(mean, var.sqrt())
    }

    pub fn score(&self, x: f64) -> f64 {
        (x - self.mean).abs() / self.sd
    }
}

pub fn score_zscore(mean: f64, sd: f64, x: f64) -> Result<f64> {
    Ok(ZScoreModel::new(mean, sd)?.score(x))
}

/// MAD for one metric, FastMCD for two or more.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "camelCase")]
pub enum DensityModel {
    Mad(MadModel),
    Mcd(McdModel),
}

impl DensityModel {
    pub fn train(sample: &[Vec<f64>], mcd: &McdParams, seed: u64) -> Result<Self> {
        let d = sample.first().map(Vec::len).ok_or(Error::Empty("training sample"))?;
        if d == 1 {
            let xs: Vec<f64> = sample.iter().map(|x| x[0]).collect();
            Ok(DensityModel::Mad(MadModel::train(&xs)?))
        } else {
            Ok(DensityModel::Mcd(train_fastmcd(sample, mcd, seed)?))
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            DensityModel::Mad(_) => 1,
            DensityModel::Mcd(m) => m.dim(),
        }
    }

    pub fn family(&self) -> &'static str {
        match self {
            DensityModel::Mad(_) => "mad",
            DensityModel::Mcd(_) => "mcd",
        }
    }

    /// Caller guarantees `metrics.len() == self.dim()`.
    pub fn score(&self, metrics: &[f64]) -> f64 {
        match self {
            DensityModel::Mad(m) => m.score(metrics[0]),
            DensityModel::Mcd(m) => m.score_unchecked(metrics),
        }
    }

    pub fn try_score(&self, metrics: &[f64]) -> Result<f64> {
        if metrics.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: metrics.len(),
            });
        }
        Ok(self.score(metrics))
    }
}

/// Area under the ROC curve of `scores` against `truth` (higher score means
/// more outlying), with tied scores counted as half.
pub fn auc(scores: &[f64], truth: &[bool]) -> f64 {
    assert_eq!(scores.len(), truth.len());
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let positives = truth.iter().filter(|&&t| t).count() as f64;
    let negatives = truth.len() as f64 - positives;
    if positives == 0.0 || negatives == 0.0 {
        return f64::NAN;
    }
    // Sum of positive ranks with midranks for ties.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += idx[i..=j].iter().filter(|&&k| truth[k]).count() as f64 * mid;
        i = j + 1;
    }
    (rank_sum - positives * (positives + 1.0) / 2.0) / (positives * negatives)
}

/// ROC area of a hard classifier: the mean of its true positive and true
/// negative rates.
pub fn binary_auc(predicted: &[bool], truth: &[bool]) -> f64 {
    assert_eq!(predicted.len(), truth.len());
    let (mut tp, mut fneg, mut tn, mut fp) = (0.0, 0.0, 0.0, 0.0);
    for (&p, &t) in predicted.iter().zip(truth) {
        match (p, t) {
            (true, true) => tp += 1.0,
            (false, true) => fneg += 1.0,
            (false, false) => tn += 1.0,
            (true, false) => fp += 1.0,
        }
    }
    (tp / (tp + fneg) + tn / (tn + fp)) / 2.0
}

/// Labels every point with a fixed model and cutoff.
pub struct ModelClassifier {
    pub model: DensityModel,
    pub cutoff: f64,
}

impl Classifier for ModelClassifier {
    fn classify(&mut self, batch: Vec<Point>) -> Result<Vec<LabeledPoint>> {
        batch
            .into_iter()
            .map(|point| {
                let score = self.model.try_score(&point.metrics)?;
                Ok(LabeledPoint {
                    label: classify(score, self.cutoff),
                    point,
                })
            })
            .collect()
    }
}

pub struct RuleClassifier(pub RulePredicate);

impl Classifier for RuleClassifier {
    fn classify(&mut self, batch: Vec<Point>) -> Result<Vec<LabeledPoint>> {
        batch
            .into_iter()
            .map(|point| {
                Ok(LabeledPoint {
                    label: self.0.classify(&point)?,
                    point,
                })
            })
            .collect()
    }
}
