//! The unit of analysis and the labels attached to it by classifiers.

use serde::{Deserialize, Serialize};

/// Dictionary-encoded attribute value.
pub type AttrId = u32;

/// Reserved id for a missing attribute value. Never enters explanations.
pub const NULL_ATTR: AttrId = AttrId::MAX;

/// A metric vector plus one encoded attribute per configured attribute column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub metrics: Vec<f64>,
    pub attributes: Vec<AttrId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<f64>,
    /// Ground truth carried by synthetic generators for evaluation only.
    /// Classifiers and explainers never read it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<bool>,
}

impl Point {
    pub fn new(metrics: Vec<f64>, attributes: Vec<AttrId>) -> Self {
        Self {
            metrics,
            attributes,
            timestamp: None,
            truth: None,
        }
    }

    pub fn with_timestamp(mut self, ts: f64) -> Self {
        self.timestamp = Some(ts);
        self
    }

    pub fn with_truth(mut self, truth: bool) -> Self {
        self.truth = Some(truth);
        self
    }

    pub fn dim(&self) -> usize {
        self.metrics.len()
    }

    /// Attribute ids eligible for explanation: NULLs dropped, duplicates removed.
    pub fn items(&self) -> Vec<AttrId> {
        let mut items: Vec<AttrId> = self
            .attributes
            .iter()
            .copied()
            .filter(|&a| a != NULL_ATTR)
            .collect();
        items.sort_unstable();
        items.dedup();
        items
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Class {
    Inlier,
    Outlier,
}

/// Classifier output: the class and the raw score that produced it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Label {
    pub class: Class,
    pub score: f64,
}

impl Label {
    pub fn inlier(score: f64) -> Self {
        Self {
            class: Class::Inlier,
            score,
        }
    }

    pub fn outlier(score: f64) -> Self {
        Self {
            class: Class::Outlier,
            score,
        }
    }

    pub fn is_outlier(&self) -> bool {
        self.class == Class::Outlier
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledPoint {
    pub label: Label,
    pub point: Point,
}
