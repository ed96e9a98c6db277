use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::point::{Label, Point};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RuleTarget {
    Metric(usize),
    L2Norm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparison {
    Gt,
    Ge,
    Lt,
    Le,
}

/// `metric[i] <op> c` or `l2norm <op> c`, with `<op>` one of `> >= < <=`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RulePredicate {
    pub target: RuleTarget,
    pub op: Comparison,
    pub threshold: f64,
}

impl RulePredicate {
    pub fn parse(text: &str) -> Result<Self> {
        let bad = |why: &str| Error::Config(format!("bad rule {text:?}: {why}"));
        let s = text.trim();
        let op_at = s
            .find(['<', '>'])
            .ok_or_else(|| bad("expected one of > >= < <="))?;
        let (lhs, rest) = s.split_at(op_at);
        let (op, rhs) = if let Some(r) = rest.strip_prefix(">=") {
            (Comparison::Ge, r)
        } else if let Some(r) = rest.strip_prefix("<=") {
            (Comparison::Le, r)
        } else if let Some(r) = rest.strip_prefix('>') {
            (Comparison::Gt, r)
        } else {
            (Comparison::Lt, &rest[1..])
        };
        let threshold: f64 = rhs
            .trim()
            .parse()
            .map_err(|_| bad("right-hand side must be a number"))?;
        if !threshold.is_finite() {
            return Err(bad("threshold must be finite"));
        }
        let lhs = lhs.trim();
        let target = if lhs.eq_ignore_ascii_case("l2norm") {
            RuleTarget::L2Norm
        } else if let Some(idx) = lhs
            .strip_prefix("metric[")
            .and_then(|r| r.strip_suffix(']'))
        {
            RuleTarget::Metric(idx.trim().parse().map_err(|_| bad("metric index must be an integer"))?)
        } else {
            return Err(bad("left-hand side must be metric[i] or l2norm"));
        };
        Ok(Self {
            target,
            op,
            threshold,
        })
    }

    /// Config error when the rule reads a metric the points do not have.
    pub fn check_dim(&self, dim: usize) -> Result<()> {
        match self.target {
            RuleTarget::Metric(i) if i >= dim => Err(Error::Config(format!(
                "rule reads metric[{i}] but points have {dim} metrics"
            ))),
            _ => Ok(()),
        }
    }

    pub fn value(&self, metrics: &[f64]) -> Result<f64> {
        match self.target {
            RuleTarget::Metric(i) => metrics.get(i).copied().ok_or_else(|| {
                Error::Config(format!("rule reads metric[{i}] but point has {} metrics", metrics.len()))
            }),
            RuleTarget::L2Norm => Ok(metrics.iter().map(|x| x * x).sum::<f64>().sqrt()),
        }
    }

    pub fn holds(&self, v: f64) -> bool {
        match self.op {
            Comparison::Gt => v > self.threshold,
            Comparison::Ge => v >= self.threshold,
            Comparison::Lt => v < self.threshold,
            Comparison::Le => v <= self.threshold,
        }
    }

    /// Outlier iff the predicate holds; the score is the compared value.
    pub fn classify(&self, point: &Point) -> Result<Label> {
        let v = self.value(&point.metrics)?;
        Ok(if self.holds(v) {
            Label::outlier(v)
        } else {
            Label::inlier(v)
        })
    }
}

impl fmt::Display for RulePredicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.target {
            RuleTarget::Metric(i) => write!(f, "metric[{i}]")?,
            RuleTarget::L2Norm => f.write_str("l2norm")?,
        }
        let op = match self.op {
            Comparison::Gt => ">",
            Comparison::Ge => ">=",
            Comparison::Lt => "<",
            Comparison::Le => "<=",
        };
        write!(f, " {op} {}", self.threshold)
    }
}

/// Outlier iff any input is; the score is the largest input score.
pub fn hybrid_or(labels: &[Label]) -> Result<Label> {
    let first = labels.first().ok_or(Error::Empty("hybrid_or input"))?;
    let score = labels.iter().map(|l| l.score).fold(first.score, f64::max);
    Ok(if labels.iter().any(Label::is_outlier) {
        Label::outlier(score)
    } else {
        Label::inlier(score)
    })
}
