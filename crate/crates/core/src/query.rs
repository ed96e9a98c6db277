//! Query configuration and its validation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::SourceDescriptor;

pub const DEFAULT_MIN_SUPPORT: f64 = 0.001;
pub const DEFAULT_MIN_RISK_RATIO: f64 = 3.0;
pub const DEFAULT_OUTLIER_PERCENTILE: f64 = 0.01;
pub const DEFAULT_RESERVOIR_SIZE: usize = 10_000;
pub const DEFAULT_AMC_STABLE_SIZE: usize = 10_000;
pub const DEFAULT_DECAY_RATE: f64 = 0.01;
pub const DEFAULT_DECAY_TUPLES: u64 = 100_000;
pub const DEFAULT_TRAINING_CAP: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "camelCase")]
pub enum Mode {
    #[default]
    OneShot,
    Streaming,
}

/// Length of a decay (or emission) period.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum Period {
    Tuples(u64),
    Seconds(f64),
}

impl Default for Period {
    fn default() -> Self {
        Period::Tuples(DEFAULT_DECAY_TUPLES)
    }
}

impl Period {
    fn is_positive(&self) -> bool {
        match *self {
            Period::Tuples(n) => n > 0,
            Period::Seconds(s) => s.is_finite() && s > 0.0,
        }
    }
}

/// How the input and score reservoirs sample the stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(rename_all = "camelCase", tag = "policy")]
pub enum SamplingPolicy {
    /// Damped reservoir; every tuple is offered with unit weight.
    #[default]
    Adr,
    /// Uniform sample per decay period, folded into the damped reservoir at each tick.
    #[serde(rename_all = "camelCase")]
    PerPeriod { period_sample_size: usize },
    /// The mean of each sub-period enters the damped reservoir as one observation.
    #[serde(rename_all = "camelCase")]
    TimeAverage { subperiod: Period },
    /// Exponential bias per tuple, independent of decay ticks (comparison mode).
    PerTupleDecay,
    /// Classic uniform reservoir without decay (comparison mode).
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct McdParams {
    pub h_fraction: f64,
    pub n_starts: usize,
    pub stopping_epsilon: f64,
    pub max_iterations: usize,
}

impl Default for McdParams {
    fn default() -> Self {
        Self {
            h_fraction: 0.5,
            n_starts: 5,
            stopping_epsilon: 1e-3,
            max_iterations: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum TransformSpec {
    Identity,
    Standardize,
}

/// Full query configuration. Missing JSON fields take their defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct QuerySpec {
    pub source: SourceDescriptor,
    pub metric_columns: Vec<String>,
    pub attribute_columns: Vec<String>,
    pub min_support: f64,
    pub min_risk_ratio: f64,
    pub outlier_percentile: f64,
    pub reservoir_size: usize,
    pub amc_stable_size: usize,
    pub decay_rate: f64,
    pub decay_period: Period,
    pub mode: Mode,
    pub random_seed: u64,

    pub transforms: Vec<TransformSpec>,
    pub sampling: SamplingPolicy,
    /// Streaming emission schedule; `None` emits once at end of stream.
    pub emit_every: Option<Period>,
    /// Significance level p for the reported risk-ratio intervals.
    pub significance: f64,
    pub strict_subsets: bool,
    pub training_cap: usize,
    /// Bucket edges for numeric attribute columns, keyed by column name.
    pub attribute_buckets: BTreeMap<String, Vec<f64>>,
    /// Optional rule predicate OR-ed with the density classifier, e.g. `"metric[0] > 100"`.
    pub rule: Option<String>,
    pub mcd: McdParams,
    pub drift_check: bool,
}

impl Default for QuerySpec {
    fn default() -> Self {
        Self {
            source: SourceDescriptor::default(),
            metric_columns: Vec::new(),
            attribute_columns: Vec::new(),
            min_support: DEFAULT_MIN_SUPPORT,
            min_risk_ratio: DEFAULT_MIN_RISK_RATIO,
            outlier_percentile: DEFAULT_OUTLIER_PERCENTILE,
            reservoir_size: DEFAULT_RESERVOIR_SIZE,
            amc_stable_size: DEFAULT_AMC_STABLE_SIZE,
            decay_rate: DEFAULT_DECAY_RATE,
            decay_period: Period::default(),
            mode: Mode::OneShot,
            random_seed: 0,
            transforms: Vec::new(),
            sampling: SamplingPolicy::Adr,
            emit_every: None,
            significance: 0.05,
            strict_subsets: false,
            training_cap: DEFAULT_TRAINING_CAP,
            attribute_buckets: BTreeMap::new(),
            rule: None,
            mcd: McdParams::default(),
            drift_check: true,
        }
    }
}

impl QuerySpec {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Retention multiplier applied at each decay tick.
    pub fn retention(&self) -> f64 {
        1.0 - self.decay_rate
    }

    pub fn validate(&self) -> Result<QuerySpec> {
        validate_query_spec(self)
    }
}

fn in_open_unit(x: f64) -> bool {
    x > 0.0 && x < 1.0
}

/// Range-checks every parameter and fills schema defaults for synthetic
/// sources. Idempotent: validating a validated spec returns it unchanged.
pub fn validate_query_spec(spec: &QuerySpec) -> Result<QuerySpec> {
    let mut errors = Vec::new();
    let mut out = spec.clone();

    if !(spec.min_support > 0.0 && spec.min_support <= 1.0) {
        errors.push(format!("minSupport must be in (0, 1], got {}", spec.min_support));
    }
    if !(spec.min_risk_ratio.is_finite() && spec.min_risk_ratio > 0.0) {
        errors.push(format!("minRiskRatio must be > 0, got {}", spec.min_risk_ratio));
    }
    if !in_open_unit(spec.outlier_percentile) {
        errors.push(format!(
            "outlierPercentile must be in (0, 1), got {}",
            spec.outlier_percentile
        ));
    }
    if spec.reservoir_size == 0 {
        errors.push("reservoirSize must be >= 1".to_string());
    }
    if spec.amc_stable_size == 0 {
        errors.push("amcStableSize must be >= 1".to_string());
    }
    if !(spec.decay_rate >= 0.0 && spec.decay_rate < 1.0) {
        errors.push(format!("decayRate must be in [0, 1), got {}", spec.decay_rate));
    }
    if !spec.decay_period.is_positive() {
        errors.push("decayPeriod must be positive".to_string());
    }
    if let Some(p) = spec.emit_every {
        if !p.is_positive() {
            errors.push("emitEvery must be positive".to_string());
        }
    }
    if !in_open_unit(spec.significance) {
        errors.push(format!("significance must be in (0, 1), got {}", spec.significance));
    }
    if spec.training_cap == 0 {
        errors.push("trainingCap must be >= 1".to_string());
    }
    match spec.sampling {
        SamplingPolicy::PerPeriod { period_sample_size: 0 } => {
            errors.push("sampling.periodSampleSize must be >= 1".to_string())
        }
        SamplingPolicy::TimeAverage { subperiod } if !subperiod.is_positive() => {
            errors.push("sampling.subperiod must be positive".to_string())
        }
        _ => {}
    }
    let mcd = &spec.mcd;
    if !(mcd.h_fraction >= 0.5 && mcd.h_fraction <= 1.0) {
        errors.push(format!("mcd.hFraction must be in [0.5, 1], got {}", mcd.h_fraction));
    }
    if mcd.n_starts == 0 || mcd.max_iterations == 0 {
        errors.push("mcd.nStarts and mcd.maxIterations must be >= 1".to_string());
    }
    if !(mcd.stopping_epsilon.is_finite() && mcd.stopping_epsilon >= 0.0) {
        errors.push("mcd.stoppingEpsilon must be >= 0".to_string());
    }
    for (column, edges) in &spec.attribute_buckets {
        if edges.is_empty() || edges.windows(2).any(|w| !(w[0] < w[1])) {
            errors.push(format!(
                "attributeBuckets.{column} must be a nonempty strictly increasing list"
            ));
        }
    }
    if let Some(rule) = &spec.rule {
        if let Err(e) = crate::classify::RulePredicate::parse(rule) {
            errors.push(format!("rule: {e}"));
        }
    }

    errors.extend(spec.source.validate());
    if let Some((metrics, attrs)) = spec.source.builtin_schema() {
        if out.metric_columns.is_empty() {
            out.metric_columns = metrics.iter().map(|s| s.to_string()).collect();
        }
        if out.attribute_columns.is_empty() {
            out.attribute_columns = attrs.iter().map(|s| s.to_string()).collect();
        }
        for c in &out.metric_columns {
            if !metrics.contains(&c.as_str()) {
                errors.push(format!("metric column {c:?} not produced by this source"));
            }
        }
        for c in &out.attribute_columns {
            if !attrs.contains(&c.as_str()) {
                errors.push(format!("attribute column {c:?} not produced by this source"));
            }
        }
    }
    if out.metric_columns.is_empty() {
        errors.push("metricColumns must name at least one column".to_string());
    }

    if errors.is_empty() {
        Ok(out)
    } else {
        Err(Error::InvalidSpec(errors))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{SourceDescriptor, SourceKind};

    fn csv_spec() -> QuerySpec {
        QuerySpec {
            source: SourceDescriptor::csv("data.csv"),
            metric_columns: vec!["power".into()],
            attribute_columns: vec!["device".into()],
            ..Default::default()
        }
    }

    #[test]
    fn defaults_fill_thresholds() {
        let spec = QuerySpec::from_json(
            r#"{"source":{"kind":"csvFile","path":"x.csv"},"metricColumns":["m"]}"#,
        )
        .unwrap();
        let spec = spec.validate().unwrap();
        assert_eq!(spec.min_support, 0.001);
        assert_eq!(spec.min_risk_ratio, 3.0);
        assert_eq!(spec.outlier_percentile, 0.01);
        assert_eq!(spec.reservoir_size, 10_000);
        assert_eq!(spec.amc_stable_size, 10_000);
        assert_eq!(spec.decay_rate, 0.01);
        assert_eq!(spec.decay_period, Period::Tuples(100_000));
    }

    #[test]
    fn negative_ratio_rejected() {
        let spec = QuerySpec {
            min_risk_ratio: -1.0,
            ..csv_spec()
        };
        match spec.validate() {
            Err(Error::InvalidSpec(errs)) => {
                assert_eq!(errs.len(), 1);
                assert!(errs[0].contains("minRiskRatio"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn full_decay_rejected() {
        let spec = QuerySpec {
            decay_rate: 1.0,
            ..csv_spec()
        };
        let err = spec.validate().unwrap_err();
        assert!(err.to_string().contains("decayRate"));
    }

    #[test]
    fn percentile_bounds_excluded() {
        for p in [0.0, 1.0, -0.5, f64::NAN] {
            let spec = QuerySpec {
                outlier_percentile: p,
                ..csv_spec()
            };
            assert!(spec.validate().is_err(), "{p}");
        }
    }

    #[test]
    fn every_violation_is_named() {
        let spec = QuerySpec {
            min_support: 0.0,
            outlier_percentile: 2.0,
            decay_period: Period::Tuples(0),
            ..csv_spec()
        };
        let Err(Error::InvalidSpec(errs)) = spec.validate() else {
            panic!()
        };
        assert_eq!(errs.len(), 3, "{errs:?}");
    }

    #[test]
    fn synthetic_schema_filled() {
        let spec = QuerySpec {
            source: SourceDescriptor::new(SourceKind::SyntheticDevices(Default::default())),
            ..Default::default()
        };
        let v = spec.validate().unwrap();
        assert_eq!(v.metric_columns, vec!["value"]);
        assert_eq!(v.attribute_columns, vec!["device"]);
    }

    #[test]
    fn normalization_is_idempotent() {
        let spec = QuerySpec {
            source: SourceDescriptor::new(SourceKind::SyntheticDevices(Default::default())),
            ..Default::default()
        };
        let once = spec.validate().unwrap();
        let twice = once.validate().unwrap();
        assert_eq!(once, twice);
        let c = csv_spec().validate().unwrap();
        assert_eq!(c.validate().unwrap(), c);
    }

    #[test]
    fn json_roundtrip_uses_spec_field_names() {
        let spec = csv_spec();
        let text = serde_json::to_string(&spec).unwrap();
        for field in [
            "metricColumns",
            "attributeColumns",
            "minSupport",
            "minRiskRatio",
            "outlierPercentile",
            "reservoirSize",
            "amcStableSize",
            "decayRate",
            "decayPeriod",
            "randomSeed",
        ] {
            assert!(text.contains(field), "{field} missing from {text}");
        }
        assert_eq!(QuerySpec::from_json(&text).unwrap(), spec);
    }
}
