use std::collections::BTreeMap;
use std::hash::Hasher;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::classify::DensityModel;
use crate::dictionary::AttributeDictionary;
use crate::explain::{ExplanationRecord, RecordFlag};
use crate::query::{Mode, QuerySpec};

pub const SCHEMA_VERSION: u32 = 1;

/// Risk ratios are +∞ when no inlier has the combination; JSON has no
/// infinity, so it travels as the string "Infinity".
mod ratio {
    use super::*;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() && *v > 0.0 {
            s.serialize_str("Infinity")
        } else {
            s.serialize_f64(*v)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(x) => Ok(x),
            Repr::Str(s) if s == "Infinity" => Ok(f64::INFINITY),
            Repr::Str(s) => Err(serde::de::Error::custom(format!("unexpected ratio {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ReportExplanation {
    /// Column name to value.
    pub attributes: BTreeMap<String, String>,
    pub outlier_support: f64,
    #[serde(with = "ratio")]
    pub risk_ratio: f64,
    pub ao: f64,
    pub ai: f64,
    pub bo: f64,
    pub bi: f64,
    pub ci95: Option<[f64; 2]>,
    pub flags: Vec<RecordFlag>,
}

impl ReportExplanation {
    pub fn from_record(rec: &ExplanationRecord, dict: &AttributeDictionary) -> Self {
        let attributes = rec
            .items
            .iter()
            .map(|&id| match dict.decode(id) {
                Some((n, v)) => (n.to_string(), v.to_string()),
                None => (format!("#{id}"), String::new()),
            })
            .collect();
        Self {
            attributes,
            outlier_support: rec.outlier_support,
            risk_ratio: rec.risk_ratio,
            ao: rec.ao,
            ai: rec.ai,
            bo: rec.bo,
            bi: rec.bi,
            ci95: rec.ci.map(|(lo, hi)| [lo, hi]),
            flags: rec.flags.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Timings {
    pub ingest_ms: f64,
    pub train_ms: f64,
    pub score_ms: f64,
    pub explain_ms: f64,
}

/// Serialized query result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct QueryReport {
    pub schema_version: u32,
    pub query_id: String,
    pub mode: Mode,
    /// Zero-based emission index; one-shot reports have a single emission.
    pub emission: u64,
    pub points_processed: u64,
    pub rows_skipped: u64,
    pub outlier_count: u64,
    /// `None` until a cutoff exists.
    pub cutoff: Option<f64>,
    pub model: Option<DensityModel>,
    pub explanations: Vec<ReportExplanation>,
    /// Number of risk-ratio tests behind the interval correction.
    pub num_tests: u64,
    pub timings: Timings,
    pub config: QuerySpec,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl QueryReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn from_json(text: &str) -> crate::Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// The same report with timings zeroed, for determinism checks.
    pub fn without_timings(&self) -> Self {
        Self {
            timings: Timings::default(),
            ..self.clone()
        }
    }
}

/// Stable id derived from the configuration (which includes the seed).
pub fn query_id(spec: &QuerySpec) -> String {
    let text = serde_json::to_string(spec).expect("spec serializes");
    // FNV-1a: stable across builds and platforms.
    let mut h = Fnv(0xcbf2_9ce4_8422_2325);
    h.write(text.as_bytes());
    format!("q{:016x}", h.finish())
}

struct Fnv(u64);

impl Hasher for Fnv {
    fn finish(&self) -> u64 {
        self.0
    }

    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 ^= b as u64;
            self.0 = self.0.wrapping_mul(0x0100_0000_01b3);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> QueryReport {
        let mut dict = AttributeDictionary::new();
        let a = dict.encode("device", "D3").unwrap();
        let b = dict.encode("os", "v2").unwrap();
        let mut rec = ExplanationRecord::from_counts(vec![a, b], 10.0, 0.0, 10.0, 90.0);
        rec.attach_confidence(0.05, 2);
        let mut rec2 = ExplanationRecord::from_counts(vec![a], 6.0, 3.0, 10.0, 90.0);
        rec2.attach_confidence(0.05, 2);
        QueryReport {
            schema_version: SCHEMA_VERSION,
            query_id: "q1".into(),
            mode: Mode::OneShot,
            emission: 0,
            points_processed: 100,
            rows_skipped: 0,
            outlier_count: 10,
            cutoff: Some(2.5),
            model: None,
            explanations: vec![
                ReportExplanation::from_record(&rec, &dict),
                ReportExplanation::from_record(&rec2, &dict),
            ],
            num_tests: 2,
            timings: Timings::default(),
            config: QuerySpec::default(),
            seed: 7,
            warnings: vec![],
        }
    }

    #[test]
    fn round_trips_with_infinite_ratio() {
        let r = sample();
        let text = r.to_json();
        assert!(text.contains("\"riskRatio\": \"Infinity\""), "{text}");
        assert!(text.contains("\"ci95\": null"));
        assert!(text.contains("\"ciUndefined\""));
        let back = QueryReport::from_json(&text).unwrap();
        assert_eq!(back, r);
        assert_eq!(back.explanations[0].attributes["os"], "v2");
    }

    #[test]
    fn ids_depend_on_config() {
        let a = QuerySpec::default();
        let b = QuerySpec {
            random_seed: 1,
            ..Default::default()
        };
        assert_eq!(query_id(&a), query_id(&a.clone()));
        assert_ne!(query_id(&a), query_id(&b));
    }
}
