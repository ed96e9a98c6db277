use std::collections::BTreeSet;
use std::fmt;

use serde::Serialize;

use super::f1_score;
use crate::engine::run_oneshot;
use crate::error::Result;
use crate::ingest::{device_label, SourceDescriptor, SourceKind, SynthDeviceParams, DEVICE_COLUMN};
use crate::query::QuerySpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum NoiseKind {
    /// A reading is drawn from the other class's distribution.
    Label,
    /// A reading is replaced by a uniform value.
    Measurement,
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NoiseKind::Label => "label",
            NoiseKind::Measurement => "measurement",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NoiseRow {
    pub kind: String,
    pub noise: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub explanations: usize,
}

/// Runs the default one-shot query over a device stream and scores the
/// set of explained devices against the planted outlier devices.
pub fn device_explanation_f1(params: &SynthDeviceParams, seed: u64) -> Result<(f64, f64, f64, usize)> {
    let params = SynthDeviceParams {
        seed: Some(params.seed.unwrap_or(seed)),
        ..params.clone()
    };
    let truth: BTreeSet<String> = params.outlier_devices().into_iter().map(device_label).collect();
    let spec = QuerySpec {
        source: SourceDescriptor::new(SourceKind::SyntheticDevices(params)),
        random_seed: seed,
        ..Default::default()
    };
    let report = run_oneshot(&spec, None)?;
    let predicted: BTreeSet<String> = report
        .explanations
        .iter()
        .filter_map(|e| e.attributes.get(DEVICE_COLUMN).cloned())
        .collect();
    let (p, r, f) = f1_score(&predicted, &truth);
    Ok((p, r, f, report.explanations.len()))
}

pub fn synthetic_noise(n_points: u64, levels: &[f64], seed: u64) -> Result<Vec<NoiseRow>> {
    let mut rows = Vec::new();
    for kind in [NoiseKind::Label, NoiseKind::Measurement] {
        for &noise in levels {
            let params = SynthDeviceParams {
                n_points,
                label_noise: if kind == NoiseKind::Label { noise } else { 0.0 },
                measurement_noise: if kind == NoiseKind::Measurement { noise } else { 0.0 },
                ..Default::default()
            };
            let (precision, recall, f1, explanations) = device_explanation_f1(&params, seed)?;
            rows.push(NoiseRow {
                kind: kind.to_string(),
                noise,
                precision,
                recall,
                f1,
                explanations,
            });
        }
    }
    Ok(rows)
}
