//! Point sources: headered CSV, JSON-Lines, and seeded synthetic generators.

mod files;
mod synth;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::operator::Ingestor;
use crate::query::QuerySpec;

pub use files::{bucket_label, infer_csv_schema, infer_json_lines_schema, ColumnType, CsvSource, JsonLinesSource};
pub use synth::{
    contamination_stream, device_label, synth_device_stream, AdaptivityParams, AdaptivityPhase,
    AdaptivityScript, AdaptivitySource, ContaminationParams, ContaminationSource, DeviceSource,
    SynthDeviceParams, ADAPTIVITY_SCRIPT_SECONDS, DEVICE_COLUMN,
};

pub const DEFAULT_BATCH_SIZE: usize = 10_000;

fn default_batch_size() -> usize {
    DEFAULT_BATCH_SIZE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SourceDescriptor {
    #[serde(flatten)]
    pub kind: SourceKind,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "camelCase")]
pub enum SourceKind {
    #[serde(rename_all = "camelCase")]
    CsvFile {
        path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        timestamp_column: Option<String>,
    },
    #[serde(rename_all = "camelCase")]
    JsonLines {
        path: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        timestamp_column: Option<String>,
    },
    SyntheticDevices(SynthDeviceParams),
    SyntheticContamination(ContaminationParams),
    SyntheticAdaptivity(AdaptivityParams),
}

impl Default for SourceDescriptor {
    fn default() -> Self {
        Self::csv("")
    }
}

impl SourceDescriptor {
    pub fn new(kind: SourceKind) -> Self {
        Self {
            kind,
            batch_size: DEFAULT_BATCH_SIZE,
        }
    }

    pub fn csv(path: impl Into<PathBuf>) -> Self {
        Self::new(SourceKind::CsvFile {
            path: path.into(),
            timestamp_column: None,
        })
    }

    pub fn json_lines(path: impl Into<PathBuf>) -> Self {
        Self::new(SourceKind::JsonLines {
            path: path.into(),
            timestamp_column: None,
        })
    }

    pub fn with_batch_size(mut self, batch_size: usize) -> Self {
        self.batch_size = batch_size;
        self
    }

    pub fn path(&self) -> Option<&Path> {
        match &self.kind {
            SourceKind::CsvFile { path, .. } | SourceKind::JsonLines { path, .. } => Some(path),
            _ => None,
        }
    }

    pub fn is_synthetic(&self) -> bool {
        self.path().is_none()
    }

    /// Column names emitted by generators; `None` for file sources.
    pub fn builtin_schema(&self) -> Option<(Vec<&'static str>, Vec<&'static str>)> {
        match &self.kind {
            SourceKind::SyntheticDevices(_) | SourceKind::SyntheticAdaptivity(_) => {
                Some((vec!["value"], vec!["device"]))
            }
            SourceKind::SyntheticContamination(p) => {
                let metrics = if p.dims == 1 { vec!["x"] } else { vec!["x", "y"] };
                Some((metrics, vec![]))
            }
            _ => None,
        }
    }

    pub fn validate(&self) -> Vec<String> {
        let mut errors = Vec::new();
        if self.batch_size == 0 {
            errors.push("source.batchSize must be >= 1".to_string());
        }
        match &self.kind {
            SourceKind::CsvFile { path, .. } | SourceKind::JsonLines { path, .. } => {
                if path.as_os_str().is_empty() {
                    errors.push("source.path must be set".to_string());
                }
            }
            SourceKind::SyntheticDevices(p) => errors.extend(p.validate()),
            SourceKind::SyntheticContamination(p) => errors.extend(p.validate()),
            SourceKind::SyntheticAdaptivity(p) => errors.extend(p.validate()),
        }
        errors
    }
}

/// Row accounting: `skipped + emitted == rows`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    pub rows: u64,
    pub emitted: u64,
    pub skipped: u64,
}

pub trait PointSource: Ingestor {
    fn stats(&self) -> IngestStats;
}

/// Opens the spec's source. Relative file paths resolve against `base_dir`.
pub fn open_source(spec: &QuerySpec, base_dir: Option<&Path>) -> Result<Box<dyn PointSource>> {
    let desc = &spec.source;
    let resolve = |p: &Path| match base_dir {
        Some(dir) if p.is_relative() => dir.join(p),
        _ => p.to_path_buf(),
    };
    Ok(match &desc.kind {
        SourceKind::CsvFile {
            path,
            timestamp_column,
        } => Box::new(CsvSource::open(
            &resolve(path),
            spec,
            timestamp_column.as_deref(),
            desc.batch_size,
        )?),
        SourceKind::JsonLines {
            path,
            timestamp_column,
        } => Box::new(JsonLinesSource::open(
            &resolve(path),
            spec,
            timestamp_column.as_deref(),
            desc.batch_size,
        )?),
        SourceKind::SyntheticDevices(p) => {
            let mut p = p.clone();
            p.seed.get_or_insert(spec.random_seed);
            Box::new(DeviceSource::new(p, desc.batch_size)?)
        }
        SourceKind::SyntheticContamination(p) => {
            let mut p = p.clone();
            p.seed.get_or_insert(spec.random_seed);
            Box::new(ContaminationSource::new(p, desc.batch_size)?)
        }
        SourceKind::SyntheticAdaptivity(p) => {
            let mut p = p.clone();
            p.seed.get_or_insert(spec.random_seed);
            Box::new(AdaptivitySource::new(p, desc.batch_size)?)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn descriptor_json_shape() {
        let d: SourceDescriptor =
            serde_json::from_str(r#"{"kind":"csvFile","path":"a.csv","batchSize":2}"#).unwrap();
        assert_eq!(d.batch_size, 2);
        assert_eq!(d.path(), Some(Path::new("a.csv")));
        let d: SourceDescriptor =
            serde_json::from_str(r#"{"kind":"syntheticDevices","nPoints":10}"#).unwrap();
        assert_eq!(d.batch_size, DEFAULT_BATCH_SIZE);
        match d.kind {
            SourceKind::SyntheticDevices(p) => {
                assert_eq!(p.n_points, 10);
                assert_eq!(p.n_devices, 100);
            }
            other => panic!("{other:?}"),
        }
        let back: SourceDescriptor =
            serde_json::from_str(&serde_json::to_string(&SourceDescriptor::csv("x")).unwrap())
                .unwrap();
        assert_eq!(back, SourceDescriptor::csv("x"));
    }

    #[test]
    fn zero_batch_rejected() {
        let d = SourceDescriptor::csv("a.csv").with_batch_size(0);
        assert_eq!(d.validate().len(), 1);
    }
}
