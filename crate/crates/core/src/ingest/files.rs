use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use log::debug;
use serde_json::Value;

use super::{IngestStats, PointSource};
use crate::dictionary::AttributeDictionary;
use crate::error::{Error, Result};
use crate::operator::Ingestor;
use crate::point::{AttrId, Point, NULL_ATTR};
use crate::query::QuerySpec;

/// Label of the bucket containing `value` for strictly increasing `edges`.
pub fn bucket_label(edges: &[f64], value: f64) -> String {
    let idx = edges.partition_point(|&e| e <= value);
    match idx {
        0 => format!("(-inf,{})", edges[0]),
        i if i == edges.len() => format!("[{},inf)", edges[i - 1]),
        i => format!("[{},{})", edges[i - 1], edges[i]),
    }
}

fn parse_metric(cell: &str) -> Option<f64> {
    cell.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

struct Columns {
    metrics: Vec<String>,
    attributes: Vec<String>,
    buckets: Vec<Option<Vec<f64>>>,
}

impl Columns {
    fn from_spec(spec: &QuerySpec) -> Self {
        let buckets = spec
            .attribute_columns
            .iter()
            .map(|c| spec.attribute_buckets.get(c).cloned())
            .collect();
        Self {
            metrics: spec.metric_columns.clone(),
            attributes: spec.attribute_columns.clone(),
            buckets,
        }
    }

    fn encode(
        &self,
        dict: &mut AttributeDictionary,
        column: usize,
        raw: &str,
    ) -> Result<Option<AttrId>> {
        let raw = raw.trim();
        if raw.is_empty() {
            return Ok(Some(NULL_ATTR));
        }
        let name = &self.attributes[column];
        match &self.buckets[column] {
            Some(edges) => match parse_metric(raw) {
                Some(v) => dict.encode(name, &bucket_label(edges, v)).map(Some),
                None => Ok(None),
            },
            None => dict.encode(name, raw).map(Some),
        }
    }
}

/// Headered CSV; metric columns parse as decimals, attribute cells are taken verbatim.
pub struct CsvSource {
    reader: csv::Reader<File>,
    columns: Columns,
    metric_idx: Vec<usize>,
    attr_idx: Vec<usize>,
    ts_idx: Option<usize>,
    batch_size: usize,
    record: csv::StringRecord,
    stats: IngestStats,
    done: bool,
}

impl CsvSource {
    pub fn open(
        path: &Path,
        spec: &QuerySpec,
        timestamp_column: Option<&str>,
        batch_size: usize,
    ) -> Result<Self> {
        let file = File::open(path).map_err(|e| {
            Error::Config(format!("cannot open {}: {e}", path.display()))
        })?;
        let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(file);
        let headers = reader.headers()?.clone();
        let find = |name: &str| -> Result<usize> {
            headers
                .iter()
                .position(|h| h.trim() == name)
                .ok_or_else(|| Error::Config(format!("column {name:?} not found in {}", path.display())))
        };
        let metric_idx = spec.metric_columns.iter().map(|c| find(c)).collect::<Result<_>>()?;
        let attr_idx = spec.attribute_columns.iter().map(|c| find(c)).collect::<Result<_>>()?;
        let ts_idx = timestamp_column.map(find).transpose()?;
        Ok(Self {
            reader,
            columns: Columns::from_spec(spec),
            metric_idx,
            attr_idx,
            ts_idx,
            batch_size: batch_size.max(1),
            record: csv::StringRecord::new(),
            stats: IngestStats::default(),
            done: false,
        })
    }

    fn parse_row(&self, dict: &mut AttributeDictionary) -> Result<Option<Point>> {
        let rec = &self.record;
        let mut metrics = Vec::with_capacity(self.metric_idx.len());
        for &i in &self.metric_idx {
            match rec.get(i).and_then(parse_metric) {
                Some(v) => metrics.push(v),
                None => return Ok(None),
            }
        }
        let mut attributes = Vec::with_capacity(self.attr_idx.len());
        for (col, &i) in self.attr_idx.iter().enumerate() {
            let Some(raw) = rec.get(i) else {
                return Ok(None);
            };
            match self.columns.encode(dict, col, raw)? {
                Some(id) => attributes.push(id),
                None => return Ok(None),
            }
        }
        let mut point = Point::new(metrics, attributes);
        if let Some(i) = self.ts_idx {
            match rec.get(i).and_then(parse_metric) {
                Some(ts) => point.timestamp = Some(ts),
                None => return Ok(None),
            }
        }
        Ok(Some(point))
    }
}

impl Ingestor for CsvSource {
    fn next_batch(&mut self, dict: &mut AttributeDictionary) -> Result<Option<Vec<Point>>> {
        if self.done {
            return Ok(None);
        }
        let mut batch = Vec::with_capacity(self.batch_size.min(65_536));
        while batch.len() < self.batch_size {
            let more = match self.reader.read_record(&mut self.record) {
                Ok(more) => more,
                Err(e) if e.is_io_error() => return Err(e.into()),
                Err(e) => {
                    self.stats.rows += 1;
                    self.stats.skipped += 1;
                    debug!("skipping malformed row: {e}");
                    continue;
                }
            };
            if !more {
                self.done = true;
                break;
            }
            self.stats.rows += 1;
            match self.parse_row(dict)? {
                Some(p) => {
                    self.stats.emitted += 1;
                    batch.push(p);
                }
                None => {
                    self.stats.skipped += 1;
                    debug!("skipping row {}: unparseable cell", self.stats.rows);
                }
            }
        }
        Ok(if batch.is_empty() { None } else { Some(batch) })
    }
}

impl PointSource for CsvSource {
    fn stats(&self) -> IngestStats {
        self.stats
    }
}

/// One JSON object per line; fields addressed by column name.
pub struct JsonLinesSource {
    lines: std::io::Lines<BufReader<File>>,
    columns: Columns,
    timestamp_column: Option<String>,
    batch_size: usize,
    stats: IngestStats,
    done: bool,
}

impl JsonLinesSource {
    pub fn open(
        path: &Path,
        spec: &QuerySpec,
        timestamp_column: Option<&str>,
        batch_size: usize,
    ) -> Result<Self> {
        let file = File::open(path).map_err(|e| {
            Error::Config(format!("cannot open {}: {e}", path.display()))
        })?;
        Ok(Self {
            lines: BufReader::new(file).lines(),
            columns: Columns::from_spec(spec),
            timestamp_column: timestamp_column.map(str::to_string),
            batch_size: batch_size.max(1),
            stats: IngestStats::default(),
            done: false,
        })
    }

    fn metric(value: Option<&Value>) -> Option<f64> {
        match value? {
            Value::Number(n) => n.as_f64().filter(|v| v.is_finite()),
            Value::String(s) => parse_metric(s),
            _ => None,
        }
    }

    fn parse_row(
        &self,
        obj: &serde_json::Map<String, Value>,
        dict: &mut AttributeDictionary,
    ) -> Result<Option<Point>> {
        let mut metrics = Vec::with_capacity(self.columns.metrics.len());
        for name in &self.columns.metrics {
            match Self::metric(obj.get(name)) {
                Some(v) => metrics.push(v),
                None => return Ok(None),
            }
        }
        let mut attributes = Vec::with_capacity(self.columns.attributes.len());
        for (col, name) in self.columns.attributes.iter().enumerate() {
            let raw = match obj.get(name) {
                None | Some(Value::Null) => String::new(),
                Some(Value::String(s)) => s.clone(),
                Some(Value::Bool(b)) => b.to_string(),
                Some(Value::Number(n)) => {
                    let categorical = n.is_i64() || n.is_u64();
                    if !categorical && self.columns.buckets[col].is_none() {
                        return Err(Error::Config(format!(
                            "attribute column {name:?} holds continuous values; supply attributeBuckets edges"
                        )));
                    }
                    n.to_string()
                }
                Some(other) => other.to_string(),
            };
            match self.columns.encode(dict, col, &raw)? {
                Some(id) => attributes.push(id),
                None => return Ok(None),
            }
        }
        let mut point = Point::new(metrics, attributes);
        if let Some(ts) = &self.timestamp_column {
            match Self::metric(obj.get(ts)) {
                Some(t) => point.timestamp = Some(t),
                None => return Ok(None),
            }
        }
        Ok(Some(point))
    }
}

impl Ingestor for JsonLinesSource {
    fn next_batch(&mut self, dict: &mut AttributeDictionary) -> Result<Option<Vec<Point>>> {
        if self.done {
            return Ok(None);
        }
        let mut batch = Vec::new();
        while batch.len() < self.batch_size {
            let Some(line) = self.lines.next() else {
                self.done = true;
                break;
            };
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            self.stats.rows += 1;
            let parsed = match serde_json::from_str::<Value>(&line) {
                Ok(Value::Object(obj)) => self.parse_row(&obj, dict)?,
                _ => None,
            };
            match parsed {
                Some(p) => {
                    self.stats.emitted += 1;
                    batch.push(p);
                }
                None => self.stats.skipped += 1,
            }
        }
        Ok(if batch.is_empty() { None } else { Some(batch) })
    }
}

impl PointSource for JsonLinesSource {
    fn stats(&self) -> IngestStats {
        self.stats
    }
}

/// Column names with an inferred type: numeric if every sampled non-empty
/// cell parses as a real, categorical otherwise.
pub fn infer_csv_schema(path: &Path, sample_rows: usize) -> Result<BTreeMap<String, ColumnType>> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(|h| h.trim().to_string()).collect();
    let mut numeric = vec![true; headers.len()];
    for rec in reader.records().take(sample_rows) {
        let rec = rec?;
        for (i, cell) in rec.iter().enumerate().take(headers.len()) {
            if !cell.trim().is_empty() && parse_metric(cell).is_none() {
                numeric[i] = false;
            }
        }
    }
    Ok(headers
        .into_iter()
        .zip(numeric)
        .map(|(h, n)| (h, if n { ColumnType::Numeric } else { ColumnType::Categorical }))
        .collect())
}

/// Same rule as [`infer_csv_schema`] over the keys of the first
/// `sample_rows` objects. Keys missing from some rows still count.
pub fn infer_json_lines_schema(path: &Path, sample_rows: usize) -> Result<BTreeMap<String, ColumnType>> {
    let reader = BufReader::new(File::open(path)?);
    let mut numeric: BTreeMap<String, bool> = BTreeMap::new();
    for line in reader.lines().take(sample_rows) {
        let line = line?;
        let Ok(Value::Object(obj)) = serde_json::from_str::<Value>(&line) else { continue };
        for (k, v) in obj {
            let is_num = match &v {
                Value::Null => true,
                Value::Number(_) => true,
                Value::String(s) => s.trim().is_empty() || parse_metric(s).is_some(),
                _ => false,
            };
            *numeric.entry(k).or_insert(true) &= is_num;
        }
    }
    Ok(numeric
        .into_iter()
        .map(|(k, n)| (k, if n { ColumnType::Numeric } else { ColumnType::Categorical }))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum ColumnType {
    Numeric,
    Categorical,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{open_source, SourceDescriptor};
    use std::io::Write;

    fn spec_for(path: &Path, metrics: &[&str], attrs: &[&str], batch: usize) -> QuerySpec {
        let source = if path.extension().is_some_and(|e| e == "jsonl") {
            SourceDescriptor::json_lines(path)
        } else {
            SourceDescriptor::csv(path)
        };
        QuerySpec {
            source: source.with_batch_size(batch),
            metric_columns: metrics.iter().map(|s| s.to_string()).collect(),
            attribute_columns: attrs.iter().map(|s| s.to_string()).collect(),
            ..Default::default()
        }
    }

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let path = dir.path().join(name);
        let mut f = File::create(&path).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        path
    }

    fn drain(spec: &QuerySpec) -> (Vec<Vec<Point>>, IngestStats, AttributeDictionary) {
        let mut dict = AttributeDictionary::new();
        let mut src = open_source(spec, None).unwrap();
        let mut batches = Vec::new();
        while let Some(b) = src.next_batch(&mut dict).unwrap() {
            batches.push(b);
        }
        (batches, src.stats(), dict)
    }

    #[test]
    fn csv_maps_metric_and_attribute() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(&dir, "a.csv", "power,device\n1.5,deviceA\n");
        let (batches, stats, dict) = drain(&spec_for(&path, &["power"], &["device"], 10));
        assert_eq!(batches.len(), 1);
        let p = &batches[0][0];
        assert_eq!(p.metrics, vec![1.5]);
        assert_eq!(dict.decode(p.attributes[0]), Some(("device", "deviceA")));
        assert_eq!(stats, IngestStats { rows: 1, emitted: 1, skipped: 0 });
    }

    #[test]
    fn unparseable_metric_skips_row() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(&dir, "a.csv", "power,device\nabc,x\n2,y\nNaN,z\n");
        let (batches, stats, _) = drain(&spec_for(&path, &["power"], &["device"], 10));
        assert_eq!(batches.concat().len(), 1);
        assert_eq!(stats.skipped, 2);
        assert_eq!(stats.skipped + stats.emitted, stats.rows);
    }

    #[test]
    fn batches_preserve_order() {
        let dir = tempfile::tempdir().unwrap();
        let body: String =
            std::iter::once("m,a\n".to_string()).chain((0..5).map(|i| format!("{i},v{i}\n"))).collect();
        let path = write(&dir, "a.csv", &body);
        let (batches, _, _) = drain(&spec_for(&path, &["m"], &["a"], 2));
        let sizes: Vec<_> = batches.iter().map(Vec::len).collect();
        assert_eq!(sizes, vec![2, 2, 1]);
        let values: Vec<f64> = batches.concat().iter().map(|p| p.metrics[0]).collect();
        assert_eq!(values, vec![0.0, 1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn missing_column_is_config_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(&dir, "a.csv", "power,device\n1,x\n");
        let spec = spec_for(&path, &["voltage"], &["device"], 10);
        let err = open_source(&spec, None).err().unwrap();
        assert!(err.is_config(), "{err}");
    }

    #[test]
    fn empty_attribute_is_null() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(&dir, "a.csv", "m,a\n1,\n");
        let (batches, _, dict) = drain(&spec_for(&path, &["m"], &["a"], 10));
        assert_eq!(batches[0][0].attributes, vec![NULL_ATTR]);
        assert!(batches[0][0].items().is_empty());
        assert!(dict.is_empty());
    }

    #[test]
    fn bucketed_attribute() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(&dir, "a.csv", "m,temp\n1,3.5\n2,12\n3,-4\n");
        let mut spec = spec_for(&path, &["m"], &["temp"], 10);
        spec.attribute_buckets.insert("temp".into(), vec![0.0, 10.0]);
        let (batches, _, dict) = drain(&spec);
        let labels: Vec<_> = batches[0]
            .iter()
            .map(|p| dict.decode(p.attributes[0]).unwrap().1.to_string())
            .collect();
        assert_eq!(labels, vec!["[0,10)", "[10,inf)", "(-inf,0)"]);
    }

    #[test]
    fn json_lines_by_field_name() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(
            &dir,
            "a.jsonl",
            "{\"device\":\"d1\",\"power\":3.0,\"os\":7}\n\n{\"power\":\"x\"}\nnot json\n{\"power\":4}\n",
        );
        let (batches, stats, dict) = drain(&spec_for(&path, &["power"], &["device", "os"], 10));
        let pts = batches.concat();
        assert_eq!(pts.len(), 2);
        assert_eq!(pts[0].metrics, vec![3.0]);
        assert_eq!(dict.decode(pts[0].attributes[1]), Some(("os", "7")));
        assert_eq!(pts[1].attributes, vec![NULL_ATTR, NULL_ATTR]);
        assert_eq!(stats, IngestStats { rows: 4, emitted: 2, skipped: 2 });
    }

    #[test]
    fn json_continuous_attribute_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(&dir, "a.jsonl", "{\"power\":1,\"temp\":3.25}\n");
        let spec = spec_for(&path, &["power"], &["temp"], 10);
        let mut dict = AttributeDictionary::new();
        let mut src = open_source(&spec, None).unwrap();
        assert!(src.next_batch(&mut dict).unwrap_err().is_config());
    }

    #[test]
    fn schema_inference() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(&dir, "a.csv", "power,device\n1.5,a\n,b\n2,c\n");
        let schema = infer_csv_schema(&path, 100).unwrap();
        assert_eq!(schema["power"], ColumnType::Numeric);
        assert_eq!(schema["device"], ColumnType::Categorical);
    }

    #[test]
    fn json_schema_inference() {
        let dir = tempfile::tempdir().unwrap();
        let path = write(&dir, "a.jsonl", "{\"power\":1.5,\"device\":\"a\"}\n{\"power\":\"2\",\"os\":\"v1\"}\n");
        let schema = infer_json_lines_schema(&path, 100).unwrap();
        assert_eq!(schema["power"], ColumnType::Numeric);
        assert_eq!(schema["device"], ColumnType::Categorical);
        assert_eq!(schema["os"], ColumnType::Categorical);
    }
}
