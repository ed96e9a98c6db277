//! Seeded generators for the device study, the two-ball contamination setup,
//! and the scripted adaptivity stream.
//!
//! All generators draw from `ChaCha8Rng`; normals use the ziggurat sampler
//! from `rand_distr`.

use std::collections::BTreeSet;
use std::f64::consts::PI;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{IngestStats, PointSource};
use crate::dictionary::AttributeDictionary;
use crate::error::{Error, Result};
use crate::operator::Ingestor;
use crate::point::{AttrId, Point};

const INLIER_MEAN: f64 = 10.0;
const OUTLIER_MEAN: f64 = 70.0;
const DEVICE_SD: f64 = 10.0;

pub const DEVICE_COLUMN: &str = "device";

pub fn device_label(d: u32) -> String {
    format!("D{d}")
}

fn check(errors: &mut Vec<String>, ok: bool, msg: impl FnOnce() -> String) {
    if !ok {
        errors.push(msg());
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct SynthDeviceParams {
    pub n_points: u64,
    pub n_devices: u32,
    pub outlier_device_fraction: f64,
    pub label_noise: f64,
    pub measurement_noise: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for SynthDeviceParams {
    fn default() -> Self {
        Self {
            n_points: 100_000,
            n_devices: 100,
            outlier_device_fraction: 0.01,
            label_noise: 0.0,
            measurement_noise: 0.0,
            seed: None,
        }
    }
}

impl SynthDeviceParams {
    pub fn validate(&self) -> Vec<String> {
        let mut e = Vec::new();
        check(&mut e, self.n_points >= 1, || "source.nPoints must be >= 1".into());
        check(&mut e, self.n_devices >= 1, || "source.nDevices must be >= 1".into());
        let f = self.outlier_device_fraction;
        check(&mut e, f > 0.0 && f < 1.0, || {
            format!("source.outlierDeviceFraction must be in (0, 1), got {f}")
        });
        for (name, v) in [("labelNoise", self.label_noise), ("measurementNoise", self.measurement_noise)] {
            check(&mut e, (0.0..1.0).contains(&v), || {
                format!("source.{name} must be in [0, 1), got {v}")
            });
        }
        e
    }

    pub fn n_outlier_devices(&self) -> u32 {
        ((self.outlier_device_fraction * self.n_devices as f64).round() as u32)
            .clamp(1, self.n_devices)
    }

    /// The outlier-designated device indices, a seeded subset.
    pub fn outlier_devices(&self) -> BTreeSet<u32> {
        let mut ids: Vec<u32> = (0..self.n_devices).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed.unwrap_or(0) ^ 0x5eed_de71_ce00_0001);
        ids.shuffle(&mut rng);
        ids.truncate(self.n_outlier_devices() as usize);
        ids.into_iter().collect()
    }
}

/// Device `i % nDevices` emits point `i`. Every point makes the same four
/// draws in a fixed order: label-noise coin, normal, measurement-noise coin,
/// uniform replacement.
pub struct DeviceSource {
    params: SynthDeviceParams,
    outlier: Vec<bool>,
    ids: Vec<Option<AttrId>>,
    rng: ChaCha8Rng,
    next: u64,
    batch_size: usize,
    stats: IngestStats,
}

impl DeviceSource {
    pub fn new(params: SynthDeviceParams, batch_size: usize) -> Result<Self> {
        let errors = params.validate();
        if !errors.is_empty() {
            return Err(Error::InvalidSpec(errors));
        }
        let mut outlier = vec![false; params.n_devices as usize];
        for d in params.outlier_devices() {
            outlier[d as usize] = true;
        }
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(params.seed.unwrap_or(0)),
            ids: vec![None; params.n_devices as usize],
            outlier,
            params,
            next: 0,
            batch_size: batch_size.max(1),
            stats: IngestStats::default(),
        })
    }

    pub fn outlier_devices(&self) -> BTreeSet<u32> {
        self.params.outlier_devices()
    }

    fn draw(&mut self, device: usize) -> (f64, bool) {
        let swap = self.rng.random::<f64>() < self.params.label_noise;
        let z: f64 = StandardNormal.sample(&mut self.rng);
        let replace = self.rng.random::<f64>() < self.params.measurement_noise;
        let u = self.rng.random::<f64>() * 80.0;
        let from_outlier = self.outlier[device] != swap;
        let mean = if from_outlier { OUTLIER_MEAN } else { INLIER_MEAN };
        let value = if replace { u } else { mean + DEVICE_SD * z };
        (value, from_outlier)
    }
}

impl Ingestor for DeviceSource {
    fn next_batch(&mut self, dict: &mut AttributeDictionary) -> Result<Option<Vec<Point>>> {
        let remaining = self.params.n_points - self.next;
        if remaining == 0 {
            return Ok(None);
        }
        let n = remaining.min(self.batch_size as u64) as usize;
        let mut batch = Vec::with_capacity(n);
        for _ in 0..n {
            let device = (self.next % self.params.n_devices as u64) as usize;
            let id = match self.ids[device] {
                Some(id) => id,
                None => {
                    let id = dict.encode(DEVICE_COLUMN, &device_label(device as u32))?;
                    self.ids[device] = Some(id);
                    id
                }
            };
            let (value, truth) = self.draw(device);
            batch.push(Point::new(vec![value], vec![id]).with_truth(truth));
            self.next += 1;
        }
        self.stats.rows += n as u64;
        self.stats.emitted += n as u64;
        Ok(Some(batch))
    }
}

impl PointSource for DeviceSource {
    fn stats(&self) -> IngestStats {
        self.stats
    }
}

fn drain(source: &mut dyn Ingestor, dict: &mut AttributeDictionary) -> Result<Vec<Point>> {
    let mut out = Vec::new();
    while let Some(batch) = source.next_batch(dict)? {
        out.extend(batch);
    }
    Ok(out)
}

/// The whole device stream in memory.
pub fn synth_device_stream(
    params: &SynthDeviceParams,
    dict: &mut AttributeDictionary,
) -> Result<Vec<Point>> {
    drain(&mut DeviceSource::new(params.clone(), 65_536)?, dict)
}

const BALL_RADIUS: f64 = 50.0;
const OUTLIER_CENTER: f64 = 1000.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct ContaminationParams {
    pub n: u64,
    pub contamination: f64,
    pub dims: u8,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for ContaminationParams {
    fn default() -> Self {
        Self {
            n: 100_000,
            contamination: 0.0,
            dims: 2,
            seed: None,
        }
    }
}

impl ContaminationParams {
    pub fn validate(&self) -> Vec<String> {
        let mut e = Vec::new();
        check(&mut e, self.n >= 1, || "source.n must be >= 1".into());
        let c = self.contamination;
        check(&mut e, (0.0..1.0).contains(&c), || {
            format!("source.contamination must be in [0, 1), got {c}")
        });
        check(&mut e, self.dims == 1 || self.dims == 2, || {
            format!("source.dims must be 1 or 2, got {}", self.dims)
        });
        e
    }

    pub fn n_outliers(&self) -> u64 {
        (self.contamination * self.n as f64).floor() as u64
    }
}

/// Uniform points in a radius-50 ball at the origin, with exactly
/// `floor(contamination * n)` drawn instead from the ball at (1000, 1000).
/// Outlier positions come from a seeded shuffle.
pub struct ContaminationSource {
    params: ContaminationParams,
    is_outlier: Vec<bool>,
    rng: ChaCha8Rng,
    next: usize,
    batch_size: usize,
}

impl ContaminationSource {
    pub fn new(params: ContaminationParams, batch_size: usize) -> Result<Self> {
        let errors = params.validate();
        if !errors.is_empty() {
            return Err(Error::InvalidSpec(errors));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed.unwrap_or(0));
        let n = params.n as usize;
        let mut is_outlier = vec![false; n];
        is_outlier[..params.n_outliers() as usize].fill(true);
        is_outlier.shuffle(&mut rng);
        Ok(Self {
            params,
            is_outlier,
            rng,
            next: 0,
            batch_size: batch_size.max(1),
        })
    }

    fn draw(&mut self, outlier: bool) -> Vec<f64> {
        let center = if outlier { OUTLIER_CENTER } else { 0.0 };
        if self.params.dims == 1 {
            let u: f64 = self.rng.random();
            vec![center + BALL_RADIUS * (2.0 * u - 1.0)]
        } else {
            let r = BALL_RADIUS * self.rng.random::<f64>().sqrt();
            let theta = 2.0 * PI * self.rng.random::<f64>();
            vec![center + r * theta.cos(), center + r * theta.sin()]
        }
    }
}

impl Ingestor for ContaminationSource {
    fn next_batch(&mut self, _dict: &mut AttributeDictionary) -> Result<Option<Vec<Point>>> {
        let end = (self.next + self.batch_size).min(self.is_outlier.len());
        if self.next >= end {
            return Ok(None);
        }
        let mut batch = Vec::with_capacity(end - self.next);
        for i in self.next..end {
            let truth = self.is_outlier[i];
            batch.push(Point::new(self.draw(truth), Vec::new()).with_truth(truth));
        }
        self.next = end;
        Ok(Some(batch))
    }
}

impl PointSource for ContaminationSource {
    fn stats(&self) -> IngestStats {
        let n = self.next as u64;
        IngestStats {
            rows: n,
            emitted: n,
            skipped: 0,
        }
    }
}

pub fn contamination_stream(params: &ContaminationParams) -> Result<Vec<Point>> {
    drain(
        &mut ContaminationSource::new(params.clone(), 65_536)?,
        &mut AttributeDictionary::new(),
    )
}

pub const ADAPTIVITY_SCRIPT_SECONDS: f64 = 400.0;

/// Which segment of the adaptivity script a timestamp falls in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum AdaptivityPhase {
    Baseline,
    D0High,
    Shifted,
    D0Low,
    Spike,
}

/// Segment boundaries in script seconds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct AdaptivityScript {
    pub d0_high: (f64, f64),
    pub shift_at: f64,
    pub d0_low: (f64, f64),
    pub spike: (f64, f64),
    pub spike_rate_factor: f64,
    pub end: f64,
}

impl Default for AdaptivityScript {
    fn default() -> Self {
        Self {
            d0_high: (50.0, 100.0),
            shift_at: 150.0,
            d0_low: (225.0, 250.0),
            spike: (320.0, 324.0),
            spike_rate_factor: 10.0,
            end: ADAPTIVITY_SCRIPT_SECONDS,
        }
    }
}

fn within(t: f64, (a, b): (f64, f64)) -> bool {
    t >= a && t < b
}

impl AdaptivityScript {
    pub fn phase(&self, t: f64) -> AdaptivityPhase {
        if within(t, self.spike) {
            AdaptivityPhase::Spike
        } else if within(t, self.d0_high) {
            AdaptivityPhase::D0High
        } else if within(t, self.d0_low) {
            AdaptivityPhase::D0Low
        } else if t >= self.shift_at {
            AdaptivityPhase::Shifted
        } else {
            AdaptivityPhase::Baseline
        }
    }

    /// (mean, sd) for a reading from `device` at time `t`.
    pub fn distribution(&self, t: f64, device: u32) -> (f64, f64) {
        let d0 = device == 0;
        match self.phase(t) {
            AdaptivityPhase::Baseline => (10.0, 10.0),
            AdaptivityPhase::D0High => (if d0 { 70.0 } else { 10.0 }, 10.0),
            AdaptivityPhase::Shifted => (40.0, 10.0),
            AdaptivityPhase::D0Low => (if d0 { -10.0 } else { 40.0 }, 10.0),
            // D0 keeps reporting the shifted baseline through the noise burst.
            AdaptivityPhase::Spike if d0 => (40.0, 10.0),
            AdaptivityPhase::Spike => (85.0, 15.0),
        }
    }

    pub fn rate_factor(&self, t: f64) -> f64 {
        if within(t, self.spike) {
            self.spike_rate_factor
        } else {
            1.0
        }
    }

    /// D0 is anomalous by construction during its two windows.
    pub fn is_anomalous(&self, t: f64, device: u32) -> bool {
        device == 0 && matches!(self.phase(t), AdaptivityPhase::D0High | AdaptivityPhase::D0Low)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase", default)]
pub struct AdaptivityParams {
    pub n_devices: u32,
    /// Points per script second outside the spike.
    pub base_rate: f64,
    pub script: AdaptivityScript,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl Default for AdaptivityParams {
    fn default() -> Self {
        Self {
            n_devices: 100,
            base_rate: 1000.0,
            script: AdaptivityScript::default(),
            seed: None,
        }
    }
}

impl AdaptivityParams {
    pub fn validate(&self) -> Vec<String> {
        let mut e = Vec::new();
        check(&mut e, self.n_devices >= 1, || "source.nDevices must be >= 1".into());
        check(&mut e, self.base_rate.is_finite() && self.base_rate > 0.0, || {
            "source.baseRate must be > 0".into()
        });
        let s = &self.script;
        check(&mut e, s.spike_rate_factor.is_finite() && s.spike_rate_factor >= 1.0, || {
            "source.script.spikeRateFactor must be >= 1".into()
        });
        check(&mut e, s.end.is_finite() && s.end > 0.0, || "source.script.end must be > 0".into());
        e
    }
}

/// Timestamped readings following the script; device `i % nDevices` emits
/// the i-th reading, so every device keeps its share through the spike.
pub struct AdaptivitySource {
    params: AdaptivityParams,
    ids: Vec<Option<AttrId>>,
    rng: ChaCha8Rng,
    t: f64,
    index: u64,
    batch_size: usize,
}

impl AdaptivitySource {
    pub fn new(params: AdaptivityParams, batch_size: usize) -> Result<Self> {
        let errors = params.validate();
        if !errors.is_empty() {
            return Err(Error::InvalidSpec(errors));
        }
        Ok(Self {
            rng: ChaCha8Rng::seed_from_u64(params.seed.unwrap_or(0)),
            ids: vec![None; params.n_devices as usize],
            params,
            t: 0.0,
            index: 0,
            batch_size: batch_size.max(1),
        })
    }
}

impl Ingestor for AdaptivitySource {
    fn next_batch(&mut self, dict: &mut AttributeDictionary) -> Result<Option<Vec<Point>>> {
        let script = &self.params.script;
        let mut batch = Vec::new();
        while batch.len() < self.batch_size && self.t < script.end {
            let device = (self.index % self.params.n_devices as u64) as u32;
            let id = match self.ids[device as usize] {
                Some(id) => id,
                None => {
                    let id = dict.encode(DEVICE_COLUMN, &device_label(device))?;
                    self.ids[device as usize] = Some(id);
                    id
                }
            };
            let (mean, sd) = script.distribution(self.t, device);
            let z: f64 = StandardNormal.sample(&mut self.rng);
            let point = Point::new(vec![mean + sd * z], vec![id])
                .with_timestamp(self.t)
                .with_truth(script.is_anomalous(self.t, device));
            batch.push(point);
            self.index += 1;
            self.t += 1.0 / (self.params.base_rate * script.rate_factor(self.t));
        }
        Ok(if batch.is_empty() { None } else { Some(batch) })
    }
}

impl PointSource for AdaptivitySource {
    fn stats(&self) -> IngestStats {
        IngestStats {
            rows: self.index,
            emitted: self.index,
            skipped: 0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean(xs: impl Iterator<Item = f64>) -> f64 {
        let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
        s / n as f64
    }

    #[test]
    fn outlier_device_mean() {
        let p = SynthDeviceParams {
            n_points: 1_000_000,
            seed: Some(3),
            ..Default::default()
        };
        let mut dict = AttributeDictionary::new();
        let pts = synth_device_stream(&p, &mut dict).unwrap();
        let outliers = p.outlier_devices();
        assert_eq!(outliers.len(), 1);
        let d = *outliers.iter().next().unwrap();
        let id = dict.lookup(DEVICE_COLUMN, &device_label(d)).unwrap();
        let draws: Vec<f64> = pts
            .iter()
            .filter(|p| p.attributes[0] == id)
            .map(|p| p.metrics[0])
            .collect();
        assert_eq!(draws.len(), 10_000);
        assert!((mean(draws.iter().copied()) - 70.0).abs() < 0.5);
    }

    #[test]
    fn measurement_noise_one_rejected() {
        let p = SynthDeviceParams {
            measurement_noise: 1.0,
            ..Default::default()
        };
        assert_eq!(p.validate().len(), 1);
        assert!(DeviceSource::new(p, 10).is_err());
    }

    #[test]
    fn device_stream_is_deterministic() {
        let p = SynthDeviceParams {
            n_points: 5000,
            label_noise: 0.1,
            measurement_noise: 0.1,
            seed: Some(9),
            ..Default::default()
        };
        let a = synth_device_stream(&p, &mut AttributeDictionary::new()).unwrap();
        let b = synth_device_stream(&p, &mut AttributeDictionary::new()).unwrap();
        assert_eq!(a, b);
        let q = SynthDeviceParams { seed: Some(10), ..p };
        assert_ne!(a, synth_device_stream(&q, &mut AttributeDictionary::new()).unwrap());
    }

    #[test]
    fn contamination_zero_stays_in_ball() {
        let p = ContaminationParams {
            n: 10_000,
            seed: Some(1),
            ..Default::default()
        };
        for pt in contamination_stream(&p).unwrap() {
            let r = pt.metrics.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!(r <= 50.0);
            assert_eq!(pt.truth, Some(false));
        }
    }

    #[test]
    fn contamination_exact_count() {
        let p = ContaminationParams {
            n: 100_000,
            contamination: 0.25,
            seed: Some(1),
            ..Default::default()
        };
        let pts = contamination_stream(&p).unwrap();
        let far = pts.iter().filter(|p| p.metrics[0] > 500.0).count();
        assert_eq!(far, 25_000);
        assert_eq!(pts.iter().filter(|p| p.truth == Some(true)).count(), 25_000);
    }

    #[test]
    fn contamination_one_dimensional_center() {
        let p = ContaminationParams {
            n: 1000,
            contamination: 0.5,
            dims: 1,
            seed: Some(2),
        };
        for pt in contamination_stream(&p).unwrap() {
            assert_eq!(pt.dim(), 1);
            let center = if pt.truth == Some(true) { 1000.0 } else { 0.0 };
            assert!((pt.metrics[0] - center).abs() <= 50.0);
        }
    }

    fn adaptivity_points(params: AdaptivityParams) -> (Vec<Point>, AttributeDictionary) {
        let mut dict = AttributeDictionary::new();
        let mut src = AdaptivitySource::new(params, 4096).unwrap();
        let pts = drain(&mut src, &mut dict).unwrap();
        (pts, dict)
    }

    #[test]
    fn adaptivity_d0_window_mean() {
        let params = AdaptivityParams {
            seed: Some(4),
            base_rate: 20_000.0,
            ..Default::default()
        };
        let (pts, dict) = adaptivity_points(params);
        let d0 = dict.lookup(DEVICE_COLUMN, "D0").unwrap();
        let draws: Vec<f64> = pts
            .iter()
            .filter(|p| p.attributes[0] == d0 && (50.0..100.0).contains(&p.timestamp.unwrap()))
            .map(|p| p.metrics[0])
            .collect();
        assert!(draws.len() >= 10_000, "{}", draws.len());
        assert!((mean(draws.iter().copied()) - 70.0).abs() < 2.0);
    }

    #[test]
    fn adaptivity_spike_rate() {
        let (pts, _) = adaptivity_points(AdaptivityParams {
            seed: Some(4),
            ..Default::default()
        });
        let count = |a: f64, b: f64| {
            pts.iter()
                .filter(|p| (a..b).contains(&p.timestamp.unwrap()))
                .count() as f64
        };
        let base = count(310.0, 314.0);
        let spike = count(320.0, 324.0);
        assert!((spike / base - 10.0).abs() < 0.01, "{spike} / {base}");
        assert!(pts.windows(2).all(|w| w[0].timestamp < w[1].timestamp));
    }

    #[test]
    fn adaptivity_quiet_segments_share_distribution() {
        let script = AdaptivityScript::default();
        for t in [0.0, 20.0, 120.0, 149.9] {
            for d in 0..5 {
                assert_eq!(script.distribution(t, d), (10.0, 10.0));
            }
        }
        for t in [160.0, 260.0, 350.0] {
            for d in 0..5 {
                assert_eq!(script.distribution(t, d), (40.0, 10.0));
            }
        }
    }
}
