use serde::Serialize;

use crate::classify::DensityModel;
use crate::engine::StreamingPipeline;
use crate::error::Result;
use crate::ingest::{device_label, AdaptivityParams, AdaptivityPhase, SourceDescriptor, SourceKind, DEVICE_COLUMN};
use crate::query::{Mode, Period, QuerySpec, SamplingPolicy};

/// Sampler configurations compared in the experiment. `perPeriod` is the
/// damped-reservoir configuration under test; `perTupleDecay` is the
/// comparison mode.
pub const ADAPTIVITY_CONFIGS: [(&str, SamplingPolicy); 3] = [
    ("perPeriod", SamplingPolicy::PerPeriod { period_sample_size: 500 }),
    ("adr", SamplingPolicy::Adr),
    ("perTupleDecay", SamplingPolicy::PerTupleDecay),
];

/// Streaming query over the scripted device stream: one-second decay
/// windows at rate 0.1, retraining every window, batches of 100.
pub fn adaptivity_spec(sampling: SamplingPolicy, seed: u64, base_rate: f64) -> QuerySpec {
    QuerySpec {
        source: SourceDescriptor::new(SourceKind::SyntheticAdaptivity(AdaptivityParams {
            base_rate,
            ..Default::default()
        }))
        .with_batch_size(100),
        mode: Mode::Streaming,
        decay_rate: 0.1,
        decay_period: Period::Seconds(1.0),
        reservoir_size: 10_000,
        sampling,
        random_seed: seed,
        ..Default::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AdaptivityRow {
    pub config: String,
    pub second: u32,
    pub phase: AdaptivityPhase,
    /// Risk ratio of D0 from the summarizer's sketches, whether or not it
    /// meets the reporting thresholds.
    pub d0_risk_ratio: f64,
    pub d0_reported: bool,
    pub model_center: f64,
    pub cutoff: f64,
}

/// Samples D0's standing at the first batch boundary after each whole
/// script second.
pub fn run_adaptivity(config: &str, spec: &QuerySpec) -> Result<Vec<AdaptivityRow>> {
    let SourceKind::SyntheticAdaptivity(params) = &spec.source.kind else {
        return Err(crate::Error::Config("adaptivity needs the scripted source".into()));
    };
    let script = params.script.clone();
    let threshold = spec.min_risk_ratio;
    let mut pipeline = StreamingPipeline::new(spec, None)?;
    let mut rows = Vec::new();
    let mut next_second = 1u32;
    while pipeline.step()?.is_some() {
        let Some(t) = pipeline.last_event_time() else { continue };
        if t < next_second as f64 {
            continue;
        }
        let second = next_second;
        next_second = t.floor() as u32 + 1;
        let d0 = pipeline.dictionary().lookup(DEVICE_COLUMN, &device_label(0));
        let rr = d0.map_or(0.0, |id| pipeline.summarizer().single_risk_ratio(id));
        let model_center = match pipeline.model() {
            Some(DensityModel::Mad(m)) => m.median,
            Some(DensityModel::Mcd(m)) => m.mu[0],
            None => f64::NAN,
        };
        rows.push(AdaptivityRow {
            config: config.to_string(),
            second,
            phase: script.phase(second as f64 - 0.5),
            d0_risk_ratio: rr,
            d0_reported: rr >= threshold,
            model_center,
            cutoff: pipeline.cutoff(),
        });
    }
    Ok(rows)
}

/// Largest D0 risk ratio sampled during, or at the close of, the spike.
pub fn spike_peak(rows: &[AdaptivityRow]) -> f64 {
    rows.iter()
        .filter(|r| r.phase == AdaptivityPhase::Spike)
        .map(|r| r.d0_risk_ratio)
        .fold(0.0, f64::max)
}

