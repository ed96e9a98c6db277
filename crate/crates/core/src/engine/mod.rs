//! The default pipeline: ingest, transform, train, score, threshold,
//! explain, in one-shot and decayed streaming modes.

mod report;
mod transform;

use std::path::Path;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::time::Instant;

use log::{info, warn};

use crate::classify::{classify, hybrid_or, DensityModel, RulePredicate, ThresholdState};
use crate::dictionary::AttributeDictionary;
use crate::error::{Error, Result};
use crate::explain::{explain_batch, ExplainParams, ExplainStats, ExplanationRecord, Transactions};
use crate::ingest::{open_source, PointSource};
use crate::point::{Class, Label, Point};
use crate::query::{Mode, QuerySpec};
use crate::sketches::{build_sampler, quantile, AdaptableDampedReservoir, DecayDriver, Sampler};
use crate::streamexplain::StreamingSummarizer;

pub use report::{query_id, QueryReport, ReportExplanation, Timings, SCHEMA_VERSION};
pub use transform::TransformChain;

/// Derives an independent seed for one consumer of the query seed.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

const SEED_INPUT: u64 = 1;
const SEED_SCORES: u64 = 2;
const SEED_MODEL: u64 = 3;

/// Cancellation flag and progress counter shared with a running query.
#[derive(Debug, Default)]
pub struct RunControl {
    cancelled: AtomicBool,
    points: AtomicU64,
}

impl RunControl {
    pub fn cancel(&self) {
        self.cancelled.store(true, Ordering::Relaxed);
    }

    pub fn is_cancelled(&self) -> bool {
        self.cancelled.load(Ordering::Relaxed)
    }

    pub fn points(&self) -> u64 {
        self.points.load(Ordering::Relaxed)
    }

    fn check(&self) -> Result<()> {
        if self.is_cancelled() {
            Err(Error::Cancelled)
        } else {
            Ok(())
        }
    }
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

fn explain_params(spec: &QuerySpec) -> ExplainParams {
    ExplainParams {
        min_support: spec.min_support,
        min_risk_ratio: spec.min_risk_ratio,
        strict_subsets: spec.strict_subsets,
    }
}

fn parse_rule(spec: &QuerySpec) -> Result<Option<RulePredicate>> {
    let Some(text) = &spec.rule else { return Ok(None) };
    let rule = RulePredicate::parse(text)?;
    rule.check_dim(spec.metric_columns.len())?;
    Ok(Some(rule))
}

fn label_point(score: f64, cutoff: f64, rule: Option<&RulePredicate>, point: &Point) -> Result<Label> {
    let density = classify(score, cutoff);
    match rule {
        None => Ok(density),
        Some(r) => hybrid_or(&[density, r.classify(point)?]),
    }
}

/// Everything a one-shot run produces; the report is the serialized part.
pub struct OneShotRun {
    pub report: QueryReport,
    pub records: Vec<ExplanationRecord>,
    pub labels: Vec<Label>,
    /// Ground truth from synthetic sources, aligned with `labels`.
    pub truth: Vec<Option<bool>>,
    pub model: Option<DensityModel>,
    pub dictionary: AttributeDictionary,
    pub explain_stats: ExplainStats,
}

pub fn run_oneshot(spec: &QuerySpec, base_dir: Option<&Path>) -> Result<QueryReport> {
    Ok(execute_oneshot(spec, base_dir, &RunControl::default())?.report)
}

/// Single pass: load the source, train on all points (or an ADR sample
/// past the training cap), cut at the score percentile, explain.
pub fn execute_oneshot(spec: &QuerySpec, base_dir: Option<&Path>, ctl: &RunControl) -> Result<OneShotRun> {
    let spec = spec.validate()?;
    let seed = spec.random_seed;
    let rule = parse_rule(&spec)?;
    let mut timings = Timings::default();
    let mut dict = AttributeDictionary::new();

    let t = Instant::now();
    let mut source = open_source(&spec, base_dir)?;
    let mut points: Vec<Point> = Vec::new();
    while let Some(batch) = source.next_batch(&mut dict)? {
        ctl.check()?;
        points.extend(batch);
        ctl.points.store(points.len() as u64, Ordering::Relaxed);
    }
    let rows_skipped = source.stats().skipped;
    timings.ingest_ms = ms(t);

    let base_report = |timings: Timings| QueryReport {
        schema_version: SCHEMA_VERSION,
        query_id: query_id(&spec),
        mode: Mode::OneShot,
        emission: 0,
        points_processed: 0,
        rows_skipped,
        outlier_count: 0,
        cutoff: None,
        model: None,
        explanations: Vec::new(),
        num_tests: 0,
        timings,
        config: spec.clone(),
        seed,
        warnings: Vec::new(),
    };
    if points.is_empty() {
        let mut report = base_report(timings);
        report.warnings.push("source produced no points".into());
        return Ok(OneShotRun {
            report,
            records: Vec::new(),
            labels: Vec::new(),
            truth: Vec::new(),
            model: None,
            dictionary: dict,
            explain_stats: ExplainStats::default(),
        });
    }

    let t = Instant::now();
    let mut transforms = TransformChain::new(&spec.transforms);
    let sample: Vec<Vec<f64>> = if points.len() > spec.training_cap {
        let mut adr = AdaptableDampedReservoir::new(spec.reservoir_size, 1.0, derive_seed(seed, SEED_INPUT));
        for p in &points {
            adr.observe(p.metrics.clone(), 1.0)?;
        }
        adr.items().to_vec()
    } else {
        points.iter().map(|p| p.metrics.clone()).collect()
    };
    let sample = if transforms.is_identity() { sample } else { transforms.fit(&sample) };
    let model = DensityModel::train(&sample, &spec.mcd, derive_seed(seed, SEED_MODEL))?;
    drop(sample);
    timings.train_ms = ms(t);

    let t = Instant::now();
    if !transforms.is_identity() {
        for p in &mut points {
            transforms.apply(&mut p.metrics);
        }
    }
    let mut scores = Vec::with_capacity(points.len());
    for p in &points {
        scores.push(model.try_score(&p.metrics)?);
    }
    let cutoff = quantile(&scores, 1.0 - spec.outlier_percentile)?;
    let mut labels = Vec::with_capacity(points.len());
    let mut outliers = Transactions::new();
    let mut inliers = Transactions::new();
    for (p, &s) in points.iter().zip(&scores) {
        let label = label_point(s, cutoff, rule.as_ref(), p)?;
        let items = p.items();
        if label.is_outlier() {
            outliers.push_sorted(&items);
        } else {
            inliers.push_sorted(&items);
        }
        labels.push(label);
    }
    timings.score_ms = ms(t);

    let t = Instant::now();
    let out = explain_batch(&outliers, &inliers, &explain_params(&spec)).with_confidence(spec.significance);
    timings.explain_ms = ms(t);

    let mut report = base_report(timings);
    report.points_processed = points.len() as u64;
    report.outlier_count = outliers.len() as u64;
    report.cutoff = Some(cutoff);
    report.model = Some(model.clone());
    report.num_tests = out.num_tests;
    report.explanations = out.records.iter().map(|r| ReportExplanation::from_record(r, &dict)).collect();
    if outliers.is_empty() {
        report.warnings.push("no outliers at the configured cutoff".into());
    }
    info!(
        "one-shot: {} points, {} outliers, {} explanations",
        report.points_processed,
        report.outlier_count,
        report.explanations.len()
    );
    Ok(OneShotRun {
        report,
        records: out.records,
        labels,
        truth: points.iter().map(|p| p.truth).collect(),
        model: Some(model),
        dictionary: dict,
        explain_stats: out.stats,
    })
}

/// Streaming execution, one batch per [`step`](Self::step).
///
/// Every point of a batch is scored by the same model and cutoff. Decay
/// ticks fired inside a batch decay the samplers and the summarizer
/// immediately; the retrain they trigger runs at the end of the batch.
pub struct StreamingPipeline {
    spec: QuerySpec,
    source: Box<dyn PointSource>,
    dict: AttributeDictionary,
    transforms: TransformChain,
    input: Box<dyn Sampler<Vec<f64>>>,
    threshold: ThresholdState,
    model: Option<DensityModel>,
    rule: Option<RulePredicate>,
    summarizer: StreamingSummarizer,
    decay: DecayDriver,
    emit_driver: Option<DecayDriver>,
    retrain_pending: bool,
    retrains: u64,
    points: u64,
    outliers: u64,
    emissions: u64,
    last_event_time: Option<f64>,
    timings: Timings,
    warnings: Vec<String>,
    done: bool,
}

/// What one [`StreamingPipeline::step`] did.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepOutcome {
    pub points: usize,
    pub ticks: u32,
    /// The emission schedule passed a boundary inside this batch.
    pub emit_due: bool,
}

impl StreamingPipeline {
    pub fn new(spec: &QuerySpec, base_dir: Option<&Path>) -> Result<Self> {
        let spec = spec.validate()?;
        let seed = spec.random_seed;
        let retention = spec.retention();
        let source = open_source(&spec, base_dir)?;
        let input = build_sampler(&spec.sampling, spec.reservoir_size, retention, derive_seed(seed, SEED_INPUT));
        let scores = build_sampler(&spec.sampling, spec.reservoir_size, retention, derive_seed(seed, SEED_SCORES));
        Ok(Self {
            rule: parse_rule(&spec)?,
            transforms: TransformChain::new(&spec.transforms),
            threshold: ThresholdState::new(scores, spec.outlier_percentile),
            summarizer: StreamingSummarizer::new(explain_params(&spec), spec.amc_stable_size, spec.significance),
            decay: DecayDriver::new(spec.decay_period),
            emit_driver: spec.emit_every.map(DecayDriver::new),
            dict: AttributeDictionary::new(),
            source,
            input,
            model: None,
            retrain_pending: false,
            retrains: 0,
            points: 0,
            outliers: 0,
            emissions: 0,
            last_event_time: None,
            timings: Timings::default(),
            warnings: Vec::new(),
            done: false,
            spec,
        })
    }

    /// Processes the next batch; `None` once the source is exhausted.
    pub fn step(&mut self) -> Result<Option<StepOutcome>> {
        if self.done {
            return Ok(None);
        }
        let t = Instant::now();
        let Some(batch) = self.source.next_batch(&mut self.dict)? else {
            self.done = true;
            return Ok(None);
        };
        self.timings.ingest_ms += ms(t);
        if batch.is_empty() {
            return Ok(Some(StepOutcome {
                points: 0,
                ticks: 0,
                emit_due: false,
            }));
        }
        if self.model.is_none() {
            self.warm_up(&batch)?;
        }
        let model = self.model.as_ref().expect("trained");

        let t = Instant::now();
        let mut scores = Vec::with_capacity(batch.len());
        let mut buf = Vec::new();
        for p in &batch {
            let metrics = if self.transforms.is_identity() {
                &p.metrics
            } else {
                buf.clear();
                buf.extend_from_slice(&p.metrics);
                self.transforms.apply(&mut buf);
                &buf
            };
            scores.push(model.try_score(metrics)?);
        }
        let cutoff = self.threshold.cutoff();
        self.timings.score_ms += ms(t);

        let t = Instant::now();
        let mut ticks = 0;
        let mut emit_due = false;
        let retention = self.spec.retention();
        for (p, &score) in batch.iter().zip(&scores) {
            let label = label_point(score, cutoff, self.rule.as_ref(), p)?;
            let now = p.timestamp.unwrap_or_else(|| self.decay.wall_clock());
            self.last_event_time = Some(now);
            self.input.observe(p.metrics.clone(), now);
            self.threshold.observe_score(score, now);
            self.threshold.record(&label);
            self.summarizer.observe(label.class, &p.items());
            self.points += 1;
            if label.class == Class::Outlier {
                self.outliers += 1;
            }
            let n = self.decay.observe(p.timestamp);
            for _ in 0..n {
                self.input.tick();
                self.threshold.tick();
                self.summarizer.advance_window(retention);
                self.retrain_pending = true;
            }
            ticks += n;
            if let Some(d) = &mut self.emit_driver {
                emit_due |= d.observe(p.timestamp) > 0;
            }
        }
        self.timings.explain_ms += ms(t);

        if self.retrain_pending {
            self.retrain();
            self.retrain_pending = false;
        } else if self.spec.drift_check && self.threshold.drift_detected() && self.threshold.refresh() {
            info!("outlier rate left its 99% band; cutoff refreshed to {}", self.threshold.cutoff());
        }
        Ok(Some(StepOutcome {
            points: batch.len(),
            ticks,
            emit_due,
        }))
    }

    /// Until the first retrain the model comes from the first batch and the
    /// cutoff from that batch's scores.
    fn warm_up(&mut self, batch: &[Point]) -> Result<()> {
        let t = Instant::now();
        let sample: Vec<Vec<f64>> = batch.iter().map(|p| p.metrics.clone()).collect();
        let sample = if self.transforms.is_identity() { sample } else { self.transforms.fit(&sample) };
        let model = DensityModel::train(&sample, &self.spec.mcd, derive_seed(self.spec.random_seed, SEED_MODEL))?;
        let scores: Vec<f64> = sample.iter().map(|x| model.score(x)).collect();
        self.threshold.refresh_from(&scores);
        self.model = Some(model);
        self.timings.train_ms += ms(t);
        Ok(())
    }

    /// Retrains from the input sample and refreshes the cutoff. A failed
    /// retrain keeps the previous model.
    fn retrain(&mut self) {
        let t = Instant::now();
        let sample = self.input.sample();
        if sample.is_empty() {
            warn!("input reservoir empty; keeping the previous model");
        } else {
            let mut transforms = self.transforms.clone();
            let fitted = if transforms.is_identity() { sample.to_vec() } else { transforms.fit(sample) };
            self.retrains += 1;
            let seed = derive_seed(self.spec.random_seed, SEED_MODEL + self.retrains);
            match DensityModel::train(&fitted, &self.spec.mcd, seed) {
                Ok(m) => {
                    let scores: Vec<f64> = fitted.iter().map(|x| m.score(x)).collect();
                    let fresh = build_sampler(
                        &self.spec.sampling,
                        self.spec.reservoir_size,
                        self.spec.retention(),
                        derive_seed(derive_seed(self.spec.random_seed, SEED_SCORES), self.retrains),
                    );
                    let now = self.last_event_time.unwrap_or(0.0);
                    self.threshold.restart(fresh, &scores, now);
                    self.model = Some(m);
                    self.transforms = transforms;
                    self.timings.train_ms += ms(t);
                    return;
                }
                Err(e) => {
                    warn!("retrain failed, keeping the previous model: {e}");
                    self.push_warning(format!("retrain failed: {e}"));
                }
            }
        }
        self.threshold.refresh();
        self.timings.train_ms += ms(t);
    }

    fn push_warning(&mut self, w: String) {
        if self.warnings.len() < 32 && !self.warnings.contains(&w) {
            self.warnings.push(w);
        }
    }

    /// Explanations from the current summary. Does not touch pipeline state
    /// beyond the emission counter.
    pub fn emit(&mut self) -> QueryReport {
        let t = Instant::now();
        let out = self.summarizer.emit();
        self.timings.explain_ms += ms(t);
        let report = QueryReport {
            schema_version: SCHEMA_VERSION,
            query_id: query_id(&self.spec),
            mode: Mode::Streaming,
            emission: self.emissions,
            points_processed: self.points,
            rows_skipped: self.source.stats().skipped,
            outlier_count: self.outliers,
            cutoff: self.threshold.has_cutoff().then(|| self.threshold.cutoff()),
            model: self.model.clone(),
            explanations: out.records.iter().map(|r| ReportExplanation::from_record(r, &self.dict)).collect(),
            num_tests: out.num_tests,
            timings: self.timings,
            config: self.spec.clone(),
            seed: self.spec.random_seed,
            warnings: self.warnings.clone(),
        };
        self.emissions += 1;
        report
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn spec(&self) -> &QuerySpec {
        &self.spec
    }

    pub fn summarizer(&self) -> &StreamingSummarizer {
        &self.summarizer
    }

    pub fn dictionary(&self) -> &AttributeDictionary {
        &self.dict
    }

    pub fn model(&self) -> Option<&DensityModel> {
        self.model.as_ref()
    }

    pub fn cutoff(&self) -> f64 {
        self.threshold.cutoff()
    }

    pub fn points_processed(&self) -> u64 {
        self.points
    }

    pub fn outlier_count(&self) -> u64 {
        self.outliers
    }

    pub fn last_event_time(&self) -> Option<f64> {
        self.last_event_time
    }

    pub fn input_sample(&self) -> &[Vec<f64>] {
        self.input.sample()
    }
}

/// Runs a streaming query to the end of its source, passing each scheduled
/// emission to `on_emit`, and returns the final end-of-stream emission.
pub fn run_streaming(
    spec: &QuerySpec,
    base_dir: Option<&Path>,
    ctl: &RunControl,
    mut on_emit: impl FnMut(QueryReport),
) -> Result<QueryReport> {
    let mut pipeline = StreamingPipeline::new(spec, base_dir)?;
    while let Some(step) = pipeline.step()? {
        ctl.check()?;
        ctl.points.store(pipeline.points_processed(), Ordering::Relaxed);
        if step.emit_due {
            on_emit(pipeline.emit());
        }
    }
    Ok(pipeline.emit())
}

/// Dispatches on the configured mode and returns the final report.
pub fn run_query(spec: &QuerySpec, base_dir: Option<&Path>, ctl: &RunControl) -> Result<QueryReport> {
    match spec.mode {
        Mode::OneShot => Ok(execute_oneshot(spec, base_dir, ctl)?.report),
        Mode::Streaming => run_streaming(spec, base_dir, ctl, |_| {}),
    }
}
