use std::collections::HashMap;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Zipf};
use serde::Serialize;

use crate::explain::{explain_batch, two_pass_explain, ExplainParams, Transactions};
use crate::point::AttrId;
use crate::sketches::{AmortizedMaintenanceCounter, SpaceSaving};

/// `n` draws from Zipf(`s`) over `universe` items (ids from 0), or uniform
/// when `s` is 0.
pub fn zipf_stream(n: usize, universe: u32, s: f64, seed: u64) -> Vec<AttrId> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if s == 0.0 {
        return (0..n).map(|_| rng.random_range(0..universe)).collect();
    }
    let z = Zipf::new(universe as f64, s).expect("valid zipf parameters");
    (0..n).map(|_| z.sample(&mut rng) as AttrId - 1).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AmcBenchRow {
    pub distribution: String,
    pub sketch: String,
    pub size: usize,
    pub updates_per_sec: f64,
    /// Over the items the sketch reports as heavy (count >= 0.1% of the total).
    pub max_abs_error: f64,
    pub mean_abs_error: f64,
}

fn errors(reported: &[(AttrId, f64)], exact: &HashMap<AttrId, f64>) -> (f64, f64) {
    if reported.is_empty() {
        return (0.0, 0.0);
    }
    let errs: Vec<f64> = reported
        .iter()
        .map(|(i, c)| (c - exact.get(i).copied().unwrap_or(0.0)).abs())
        .collect();
    (errs.iter().copied().fold(0.0, f64::max), errs.iter().sum::<f64>() / errs.len() as f64)
}

/// Unit-weight update throughput and heavy-hitter error of the amortized
/// counter against SpaceSaving at equal stable size.
pub fn amc_bench(n: u64, sizes: &[usize], seed: u64) -> Vec<AmcBenchRow> {
    let mut rows = Vec::new();
    for (name, s) in [("zipf1.1", 1.1), ("uniform", 0.0)] {
        let stream = zipf_stream(n as usize, 1_000_000, s, seed);
        let mut exact: HashMap<AttrId, f64> = HashMap::new();
        for &i in &stream {
            *exact.entry(i).or_default() += 1.0;
        }
        for &size in sizes {
            let t = Instant::now();
            let mut amc = AmortizedMaintenanceCounter::new(size);
            for &i in &stream {
                amc.observe(i, 1.0);
            }
            amc.maintain();
            let secs = t.elapsed().as_secs_f64().max(1e-9);
            let (max_e, mean_e) = errors(&amc.frequent(0.001), &exact);
            rows.push(AmcBenchRow {
                distribution: name.into(),
                sketch: "amc".into(),
                size,
                updates_per_sec: n as f64 / secs,
                max_abs_error: max_e,
                mean_abs_error: mean_e,
            });

            let t = Instant::now();
            let mut ss = SpaceSaving::new(size);
            for &i in &stream {
                ss.observe(i, 1.0);
            }
            let secs = t.elapsed().as_secs_f64().max(1e-9);
            let (max_e, mean_e) = errors(&ss.frequent(0.001), &exact);
            rows.push(AmcBenchRow {
                distribution: name.into(),
                sketch: "spaceSaving".into(),
                size,
                updates_per_sec: n as f64 / secs,
                max_abs_error: max_e,
                mean_abs_error: mean_e,
            });
        }
    }
    rows
}

/// Many-column attribute fixture: a few low-cardinality columns whose
/// value pairs are frequent among inliers, many high-cardinality columns
/// that are not, and outliers carrying a planted value pair.
#[derive(Debug, Clone, PartialEq)]
pub struct FixtureParams {
    pub n_points: usize,
    pub outlier_fraction: f64,
    pub low_columns: usize,
    pub low_cardinality: u32,
    pub high_columns: usize,
    pub high_cardinality: u32,
    /// Probability that an outlier carries the planted pair.
    pub planted_rate: f64,
    pub seed: u64,
}

impl Default for FixtureParams {
    fn default() -> Self {
        Self {
            n_points: 1_000_000,
            outlier_fraction: 0.01,
            low_columns: 5,
            low_cardinality: 20,
            high_columns: 15,
            high_cardinality: 2000,
            planted_rate: 0.8,
            seed: 0,
        }
    }
}

pub struct ExplainFixture {
    pub outliers: Transactions,
    pub inliers: Transactions,
    /// Value 0 of the first two columns.
    pub planted: Vec<AttrId>,
}

pub fn explain_fixture(p: &FixtureParams) -> ExplainFixture {
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let mut offsets = Vec::new();
    let mut cards = Vec::new();
    let mut next = 0u32;
    for c in 0..p.low_columns + p.high_columns {
        let card = if c < p.low_columns { p.low_cardinality } else { p.high_cardinality };
        offsets.push(next);
        cards.push(card);
        next += card;
    }
    let n_out = (p.n_points as f64 * p.outlier_fraction).round() as usize;
    let mut outliers = Transactions::new();
    let mut inliers = Transactions::new();
    let mut row = Vec::with_capacity(offsets.len());
    for i in 0..p.n_points {
        let is_outlier = i < n_out;
        let planted = is_outlier && rng.random::<f64>() < p.planted_rate;
        row.clear();
        for (c, (&off, &card)) in offsets.iter().zip(&cards).enumerate() {
            let v = if planted && c < 2 { 0 } else { rng.random_range(0..card) };
            row.push(off + v);
        }
        if is_outlier {
            outliers.push_sorted(&row);
        } else {
            inliers.push_sorted(&row);
        }
    }
    ExplainFixture {
        outliers,
        inliers,
        planted: vec![offsets[0], offsets[1]],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExplainBenchRow {
    pub points: usize,
    pub columns: usize,
    pub optimized_ms: f64,
    pub two_pass_ms: f64,
    pub speedup: f64,
    pub identical: bool,
    pub explanations: usize,
    pub optimized_inlier_work: u64,
    pub two_pass_inlier_work: u64,
}

/// Times the cardinality-aware explanation against mining both classes
/// separately and joining.
pub fn explain_bench(p: &FixtureParams, min_support: f64, min_risk_ratio: f64) -> ExplainBenchRow {
    let fx = explain_fixture(p);
    let params = ExplainParams::new(min_support, min_risk_ratio);
    let t = std::time::Instant::now();
    let fast = explain_batch(&fx.outliers, &fx.inliers, &params);
    let optimized_ms = t.elapsed().as_secs_f64() * 1e3;
    let t = std::time::Instant::now();
    let slow = two_pass_explain(&fx.outliers, &fx.inliers, &params);
    let two_pass_ms = t.elapsed().as_secs_f64() * 1e3;
    ExplainBenchRow {
        points: p.n_points,
        columns: p.low_columns + p.high_columns,
        optimized_ms,
        two_pass_ms,
        speedup: two_pass_ms / optimized_ms.max(1e-9),
        identical: fast.records == slow.records,
        explanations: fast.records.len(),
        optimized_inlier_work: fast.stats.inlier_itemsets_examined,
        two_pass_inlier_work: slow.stats.inlier_itemsets_examined,
    }
}
