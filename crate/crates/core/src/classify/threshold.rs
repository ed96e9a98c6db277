use log::warn;

use crate::point::Label;
use crate::sketches::{quantile, Sampler};

/// Two-sided 99% normal quantile for the drift interval.
const DRIFT_Z: f64 = 2.5758293035489;

/// Percentile cutoff over a sampled score stream.
pub struct ThresholdState {
    reservoir: Box<dyn Sampler<f64>>,
    outlier_fraction: f64,
    cutoff: f64,
    refreshed: bool,
    since_refresh: u64,
    outliers_since_refresh: u64,
}

impl ThresholdState {
    pub fn new(reservoir: Box<dyn Sampler<f64>>, outlier_fraction: f64) -> Self {
        Self {
            reservoir,
            outlier_fraction,
            cutoff: f64::INFINITY,
            refreshed: false,
            since_refresh: 0,
            outliers_since_refresh: 0,
        }
    }

    pub fn target_percentile(&self) -> f64 {
        1.0 - self.outlier_fraction
    }

    pub fn cutoff(&self) -> f64 {
        self.cutoff
    }

    pub fn has_cutoff(&self) -> bool {
        self.refreshed
    }

    pub fn observe_score(&mut self, score: f64, now: f64) {
        self.reservoir.observe(score, now);
    }

    pub fn tick(&mut self) {
        self.reservoir.tick();
    }

    pub fn reservoir(&self) -> &[f64] {
        self.reservoir.sample()
    }

    /// Recomputes the cutoff from the reservoir. An empty reservoir keeps
    /// the previous cutoff and returns false.
    pub fn refresh(&mut self) -> bool {
        let sample = self.reservoir.sample();
        if sample.is_empty() {
            warn!("score reservoir empty; keeping cutoff {}", self.cutoff);
            return false;
        }
        self.set_cutoff(quantile(sample, self.target_percentile()).expect("nonempty"));
        true
    }

    /// Cutoff from an explicit score set, e.g. the warm-up batch.
    pub fn refresh_from(&mut self, scores: &[f64]) -> bool {
        match quantile(scores, self.target_percentile()) {
            Ok(c) => {
                self.set_cutoff(c);
                true
            }
            Err(_) => false,
        }
    }

    /// Swaps in `fresh`, seeds it with `scores` and takes the cutoff from
    /// them. Used when the model changes so that the reservoir never mixes
    /// scores from different models.
    pub fn restart(&mut self, fresh: Box<dyn Sampler<f64>>, scores: &[f64], now: f64) -> bool {
        self.reservoir = fresh;
        for &s in scores {
            self.reservoir.observe(s, now);
        }
        self.refresh_from(scores)
    }

    fn set_cutoff(&mut self, cutoff: f64) {
        self.cutoff = cutoff;
        self.refreshed = true;
        self.since_refresh = 0;
        self.outliers_since_refresh = 0;
    }

    /// Outlier iff `score > cutoff`.
    pub fn classify(&self, score: f64) -> Label {
        classify(score, self.cutoff)
    }

    pub fn record(&mut self, label: &Label) {
        self.since_refresh += 1;
        self.outliers_since_refresh += label.is_outlier() as u64;
    }

    /// True when the outlier fraction since the last refresh leaves the 99%
    /// binomial interval around the target. Needs enough observations for
    /// about ten expected outliers.
    pub fn drift_detected(&self) -> bool {
        let n = self.since_refresh as f64;
        let p = self.outlier_fraction;
        if n * p < 10.0 {
            return false;
        }
        let observed = self.outliers_since_refresh as f64 / n;
        (observed - p).abs() > DRIFT_Z * (p * (1.0 - p) / n).sqrt()
    }
}

pub fn classify(score: f64, cutoff: f64) -> Label {
    if score > cutoff {
        Label::outlier(score)
    } else {
        Label::inlier(score)
    }
}
