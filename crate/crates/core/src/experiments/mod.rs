//! Reproducible experiment drivers behind the `experiment` subcommand.
//! Each returns typed rows; [`run_experiment`] renders them as CSV.

mod adaptivity;
mod bench;
mod contamination;
mod noise;

use std::collections::BTreeSet;

use serde::Serialize;

use crate::error::{Error, Result};

pub use adaptivity::{adaptivity_spec, run_adaptivity, spike_peak, AdaptivityRow, ADAPTIVITY_CONFIGS};
pub use bench::{
    amc_bench, explain_bench, explain_fixture, zipf_stream, AmcBenchRow, ExplainBenchRow, ExplainFixture,
    FixtureParams,
};
pub use contamination::{contamination_sweep, ContaminationRow, SCORE_CUTOFF};
pub use noise::{device_explanation_f1, synthetic_noise, NoiseKind, NoiseRow};

pub const EXPERIMENTS: [&str; 5] = ["synthetic-noise", "contamination", "adaptivity", "amc-bench", "explain-bench"];

/// Precision, recall and F1 of a predicted set against the true set.
pub fn f1_score<T: Ord>(predicted: &BTreeSet<T>, truth: &BTreeSet<T>) -> (f64, f64, f64) {
    let hits = predicted.intersection(truth).count() as f64;
    let precision = if predicted.is_empty() { 0.0 } else { hits / predicted.len() as f64 };
    let recall = if truth.is_empty() { 0.0 } else { hits / truth.len() as f64 };
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    (precision, recall, f1)
}

pub fn to_csv<R: Serialize>(rows: &[R]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Data(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Knobs shared by every experiment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExperimentOptions {
    pub seed: u64,
    /// Multiplies the default input sizes; 1.0 is the desk-scale default.
    pub scale: f64,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        Self { seed: 0, scale: 1.0 }
    }
}

pub struct ExperimentOutput {
    pub csv: String,
    /// One human-readable line per notable result.
    pub summary: Vec<String>,
}

fn scaled(n: u64, scale: f64) -> u64 {
    ((n as f64 * scale).round() as u64).max(1)
}

pub fn run_experiment(name: &str, opts: &ExperimentOptions) -> Result<ExperimentOutput> {
    let seed = opts.seed;
    match name {
        "synthetic-noise" => {
            let levels: Vec<f64> = (0..=10).map(|i| i as f64 * 0.05).collect();
            let rows = synthetic_noise(scaled(100_000, opts.scale), &levels, seed)?;
            let summary = rows
                .iter()
                .map(|r| format!("{} noise {:.2}: F1 {:.3}", r.kind, r.noise, r.f1))
                .collect();
            Ok(ExperimentOutput {
                csv: to_csv(&rows)?,
                summary,
            })
        }
        "contamination" => {
            let rows = contamination_sweep(scaled(100_000, opts.scale), &[0.05, 0.1, 0.2, 0.25, 0.3, 0.4], seed)?;
            let summary = rows
                .iter()
                .map(|r| format!("{} at {:.2}: AUC {:.3} (rank AUC {:.3})", r.method, r.contamination, r.auc, r.rank_auc))
                .collect();
            Ok(ExperimentOutput {
                csv: to_csv(&rows)?,
                summary,
            })
        }
        "adaptivity" => {
            let mut rows = Vec::new();
            let mut summary = Vec::new();
            for (config, policy) in ADAPTIVITY_CONFIGS {
                let r = run_adaptivity(config, &adaptivity_spec(policy, seed, 1000.0 * opts.scale))?;
                summary.push(format!("{config}: peak D0 risk ratio during spike {:.3}", spike_peak(&r)));
                rows.extend(r);
            }
            Ok(ExperimentOutput {
                csv: to_csv(&rows)?,
                summary,
            })
        }
        "amc-bench" => {
            let rows = amc_bench(scaled(1_000_000, opts.scale), &[100, 1000, 10_000], seed);
            let summary = rows
                .iter()
                .map(|r| {
                    format!(
                        "{} {} size {}: {:.0} updates/s, max error {:.1}",
                        r.distribution, r.sketch, r.size, r.updates_per_sec, r.max_abs_error
                    )
                })
                .collect();
            Ok(ExperimentOutput {
                csv: to_csv(&rows)?,
                summary,
            })
        }
        "explain-bench" => {
            let params = FixtureParams {
                n_points: scaled(1_000_000, opts.scale) as usize,
                seed,
                ..Default::default()
            };
            let row = explain_bench(&params, 0.001, 3.0);
            let summary = vec![format!(
                "optimized {:.0} ms, two-pass {:.0} ms, speedup {:.2}x, identical output: {}",
                row.optimized_ms, row.two_pass_ms, row.speedup, row.identical
            )];
            Ok(ExperimentOutput {
                csv: to_csv(&[row])?,
                summary,
            })
        }
        other => Err(Error::Config(format!(
            "unknown experiment {other:?}; expected one of {}",
            EXPERIMENTS.join(", ")
        ))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn f1_cases() {
        let s = |v: &[u32]| v.iter().copied().collect::<BTreeSet<_>>();
        assert_eq!(f1_score(&s(&[1, 2]), &s(&[1, 2])), (1.0, 1.0, 1.0));
        assert_eq!(f1_score(&s(&[]), &s(&[1])).2, 0.0);
        let (p, r, f) = f1_score(&s(&[1, 3]), &s(&[1]));
        assert_eq!((p, r), (0.5, 1.0));
        assert!((f - 2.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn unknown_name_is_a_config_error() {
        let err = run_experiment("nope", &ExperimentOptions::default()).err().unwrap();
        assert!(err.is_config());
    }
}
