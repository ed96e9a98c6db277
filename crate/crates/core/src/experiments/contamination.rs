use serde::Serialize;

use crate::classify::{auc, binary_auc, DensityModel, ZScoreModel};
use crate::error::Result;
use crate::ingest::{contamination_stream, ContaminationParams};
use crate::query::McdParams;

/// Conventional fixed cutoff: a point is flagged when its score exceeds 3.
pub const SCORE_CUTOFF: f64 = 3.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ContaminationRow {
    pub contamination: f64,
    pub method: String,
    /// ROC area of the classifier at the fixed cutoff: mean of the true
    /// positive and true negative rates.
    pub auc: f64,
    /// ROC area of the raw scores.
    pub rank_auc: f64,
    pub flagged_outliers: u64,
    pub flagged_inliers: u64,
}

fn row(contamination: f64, method: &str, scores: &[f64], truth: &[bool]) -> ContaminationRow {
    let flagged: Vec<bool> = scores.iter().map(|&s| s > SCORE_CUTOFF).collect();
    let count = |want: bool| flagged.iter().zip(truth).filter(|&(&f, &t)| f && t == want).count() as u64;
    ContaminationRow {
        contamination,
        method: method.to_string(),
        auc: binary_auc(&flagged, truth),
        rank_auc: auc(scores, truth),
        flagged_outliers: count(true),
        flagged_inliers: count(false),
    }
}

/// Z-score and MAD on the one-dimensional variant, Mahalanobis distance
/// under FastMCD on the two-dimensional one, each trained on the full
/// contaminated data.
pub fn contamination_sweep(n: u64, levels: &[f64], seed: u64) -> Result<Vec<ContaminationRow>> {
    let mut rows = Vec::new();
    for &c in levels {
        let one = contamination_stream(&ContaminationParams {
            n,
            contamination: c,
            dims: 1,
            seed: Some(seed),
        })?;
        let xs: Vec<f64> = one.iter().map(|p| p.metrics[0]).collect();
        let truth: Vec<bool> = one.iter().map(|p| p.truth == Some(true)).collect();
        let z = ZScoreModel::train(&xs)?;
        let scores: Vec<f64> = xs.iter().map(|&x| z.score(x)).collect();
        rows.push(row(c, "zscore", &scores, &truth));
        let sample: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
        let mad = DensityModel::train(&sample, &McdParams::default(), seed)?;
        let scores: Vec<f64> = xs.iter().map(|&x| mad.score(&[x])).collect();
        rows.push(row(c, "mad", &scores, &truth));

        let two = contamination_stream(&ContaminationParams {
            n,
            contamination: c,
            dims: 2,
            seed: Some(seed),
        })?;
        let truth: Vec<bool> = two.iter().map(|p| p.truth == Some(true)).collect();
        let sample: Vec<Vec<f64>> = two.into_iter().map(|p| p.metrics).collect();
        let mcd = DensityModel::train(&sample, &McdParams::default(), seed)?;
        let scores: Vec<f64> = sample.iter().map(|x| mcd.score(x)).collect();
        rows.push(row(c, "mcd", &scores, &truth));
    }
    Ok(rows)
}
