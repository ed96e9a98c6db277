use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Median and median absolute deviation of a training sample. No
/// normal-consistency constant: cutoffs are percentile based.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MadModel {
    pub median: f64,
    pub mad: f64,
    /// Divisor used instead of `mad` when the MAD is zero.
    pub fallback_scale: f64,
    pub degenerate: bool,
}

/// Exact median; the mean of the two middle values for even lengths.
/// Reorders `v`.
pub fn median_in_place(v: &mut [f64]) -> f64 {
    let n = v.len();
    debug_assert!(n > 0);
    let mid = n / 2;
    let (lower, m, _) = v.select_nth_unstable_by(mid, f64::total_cmp);
    let m = *m;
    if n % 2 == 1 {
        m
    } else {
        let below = lower.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (below + m) / 2.0
    }
}

impl MadModel {
    pub fn train(sample: &[f64]) -> Result<Self> {
        if sample.is_empty() {
            return Err(Error::Empty("MAD training sample"));
        }
        let mut v = sample.to_vec();
        let median = median_in_place(&mut v);
        for x in v.iter_mut() {
            *x = (*x - median).abs();
        }
        let mad = median_in_place(&mut v);
        if mad > 0.0 {
            return Ok(Self {
                median,
                mad,
                fallback_scale: mad,
                degenerate: false,
            });
        }
        let mut nonzero: Vec<f64> = v.into_iter().filter(|&d| d > 0.0).collect();
        let fallback_scale = if nonzero.is_empty() {
            1.0
        } else {
            median_in_place(&mut nonzero)
        };
        Ok(Self {
            median,
            mad,
            fallback_scale,
            degenerate: true,
        })
    }

    pub fn scale(&self) -> f64 {
        if self.degenerate {
            self.fallback_scale
        } else {
            self.mad
        }
    }

    pub fn score(&self, x: f64) -> f64 {
        (x - self.median).abs() / self.scale()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn nested_medians() {
        let m = MadModel::train(&[1.0, 2.0, 3.0, 4.0, 100.0]).unwrap();
        assert_eq!((m.median, m.mad), (3.0, 1.0));
        assert_eq!(m.score(5.0), 2.0);
        assert_eq!(m.score(3.0), 0.0);
        let m = MadModel::train(&[-1.0, 0.0, 1.0]).unwrap();
        assert_eq!((m.median, m.mad), (0.0, 1.0));
    }

    #[test]
    fn even_length_median_averages() {
        let mut v = vec![4.0, 1.0, 3.0, 2.0];
        assert_eq!(median_in_place(&mut v), 2.5);
    }

    #[test]
    fn constant_sample_is_degenerate() {
        let m = MadModel::train(&[5.0, 5.0, 5.0]).unwrap();
        assert_eq!(m.mad, 0.0);
        assert!(m.degenerate);
        assert_eq!(m.fallback_scale, 1.0);
        assert_eq!(m.score(7.0), 2.0);
        let m = MadModel::train(&[5.0, 5.0, 5.0, 5.0, 9.0]).unwrap();
        assert!(m.degenerate);
        assert_eq!(m.fallback_scale, 4.0);
        assert!(MadModel::train(&[]).is_err());
    }

    proptest! {
        #[test]
        fn translation_invariant(v in prop::collection::vec(-1e3f64..1e3, 1..60), c in -1e3f64..1e3, x in -1e3f64..1e3) {
            let a = MadModel::train(&v).unwrap();
            let shifted: Vec<f64> = v.iter().map(|y| y + c).collect();
            let b = MadModel::train(&shifted).unwrap();
            prop_assert!((a.score(x) - b.score(x + c)).abs() <= 1e-6 * (1.0 + a.score(x)));
        }

        #[test]
        fn scaling_preserves_order(v in prop::collection::vec(-1e3f64..1e3, 2..60), c in 0.01f64..100.0) {
            let a = MadModel::train(&v).unwrap();
            let scaled: Vec<f64> = v.iter().map(|y| y * c).collect();
            let b = MadModel::train(&scaled).unwrap();
            for x in &v {
                let sa = a.score(*x);
                let sb = b.score(x * c);
                prop_assert!((sa - sb).abs() <= 1e-6 * (1.0 + sa));
            }
        }
    }
}
