use crate::error::Result;
use crate::operator::Transformer;
use crate::point::Point;
use crate::query::TransformSpec;

/// Per-metric mean and standard deviation; `None` until the first fit.
/// Identity transforms are dropped at construction.
type Stage = Option<(Vec<f64>, Vec<f64>)>;

/// Ordered metric transforms. Standardization parameters come from a
/// sample passed to [`fit`](Self::fit), each stage seeing the output of the
/// stages before it.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformChain {
    stages: Vec<Stage>,
}

impl TransformChain {
    pub fn new(specs: &[TransformSpec]) -> Self {
        let stages = specs
            .iter()
            .filter_map(|s| match s {
                TransformSpec::Identity => None,
                TransformSpec::Standardize => Some(None),
            })
            .collect();
        Self { stages }
    }

    pub fn is_identity(&self) -> bool {
        self.stages.is_empty()
    }

    /// Refits every stage on `sample` and returns the transformed sample.
    pub fn fit(&mut self, sample: &[Vec<f64>]) -> Vec<Vec<f64>> {
        let mut data = sample.to_vec();
        for stage in &mut self.stages {
            if let Some(p) = moments(&data) {
                *stage = Some(p);
            }
            for x in &mut data {
                apply(stage, x);
            }
        }
        data
    }

    pub fn apply(&self, metrics: &mut [f64]) {
        for stage in &self.stages {
            apply(stage, metrics);
        }
    }
}

fn apply(stage: &Stage, x: &mut [f64]) {
    if let Some((mean, sd)) = stage {
        for ((v, m), s) in x.iter_mut().zip(mean).zip(sd) {
            *v = (*v - m) / s;
        }
    }
}

/// Population moments; a zero deviation is replaced by 1.
fn moments(data: &[Vec<f64>]) -> Option<(Vec<f64>, Vec<f64>)> {
    let d = data.first()?.len();
    let n = data.len() as f64;
    let mut mean = vec![0.0; d];
    for x in data {
        for (m, v) in mean.iter_mut().zip(x) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut var = vec![0.0; d];
    for x in data {
        for ((s, v), m) in var.iter_mut().zip(x).zip(&mean) {
            *s += (v - m).powi(2);
        }
    }
    let sd = var
        .into_iter()
        .map(|s| {
            let sd = (s / n).sqrt();
            if sd > 0.0 {
                sd
            } else {
                1.0
            }
        })
        .collect();
    Some((mean, sd))
}

impl Transformer for TransformChain {
    fn transform(&mut self, mut batch: Vec<Point>) -> Result<Vec<Point>> {
        for p in &mut batch {
            self.apply(&mut p.metrics);
        }
        Ok(batch)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn identity_is_a_no_op() {
        let mut t = TransformChain::new(&[TransformSpec::Identity]);
        assert!(t.is_identity());
        let p = vec![Point::new(vec![3.5, -1.0], vec![0])];
        assert_eq!(t.transform(p.clone()).unwrap(), p);
    }

    #[test]
    fn standardization_moments() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let dist = Normal::new(40.0, 10.0).unwrap();
        let sample: Vec<Vec<f64>> = (0..20_000).map(|_| vec![dist.sample(&mut rng)]).collect();
        let mut t = TransformChain::new(&[TransformSpec::Standardize]);
        let out = t.fit(&sample);
        let n = out.len() as f64;
        let mean = out.iter().map(|x| x[0]).sum::<f64>() / n;
        let sd = (out.iter().map(|x| (x[0] - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!(mean.abs() < 1e-9);
        assert!((sd - 1.0).abs() < 1e-9);
        let mut fresh = vec![40.0];
        t.apply(&mut fresh);
        assert!(fresh[0].abs() < 0.3);
    }

    #[test]
    fn trailing_identity_changes_nothing() {
        let sample: Vec<Vec<f64>> = (0..50).map(|i| vec![i as f64, (i * i) as f64]).collect();
        let mut a = TransformChain::new(&[TransformSpec::Standardize, TransformSpec::Identity]);
        let mut b = TransformChain::new(&[TransformSpec::Standardize]);
        assert_eq!(a.fit(&sample), b.fit(&sample));
        assert_eq!(a, b);
    }

    #[test]
    fn constant_column_keeps_unit_scale() {
        let sample = vec![vec![2.0]; 10];
        let mut t = TransformChain::new(&[TransformSpec::Standardize]);
        assert_eq!(t.fit(&sample), vec![vec![0.0]; 10]);
    }
}
