//! FastMCD location/scatter and Mahalanobis scoring.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::index::sample as sample_indices;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::query::McdParams;

const MAX_CONDITION: f64 = 1e12;
const RIDGE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct McdModel {
    pub mu: Vec<f64>,
    /// Row-major d×d scatter, ridge-regularized when ill-conditioned.
    pub cov: Vec<f64>,
    pub cov_inv: Vec<f64>,
    pub det: f64,
    pub h_fraction: f64,
    pub iterations: usize,
    pub regularized: bool,
    /// Factor applied to the h-subset scatter so that the median squared
    /// distance matches the chi-square median.
    #[serde(default = "unit")]
    pub consistency: f64,
}

fn unit() -> f64 {
    1.0
}

/// Mean and covariance of a set of points, plus its inverse and determinant.
struct Fit {
    mu: Vec<f64>,
    cov: DMatrix<f64>,
    inv: DMatrix<f64>,
    det: f64,
    regularized: bool,
}

fn mean_cov(data: &[f64], d: usize, rows: &[usize]) -> (Vec<f64>, DMatrix<f64>) {
    let n = rows.len() as f64;
    let mut mu = vec![0.0; d];
    for &r in rows {
        for (m, x) in mu.iter_mut().zip(&data[r * d..(r + 1) * d]) {
            *m += x;
        }
    }
    mu.iter_mut().for_each(|m| *m /= n);
    let mut cov = DMatrix::zeros(d, d);
    let mut diff = vec![0.0; d];
    for &r in rows {
        for j in 0..d {
            diff[j] = data[r * d + j] - mu[j];
        }
        for a in 0..d {
            for b in a..d {
                cov[(a, b)] += diff[a] * diff[b];
            }
        }
    }
    let denom = (n - 1.0).max(1.0);
    for a in 0..d {
        for b in a..d {
            cov[(a, b)] /= denom;
            cov[(b, a)] = cov[(a, b)];
        }
    }
    (mu, cov)
}

/// Inverts a symmetric scatter matrix, adding `1e-6 · trace/d` to the
/// diagonal when the condition number exceeds 1e12.
fn invert(cov: DMatrix<f64>) -> Result<(DMatrix<f64>, DMatrix<f64>, f64, bool)> {
    let d = cov.nrows();
    let eig = SymmetricEigen::new(cov.clone());
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    let mut cov = cov;
    let mut regularized = false;
    if !(min > 0.0) || max / min > MAX_CONDITION {
        let trace = cov.trace();
        if !(trace > 0.0) || !trace.is_finite() {
            return Err(Error::Degenerate(
                "scatter matrix is singular (all points identical)".into(),
            ));
        }
        let ridge = RIDGE * trace / d as f64;
        for i in 0..d {
            cov[(i, i)] += ridge;
        }
        regularized = true;
    }
    let chol = cov.clone().cholesky().ok_or_else(|| {
        Error::Degenerate("scatter matrix not positive definite after regularization".into())
    })?;
    let det = chol.determinant();
    if !(det > 0.0) || !det.is_finite() {
        return Err(Error::Degenerate(format!("scatter determinant {det}")));
    }
    Ok((cov, chol.inverse(), det, regularized))
}

fn fit(data: &[f64], d: usize, rows: &[usize]) -> Result<Fit> {
    let (mu, cov) = mean_cov(data, d, rows);
    let (cov, inv, det, regularized) = invert(cov)?;
    Ok(Fit {
        mu,
        cov,
        inv,
        det,
        regularized,
    })
}

fn squared_distance(x: &[f64], mu: &[f64], inv: &[f64], diff: &mut [f64]) -> f64 {
    let d = mu.len();
    for j in 0..d {
        diff[j] = x[j] - mu[j];
    }
    let mut acc = 0.0;
    for a in 0..d {
        let row = &inv[a * d..(a + 1) * d];
        let mut s = 0.0;
        for b in 0..d {
            s += row[b] * diff[b];
        }
        acc += diff[a] * s;
    }
    acc.max(0.0)
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let d = m.nrows();
    let mut out = Vec::with_capacity(d * d);
    for a in 0..d {
        for b in 0..d {
            out.push(m[(a, b)]);
        }
    }
    out
}

/// One C-step: the `h` rows closest to the current fit.
fn closest(data: &[f64], d: usize, f: &Fit, h: usize, dist: &mut Vec<(f64, usize)>) -> Vec<usize> {
    let inv = row_major(&f.inv);
    let mut diff = vec![0.0; d];
    dist.clear();
    dist.extend(
        data.chunks_exact(d)
            .enumerate()
            .map(|(i, x)| (squared_distance(x, &f.mu, &inv, &mut diff), i)),
    );
    if h < dist.len() {
        dist.select_nth_unstable_by(h - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    }
    let mut rows: Vec<usize> = dist[..h].iter().map(|&(_, i)| i).collect();
    rows.sort_unstable();
    rows
}

/// Determinant sequence of each start, from the first C-step onward.
pub type DeterminantTrace = Vec<Vec<f64>>;

pub fn train_fastmcd(sample: &[Vec<f64>], params: &McdParams, seed: u64) -> Result<McdModel> {
    train_fastmcd_traced(sample, params, seed).map(|(m, _)| m)
}

/// FastMCD from `nStarts` random (d+1)-subsets; each start runs C-steps
/// until the relative determinant improvement falls below
/// `stoppingEpsilon` or the iteration cap. The lowest-determinant start wins.
pub fn train_fastmcd_traced(
    sample: &[Vec<f64>],
    params: &McdParams,
    seed: u64,
) -> Result<(McdModel, DeterminantTrace)> {
    let n = sample.len();
    let d = sample.first().map_or(0, Vec::len);
    if d == 0 {
        return Err(Error::Empty("MCD training sample"));
    }
    if n < d + 1 {
        return Err(Error::InvalidArgument(format!(
            "MCD needs at least {} points in {d} dimensions, got {n}",
            d + 1
        )));
    }
    let mut data = Vec::with_capacity(n * d);
    for x in sample {
        if x.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: x.len(),
            });
        }
        data.extend_from_slice(x);
    }
    let h = ((params.h_fraction * n as f64).ceil() as usize).clamp(d + 1, n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut dist = Vec::with_capacity(n);
    let mut trace = Vec::with_capacity(params.n_starts);
    let mut best: Option<(Fit, usize)> = None;
    let mut last_err = None;

    for _ in 0..params.n_starts.max(1) {
        let mut f = match initial_fit(&data, d, h, &mut rng) {
            Ok(f) => f,
            Err(e) => {
                last_err = Some(e);
                continue;
            }
        };
        let mut dets = Vec::new();
        let mut iterations = 0;
        let mut prev = f64::INFINITY;
        while iterations < params.max_iterations {
            let rows = closest(&data, d, &f, h, &mut dist);
            let next = match fit(&data, d, &rows) {
                Ok(next) => next,
                Err(e) => {
                    last_err = Some(e);
                    break;
                }
            };
            iterations += 1;
            dets.push(next.det);
            let improvement = prev - next.det;
            let converged = prev.is_finite() && improvement <= params.stopping_epsilon * prev;
            prev = next.det;
            f = next;
            if converged {
                break;
            }
        }
        trace.push(dets);
        if best.as_ref().is_none_or(|(b, _)| f.det < b.det) {
            best = Some((f, iterations));
        }
    }

    let (f, iterations) = best.ok_or_else(|| {
        last_err.unwrap_or_else(|| Error::Degenerate("no MCD start converged".into()))
    })?;
    let consistency = consistency_factor(&data, d, &f);
    Ok((
        McdModel {
            mu: f.mu,
            cov: row_major(&(f.cov * consistency)),
            cov_inv: row_major(&(f.inv / consistency)),
            det: f.det * consistency.powi(d as i32),
            h_fraction: params.h_fraction,
            iterations,
            regularized: f.regularized,
            consistency,
        },
        trace,
    ))
}

/// median(d²) / χ²_d(0.5) over the whole sample, or 1 when that is not a
/// usable positive number.
fn consistency_factor(data: &[f64], d: usize, f: &Fit) -> f64 {
    let inv = row_major(&f.inv);
    let mut diff = vec![0.0; d];
    let mut d2: Vec<f64> = data
        .chunks_exact(d)
        .map(|x| squared_distance(x, &f.mu, &inv, &mut diff))
        .collect();
    let mid = d2.len() / 2;
    let (_, &mut median, _) = d2.select_nth_unstable_by(mid, f64::total_cmp);
    let chi = ChiSquared::new(d as f64).map(|c| c.inverse_cdf(0.5)).unwrap_or(f64::NAN);
    let factor = median / chi;
    if factor.is_finite() && factor > 0.0 {
        factor
    } else {
        1.0
    }
}

/// A random (d+1)-subset, doubled in size until its scatter is invertible
/// without regularization or it reaches `h` rows.
fn initial_fit(data: &[f64], d: usize, h: usize, rng: &mut ChaCha8Rng) -> Result<Fit> {
    let n = data.len() / d;
    let mut size = d + 1;
    loop {
        let rows = sample_indices(rng, n, size).into_vec();
        match fit(data, d, &rows) {
            Ok(f) if !f.regularized => return Ok(f),
            _ if size < h => size = (size * 2).min(h),
            other => return other,
        }
    }
}

impl McdModel {
    /// Model with a known location and scatter.
    pub fn from_parts(mu: Vec<f64>, cov: Vec<f64>) -> Result<Self> {
        let d = mu.len();
        if cov.len() != d * d {
            return Err(Error::DimensionMismatch {
                expected: d * d,
                actual: cov.len(),
            });
        }
        let m = DMatrix::from_row_slice(d, d, &cov);
        let (cov, inv, det, regularized) = invert(m)?;
        Ok(Self {
            mu,
            cov: row_major(&cov),
            cov_inv: row_major(&inv),
            det,
            h_fraction: 1.0,
            iterations: 0,
            regularized,
            consistency: 1.0,
        })
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }

    pub fn score(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                actual: x.len(),
            });
        }
        Ok(self.score_unchecked(x))
    }

    /// Mahalanobis distance; `x` must have the model's dimension.
    pub fn score_unchecked(&self, x: &[f64]) -> f64 {
        let d = self.dim();
        let mut acc = 0.0;
        for a in 0..d {
            let da = x[a] - self.mu[a];
            let mut s = 0.0;
            for b in 0..d {
                s += self.cov_inv[a * d + b] * (x[b] - self.mu[b]);
            }
            acc += da * s;
        }
        acc.max(0.0).sqrt()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| (0..d).map(|_| StandardNormal.sample(&mut rng)).collect())
            .collect()
    }

    #[test]
    fn mahalanobis_examples() {
        let m = McdModel::from_parts(vec![0.0, 0.0], vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        assert!((m.score(&[3.0, 4.0]).unwrap() - 5.0).abs() < 1e-12);
        assert_eq!(m.score(&[0.0, 0.0]).unwrap(), 0.0);
        let m = McdModel::from_parts(vec![0.0, 0.0], vec![4.0, 0.0, 0.0, 1.0]).unwrap();
        assert!((m.score(&[2.0, 0.0]).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(m.score(&[1.0]), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn isotropic_is_scaled_euclidean() {
        let s2 = 9.0;
        let m = McdModel::from_parts(vec![1.0, -1.0], vec![s2, 0.0, 0.0, s2]).unwrap();
        let x = [4.0, 3.0];
        let e = ((3.0f64).powi(2) + 4.0f64.powi(2)).sqrt();
        assert!((m.score(&x).unwrap() - e / 3.0).abs() < 1e-12);
    }

    #[test]
    fn inverse_is_accurate() {
        let sample = gaussian(2000, 3, 5);
        let m = train_fastmcd(&sample, &McdParams::default(), 1).unwrap();
        let d = 3;
        for a in 0..d {
            for b in 0..d {
                let v: f64 = (0..d).map(|k| m.cov_inv[a * d + k] * m.cov[k * d + b]).sum();
                let id = if a == b { 1.0 } else { 0.0 };
                assert!((v - id).abs() < 1e-8);
            }
        }
        assert!(m.det > 0.0);
    }

    #[test]
    fn recovers_standard_gaussian_location() {
        let sample = gaussian(10_000, 2, 11);
        let params = McdParams {
            h_fraction: 0.75,
            ..Default::default()
        };
        let m = train_fastmcd(&sample, &params, 3).unwrap();
        for mu in &m.mu {
            assert!(mu.abs() < 0.1, "{:?}", m.mu);
        }
    }

    #[test]
    fn too_few_points() {
        let err = train_fastmcd(&gaussian(2, 2, 0), &McdParams::default(), 0).unwrap_err();
        assert!(matches!(err, Error::InvalidArgument(_)));
    }

    #[test]
    fn identical_points_are_degenerate() {
        let sample = vec![vec![1.0, 2.0]; 50];
        let err = train_fastmcd(&sample, &McdParams::default(), 0).unwrap_err();
        assert!(matches!(err, Error::Degenerate(_)), "{err}");
    }

    #[test]
    fn collinear_sample_is_regularized() {
        let sample: Vec<Vec<f64>> = (0..100).map(|i| vec![i as f64, 2.0 * i as f64]).collect();
        let m = train_fastmcd(&sample, &McdParams::default(), 0).unwrap();
        assert!(m.regularized);
        assert!(m.score(&[0.0, 5.0]).unwrap().is_finite());
    }
}
