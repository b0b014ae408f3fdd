//! Numerical utilities shared across the workbench: planar points,
//! Lloyd's K-Means with deterministic farthest-point seeding, inverse
//! distance weighting, bisection root-finding, and a central-difference
//! gradient checker.

use crate::rng::RngStream;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum NumericsError {
    #[error("k-means infeasible: k={k} exceeds point count {n}")]
    KmeansInfeasible { k: usize, n: usize },
    #[error("k-means requires k >= 1")]
    KmeansEmpty,
    #[error("interpolation requires at least one sample")]
    NoSamples,
    #[error("interpolation power must be positive, got {0}")]
    NonPositivePower(f64),
    #[error("bisection requires a sign change: f({lo})={flo}, f({hi})={fhi}")]
    NoSignChange { lo: f64, hi: f64, flo: f64, fhi: f64 },
    #[error("gradient check: objective is not finite at perturbed point")]
    NonFiniteObjective,
    #[error("gradient check: eps must be positive, got {0}")]
    NonPositiveEps(f64),
    #[error("gradient check: analytic gradient length {analytic} != parameter length {params}")]
    GradientLengthMismatch { analytic: usize, params: usize },
}

/// A point in the local planar frame, in kilometers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point2D {
    pub x: f64,
    pub y: f64,
}

impl Point2D {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Point2D) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Lloyd's K-Means over planar points.
///
/// Seeding is deterministic farthest-point: the first center is drawn
/// uniformly from the stream, each further center is the point with the
/// largest distance to its nearest chosen center (ties broken by lowest
/// index). Iterates to an assignment fixpoint or 100 rounds; an empty
/// cluster keeps its previous centroid. Centroids are returned sorted by
/// x then y so downstream consumers see a stable order.
pub fn kmeans(points: &[Point2D], k: usize, stream: RngStream) -> Result<Vec<Point2D>, NumericsError> {
    let (centroids, _history) = kmeans_with_history(points, k, stream)?;
    Ok(centroids)
}

/// Same as [`kmeans`] but also reports the within-cluster sum of squared
/// distances after each assignment round.
pub fn kmeans_with_history(
    points: &[Point2D],
    k: usize,
    stream: RngStream,
) -> Result<(Vec<Point2D>, Vec<f64>), NumericsError> {
    if k == 0 {
        return Err(NumericsError::KmeansEmpty);
    }
    if k > points.len() {
        return Err(NumericsError::KmeansInfeasible { k, n: points.len() });
    }

    let mut rng = stream.rng();
    let mut centers: Vec<Point2D> = Vec::with_capacity(k);
    let mut chosen = vec![false; points.len()];
    let first = rng.random_range(0..points.len());
    centers.push(points[first]);
    chosen[first] = true;
    while centers.len() < k {
        let mut best_idx = usize::MAX;
        let mut best_dist = -1.0;
        for (i, p) in points.iter().enumerate() {
            if chosen[i] {
                continue;
            }
            let d = centers
                .iter()
                .map(|c| c.distance(p))
                .fold(f64::INFINITY, f64::min);
            if d > best_dist {
                best_dist = d;
                best_idx = i;
            }
        }
        centers.push(points[best_idx]);
        chosen[best_idx] = true;
    }

    let mut assignment = vec![usize::MAX; points.len()];
    let mut objective_history = Vec::new();
    for _ in 0..100 {
        let mut changed = false;
        let mut objective = 0.0;
        for (i, p) in points.iter().enumerate() {
            let mut best = 0usize;
            let mut best_d = f64::INFINITY;
            for (c, center) in centers.iter().enumerate() {
                let d = center.distance(p);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            objective += best_d * best_d;
            if assignment[i] != best {
                assignment[i] = best;
                changed = true;
            }
        }
        objective_history.push(objective);
        if !changed {
            break;
        }
        let mut sums = vec![(0.0f64, 0.0f64, 0usize); k];
        for (i, p) in points.iter().enumerate() {
            let s = &mut sums[assignment[i]];
            s.0 += p.x;
            s.1 += p.y;
            s.2 += 1;
        }
        for (c, (sx, sy, n)) in sums.into_iter().enumerate() {
            if n > 0 {
                centers[c] = Point2D::new(sx / n as f64, sy / n as f64);
            }
        }
    }

    centers.sort_by(|a, b| (a.x, a.y).partial_cmp(&(b.x, b.y)).unwrap());
    Ok((centers, objective_history))
}

/// Inverse distance weighting: `sum(w_i v_i) / sum(w_i)` with
/// `w_i = dist^(-power)`. A sample closer than 1e-9 km to the query
/// wins outright and its value is returned exactly.
pub fn idw_interpolate(
    samples: &[(Point2D, f64)],
    query: Point2D,
    power: f64,
) -> Result<f64, NumericsError> {
    if samples.is_empty() {
        return Err(NumericsError::NoSamples);
    }
    if power <= 0.0 {
        return Err(NumericsError::NonPositivePower(power));
    }
    if samples.len() == 1 {
        return Ok(samples[0].1);
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for (p, v) in samples {
        let d = p.distance(&query);
        if d < 1e-9 {
            return Ok(*v);
        }
        let w = d.powf(-power);
        num += w * v;
        den += w;
    }
    Ok(num / den)
}

/// Bisection root finding on `[lo, hi]`.
///
/// Requires `f(lo) * f(hi) <= 0`; stops when `|f(mid)| <= tol` or the
/// bracket shrinks below `tol`, after at most 200 halvings.
pub fn bisect(
    f: impl Fn(f64) -> f64,
    mut lo: f64,
    mut hi: f64,
    tol: f64,
) -> Result<f64, NumericsError> {
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Ok(lo);
    }
    if fhi == 0.0 {
        return Ok(hi);
    }
    if flo * fhi > 0.0 {
        return Err(NumericsError::NoSignChange { lo, hi, flo, fhi });
    }
    let mut mid = 0.5 * (lo + hi);
    for _ in 0..200 {
        mid = 0.5 * (lo + hi);
        let fm = f(mid);
        if fm.abs() <= tol || (hi - lo) < tol {
            return Ok(mid);
        }
        if (fm > 0.0) == (flo > 0.0) {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Ok(mid)
}

/// Compare an analytic gradient against central differences.
///
/// Perturbs each coordinate by `eps`, forms `(f(x+e) - f(x-e)) / (2 eps)`,
/// and returns the worst relative error with denominator
/// `max(|analytic|, |numeric|, 1e-8)`.
pub fn finite_diff_gradcheck(
    f: impl Fn(&[f64]) -> f64,
    theta: &[f64],
    analytic: &[f64],
    eps: f64,
) -> Result<f64, NumericsError> {
    if eps <= 0.0 {
        return Err(NumericsError::NonPositiveEps(eps));
    }
    if analytic.len() != theta.len() {
        return Err(NumericsError::GradientLengthMismatch {
            analytic: analytic.len(),
            params: theta.len(),
        });
    }
    let mut work = theta.to_vec();
    let mut worst = 0.0f64;
    for i in 0..theta.len() {
        work[i] = theta[i] + eps;
        let fp = f(&work);
        work[i] = theta[i] - eps;
        let fm = f(&work);
        work[i] = theta[i];
        if !fp.is_finite() || !fm.is_finite() {
            return Err(NumericsError::NonFiniteObjective);
        }
        let numeric = (fp - fm) / (2.0 * eps);
        let denom = analytic[i].abs().max(numeric.abs()).max(1e-8);
        worst = worst.max((analytic[i] - numeric).abs() / denom);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stream() -> RngStream {
        RngStream::new(1234, 0)
    }

    #[test]
    fn kmeans_k_equals_n_returns_points() {
        let pts = vec![
            Point2D::new(0.0, 0.0),
            Point2D::new(3.0, 1.0),
            Point2D::new(-2.0, 5.0),
        ];
        let mut got = kmeans(&pts, 3, stream()).unwrap();
        let mut want = pts.clone();
        got.sort_by(|a, b| (a.x, a.y).partial_cmp(&(b.x, b.y)).unwrap());
        want.sort_by(|a, b| (a.x, a.y).partial_cmp(&(b.x, b.y)).unwrap());
        assert_eq!(got, want);
    }

    #[test]
    fn kmeans_k1_is_mean() {
        let pts = vec![
            Point2D::new(0.0, 0.0),
            Point2D::new(2.0, 0.0),
            Point2D::new(1.0, 3.0),
        ];
        let got = kmeans(&pts, 1, stream()).unwrap();
        assert!((got[0].x - 1.0).abs() < 1e-12);
        assert!((got[0].y - 1.0).abs() < 1e-12);
    }

    #[test]
    fn kmeans_separated_clusters() {
        let pts = vec![
            Point2D::new(0.0, 0.0),
            Point2D::new(0.0, 1.0),
            Point2D::new(10.0, 10.0),
            Point2D::new(10.0, 11.0),
        ];
        let got = kmeans(&pts, 2, stream()).unwrap();
        assert_eq!(got[0], Point2D::new(0.0, 0.5));
        assert_eq!(got[1], Point2D::new(10.0, 10.5));
    }

    #[test]
    fn kmeans_objective_non_increasing() {
        let mut rng = RngStream::new(99, 1).rng();
        use rand::Rng;
        let pts: Vec<Point2D> = (0..200)
            .map(|_| Point2D::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0)))
            .collect();
        let (_, history) = kmeans_with_history(&pts, 7, stream()).unwrap();
        for w in history.windows(2) {
            assert!(w[1] <= w[0] + 1e-9, "objective increased: {:?}", w);
        }
    }

    #[test]
    fn kmeans_rejects_infeasible_k() {
        let pts = vec![Point2D::new(0.0, 0.0)];
        assert!(matches!(
            kmeans(&pts, 2, stream()),
            Err(NumericsError::KmeansInfeasible { .. })
        ));
    }

    #[test]
    fn idw_single_sample_is_constant() {
        let samples = vec![(Point2D::new(4.0, -2.0), 12.0)];
        for q in [Point2D::new(0.0, 0.0), Point2D::new(100.0, 3.0)] {
            assert_eq!(idw_interpolate(&samples, q, 2.0).unwrap(), 12.0);
        }
    }

    #[test]
    fn idw_coincident_query_returns_sample() {
        let samples = vec![(Point2D::new(1.0, 1.0), 5.0), (Point2D::new(2.0, 2.0), 9.0)];
        assert_eq!(
            idw_interpolate(&samples, Point2D::new(2.0, 2.0), 2.0).unwrap(),
            9.0
        );
    }

    #[test]
    fn idw_symmetric_midpoint() {
        let samples = vec![(Point2D::new(0.0, 0.0), 10.0), (Point2D::new(2.0, 0.0), 20.0)];
        let v = idw_interpolate(&samples, Point2D::new(1.0, 0.0), 2.0).unwrap();
        assert!((v - 15.0).abs() < 1e-12);
    }

    #[test]
    fn bisect_linear_and_quadratic() {
        let r = bisect(|x| x - 0.5, 0.0, 1.0, 1e-10).unwrap();
        assert!((r - 0.5).abs() < 1e-9);
        let r = bisect(|x| x * x - 0.25, 0.0, 1.0, 1e-12).unwrap();
        assert!((r - 0.5).abs() < 1e-9);
    }

    #[test]
    fn bisect_boundary_root() {
        let r = bisect(|x| x, 0.0, 1.0, 1e-12).unwrap();
        assert_eq!(r, 0.0);
    }

    #[test]
    fn bisect_rejects_no_sign_change() {
        assert!(matches!(
            bisect(|x| x + 2.0, 0.0, 1.0, 1e-9),
            Err(NumericsError::NoSignChange { .. })
        ));
    }

    #[test]
    fn gradcheck_quadratic_is_exact() {
        let theta = vec![0.3, -1.2, 2.5];
        let analytic: Vec<f64> = theta.iter().map(|t| 2.0 * t).collect();
        let err = finite_diff_gradcheck(
            |t| t.iter().map(|x| x * x).sum(),
            &theta,
            &analytic,
            1e-6,
        )
        .unwrap();
        assert!(err < 1e-8, "err={err}");
    }

    #[test]
    fn gradcheck_flags_wrong_gradient() {
        let theta = vec![0.7];
        // f = theta[0], true gradient 1; claim 2.
        let err = finite_diff_gradcheck(|t| t[0], &theta, &[2.0], 1e-6).unwrap();
        assert!((err - 0.5).abs() < 1e-6, "err={err}");
    }

    #[test]
    fn gradcheck_constant_function() {
        let theta = vec![1.0, 2.0];
        let err = finite_diff_gradcheck(|_| 3.5, &theta, &[0.0, 0.0], 1e-6).unwrap();
        assert!(err < 1e-3, "err={err}");
    }
}
