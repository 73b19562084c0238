//! Motion-compensated RANSAC: constant SE(3) velocity hypotheses over
//! asynchronous tracklet segments.

use nalgebra::{Matrix3, Matrix6, SMatrix, Vector3, Vector6};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::camera::{StereoCameraModel, StereoMeasurement};
use crate::error::EstimationError;
use crate::se3::{exp_map, left_jacobian, odot, transform_point, HomogeneousPoint, Twist};
use crate::tracklets::FeatureTracklet;

type Matrix3x6 = SMatrix<f64, 3, 6>;

/// Reciprocal-condition guard for the velocity normal matrix.
pub const MAX_CONDITION: f64 = 1e12;

/// Relative-error denominator below which the absolute test is used.
const MIN_TRACK_LENGTH: f64 = 1e-6;
const ABSOLUTE_INLIER_PX: f64 = 1.0;

/// Two consecutive observations of one tracklet.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrackletSegment {
    pub p_early: HomogeneousPoint,
    pub p_late: HomogeneousPoint,
    pub y_early: StereoMeasurement,
    pub y_late: StereoMeasurement,
    pub dt: f64,
    /// Index of the source tracklet in the slice the segments came from.
    pub tracklet: usize,
}

impl TrackletSegment {
    pub fn new(y_early: StereoMeasurement, y_late: StereoMeasurement, camera: &StereoCameraModel, tracklet: usize) -> Option<Self> {
        let dt = y_late.time - y_early.time;
        if !(dt > 0.0) {
            return None;
        }
        Some(Self {
            p_early: camera.triangulate(&y_early.vector()).ok()?,
            p_late: camera.triangulate(&y_late.vector()).ok()?,
            y_early,
            y_late,
            dt,
            tracklet,
        })
    }
}

/// One segment per consecutive observation pair; pairs that cannot be
/// triangulated are skipped.
pub fn segments_from_tracklets(tracklets: &[FeatureTracklet], camera: &StereoCameraModel) -> Vec<TrackletSegment> {
    let mut out = Vec::new();
    for (ti, t) in tracklets.iter().enumerate() {
        for w in t.observations.windows(2) {
            if let Some(s) = TrackletSegment::new(w[0].y, w[1].y, camera, ti) {
                out.push(s);
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct RansacResult {
    pub velocity: Twist,
    pub inliers: Vec<usize>,
    pub outliers: Vec<usize>,
    pub iterations_used: usize,
    pub converged: bool,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RansacParams {
    pub iterations: usize,
    pub sample_size: usize,
    pub threshold: f64,
    pub seed: u64,
}

impl Default for RansacParams {
    fn default() -> Self {
        Self {
            iterations: 10_000,
            sample_size: 3,
            threshold: 0.05,
            seed: 0,
        }
    }
}

/// `D = P p^odot` for a point with unit fourth component.
fn d_matrix(p: &HomogeneousPoint) -> Matrix3x6 {
    odot(p).fixed_rows::<3>(0).into_owned()
}

/// Linearized least-squares velocity over a set of segments.
pub fn fast_velocity_solve<'a, I>(segments: I) -> Result<Twist, EstimationError>
where
    I: IntoIterator<Item = &'a TrackletSegment>,
{
    let mut n = Matrix6::zeros();
    let mut rhs = Vector6::zeros();
    let mut count = 0;
    for s in segments {
        let d = d_matrix(&s.p_early);
        let data = s.p_late.xyz() - s.p_early.xyz();
        let dtd = d.transpose() * d;
        n += dtd * (s.dt * s.dt);
        rhs += d.transpose() * data * s.dt;
        count += 1;
    }
    if count < 2 {
        return Err(EstimationError::SingularNormalMatrix { condition: f64::INFINITY });
    }
    solve_spd6(&n, &rhs)
}

fn solve_spd6(n: &Matrix6<f64>, rhs: &Vector6<f64>) -> Result<Twist, EstimationError> {
    let eig = n.symmetric_eigenvalues();
    let (lo, hi) = (eig.min(), eig.max());
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(condition < MAX_CONDITION) {
        return Err(EstimationError::SingularNormalMatrix { condition });
    }
    let chol = n
        .cholesky()
        .ok_or(EstimationError::SingularNormalMatrix { condition })?;
    Ok(Twist::from_vector(&chol.solve(rhs)))
}

/// Predicted late measurement under a constant velocity.
fn predict(s: &TrackletSegment, velocity: &Twist, camera: &StereoCameraModel) -> Option<Vector3<f64>> {
    let t = exp_map(&(*velocity * s.dt));
    camera.project(&transform_point(&t, &s.p_early)).ok()
}

/// Relative reprojection error of a segment (absolute pixels for segments
/// that barely move). `None` when the prediction falls behind the camera.
pub fn relative_error(s: &TrackletSegment, velocity: &Twist, camera: &StereoCameraModel) -> Option<f64> {
    let pred = predict(s, velocity, camera)?;
    let err = (s.y_late.vector() - pred).norm();
    let len = (s.y_late.vector() - s.y_early.vector()).norm();
    if len < MIN_TRACK_LENGTH {
        Some(err / ABSOLUTE_INLIER_PX)
    } else {
        Some(err / len)
    }
}

fn is_inlier(s: &TrackletSegment, velocity: &Twist, camera: &StereoCameraModel, threshold: f64) -> Option<f64> {
    let e = relative_error(s, velocity, camera)?;
    let len = (s.y_late.vector() - s.y_early.vector()).norm();
    let limit = if len < MIN_TRACK_LENGTH { 1.0 } else { threshold };
    (e <= limit).then_some(e)
}

pub fn classify(
    segments: &[TrackletSegment],
    velocity: &Twist,
    camera: &StereoCameraModel,
    threshold: f64,
) -> (Vec<usize>, Vec<usize>) {
    let mut inliers = Vec::new();
    let mut outliers = Vec::new();
    for (i, s) in segments.iter().enumerate() {
        if is_inlier(s, velocity, camera, threshold).is_some() {
            inliers.push(i);
        } else {
            outliers.push(i);
        }
    }
    (inliers, outliers)
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Score {
    count: usize,
    mean_error: f64,
    index: usize,
}

impl Score {
    /// More inliers first, then lower mean error, then earlier sample.
    fn better_than(&self, other: &Score) -> bool {
        if self.count != other.count {
            return self.count > other.count;
        }
        if self.mean_error != other.mean_error {
            return self.mean_error < other.mean_error;
        }
        self.index < other.index
    }
}

fn score(segments: &[TrackletSegment], velocity: &Twist, camera: &StereoCameraModel, threshold: f64, index: usize) -> Score {
    let mut count = 0;
    let mut sum = 0.0;
    for s in segments {
        if let Some(e) = is_inlier(s, velocity, camera, threshold) {
            count += 1;
            sum += e;
        }
    }
    Score {
        count,
        mean_error: if count > 0 { sum / count as f64 } else { f64::INFINITY },
        index,
    }
}

/// Hypotheses are evaluated in parallel blocks of this many samples.
const BLOCK: usize = 256;

/// Fast MC-RANSAC. Samples are drawn up front from a seeded generator so the
/// result does not depend on thread scheduling. The search stops early once
/// a hypothesis explains every segment.
pub fn fast_mc_ransac(
    segments: &[TrackletSegment],
    params: &RansacParams,
    camera: &StereoCameraModel,
) -> Result<RansacResult, EstimationError> {
    let n = segments.len();
    let k = params.sample_size.max(2);
    if n < k {
        return Err(EstimationError::InsufficientData(format!(
            "{n} segments for a sample size of {k}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let samples: Vec<Vec<usize>> = (0..params.iterations.max(1))
        .map(|_| sample(&mut rng, n, k).into_vec())
        .collect();

    let mut best: Option<(Score, Twist)> = None;
    let mut evaluated = 0;
    for (block_idx, block) in samples.chunks(BLOCK).enumerate() {
        let results: Vec<Option<(Score, Twist)>> = block
            .par_iter()
            .enumerate()
            .map(|(i, idx)| {
                let v = fast_velocity_solve(idx.iter().map(|&j| &segments[j])).ok()?;
                Some((score(segments, &v, camera, params.threshold, block_idx * BLOCK + i), v))
            })
            .collect();
        let mut done = false;
        for r in results.into_iter().flatten() {
            evaluated = r.0.index + 1;
            if best.as_ref().is_none_or(|b| r.0.better_than(&b.0)) {
                best = Some(r);
            }
            if r.0.count == n {
                done = true;
                break;
            }
        }
        if !done {
            evaluated = block_idx * BLOCK + block.len();
        } else {
            break;
        }
    }
    let (_, velocity) = best.ok_or(EstimationError::NoValidHypothesis)?;
    let (inliers, outliers) = classify(segments, &velocity, camera, params.threshold);
    Ok(RansacResult {
        velocity,
        inliers,
        outliers,
        iterations_used: evaluated,
        converged: true,
    })
}

/// Jacobian of the predicted measurement of a segment with respect to the
/// velocity, so that `e(v + d) ~= e(v) - H d`.
pub fn segment_jacobian(
    s: &TrackletSegment,
    velocity: &Twist,
    camera: &StereoCameraModel,
) -> Result<Matrix3x6, EstimationError> {
    let xi = *velocity * s.dt;
    let t = exp_map(&xi);
    let z = transform_point(&t, &s.p_early);
    let ds = camera.projection_jacobian(&z)?;
    Ok(ds * odot(&z) * left_jacobian(&xi) * s.dt)
}

/// Weighted reprojection cost `1/2 sum e^T R^-1 e`.
pub fn segment_cost(
    segments: &[TrackletSegment],
    velocity: &Twist,
    camera: &StereoCameraModel,
    r_inv: &Matrix3<f64>,
) -> Result<f64, EstimationError> {
    let mut cost = 0.0;
    for s in segments {
        let t = exp_map(&(*velocity * s.dt));
        let e = s.y_late.vector() - camera.project(&transform_point(&t, &s.p_early))?;
        cost += 0.5 * (e.transpose() * r_inv * e)[(0, 0)];
    }
    Ok(cost)
}

pub const REFINE_MAX_ITERS: usize = 50;
pub const REFINE_REL_TOL: f64 = 1e-6;
const MAX_HALVINGS: usize = 8;

/// Gauss-Newton refinement of the velocity on the given segments followed
/// by reclassification. Hitting the iteration limit returns the best
/// estimate with `converged == false`.
pub fn iterative_mc_ransac(
    segments: &[TrackletSegment],
    init: &Twist,
    camera: &StereoCameraModel,
    r_inv: &Matrix3<f64>,
    threshold: f64,
) -> Result<RansacResult, EstimationError> {
    let mut v = *init;
    let mut cost = segment_cost(segments, &v, camera, r_inv)?;
    let mut converged = false;
    let mut iters = 0;
    while iters < REFINE_MAX_ITERS {
        if cost <= f64::MIN_POSITIVE {
            converged = true;
            break;
        }
        iters += 1;
        let mut a = Matrix6::zeros();
        let mut b = Vector6::zeros();
        for s in segments {
            let h = segment_jacobian(s, &v, camera)?;
            let t = exp_map(&(v * s.dt));
            let e = s.y_late.vector() - camera.project(&transform_point(&t, &s.p_early))?;
            a += h.transpose() * r_inv * h;
            b += h.transpose() * r_inv * e;
        }
        let step = solve_spd6(&a, &b)?.to_vector();
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let cand = Twist::from_vector(&(v.to_vector() + step * alpha));
            if let Ok(c) = segment_cost(segments, &cand, camera, r_inv) {
                if c <= cost {
                    accepted = Some((cand, c));
                    break;
                }
            }
            alpha *= 0.5;
        }
        let Some((cand, c)) = accepted else {
            converged = true;
            break;
        };
        let rel = (cost - c).abs() / cost;
        v = cand;
        cost = c;
        if rel < REFINE_REL_TOL {
            converged = true;
            break;
        }
    }
    let (inliers, outliers) = classify(segments, &v, camera, threshold);
    Ok(RansacResult {
        velocity: v,
        inliers,
        outliers,
        iterations_used: iters,
        converged,
    })
}

/// Per-tracklet verdict: a tracklet survives only if it has at least one
/// segment and none of its segments is an outlier.
pub fn tracklet_inliers(n_tracklets: usize, segments: &[TrackletSegment], result: &RansacResult) -> Vec<bool> {
    let mut has = vec![false; n_tracklets];
    let mut bad = vec![false; n_tracklets];
    for &i in &result.inliers {
        has[segments[i].tracklet] = true;
    }
    for &i in &result.outliers {
        bad[segments[i].tracklet] = true;
    }
    (0..n_tracklets).map(|t| has[t] && !bad[t]).collect()
}

/// Full motion-compensated outlier rejection over a tracklet set: fast
/// stage, refinement on its inliers, then the per-tracklet verdict.
pub fn reject_outliers(
    tracklets: &[FeatureTracklet],
    camera: &StereoCameraModel,
    params: &RansacParams,
    r_inv: &Matrix3<f64>,
) -> Result<(RansacResult, Vec<bool>), EstimationError> {
    let segments = segments_from_tracklets(tracklets, camera);
    let fast = fast_mc_ransac(&segments, params, camera)?;
    let inlier_segments: Vec<TrackletSegment> = fast.inliers.iter().map(|&i| segments[i]).collect();
    let refined = match iterative_mc_ransac(&inlier_segments, &fast.velocity, camera, r_inv, params.threshold) {
        Ok(r) => {
            let (inliers, outliers) = classify(&segments, &r.velocity, camera, params.threshold);
            RansacResult {
                inliers,
                outliers,
                ..r
            }
        }
        Err(e) => {
            log::warn!("velocity refinement failed ({e}); keeping the fast estimate");
            fast
        }
    };
    let keep = tracklet_inliers(tracklets.len(), &segments, &refined);
    Ok((refined, keep))
}
