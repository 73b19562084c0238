//! Sliding-window batch estimation of poses, velocities and landmarks.

pub mod measurement;
pub mod normal;
pub mod prior;
pub mod sliding;

use std::collections::BTreeMap;

use nalgebra::{DVector, Matrix3, SMatrix, Vector3, Vector6};

use crate::camera::{StereoCameraModel, StereoMeasurement};
use crate::error::EstimationError;
use crate::se3::{exp_map, transform_point, HomogeneousPoint, Pose, Twist};
use crate::tracklets::FeatureTracklet;

pub use measurement::{measurement_error, measurement_jacobian, Matrix3x6};
pub use normal::NormalEquations;
pub use prior::{
    prior_covariance, prior_error, prior_information, prior_jacobian, Matrix12, Matrix12x24, TrajectoryState,
    Vector12, WnoaPrior,
};
pub use sliding::{slide_windows, SlidingConfig, SlidingResult, WindowReport, WindowStatus};

/// Observation times closer than this share a knot.
pub const KNOT_MERGE_TOL: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverConfig {
    pub prior: WnoaPrior,
    pub r_inv: Matrix3<f64>,
    pub rel_tol: f64,
    pub max_iters: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            prior: WnoaPrior::default(),
            r_inv: Matrix3::from_diagonal(&Vector3::new(0.5, 0.5, 0.1)),
            rel_tol: 0.01,
            max_iters: 50,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WindowObservation {
    pub landmark: usize,
    pub knot: usize,
    pub y: StereoMeasurement,
}

/// State of one window. Poses are relative to the first knot, whose own pose
/// stays at identity; `origin` places that knot in the world.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimationWindow {
    pub origin: Pose,
    pub states: Vec<TrajectoryState>,
    pub landmarks: Vec<HomogeneousPoint>,
    pub landmark_ids: Vec<usize>,
    pub observations: Vec<WindowObservation>,
}

/// Sorted unique knot times; times within [`KNOT_MERGE_TOL`] of a group's
/// first member collapse onto it.
pub fn knot_times<I: IntoIterator<Item = f64>>(times: I) -> Vec<f64> {
    let mut all: Vec<f64> = times.into_iter().collect();
    all.sort_by(f64::total_cmp);
    let mut out: Vec<f64> = Vec::new();
    for t in all {
        match out.last() {
            Some(&last) if t - last <= KNOT_MERGE_TOL => {}
            _ => out.push(t),
        }
    }
    out
}

fn knot_index(knots: &[f64], t: f64) -> usize {
    let i = knots.partition_point(|&k| k <= t);
    i.saturating_sub(1)
}

/// Constant-velocity initial guess. Landmarks are triangulated from each
/// tracklet's earliest observation and expressed in the first knot's frame.
/// Observations that would not project at the initial guess are dropped, as
/// are landmarks left with fewer than two knots.
pub fn initialize_window(
    tracklets: &[FeatureTracklet],
    velocity: &Twist,
    camera: &StereoCameraModel,
    origin: &Pose,
) -> Result<EstimationWindow, EstimationError> {
    let t_first = tracklets
        .iter()
        .flat_map(|t| t.observations.iter().map(|o| o.t()))
        .min_by(f64::total_cmp)
        .ok_or_else(|| EstimationError::InsufficientData("window has no observations".into()))?;
    let pose_at = |t: f64| exp_map(&(*velocity * (t - t_first)));

    let mut kept: Vec<(usize, HomogeneousPoint, Vec<StereoMeasurement>)> = Vec::new();
    for tr in tracklets {
        let Some(first) = tr.observations.first() else { continue };
        let p_local = match camera.triangulate(&first.y.vector()) {
            Ok(p) => p,
            Err(e) => {
                log::debug!("tracklet {} not triangulable: {e}", tr.id);
                continue;
            }
        };
        let p = transform_point(&pose_at(first.t()).inverse(), &p_local);
        let ys: Vec<StereoMeasurement> = tr
            .observations
            .iter()
            .filter(|o| match camera.project(&transform_point(&pose_at(o.t()), &p)) {
                Ok(_) => true,
                Err(e) => {
                    log::debug!("dropping observation of tracklet {} at {}: {e}", tr.id, o.t());
                    false
                }
            })
            .map(|o| o.y)
            .collect();
        if knot_times(ys.iter().map(|y| y.time)).len() >= 2 {
            kept.push((tr.id, p, ys));
        }
    }
    if kept.is_empty() {
        return Err(EstimationError::InsufficientData("no landmark seen at two knots".into()));
    }
    let knots = knot_times(kept.iter().flat_map(|(_, _, ys)| ys.iter().map(|y| y.time)));
    let shift = pose_at(knots[0]);
    let states: Vec<TrajectoryState> = knots
        .iter()
        .map(|&t| TrajectoryState::new(t, exp_map(&(*velocity * (t - knots[0]))), *velocity))
        .collect();
    let mut landmarks = Vec::with_capacity(kept.len());
    let mut landmark_ids = Vec::with_capacity(kept.len());
    let mut observations = Vec::new();
    for (j, (id, p, ys)) in kept.into_iter().enumerate() {
        landmarks.push(transform_point(&shift, &p).normalized());
        landmark_ids.push(id);
        observations.extend(ys.into_iter().map(|y| WindowObservation {
            landmark: j,
            knot: knot_index(&knots, y.time),
            y,
        }));
    }
    Ok(EstimationWindow {
        origin: shift * *origin,
        states,
        landmarks,
        landmark_ids,
        observations,
    })
}

impl EstimationWindow {
    /// Knot states with poses composed onto the origin (camera from world).
    pub fn global_states(&self) -> Vec<TrajectoryState> {
        self.states
            .iter()
            .map(|s| TrajectoryState::new(s.t, s.pose * self.origin, s.varpi))
            .collect()
    }

    /// Half the Mahalanobis-weighted sum of squared measurement and prior
    /// residuals.
    pub fn cost(&self, camera: &StereoCameraModel, config: &SolverConfig) -> Result<f64, EstimationError> {
        let mut c = 0.0;
        for o in &self.observations {
            let e = measurement_error(&self.states[o.knot].pose, &self.landmarks[o.landmark], &o.y, camera)?;
            c += 0.5 * (e.transpose() * config.r_inv * e)[0];
        }
        for pair in self.states.windows(2) {
            let e = prior_error(&pair[0], &pair[1])?;
            let w = prior_information(&config.prior, pair[1].t - pair[0].t)?;
            c += 0.5 * (e.transpose() * w * e)[0];
        }
        Ok(c)
    }

    pub fn normal_equations(
        &self,
        camera: &StereoCameraModel,
        config: &SolverConfig,
    ) -> Result<NormalEquations, EstimationError> {
        let mut ne = NormalEquations::new(self.states.len(), self.landmarks.len());
        for (k, pair) in self.states.windows(2).enumerate() {
            let e = prior_error(&pair[0], &pair[1])?;
            let jac = prior_jacobian(&pair[0], &pair[1])?;
            let w = prior_information(&config.prior, pair[1].t - pair[0].t)?;
            let el = jac.fixed_columns::<12>(0).into_owned();
            let er = jac.fixed_columns::<12>(12).into_owned();
            let wl = w * el;
            let wr = w * er;
            ne.knot_diag[k] += el.transpose() * wl;
            ne.knot_diag[k + 1] += er.transpose() * wr;
            ne.knot_off[k] += er.transpose() * wl;
            ne.knot_rhs[k] += wl.transpose() * e;
            ne.knot_rhs[k + 1] += wr.transpose() * e;
        }
        let mut cross: BTreeMap<(usize, usize), normal::Matrix12x3> = BTreeMap::new();
        for o in &self.observations {
            let pose = &self.states[o.knot].pose;
            let p = &self.landmarks[o.landmark];
            let e = measurement_error(pose, p, &o.y, camera)?;
            let (gp, gl) = measurement_jacobian(pose, p, camera)?;
            let mut gk = SMatrix::<f64, 3, 12>::zeros();
            gk.fixed_columns_mut::<6>(0).copy_from(&gp);
            let rg = config.r_inv * gk;
            let rl = config.r_inv * gl;
            ne.knot_diag[o.knot] += gk.transpose() * rg;
            ne.knot_rhs[o.knot] += rg.transpose() * e;
            ne.landmark_diag[o.landmark] += gl.transpose() * rl;
            ne.landmark_rhs[o.landmark] += rl.transpose() * e;
            *cross.entry((o.knot, o.landmark)).or_insert_with(normal::Matrix12x3::zeros) += gk.transpose() * rl;
        }
        ne.cross = cross;
        Ok(ne)
    }

    /// Applies `alpha * delta` (ordering of [`NormalEquations`]).
    pub fn retract(&self, delta: &DVector<f64>, alpha: f64) -> EstimationWindow {
        let mut out = self.clone();
        let kn = self.states.len();
        for (k, s) in out.states.iter_mut().enumerate() {
            if k == 0 {
                let dv = Vector6::from_iterator(delta.rows(0, 6).iter().map(|x| x * alpha));
                s.varpi = s.varpi + Twist::from_vector(&dv);
                continue;
            }
            let o = 12 * k - 6;
            let dxi = Vector6::from_iterator(delta.rows(o, 6).iter().map(|x| x * alpha));
            let dv = Vector6::from_iterator(delta.rows(o + 6, 6).iter().map(|x| x * alpha));
            s.pose = (exp_map(&Twist::from_vector(&dxi)) * s.pose).renormalized();
            s.varpi = s.varpi + Twist::from_vector(&dv);
        }
        let nk = (12 * kn).saturating_sub(6);
        for (j, p) in out.landmarks.iter_mut().enumerate() {
            let d = Vector3::from_iterator(delta.rows(nk + 3 * j, 3).iter().map(|x| x * alpha));
            *p = HomogeneousPoint::from_vector3(&(p.xyz() + d));
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub converged: bool,
}

const MAX_HALVINGS: usize = 8;
const COST_FLOOR: f64 = 1e-20;

/// Gauss-Newton with step halving. Stops once the relative cost decrease
/// drops below `rel_tol` or no halved step lowers the cost.
pub fn gauss_newton(
    window: &mut EstimationWindow,
    camera: &StereoCameraModel,
    config: &SolverConfig,
) -> Result<SolveReport, EstimationError> {
    let initial_cost = window.cost(camera, config)?;
    let mut cost = initial_cost;
    let mut iterations = 0;
    let mut converged = cost <= COST_FLOOR;
    while !converged && iterations < config.max_iters {
        let delta = window.normal_equations(camera, config)?.solve()?;
        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let trial = window.retract(&delta, alpha);
            if let Ok(c) = trial.cost(camera, config) {
                if c < cost {
                    accepted = Some((trial, c));
                    break;
                }
            }
            alpha *= 0.5;
        }
        let Some((next, c)) = accepted else {
            converged = true;
            break;
        };
        iterations += 1;
        let rel = (cost - c) / cost;
        *window = next;
        cost = c;
        converged = rel < config.rel_tol || cost <= COST_FLOOR;
    }
    if !converged {
        log::warn!("window solve stopped after {iterations} iterations without converging");
    }
    Ok(SolveReport {
        iterations,
        initial_cost,
        final_cost: cost,
        converged,
    })
}
