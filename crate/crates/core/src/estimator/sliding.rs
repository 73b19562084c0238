//! Overlapping windows over the cluster sequence, chained into one global
//! trajectory.

use std::fmt;

use crate::camera::StereoCameraModel;
use crate::estimator::{gauss_newton, initialize_window, EstimationWindow, SolverConfig, TrajectoryState};
use crate::ransac::{reject_outliers, RansacParams};
use crate::se3::{Pose, Twist};
use crate::tracklets::{window_tracklets, FeatureTracklet, TrackletThresholds};
use crate::trajectory::ContinuousTrajectory;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SlidingConfig {
    /// Clusters per window.
    pub width: usize,
    pub solver: SolverConfig,
    pub ransac: RansacParams,
    pub thresholds: TrackletThresholds,
    /// Fewest inlier tracklets a window may be solved with.
    pub min_tracklets: usize,
}

impl Default for SlidingConfig {
    fn default() -> Self {
        Self {
            width: 5,
            solver: SolverConfig::default(),
            ransac: RansacParams::default(),
            thresholds: TrackletThresholds::default(),
            min_tracklets: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum WindowStatus {
    Solved,
    NotConverged,
    Skipped(String),
}

impl fmt::Display for WindowStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            WindowStatus::Solved => write!(f, "solved"),
            WindowStatus::NotConverged => write!(f, "not_converged"),
            WindowStatus::Skipped(why) => write!(f, "skipped: {why}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WindowReport {
    pub index: usize,
    pub first_cluster: usize,
    pub last_cluster: usize,
    pub tracklets: usize,
    pub inlier_tracklets: usize,
    pub velocity: Option<Twist>,
    pub knots: usize,
    pub landmarks: usize,
    pub iterations: usize,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub status: WindowStatus,
}

impl WindowReport {
    fn new(index: usize, first_cluster: usize, last_cluster: usize) -> Self {
        Self {
            index,
            first_cluster,
            last_cluster,
            tracklets: 0,
            inlier_tracklets: 0,
            velocity: None,
            knots: 0,
            landmarks: 0,
            iterations: 0,
            initial_cost: f64::NAN,
            final_cost: f64::NAN,
            status: WindowStatus::Solved,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SlidingResult {
    /// Global knots of the batch solution, strictly increasing in time.
    pub knots: Vec<TrajectoryState>,
    /// Knots of the constant-velocity RANSAC solution chained the same way.
    pub ransac_knots: Vec<TrajectoryState>,
    pub reports: Vec<WindowReport>,
}

/// Inclusive cluster ranges of the windows over `n_clusters` clusters.
pub fn window_ranges(n_clusters: usize, width: usize) -> Vec<(usize, usize)> {
    let width = width.max(1);
    if n_clusters == 0 {
        return Vec::new();
    }
    if n_clusters <= width {
        return vec![(0, n_clusters - 1)];
    }
    (0..=n_clusters - width).map(|i| (i, i + width - 1)).collect()
}

fn origin_from(previous: &Option<ContinuousTrajectory>, t: f64) -> Pose {
    match previous {
        Some(tr) => match tr.query_or_extrapolate(t) {
            Ok(s) => s.pose,
            Err(e) => {
                log::warn!("cannot place window origin at {t}: {e}");
                Pose::identity()
            }
        },
        None => Pose::identity(),
    }
}

fn emit(out: &mut Vec<TrajectoryState>, states: Vec<TrajectoryState>, cut: f64) {
    for s in states {
        if s.t < cut && out.last().is_none_or(|l| s.t > l.t) {
            out.push(s);
        }
    }
}

/// Runs outlier rejection and a batch solve on every window. Window `i`
/// contributes its knots earlier than the start of cluster `i + 1`; the last
/// window contributes all of its knots. Failed windows are skipped.
pub fn slide_windows(
    tracklets: &[FeatureTracklet],
    cluster_starts: &[f64],
    camera: &StereoCameraModel,
    config: &SlidingConfig,
) -> SlidingResult {
    let ranges = window_ranges(cluster_starts.len(), config.width);
    let mut result = SlidingResult::default();
    let mut previous: Option<ContinuousTrajectory> = None;
    let mut previous_ransac: Option<ContinuousTrajectory> = None;
    for (index, &(first, last)) in ranges.iter().enumerate() {
        let cut = if index + 1 == ranges.len() {
            f64::INFINITY
        } else {
            cluster_starts[first + 1]
        };
        let mut report = WindowReport::new(index, first, last);
        let windowed = window_tracklets(tracklets, first, last, &config.thresholds);
        report.tracklets = windowed.len();
        let solved = solve_window(&windowed, camera, config, &previous, &previous_ransac, &mut report);
        match solved {
            Ok((gp, cv)) => {
                let gp_states = gp.global_states();
                let cv_states = cv.global_states();
                previous = ContinuousTrajectory::new(gp_states.clone(), config.solver.prior).ok();
                previous_ransac = ContinuousTrajectory::new(cv_states.clone(), config.solver.prior).ok();
                emit(&mut result.knots, gp_states, cut);
                emit(&mut result.ransac_knots, cv_states, cut);
            }
            Err(why) => {
                log::warn!("window {index} (clusters {first}..={last}) skipped: {why}");
                report.status = WindowStatus::Skipped(why);
            }
        }
        result.reports.push(report);
    }
    result
}

fn solve_window(
    windowed: &[FeatureTracklet],
    camera: &StereoCameraModel,
    config: &SlidingConfig,
    previous: &Option<ContinuousTrajectory>,
    previous_ransac: &Option<ContinuousTrajectory>,
    report: &mut WindowReport,
) -> Result<(EstimationWindow, EstimationWindow), String> {
    if windowed.len() < config.min_tracklets {
        return Err(format!("{} tracklets", windowed.len()));
    }
    let (ransac, keep) =
        reject_outliers(windowed, camera, &config.ransac, &config.solver.r_inv).map_err(|e| e.to_string())?;
    let inliers: Vec<FeatureTracklet> = windowed
        .iter()
        .zip(&keep)
        .filter(|(_, &k)| k)
        .map(|(t, _)| t.clone())
        .collect();
    report.inlier_tracklets = inliers.len();
    report.velocity = Some(ransac.velocity);
    if inliers.len() < config.min_tracklets {
        return Err(format!("{} inlier tracklets", inliers.len()));
    }
    let mut window =
        initialize_window(&inliers, &ransac.velocity, camera, &Pose::identity()).map_err(|e| e.to_string())?;
    let t1 = window.states[0].t;
    let mut cv = window.clone();
    cv.origin = origin_from(previous_ransac, t1);
    window.origin = origin_from(previous, t1);
    report.knots = window.states.len();
    report.landmarks = window.landmarks.len();
    let solve = gauss_newton(&mut window, camera, &config.solver).map_err(|e| e.to_string())?;
    report.iterations = solve.iterations;
    report.initial_cost = solve.initial_cost;
    report.final_cost = solve.final_cost;
    report.status = if solve.converged {
        WindowStatus::Solved
    } else {
        WindowStatus::NotConverged
    };
    Ok((window, cv))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges() {
        assert_eq!(window_ranges(10, 5).len(), 6);
        assert_eq!(window_ranges(10, 5)[5], (5, 9));
        assert_eq!(window_ranges(3, 5), vec![(0, 2)]);
        assert!(window_ranges(0, 5).is_empty());
    }

    #[test]
    fn emission_respects_cut_and_order() {
        let s = |t| TrajectoryState::new(t, Pose::identity(), Twist::zero());
        let mut out = vec![s(0.0), s(0.1)];
        emit(&mut out, vec![s(0.05), s(0.1), s(0.2), s(0.3)], 0.25);
        let times: Vec<f64> = out.iter().map(|x| x.t).collect();
        assert_eq!(times, vec![0.0, 0.1, 0.2]);
    }
}
