//! Continuous-time trajectory built from estimated knots.

use nalgebra::{Matrix2, Vector6};

use crate::error::TrajectoryError;
use crate::estimator::{TrajectoryState, WnoaPrior};
use crate::se3::{exp_map, left_jacobian, left_jacobian_inv, log_map, Pose, Twist};

/// Anything that yields a camera-from-world pose at a time.
pub trait PoseQuery {
    fn pose_at(&self, t: f64) -> Result<Pose, TrajectoryError>;
    fn time_range(&self) -> Option<(f64, f64)>;
}

fn phi(s: f64) -> Matrix2<f64> {
    Matrix2::new(1.0, s, 0.0, 1.0)
}

fn q_scalar(s: f64) -> Matrix2<f64> {
    Matrix2::new(s * s * s / 3.0, s * s / 2.0, s * s / 2.0, s)
}

fn q_scalar_inv(s: f64) -> Matrix2<f64> {
    Matrix2::new(12.0 / (s * s * s), -6.0 / (s * s), -6.0 / (s * s), 4.0 / s)
}

/// Interpolation weights `(Lambda, Omega)` for `tau = t_n + a` inside a
/// knot interval of length `delta`. The noise density cancels, so scalar
/// 2x2 weights act on each tangent coordinate.
pub fn interpolation_weights(a: f64, delta: f64) -> (Matrix2<f64>, Matrix2<f64>) {
    let omega = q_scalar(a) * phi(delta - a).transpose() * q_scalar_inv(delta);
    let lambda = phi(a) - omega * phi(delta);
    (lambda, omega)
}

/// Posterior mean between two knots at `tau` in `[a.t, b.t]`.
pub fn interpolate(a: &TrajectoryState, b: &TrajectoryState, tau: f64) -> Result<TrajectoryState, TrajectoryError> {
    if tau == a.t {
        return Ok(*a);
    }
    if tau == b.t {
        return Ok(*b);
    }
    let delta = b.t - a.t;
    let xi = log_map(&(b.pose * a.pose.inverse()))?;
    let g1 = [xi.to_vector(), left_jacobian_inv(&xi) * b.varpi.to_vector()];
    let g0 = [Vector6::zeros(), a.varpi.to_vector()];
    let (lambda, omega) = interpolation_weights(tau - a.t, delta);
    let comb = |row: usize| -> Vector6<f64> {
        g0[0] * lambda[(row, 0)] + g0[1] * lambda[(row, 1)] + g1[0] * omega[(row, 0)] + g1[1] * omega[(row, 1)]
    };
    let local = Twist::from_vector(&comb(0));
    let psi = comb(1);
    Ok(TrajectoryState::new(
        tau,
        exp_map(&local) * a.pose,
        Twist::from_vector(&(left_jacobian(&local) * psi)),
    ))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ContinuousTrajectory {
    knots: Vec<TrajectoryState>,
    pub prior: WnoaPrior,
}

impl ContinuousTrajectory {
    pub fn new(knots: Vec<TrajectoryState>, prior: WnoaPrior) -> Result<Self, TrajectoryError> {
        if knots.is_empty() {
            return Err(TrajectoryError::Empty);
        }
        if knots.windows(2).any(|w| !(w[1].t > w[0].t)) {
            return Err(TrajectoryError::UnorderedKnots);
        }
        Ok(Self { knots, prior })
    }

    pub fn knots(&self) -> &[TrajectoryState] {
        &self.knots
    }

    pub fn start(&self) -> f64 {
        self.knots[0].t
    }

    pub fn end(&self) -> f64 {
        self.knots[self.knots.len() - 1].t
    }

    pub fn query(&self, t: f64) -> Result<TrajectoryState, TrajectoryError> {
        if !(t >= self.start() && t <= self.end()) {
            return Err(TrajectoryError::OutOfRange {
                t,
                start: self.start(),
                end: self.end(),
            });
        }
        let i = self.knots.partition_point(|k| k.t <= t);
        if i == self.knots.len() {
            return Ok(self.knots[i - 1]);
        }
        interpolate(&self.knots[i - 1], &self.knots[i], t)
    }

    /// Like [`query`](Self::query), but holds the boundary velocity constant
    /// outside the knot range.
    pub fn query_or_extrapolate(&self, t: f64) -> Result<TrajectoryState, TrajectoryError> {
        let edge = if t > self.end() {
            self.knots[self.knots.len() - 1]
        } else if t < self.start() {
            self.knots[0]
        } else {
            return self.query(t);
        };
        Ok(TrajectoryState::new(
            t,
            exp_map(&(edge.varpi * (t - edge.t))) * edge.pose,
            edge.varpi,
        ))
    }
}

impl PoseQuery for ContinuousTrajectory {
    fn pose_at(&self, t: f64) -> Result<Pose, TrajectoryError> {
        Ok(self.query(t)?.pose)
    }

    fn time_range(&self) -> Option<(f64, f64)> {
        Some((self.start(), self.end()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn twist(x: [f64; 6]) -> Twist {
        Twist::from_slice(x)
    }

    #[test]
    fn weights_at_ends() {
        let (l, o) = interpolation_weights(0.0, 0.5);
        assert!((l - Matrix2::identity()).amax() < 1e-12 && o.amax() < 1e-12);
        let (l, o) = interpolation_weights(0.5, 0.5);
        assert!(l.amax() < 1e-12 && (o - Matrix2::identity()).amax() < 1e-12);
    }

    #[test]
    fn knots_returned_exactly() {
        let w = twist([0.1, 0.2, 0.0, 0.3, 0.0, 0.1]);
        let knots: Vec<_> = (0..4)
            .map(|i| TrajectoryState::new(i as f64 * 0.1, exp_map(&(w * (i as f64 * 0.1))), w))
            .collect();
        let tr = ContinuousTrajectory::new(knots.clone(), WnoaPrior::default()).unwrap();
        for k in &knots {
            assert_eq!(tr.query(k.t).unwrap(), *k);
        }
        assert!(matches!(tr.query(0.31), Err(TrajectoryError::OutOfRange { .. })));
        assert!(matches!(
            ContinuousTrajectory::new(vec![knots[1], knots[0]], WnoaPrior::default()),
            Err(TrajectoryError::UnorderedKnots)
        ));
        assert!(matches!(ContinuousTrajectory::new(vec![], WnoaPrior::default()), Err(TrajectoryError::Empty)));
    }

    #[test]
    fn extrapolation_continues_constant_velocity() {
        let w = twist([0.5, 0.0, 0.0, 0.0, 0.2, 0.0]);
        let knots = vec![
            TrajectoryState::new(0.0, Pose::identity(), w),
            TrajectoryState::new(1.0, exp_map(&w), w),
        ];
        let tr = ContinuousTrajectory::new(knots, WnoaPrior::default()).unwrap();
        let s = tr.query_or_extrapolate(1.5).unwrap();
        assert!((s.pose.matrix() - exp_map(&(w * 1.5)).matrix()).amax() < 1e-12);
    }

    proptest! {
        #[test]
        fn constant_velocity_is_reproduced(
            w in prop::array::uniform6(-1.0f64..1.0),
            dt in 0.01f64..1.0,
            frac in 0.0f64..1.0,
        ) {
            let w = twist(w);
            let t0 = 2.0;
            let base = exp_map(&twist([0.3, -0.2, 0.1, 0.2, 0.1, -0.3]));
            let a = TrajectoryState::new(t0, base, w);
            let b = TrajectoryState::new(t0 + dt, exp_map(&(w * dt)) * base, w);
            let tau = t0 + frac * dt;
            let s = interpolate(&a, &b, tau).unwrap();
            let expect = exp_map(&(w * (tau - t0))) * base;
            prop_assert!((s.pose.matrix() - expect.matrix()).amax() < 1e-9);
            prop_assert!((s.varpi.to_vector() - w.to_vector()).amax() < 1e-9);
        }
    }
}
