//! Rectified stereo pinhole camera.

use nalgebra::{Matrix3x4, Vector3};

use crate::error::CameraError;
use crate::se3::HomogeneousPoint;

pub const DEFAULT_MIN_DEPTH: f64 = 0.05;
pub const DEFAULT_MIN_DISPARITY: f64 = 0.1;

/// A stereo measurement `(u_left, v_left, u_right)` at a time. The right
/// image row equals the left one after rectification and is not stored.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StereoMeasurement {
    pub u_left: f64,
    pub v_left: f64,
    pub u_right: f64,
    pub time: f64,
}

impl StereoMeasurement {
    pub fn new(u_left: f64, v_left: f64, u_right: f64, time: f64) -> Self {
        Self {
            u_left,
            v_left,
            u_right,
            time,
        }
    }

    pub fn from_vector(y: &Vector3<f64>, time: f64) -> Self {
        Self::new(y.x, y.y, y.z, time)
    }

    pub fn vector(&self) -> Vector3<f64> {
        Vector3::new(self.u_left, self.v_left, self.u_right)
    }

    pub fn disparity(&self) -> f64 {
        self.u_left - self.u_right
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StereoCameraModel {
    pub fu: f64,
    pub fv: f64,
    pub cu: f64,
    pub cv: f64,
    pub baseline: f64,
    pub width: usize,
    pub height: usize,
    pub min_depth: f64,
    pub min_disparity: f64,
}

impl StereoCameraModel {
    pub fn new(
        fu: f64,
        fv: f64,
        cu: f64,
        cv: f64,
        baseline: f64,
        width: usize,
        height: usize,
    ) -> Result<Self, CameraError> {
        let model = Self {
            fu,
            fv,
            cu,
            cv,
            baseline,
            width,
            height,
            min_depth: DEFAULT_MIN_DEPTH,
            min_disparity: DEFAULT_MIN_DISPARITY,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<(), CameraError> {
        let bad = |what: &str| Err(CameraError::InvalidParameter(what.to_string()));
        if !(self.fu > 0.0 && self.fu.is_finite()) {
            return bad("fu must be positive");
        }
        if !(self.fv > 0.0 && self.fv.is_finite()) {
            return bad("fv must be positive");
        }
        if !(self.baseline > 0.0 && self.baseline.is_finite()) {
            return bad("baseline must be positive");
        }
        if self.width == 0 || self.height == 0 {
            return bad("sensor size must be non-zero");
        }
        if !(self.cu >= 0.0 && self.cu < self.width as f64) {
            return bad("cu must lie inside the image");
        }
        if !(self.cv >= 0.0 && self.cv < self.height as f64) {
            return bad("cv must lie inside the image");
        }
        Ok(())
    }

    /// Projects a point expressed in the left camera frame.
    pub fn project(&self, p: &HomogeneousPoint) -> Result<Vector3<f64>, CameraError> {
        let q = p.normalized().xyz();
        if !(q.z > self.min_depth) {
            return Err(CameraError::NonPositiveDepth { depth: q.z });
        }
        let iz = 1.0 / q.z;
        Ok(Vector3::new(
            self.fu * q.x * iz + self.cu,
            self.fv * q.y * iz + self.cv,
            self.fu * (q.x - self.baseline) * iz + self.cu,
        ))
    }

    pub fn triangulate(&self, y: &Vector3<f64>) -> Result<HomogeneousPoint, CameraError> {
        let d = y.x - y.z;
        if !(d > self.min_disparity) {
            return Err(CameraError::DegenerateDisparity { disparity: d });
        }
        let z = self.fu * self.baseline / d;
        let x = (y.x - self.cu) * z / self.fu;
        let yy = (y.y - self.cv) * z / self.fv;
        Ok(HomogeneousPoint::new(x, yy, z))
    }

    /// Jacobian of [`project`](Self::project) with respect to the homogeneous
    /// coordinates, evaluated for a point with unit fourth component.
    pub fn projection_jacobian(&self, p: &HomogeneousPoint) -> Result<Matrix3x4<f64>, CameraError> {
        let q = p.normalized().xyz();
        if !(q.z > self.min_depth) {
            return Err(CameraError::NonPositiveDepth { depth: q.z });
        }
        let iz = 1.0 / q.z;
        let iz2 = iz * iz;
        let b = self.baseline;
        Ok(Matrix3x4::new(
            self.fu * iz,
            0.0,
            -self.fu * q.x * iz2,
            0.0,
            0.0,
            self.fv * iz,
            -self.fv * q.y * iz2,
            0.0,
            self.fu * iz,
            0.0,
            -self.fu * (q.x - b) * iz2,
            0.0,
        ))
    }

    pub fn in_bounds(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && v >= 0.0 && u <= (self.width - 1) as f64 && v <= (self.height - 1) as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn model() -> StereoCameraModel {
        StereoCameraModel::new(100.0, 100.0, 50.0, 50.0, 0.1, 100, 100).unwrap()
    }

    #[test]
    fn projection_examples() {
        let m = model();
        assert_eq!(m.project(&HomogeneousPoint::new(0.0, 0.0, 1.0)).unwrap(), Vector3::new(50.0, 50.0, 40.0));
        let y = m.project(&HomogeneousPoint::new(0.1, 0.0, 1.0)).unwrap();
        assert_relative_eq!(y, Vector3::new(60.0, 50.0, 50.0), epsilon = 1e-12);
        assert!(matches!(
            m.project(&HomogeneousPoint::new(0.0, 0.0, -1.0)),
            Err(CameraError::NonPositiveDepth { .. })
        ));
    }

    #[test]
    fn triangulation_examples() {
        let m = model();
        let p = m.triangulate(&Vector3::new(50.0, 50.0, 40.0)).unwrap();
        assert_relative_eq!(p.coords, HomogeneousPoint::new(0.0, 0.0, 1.0).coords, epsilon = 1e-12);
        let p = m.triangulate(&Vector3::new(60.0, 50.0, 50.0)).unwrap();
        assert_relative_eq!(p.coords, HomogeneousPoint::new(0.1, 0.0, 1.0).coords, epsilon = 1e-12);
        assert!(matches!(
            m.triangulate(&Vector3::new(50.0, 50.0, 49.95)),
            Err(CameraError::DegenerateDisparity { .. })
        ));
    }

    #[test]
    fn round_trips() {
        let m = model();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..1000 {
            let z = rng.random_range(0.5..10.0);
            let p = HomogeneousPoint::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), z);
            let back = m.triangulate(&m.project(&p).unwrap()).unwrap();
            assert!((back.coords - p.coords).amax() < 1e-9 * z.max(1.0));
        }
        for _ in 0..1000 {
            let d = rng.random_range(1.0..40.0);
            let ul = rng.random_range(0.0..100.0);
            let y = Vector3::new(ul, rng.random_range(0.0..100.0), ul - d);
            let back = m.project(&m.triangulate(&y).unwrap()).unwrap();
            assert!((back - y).amax() < 1e-9);
        }
    }

    #[test]
    fn jacobian_matches_central_differences() {
        let m = model();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let eps = 1e-6;
        for _ in 0..100 {
            let p = HomogeneousPoint::new(
                rng.random_range(-2.0..2.0),
                rng.random_range(-2.0..2.0),
                rng.random_range(0.5..10.0),
            );
            let j = m.projection_jacobian(&p).unwrap();
            for c in 0..3 {
                let mut hi = p;
                let mut lo = p;
                hi.coords[c] += eps;
                lo.coords[c] -= eps;
                let col = (m.project(&hi).unwrap() - m.project(&lo).unwrap()) / (2.0 * eps);
                let scale = col.amax().max(1e-8);
                assert!((col - j.column(c)).amax() / scale < 1e-5);
            }
            assert_eq!(j.column(3).into_owned(), Vector3::zeros());
        }
    }

    #[test]
    fn on_axis_jacobian() {
        let j = model().projection_jacobian(&HomogeneousPoint::new(0.0, 0.0, 1.0)).unwrap();
        assert_eq!(j[(0, 0)], 100.0);
        assert_eq!(j[(0, 1)], 0.0);
    }

    #[test]
    fn rejects_bad_parameters() {
        assert!(StereoCameraModel::new(0.0, 100.0, 50.0, 50.0, 0.1, 100, 100).is_err());
        assert!(StereoCameraModel::new(100.0, 100.0, 150.0, 50.0, 0.1, 100, 100).is_err());
        assert!(StereoCameraModel::new(100.0, 100.0, 50.0, 50.0, -0.1, 100, 100).is_err());
    }
}
