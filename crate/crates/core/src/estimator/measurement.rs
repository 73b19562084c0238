//! Stereo reprojection residual and its Jacobian.

use nalgebra::{Matrix3, SMatrix, Vector3};

use crate::camera::{StereoCameraModel, StereoMeasurement};
use crate::error::CameraError;
use crate::se3::{odot, transform_point, HomogeneousPoint, Pose};

pub type Matrix3x6 = SMatrix<f64, 3, 6>;

/// `y - s(T p)`.
pub fn measurement_error(
    pose: &Pose,
    landmark: &HomogeneousPoint,
    y: &StereoMeasurement,
    camera: &StereoCameraModel,
) -> Result<Vector3<f64>, CameraError> {
    Ok(y.vector() - camera.project(&transform_point(pose, landmark))?)
}

/// Pose and landmark blocks of `G` for a left pose perturbation and an
/// additive landmark perturbation, with `e(x + d) ~= e(x) - G d`.
pub fn measurement_jacobian(
    pose: &Pose,
    landmark: &HomogeneousPoint,
    camera: &StereoCameraModel,
) -> Result<(Matrix3x6, Matrix3<f64>), CameraError> {
    let z = transform_point(pose, landmark);
    let ds = camera.projection_jacobian(&z)?;
    let ds3 = ds.fixed_columns::<3>(0).into_owned();
    let g_pose = ds * odot(&z);
    let g_point = ds3 * pose.rotation;
    Ok((g_pose, g_point))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_projection_has_zero_residual() {
        let cam = StereoCameraModel::new(100.0, 100.0, 50.0, 50.0, 0.1, 100, 100).unwrap();
        let p = HomogeneousPoint::new(0.1, -0.2, 2.0);
        let y = StereoMeasurement::from_vector(&cam.project(&p).unwrap(), 0.0);
        assert_eq!(measurement_error(&Pose::identity(), &p, &y, &cam).unwrap(), Vector3::zeros());
    }

    #[test]
    fn shifted_landmark_residual() {
        let cam = StereoCameraModel::new(100.0, 100.0, 50.0, 50.0, 0.1, 100, 100).unwrap();
        let p = HomogeneousPoint::new(0.0, 0.0, 1.0);
        let y = StereoMeasurement::from_vector(&cam.project(&p).unwrap(), 0.0);
        let moved = HomogeneousPoint::new(0.01, 0.0, 1.0);
        let e = measurement_error(&Pose::identity(), &moved, &y, &cam).unwrap();
        assert!((e - Vector3::new(-1.0, 0.0, -1.0)).amax() < 1e-12);
    }
}
