//! White-noise-on-acceleration motion prior between consecutive knots.

use nalgebra::{Matrix6, SMatrix, SVector, Vector6};

use crate::error::{EstimationError, Se3Error};
use crate::se3::{adjoint, left_jacobian_inv, left_jacobian_inv_times_derivative, log_map, Pose, Twist};

pub type Matrix12 = SMatrix<f64, 12, 12>;
pub type Matrix12x24 = SMatrix<f64, 12, 24>;
pub type Vector12 = SVector<f64, 12>;

/// Pose and body-centric velocity at one time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrajectoryState {
    pub t: f64,
    pub pose: Pose,
    pub varpi: Twist,
}

impl TrajectoryState {
    pub fn new(t: f64, pose: Pose, varpi: Twist) -> Self {
        Self { t, pose, varpi }
    }
}

/// Diagonal power-spectral density `Qc` of the acceleration noise.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WnoaPrior {
    pub qc_diag: Vector6<f64>,
}

impl Default for WnoaPrior {
    fn default() -> Self {
        Self::from_inverse_diag(Vector6::new(50.0, 50.0, 50.0, 500.0, 500.0, 500.0)).expect("positive defaults")
    }
}

impl WnoaPrior {
    pub fn new(qc_diag: Vector6<f64>) -> Result<Self, EstimationError> {
        if qc_diag.iter().all(|&q| q > 0.0 && q.is_finite()) {
            Ok(Self { qc_diag })
        } else {
            Err(EstimationError::InsufficientData("Qc entries must be positive".into()))
        }
    }

    pub fn from_inverse_diag(qc_inv_diag: Vector6<f64>) -> Result<Self, EstimationError> {
        Self::new(qc_inv_diag.map(|x| 1.0 / x))
    }

    pub fn qc(&self) -> Matrix6<f64> {
        Matrix6::from_diagonal(&self.qc_diag)
    }

    pub fn qc_inv(&self) -> Matrix6<f64> {
        Matrix6::from_diagonal(&self.qc_diag.map(|x| 1.0 / x))
    }
}

fn kron2(m: [[f64; 2]; 2], q: &Matrix6<f64>) -> Matrix12 {
    let mut out = Matrix12::zeros();
    for (r, row) in m.iter().enumerate() {
        for (c, &v) in row.iter().enumerate() {
            out.fixed_view_mut::<6, 6>(6 * r, 6 * c).copy_from(&(q * v));
        }
    }
    out
}

pub fn prior_covariance(prior: &WnoaPrior, dt: f64) -> Result<Matrix12, EstimationError> {
    if !(dt > 0.0) {
        return Err(EstimationError::NonPositiveDt { dt });
    }
    let m = [[dt * dt * dt / 3.0, dt * dt / 2.0], [dt * dt / 2.0, dt]];
    Ok(kron2(m, &prior.qc()))
}

/// Closed-form inverse of [`prior_covariance`].
pub fn prior_information(prior: &WnoaPrior, dt: f64) -> Result<Matrix12, EstimationError> {
    if !(dt > 0.0) {
        return Err(EstimationError::NonPositiveDt { dt });
    }
    let m = [
        [12.0 / (dt * dt * dt), -6.0 / (dt * dt)],
        [-6.0 / (dt * dt), 4.0 / dt],
    ];
    Ok(kron2(m, &prior.qc_inv()))
}

/// Prior residual `[xi - dt varpi_k; J^-1(xi) varpi_k1 - varpi_k]` with
/// `xi = log(T_k1 T_k^-1)`.
pub fn prior_error(a: &TrajectoryState, b: &TrajectoryState) -> Result<Vector12, Se3Error> {
    let dt = b.t - a.t;
    let xi = log_map(&(b.pose * a.pose.inverse()))?;
    let top = xi.to_vector() - a.varpi.to_vector() * dt;
    let bottom = left_jacobian_inv(&xi) * b.varpi.to_vector() - a.varpi.to_vector();
    let mut e = Vector12::zeros();
    e.fixed_rows_mut::<6>(0).copy_from(&top);
    e.fixed_rows_mut::<6>(6).copy_from(&bottom);
    Ok(e)
}

/// Jacobian `E` of the prior residual with respect to
/// `[d xi_k, d varpi_k, d xi_k1, d varpi_k1]`, using left pose perturbations,
/// in the convention `e(x + d) ~= e(x) - E d`.
pub fn prior_jacobian(a: &TrajectoryState, b: &TrajectoryState) -> Result<Matrix12x24, Se3Error> {
    let dt = b.t - a.t;
    let rel = b.pose * a.pose.inverse();
    let xi = log_map(&rel)?;
    let jinv = left_jacobian_inv(&xi);
    let ad = adjoint(&rel);
    let d = left_jacobian_inv_times_derivative(&xi, &b.varpi);
    let eye = Matrix6::identity();
    let mut e = Matrix12x24::zeros();
    e.fixed_view_mut::<6, 6>(0, 0).copy_from(&(jinv * ad));
    e.fixed_view_mut::<6, 6>(0, 6).copy_from(&(eye * dt));
    e.fixed_view_mut::<6, 6>(0, 12).copy_from(&(-jinv));
    e.fixed_view_mut::<6, 6>(6, 0).copy_from(&(d * jinv * ad));
    e.fixed_view_mut::<6, 6>(6, 6).copy_from(&eye);
    e.fixed_view_mut::<6, 6>(6, 12).copy_from(&(-(d * jinv)));
    e.fixed_view_mut::<6, 6>(6, 18).copy_from(&(-jinv));
    Ok(e)
}
