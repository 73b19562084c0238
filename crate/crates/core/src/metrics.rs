//! Global and relative pose errors against ground truth and their aggregates.

use std::io::{BufWriter, Write};

use crate::error::{Se3Error, TrajectoryError};
use crate::se3::{log_map, Pose, Twist};
use crate::trajectory::PoseQuery;

/// `log(A T_est A^-1 T_gt^-1)` for relative poses `T_est` and `T_gt`.
pub fn pose_error(est: &Pose, gt: &Pose, align: &Pose) -> Result<Twist, Se3Error> {
    log_map(&(*align * *est * align.inverse() * gt.inverse()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorClass {
    Translation,
    Rotation,
    Full,
}

impl ErrorClass {
    pub const ALL: [ErrorClass; 3] = [ErrorClass::Translation, ErrorClass::Rotation, ErrorClass::Full];

    pub fn name(self) -> &'static str {
        match self {
            ErrorClass::Translation => "translation",
            ErrorClass::Rotation => "rotation",
            ErrorClass::Full => "se3",
        }
    }

    pub fn norm(self, xi: &Twist) -> f64 {
        match self {
            ErrorClass::Translation => xi.v.norm(),
            ErrorClass::Rotation => xi.omega.norm(),
            ErrorClass::Full => xi.norm(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ErrorSample {
    pub t: f64,
    pub global: Twist,
    pub relative: Twist,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aggregate {
    pub max: f64,
    pub max_pct: f64,
    pub final_pct: f64,
    pub rms: f64,
    pub std: f64,
}

fn percent(num: f64, path: f64) -> f64 {
    if num == 0.0 && path == 0.0 {
        0.0
    } else {
        100.0 * num / path
    }
}

/// Aggregate of error norms over a path of total length `path`.
pub fn aggregate(values: &[f64], path: f64) -> Aggregate {
    if values.is_empty() {
        return Aggregate {
            max: 0.0,
            max_pct: 0.0,
            final_pct: 0.0,
            rms: 0.0,
            std: 0.0,
        };
    }
    let n = values.len() as f64;
    let max = values.iter().copied().fold(0.0, f64::max);
    let mean = values.iter().sum::<f64>() / n;
    let rms = (values.iter().map(|x| x * x).sum::<f64>() / n).sqrt();
    let std = (values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
    Aggregate {
        max,
        max_pct: percent(max, path),
        final_pct: percent(values[values.len() - 1], path),
        rms,
        std,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    /// One entry per evaluation time after the first.
    pub samples: Vec<ErrorSample>,
    /// Ground-truth path length per class, in [`ErrorClass::ALL`] order.
    pub path: [f64; 3],
    pub global: [Aggregate; 3],
    pub relative: [Aggregate; 3],
}

/// Errors at `times[1..]`: global errors relative to `times[0]`, relative
/// errors between consecutive times.
pub fn evaluate(
    estimate: &dyn PoseQuery,
    truth: &dyn PoseQuery,
    times: &[f64],
    align: &Pose,
) -> Result<MetricsReport, TrajectoryError> {
    if times.len() < 2 {
        return Err(TrajectoryError::TooFewTimes(times.len()));
    }
    let est: Vec<Pose> = times.iter().map(|&t| estimate.pose_at(t)).collect::<Result<_, _>>()?;
    let gt: Vec<Pose> = times.iter().map(|&t| truth.pose_at(t)).collect::<Result<_, _>>()?;
    let mut samples = Vec::with_capacity(times.len() - 1);
    let mut path = [0.0; 3];
    for k in 1..times.len() {
        let global = pose_error(&(est[k] * est[0].inverse()), &(gt[k] * gt[0].inverse()), align)?;
        let gt_step = gt[k] * gt[k - 1].inverse();
        let relative = pose_error(&(est[k] * est[k - 1].inverse()), &gt_step, align)?;
        let step = log_map(&gt_step)?;
        for (c, p) in ErrorClass::ALL.iter().zip(path.iter_mut()) {
            *p += c.norm(&step);
        }
        samples.push(ErrorSample {
            t: times[k],
            global,
            relative,
        });
    }
    let agg = |pick: fn(&ErrorSample) -> Twist| -> [Aggregate; 3] {
        std::array::from_fn(|i| {
            let c = ErrorClass::ALL[i];
            let v: Vec<f64> = samples.iter().map(|s| c.norm(&pick(s))).collect();
            aggregate(&v, path[i])
        })
    };
    let global = agg(|s| s.global);
    let relative = agg(|s| s.relative);
    Ok(MetricsReport {
        samples,
        path,
        global,
        relative,
    })
}

pub fn write_table<W: Write>(sink: W, report: &MetricsReport) -> std::io::Result<()> {
    let mut w = BufWriter::new(sink);
    writeln!(w, "error\tclass\tmax\tmax_pct\tfinal_pct\trms\tstd\tpath")?;
    for (name, aggs) in [("GE", &report.global), ("RE", &report.relative)] {
        for (i, a) in aggs.iter().enumerate() {
            writeln!(
                w,
                "{name}\t{}\t{:e}\t{:e}\t{:e}\t{:e}\t{:e}\t{:e}",
                ErrorClass::ALL[i].name(),
                a.max,
                a.max_pct,
                a.final_pct,
                a.rms,
                a.std,
                report.path[i]
            )?;
        }
    }
    w.flush()
}

pub fn write_samples_csv<W: Write>(sink: W, report: &MetricsReport) -> std::io::Result<()> {
    let mut w = BufWriter::new(sink);
    writeln!(
        w,
        "t,ge_vx,ge_vy,ge_vz,ge_wx,ge_wy,ge_wz,re_vx,re_vy,re_vz,re_wx,re_wy,re_wz,ge_translation,ge_rotation,re_translation,re_rotation"
    )?;
    for s in &report.samples {
        let g = s.global.to_vector();
        let r = s.relative.to_vector();
        write!(w, "{}", s.t)?;
        for x in g.iter().chain(r.iter()) {
            write!(w, ",{x:e}")?;
        }
        writeln!(
            w,
            ",{:e},{:e},{:e},{:e}",
            s.global.v.norm(),
            s.global.omega.norm(),
            s.relative.v.norm(),
            s.relative.omega.norm()
        )?;
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::{TrajectoryState, WnoaPrior};
    use crate::se3::exp_map;
    use crate::trajectory::ContinuousTrajectory;

    #[test]
    fn identical_trajectories_give_zero() {
        let w = Twist::from_slice([0.3, 0.0, 0.1, 0.0, 0.2, 0.0]);
        let knots: Vec<_> = (0..11)
            .map(|i| TrajectoryState::new(0.1 * i as f64, exp_map(&(w * (0.1 * i as f64))), w))
            .collect();
        let tr = ContinuousTrajectory::new(knots, WnoaPrior::default()).unwrap();
        let times: Vec<f64> = (0..20).map(|i| 0.05 * i as f64).collect();
        let r = evaluate(&tr, &tr, &times, &Pose::identity()).unwrap();
        for a in r.global.iter().chain(r.relative.iter()) {
            assert!(a.max < 1e-14 && a.rms < 1e-14 && a.max_pct < 1e-12);
        }
        assert!((r.path[0] - 0.95 * w.v.norm()).abs() < 1e-12);
    }

    #[test]
    fn aggregate_by_hand() {
        let a = aggregate(&[3.0, 4.0, 0.0], 50.0);
        assert_eq!(a.max, 4.0);
        assert_eq!(a.max_pct, 8.0);
        assert_eq!(a.final_pct, 0.0);
        assert!((a.rms - (25.0f64 / 3.0).sqrt()).abs() < 1e-15);
        let mean = 7.0 / 3.0;
        let var = ((3.0 - mean) * (3.0f64 - mean) + (4.0 - mean) * (4.0 - mean) + mean * mean) / 3.0;
        assert!((a.std - var.sqrt()).abs() < 1e-15);
        assert_eq!(percent(0.0, 0.0), 0.0);
    }

    #[test]
    fn too_few_times() {
        let tr = ContinuousTrajectory::new(
            vec![TrajectoryState::new(0.0, Pose::identity(), Twist::zero())],
            WnoaPrior::default(),
        )
        .unwrap();
        assert!(matches!(evaluate(&tr, &tr, &[0.0], &Pose::identity()), Err(TrajectoryError::TooFewTimes(1))));
    }
}
