//! TUM-format pose files (`t tx ty tz qx qy qz qw`, world from camera) and
//! plain time lists.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{Quaternion, UnitQuaternion, Vector3};

use crate::error::TrajectoryError;
use crate::se3::{so3_exp, so3_log, Pose};
use crate::trajectory::PoseQuery;

/// Timestamped camera-from-world pose.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PoseSample {
    pub t: f64,
    pub pose: Pose,
}

fn io_err(path: &Path, source: std::io::Error) -> TrajectoryError {
    TrajectoryError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn data_lines<R: Read>(source: R) -> impl Iterator<Item = (usize, std::io::Result<String>)> {
    BufReader::new(source)
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l))
        .filter(|(_, l)| match l {
            Ok(s) => {
                let s = s.trim();
                !s.is_empty() && !s.starts_with('#')
            }
            Err(_) => true,
        })
}

fn parse_fields(line: usize, text: &str, expect: usize) -> Result<Vec<f64>, TrajectoryError> {
    let fields: Vec<f64> = text
        .split_whitespace()
        .map(|f| f.parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| TrajectoryError::Parse {
            line,
            message: e.to_string(),
        })?;
    if fields.len() != expect {
        return Err(TrajectoryError::Parse {
            line,
            message: format!("expected {expect} fields, found {}", fields.len()),
        });
    }
    Ok(fields)
}

pub fn read_tum<R: Read>(source: R) -> Result<Vec<PoseSample>, TrajectoryError> {
    let mut out = Vec::new();
    for (line, text) in data_lines(source) {
        let text = text.map_err(|e| TrajectoryError::Parse {
            line,
            message: e.to_string(),
        })?;
        let f = parse_fields(line, &text, 8)?;
        let q = Quaternion::new(f[7], f[4], f[5], f[6]);
        if !(q.norm() > 0.0) {
            return Err(TrajectoryError::Parse {
                line,
                message: "zero quaternion".into(),
            });
        }
        let r = UnitQuaternion::from_quaternion(q).to_rotation_matrix().into_inner();
        let world_from_camera = Pose {
            rotation: r,
            translation: Vector3::new(f[1], f[2], f[3]),
        };
        out.push(PoseSample {
            t: f[0],
            pose: world_from_camera.inverse(),
        });
    }
    Ok(out)
}

pub fn read_tum_file(path: &Path) -> Result<Vec<PoseSample>, TrajectoryError> {
    read_tum(File::open(path).map_err(|e| io_err(path, e))?)
}

pub fn write_tum<W: Write>(sink: W, samples: &[PoseSample]) -> std::io::Result<()> {
    let mut w = BufWriter::new(sink);
    for s in samples {
        let wc = s.pose.inverse();
        let q = UnitQuaternion::from_matrix(&wc.rotation);
        let p = wc.translation;
        writeln!(w, "{} {} {} {} {} {} {} {}", s.t, p.x, p.y, p.z, q.i, q.j, q.k, q.w)?;
    }
    w.flush()
}

pub fn write_tum_file(path: &Path, samples: &[PoseSample]) -> Result<(), TrajectoryError> {
    write_tum(File::create(path).map_err(|e| io_err(path, e))?, samples).map_err(|e| io_err(path, e))
}

/// One time per line.
pub fn read_times<R: Read>(source: R) -> Result<Vec<f64>, TrajectoryError> {
    let mut out = Vec::new();
    for (line, text) in data_lines(source) {
        let text = text.map_err(|e| TrajectoryError::Parse {
            line,
            message: e.to_string(),
        })?;
        out.push(parse_fields(line, &text, 1)?[0]);
    }
    Ok(out)
}

pub fn read_times_file(path: &Path) -> Result<Vec<f64>, TrajectoryError> {
    read_times(File::open(path).map_err(|e| io_err(path, e))?)
}

pub fn write_times_file(path: &Path, times: &[f64]) -> Result<(), TrajectoryError> {
    let mut w = BufWriter::new(File::create(path).map_err(|e| io_err(path, e))?);
    for t in times {
        writeln!(w, "{t}").map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

/// Piecewise trajectory through pose samples: camera position linear and
/// orientation geodesic between neighbours.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledTrajectory {
    samples: Vec<PoseSample>,
}

impl SampledTrajectory {
    pub fn new(samples: Vec<PoseSample>) -> Result<Self, TrajectoryError> {
        if samples.is_empty() {
            return Err(TrajectoryError::Empty);
        }
        if samples.windows(2).any(|w| !(w[1].t > w[0].t)) {
            return Err(TrajectoryError::UnorderedKnots);
        }
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[PoseSample] {
        &self.samples
    }
}

impl PoseQuery for SampledTrajectory {
    fn pose_at(&self, t: f64) -> Result<Pose, TrajectoryError> {
        let (start, end) = (self.samples[0].t, self.samples[self.samples.len() - 1].t);
        if !(t >= start && t <= end) {
            return Err(TrajectoryError::OutOfRange { t, start, end });
        }
        let i = self.samples.partition_point(|s| s.t <= t);
        let a = &self.samples[i - 1];
        if a.t == t || i == self.samples.len() {
            return Ok(a.pose);
        }
        let b = &self.samples[i];
        let s = (t - a.t) / (b.t - a.t);
        let (wa, wb) = (a.pose.inverse(), b.pose.inverse());
        let dr = so3_log(&(wa.rotation.transpose() * wb.rotation))?;
        let wc = Pose {
            rotation: wa.rotation * so3_exp(&(dr * s)),
            translation: wa.translation + (wb.translation - wa.translation) * s,
        };
        Ok(wc.inverse())
    }

    fn time_range(&self) -> Option<(f64, f64)> {
        Some((self.samples[0].t, self.samples[self.samples.len() - 1].t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::se3::{exp_map, Twist};

    #[test]
    fn round_trip() {
        let samples: Vec<PoseSample> = (0..20)
            .map(|i| PoseSample {
                t: 0.1 * i as f64 + 1e-7,
                pose: exp_map(&Twist::from_slice([0.1 * i as f64, -0.2, 0.3, 0.05 * i as f64, 0.3, -0.1])),
            })
            .collect();
        let mut buf = Vec::new();
        write_tum(&mut buf, &samples).unwrap();
        let back = read_tum(buf.as_slice()).unwrap();
        for (a, b) in samples.iter().zip(&back) {
            assert_eq!(a.t, b.t);
            assert!((a.pose.matrix() - b.pose.matrix()).amax() < 1e-14);
        }
    }

    #[test]
    fn world_from_camera_convention() {
        let text = "# comment\n1.5 1 2 3 0 0 0 1\n";
        let s = read_tum(text.as_bytes()).unwrap();
        assert_eq!(s[0].t, 1.5);
        assert_eq!(s[0].pose.translation, Vector3::new(-1.0, -2.0, -3.0));
        assert!(matches!(read_tum("1 2 3".as_bytes()), Err(TrajectoryError::Parse { line: 1, .. })));
    }

    #[test]
    fn interpolation() {
        let a = PoseSample { t: 0.0, pose: Pose::identity() };
        let wc = exp_map(&Twist::from_slice([0.0, 0.0, 0.0, 0.0, 0.0, 0.4]));
        let b = PoseSample {
            t: 1.0,
            pose: Pose { rotation: wc.rotation, translation: Vector3::new(2.0, 0.0, 0.0) }.inverse(),
        };
        let tr = SampledTrajectory::new(vec![a, b]).unwrap();
        let mid = tr.pose_at(0.5).unwrap().inverse();
        assert!((mid.translation - Vector3::new(1.0, 0.0, 0.0)).amax() < 1e-12);
        let expect = so3_exp(&Vector3::new(0.0, 0.0, 0.2));
        assert!((mid.rotation - expect).amax() < 1e-12);
        assert_eq!(tr.pose_at(1.0).unwrap(), b.pose);
        assert!(tr.pose_at(1.1).is_err());
    }

    #[test]
    fn times() {
        assert_eq!(read_times("0.5\n\n# x\n0.25\n".as_bytes()).unwrap(), vec![0.5, 0.25]);
    }
}
