//! Synthetic stereo scenes, rendered as tracklets or as event streams.

use nalgebra::{DMatrix, DVector, Vector3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::camera::{StereoCameraModel, StereoMeasurement};
use crate::error::{EstimationError, TrajectoryError};
use crate::estimator::{TrajectoryState, WnoaPrior};
use crate::events::{Event, Side};
use crate::features::Descriptor;
use crate::ransac::TrackletSegment;
use crate::se3::{exp_map, odot, transform_point, HomogeneousPoint, Pose, Twist};
use crate::tracklets::{FeatureObservation, FeatureTracklet, Resolution};
use crate::trajectory::{ContinuousTrajectory, PoseQuery};
use crate::tum::PoseSample;

#[derive(Clone, Debug, PartialEq)]
pub enum GroundTruth {
    /// `T(t) = exp((t - start) varpi^)`.
    ConstantVelocity(Twist),
    Continuous(ContinuousTrajectory),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticScene {
    pub camera: StereoCameraModel,
    /// World-frame points; the world frame is the camera at `start`.
    pub landmarks: Vec<HomogeneousPoint>,
    pub truth: GroundTruth,
    pub start: f64,
    pub end: f64,
}

impl SyntheticScene {
    pub fn state_at(&self, t: f64) -> TrajectoryState {
        match &self.truth {
            GroundTruth::ConstantVelocity(w) => TrajectoryState::new(t, exp_map(&(*w * (t - self.start))), *w),
            GroundTruth::Continuous(tr) => tr.query_or_extrapolate(t).expect("non-empty trajectory"),
        }
    }

    pub fn pose_at(&self, t: f64) -> Pose {
        self.state_at(t).pose
    }

    /// Stereo measurement of a landmark, if it projects inside both images.
    pub fn observe(&self, landmark: usize, t: f64) -> Option<StereoMeasurement> {
        let p = transform_point(&self.pose_at(t), &self.landmarks[landmark]);
        let y = self.camera.project(&p).ok()?;
        (self.camera.in_bounds(y.x, y.y) && self.camera.in_bounds(y.z, y.y)).then(|| StereoMeasurement::from_vector(&y, t))
    }

    /// Ground-truth samples every `1 / rate` seconds over the scene span.
    pub fn ground_truth_samples(&self, rate: f64) -> Vec<PoseSample> {
        let n = ((self.end - self.start) * rate).floor() as usize;
        (0..=n)
            .map(|i| self.start + i as f64 / rate)
            .filter(|&t| t <= self.end)
            .map(|t| PoseSample { t, pose: self.pose_at(t) })
            .collect()
    }
}

impl PoseQuery for SyntheticScene {
    fn pose_at(&self, t: f64) -> Result<Pose, TrajectoryError> {
        Ok(SyntheticScene::pose_at(self, t))
    }

    fn time_range(&self) -> Option<(f64, f64)> {
        Some((self.start, self.end))
    }
}

fn visible_throughout(scene: &SyntheticScene, j: usize, samples: usize) -> bool {
    (0..=samples).all(|i| {
        let t = scene.start + (scene.end - scene.start) * i as f64 / samples as f64;
        scene.observe(j, t).is_some()
    })
}

/// Adds up to `n` random landmarks (depth 1 to 5 m) that stay in view over
/// the whole scene span.
fn populate(scene: &mut SyntheticScene, n: usize, rng: &mut ChaCha8Rng) {
    let cam = scene.camera;
    let mut attempts = 0;
    while scene.landmarks.len() < n && attempts < 10_000 * n.max(1) {
        attempts += 1;
        let u = rng.random_range(0.0..cam.width as f64);
        let v = rng.random_range(0.0..cam.height as f64);
        let z = rng.random_range(1.0..5.0);
        let xyz = Vector3::new((u - cam.cu) * z / cam.fu, (v - cam.cv) * z / cam.fv, z);
        scene.landmarks.push(HomogeneousPoint::from_vector3(&xyz));
        let j = scene.landmarks.len() - 1;
        if !visible_throughout(scene, j, 50) {
            scene.landmarks.pop();
        }
    }
}

pub fn generate_constant_velocity_scene(
    camera: StereoCameraModel,
    velocity: Twist,
    n_landmarks: usize,
    duration: f64,
    seed: u64,
) -> SyntheticScene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scene = SyntheticScene {
        camera,
        landmarks: Vec::new(),
        truth: GroundTruth::ConstantVelocity(velocity),
        start: 0.0,
        end: duration,
    };
    populate(&mut scene, n_landmarks, &mut rng);
    scene
}

/// Smooth non-constant motion: knots every `spacing` seconds whose
/// velocities random-walk around `mean` with step scale `jitter`.
pub fn random_smooth_trajectory(mean: Twist, jitter: f64, duration: f64, spacing: f64, seed: u64) -> ContinuousTrajectory {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = (duration / spacing).ceil() as usize + 1;
    let mut knots = Vec::with_capacity(n);
    let mut pose = Pose::identity();
    let mut w = mean;
    for i in 0..n {
        let t = i as f64 * spacing;
        if i > 0 {
            let prev: TrajectoryState = knots[i - 1];
            let step = Twist::from_slice(std::array::from_fn(|_| rng.random_range(-jitter..jitter)));
            w = mean + step;
            // Midpoint velocity keeps the motion between knots smooth.
            pose = exp_map(&((prev.varpi + w) * (0.5 * spacing))) * prev.pose;
        }
        knots.push(TrajectoryState::new(t, pose, w));
    }
    ContinuousTrajectory::new(knots, WnoaPrior::default()).expect("increasing knots")
}

pub fn generate_continuous_scene(
    camera: StereoCameraModel,
    trajectory: ContinuousTrajectory,
    n_landmarks: usize,
    seed: u64,
) -> SyntheticScene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut scene = SyntheticScene {
        camera,
        landmarks: Vec::new(),
        start: trajectory.start(),
        end: trajectory.end(),
        truth: GroundTruth::Continuous(trajectory),
    };
    populate(&mut scene, n_landmarks, &mut rng);
    scene
}

/// Five-dot glyphs at random positions and depths, each dot pattern
/// distinct, seen from a continuous trajectory.
pub fn glyph_scene(trajectory: ContinuousTrajectory, n_glyphs: usize, seed: u64) -> SyntheticScene {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let camera = lattice_camera();
    let mut scene = SyntheticScene {
        camera,
        landmarks: Vec::new(),
        start: trajectory.start(),
        end: trajectory.end(),
        truth: GroundTruth::Continuous(trajectory),
    };
    let mut placed = 0;
    let mut attempts = 0;
    while placed < n_glyphs && attempts < 1000 * n_glyphs.max(1) {
        attempts += 1;
        let u0 = rng.random_range(20.0..camera.width as f64 - 20.0);
        let v0 = rng.random_range(20.0..camera.height as f64 - 30.0);
        let z = rng.random_range(1.0..5.0);
        let before = scene.landmarks.len();
        for i in 0..5 {
            let u = u0 + rng.random_range(0..7) as f64;
            let v = v0 + 3.0 * i as f64;
            let xyz = Vector3::new((u - camera.cu) * z / camera.fu, (v - camera.cv) * z / camera.fv, z);
            scene.landmarks.push(HomogeneousPoint::from_vector3(&xyz));
        }
        if (before..before + 5).all(|j| visible_throughout(&scene, j, 50)) {
            placed += 1;
        } else {
            scene.landmarks.truncate(before);
        }
    }
    scene
}

pub fn lattice_camera() -> StereoCameraModel {
    StereoCameraModel::new(200.0, 200.0, 160.0, 120.0, 0.1, 320, 240).expect("valid camera")
}

/// Ten five-dot glyphs translating sideways at 40 or 80 px/s (disparity 8
/// or 16). Every dot crosses integer columns only at times `1.25 ms + m *
/// 2.5 ms`, so event timestamps fall on a coarse shared grid and each event
/// pixel is an exact projection.
pub fn lattice_scene(duration: f64) -> SyntheticScene {
    let camera = lattice_camera();
    let speed = 0.5;
    let mut landmarks = Vec::with_capacity(50);
    for g in 0..10usize {
        let (disparity, px_per_s) = if g % 2 == 0 { (8.0, 40.0) } else { (16.0, 80.0) };
        let z = camera.fu * camera.baseline / disparity;
        debug_assert!((camera.fu * speed / z - px_per_s).abs() < 1e-12);
        let layer = g / 2;
        let base = if px_per_s == 40.0 { 120.0 + 36.0 * layer as f64 } else { 190.0 + 24.0 * layer as f64 };
        let v0 = 8.0 + 22.0 * g as f64;
        for i in 0..5usize {
            let column = ((i * (g + 2)) % 7) as f64;
            let m = (g + 3 * i) % if px_per_s == 40.0 { 10 } else { 5 };
            let frac = if px_per_s == 40.0 { 0.05 + 0.1 * m as f64 } else { 0.1 + 0.2 * m as f64 };
            let u = base + column + frac;
            let v = v0 + 3.0 * i as f64;
            let xyz = Vector3::new((u - camera.cu) * z / camera.fu, (v - camera.cv) * z / camera.fv, z);
            landmarks.push(HomogeneousPoint::from_vector3(&xyz));
        }
    }
    SyntheticScene {
        camera,
        landmarks,
        truth: GroundTruth::ConstantVelocity(Twist::from_slice([-speed, 0.0, 0.0, 0.0, 0.0, 0.0])),
        start: 0.0,
        end: duration,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrackletRenderConfig {
    pub observations: usize,
    pub noise_sigma: f64,
    pub outlier_fraction: f64,
    pub seed: u64,
}

impl Default for TrackletRenderConfig {
    fn default() -> Self {
        Self {
            observations: 10,
            noise_sigma: 0.0,
            outlier_fraction: 0.0,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RenderedTracklets {
    pub tracklets: Vec<FeatureTracklet>,
    /// Whether each tracklet switches to a wrong landmark halfway.
    pub outlier: Vec<bool>,
}

/// Minimum image distance between the true and the substituted landmark of
/// an outlier tracklet.
const OUTLIER_MIN_PX: f64 = 30.0;

/// One tracklet per landmark. Observation times are interleaved on a
/// uniform grid, so every time is unique. Exactly
/// `round(outlier_fraction * n)` tracklets have their second half
/// re-pointed to a landmark whose projection is far from the true one.
pub fn render_tracklets(scene: &SyntheticScene, config: &TrackletRenderConfig) -> RenderedTracklets {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = scene.landmarks.len();
    let k = config.observations.max(2);
    let slot = (scene.end - scene.start) / (n * k) as f64;
    let time = |i: usize, j: usize| scene.start + (j * n + i) as f64 * slot + 0.5 * slot;
    let n_out = ((config.outlier_fraction * n as f64).round() as usize).min(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut outlier = vec![false; n];
    for &i in &order[..n_out] {
        outlier[i] = true;
    }
    let noise = Normal::new(0.0, config.noise_sigma.max(0.0)).expect("finite sigma");
    let switch = k.div_ceil(2);
    let mut tracklets = Vec::with_capacity(n);
    for i in 0..n {
        let source: Vec<usize> = if outlier[i] {
            let t_sw = time(i, switch);
            let own = scene.observe(i, t_sw).map(|y| y.vector());
            let mut candidates: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .filter_map(|j| {
                    let y = scene.observe(j, t_sw)?.vector();
                    let d = own.map_or(f64::INFINITY, |o| (o.xy() - y.xy()).norm());
                    Some((d, j))
                })
                .collect();
            candidates.sort_by(|a, b| b.0.total_cmp(&a.0));
            let far: Vec<usize> = candidates.iter().filter(|c| c.0 >= OUTLIER_MIN_PX).map(|c| c.1).collect();
            let wrong = if far.is_empty() {
                candidates.first().map_or(i, |c| c.1)
            } else {
                far[rng.random_range(0..far.len())]
            };
            (0..k).map(|j| if j < switch { i } else { wrong }).collect()
        } else {
            vec![i; k]
        };
        let observations: Vec<FeatureObservation> = (0..k)
            .filter_map(|j| {
                let t = time(i, j);
                let y = scene.observe(source[j], t)?;
                let mut v = y.vector();
                if config.noise_sigma > 0.0 {
                    v += Vector3::from_fn(|_, _| noise.sample(&mut rng));
                }
                Some(FeatureObservation {
                    y: StereoMeasurement::from_vector(&v, t),
                    t_right: t,
                    cluster_id: 0,
                    resolution: Resolution::Full,
                    descriptor: Descriptor::default(),
                })
            })
            .collect();
        tracklets.push(FeatureTracklet { id: i, observations });
    }
    RenderedTracklets { tracklets, outlier }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EventRenderConfig {
    /// Sampling step of the crossing search, seconds.
    pub step: f64,
    /// A pixel re-fires after this long without a crossing.
    pub refresh: f64,
}

impl Default for EventRenderConfig {
    fn default() -> Self {
        Self { step: 7e-4, refresh: 0.05 }
    }
}

fn bisect(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let mut fa = f(a);
    for _ in 0..200 {
        let m = 0.5 * (a + b);
        if m <= a || m >= b {
            break;
        }
        let fm = f(m);
        if fm == 0.0 {
            return m;
        }
        if (fm < 0.0) == (fa < 0.0) {
            a = m;
            fa = fm;
        } else {
            b = m;
        }
    }
    if f(b).abs() < fa.abs() {
        b
    } else {
        a
    }
}

/// Pixel-crossing events of every landmark in both cameras. An event fires
/// when the projection passes an integer column or row, at the rounded pixel.
pub fn render_events(scene: &SyntheticScene, config: &EventRenderConfig) -> Vec<Event> {
    let cam = scene.camera;
    let mut events = Vec::new();
    let n_steps = ((scene.end - scene.start) / config.step).ceil() as usize;
    for j in 0..scene.landmarks.len() {
        for side in [Side::Left, Side::Right] {
            let project = |t: f64| -> Option<(f64, f64)> {
                let p = transform_point(&scene.pose_at(t), &scene.landmarks[j]);
                let y = cam.project(&p).ok()?;
                Some(match side {
                    Side::Left => (y.x, y.y),
                    Side::Right => (y.z, y.y),
                })
            };
            let mut stream: Vec<(f64, i64, i64)> = Vec::new();
            let mut prev: Option<(f64, f64, f64)> = None;
            for s in 0..=n_steps {
                let t = (scene.start + s as f64 * config.step).min(scene.end);
                let Some((u, v)) = project(t) else {
                    prev = None;
                    continue;
                };
                if let Some((ta, ua, va)) = prev {
                    for axis in 0..2 {
                        let (a, b) = if axis == 0 { (ua, u) } else { (va, v) };
                        let lo = a.min(b).ceil() as i64;
                        let hi = a.max(b).floor() as i64;
                        for n in lo..=hi {
                            if n as f64 == a {
                                continue;
                            }
                            let g = |x: f64| {
                                let (pu, pv) = project(x).unwrap_or((f64::NAN, f64::NAN));
                                (if axis == 0 { pu } else { pv }) - n as f64
                            };
                            let tc = bisect(g, ta, t);
                            if let Some((pu, pv)) = project(tc) {
                                let (x, y) = if axis == 0 { (n, pv.round() as i64) } else { (pu.round() as i64, n) };
                                stream.push((tc, x, y));
                            }
                        }
                    }
                }
                prev = Some((t, u, v));
            }
            stream.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut filled = Vec::with_capacity(stream.len());
            let mut last = scene.start;
            let push_refresh = |from: f64, to: f64, filled: &mut Vec<(f64, i64, i64)>| {
                let mut t = from + config.refresh;
                while t < to {
                    if let Some((u, v)) = project(t) {
                        filled.push((t, u.round() as i64, v.round() as i64));
                    }
                    t += config.refresh;
                }
            };
            for e in stream {
                if e.0 - last > config.refresh {
                    push_refresh(last, e.0, &mut filled);
                }
                last = e.0;
                filled.push(e);
            }
            if scene.end - last > config.refresh {
                push_refresh(last, scene.end, &mut filled);
            }
            for (t, x, y) in filled {
                if x >= 0 && y >= 0 && (x as usize) < cam.width && (y as usize) < cam.height {
                    events.push(Event::new(t, x as u32, y as u32, 1, side));
                }
            }
        }
    }
    events.sort_by(|a, b| a.t.total_cmp(&b.t).then(a.side.cmp(&b.side)).then((a.y, a.x).cmp(&(b.y, b.x))));
    events
}

/// Least-squares velocity from stacked linearised segment constraints,
/// solved through an SVD.
pub fn brute_force_velocity(segments: &[TrackletSegment]) -> Result<Twist, EstimationError> {
    let rows = 3 * segments.len();
    let mut a = DMatrix::zeros(rows, 6);
    let mut b = DVector::zeros(rows);
    for (i, s) in segments.iter().enumerate() {
        let d = odot(&s.p_early).fixed_rows::<3>(0) * s.dt;
        a.view_mut((3 * i, 0), (3, 6)).copy_from(&d);
        b.rows_mut(3 * i, 3).copy_from(&(s.p_late.xyz() - s.p_early.xyz()));
    }
    let svd = a.svd(true, true);
    let smax = svd.singular_values.max();
    let smin = if rows >= 6 { svd.singular_values.min() } else { 0.0 };
    if !(smin > 1e-12 * smax) {
        let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
        return Err(EstimationError::SingularNormalMatrix { condition });
    }
    let x = svd
        .solve(&b, 0.0)
        .map_err(|_| EstimationError::SingularNormalMatrix { condition: f64::INFINITY })?;
    Ok(Twist::from_slice(std::array::from_fn(|i| x[i])))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn outlier_count_is_exact() {
        let cam = lattice_camera();
        let scene = generate_constant_velocity_scene(cam, Twist::from_slice([0.2, 0.0, 0.1, 0.0, 0.05, 0.0]), 40, 0.5, 1);
        assert_eq!(scene.landmarks.len(), 40);
        let r = render_tracklets(
            &scene,
            &TrackletRenderConfig {
                observations: 4,
                outlier_fraction: 0.3,
                ..Default::default()
            },
        );
        assert_eq!(r.outlier.iter().filter(|&&o| o).count(), 12);
        let mut times: Vec<f64> = r.tracklets.iter().flat_map(|t| t.observations.iter().map(|o| o.t())).collect();
        let n = times.len();
        times.sort_by(f64::total_cmp);
        times.dedup();
        assert_eq!(times.len(), n);
    }

    #[test]
    fn lattice_events_fall_on_grid() {
        let scene = lattice_scene(0.1);
        let events = render_events(&scene, &EventRenderConfig::default());
        assert!(!events.is_empty());
        for e in &events {
            let phase = (e.t - 1.25e-3) / 2.5e-3;
            assert!((phase - phase.round()).abs() < 1e-6, "event at {}", e.t);
        }
        assert!(events.windows(2).all(|w| w[0].t <= w[1].t));
    }

    #[test]
    fn lattice_events_are_exact_projections() {
        let scene = lattice_scene(0.05);
        let events = render_events(&scene, &EventRenderConfig::default());
        for e in events.iter().filter(|e| e.side == Side::Left) {
            let hit = (0..scene.landmarks.len()).any(|j| {
                let y = scene.camera.project(&transform_point(&scene.pose_at(e.t), &scene.landmarks[j])).unwrap();
                (y.x - e.x as f64).abs() < 1e-9 && (y.y - e.y as f64).abs() < 1e-9
            });
            assert!(hit, "{e:?}");
        }
    }

    #[test]
    fn refresh_fires_for_static_points() {
        let cam = lattice_camera();
        let scene = generate_constant_velocity_scene(cam, Twist::zero(), 3, 0.3, 2);
        let events = render_events(&scene, &EventRenderConfig::default());
        assert_eq!(events.len(), 3 * 2 * 5);
    }

    #[test]
    fn brute_force_edge_cases() {
        let cam = lattice_camera();
        let p = HomogeneousPoint::new(0.1, 0.2, 2.0);
        let y = StereoMeasurement::from_vector(&cam.project(&p).unwrap(), 0.0);
        let y1 = StereoMeasurement { time: 0.1, ..y };
        let s = TrackletSegment::new(y, y1, &cam, 0).unwrap();
        assert!(brute_force_velocity(&[s]).is_err());
        let pts = [(0.1, 0.2, 2.0), (-0.5, 0.1, 3.0), (0.4, -0.3, 1.5), (0.0, 0.0, 4.0)];
        let segs: Vec<TrackletSegment> = pts
            .iter()
            .map(|&(x, yv, z)| {
                let y = StereoMeasurement::from_vector(&cam.project(&HomogeneousPoint::new(x, yv, z)).unwrap(), 0.0);
                TrackletSegment::new(y, StereoMeasurement { time: 0.05, ..y }, &cam, 0).unwrap()
            })
            .collect();
        assert!(brute_force_velocity(&segs).unwrap().norm() < 1e-12);
    }

    #[test]
    fn noise_level_matches_sigma() {
        let cam = lattice_camera();
        let scene = generate_constant_velocity_scene(cam, Twist::from_slice([0.1, 0.0, 0.0, 0.0, 0.0, 0.0]), 100, 1.0, 9);
        let r = render_tracklets(&scene, &TrackletRenderConfig { observations: 40, noise_sigma: 1.0, seed: 3, ..Default::default() });
        let mut res = Vec::new();
        for (i, t) in r.tracklets.iter().enumerate() {
            for o in &t.observations {
                let truth = scene.observe(i, o.t()).unwrap();
                res.extend((o.y.vector() - truth.vector()).iter().copied());
            }
        }
        assert!(res.len() >= 10_000);
        let n = res.len() as f64;
        let mean = res.iter().sum::<f64>() / n;
        let std = (res.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!((0.9..=1.1).contains(&std), "{std}");
    }

    #[test]
    fn smooth_trajectory_is_not_constant_velocity() {
        let tr = random_smooth_trajectory(Twist::from_slice([0.3, 0.0, 0.0, 0.0, 0.2, 0.0]), 0.2, 1.0, 0.1, 4);
        let a = tr.knots()[1].varpi;
        let b = tr.knots()[5].varpi;
        assert!((a - b).norm() > 1e-3);
    }
}
