//! End-to-end stages behind the command line: configuration, estimation
//! from events or tracklets, evaluation, simulation and inspection.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Vector3, Vector6};

use crate::camera::StereoCameraModel;
use crate::error::PipelineError;
use crate::estimator::{slide_windows, SlidingConfig, SlidingResult, TrajectoryState, WnoaPrior};
use crate::events::{cluster_events, read_events_file, write_events_file, ClusterConfig, Event, Side};
use crate::features::ShiTomasiDetector;
use crate::metrics::{evaluate, write_samples_csv, write_table, MetricsReport};
use crate::se3::{Pose, Twist};
use crate::synth::{
    glyph_scene, lattice_scene, random_smooth_trajectory, render_events, EventRenderConfig, SyntheticScene,
};
use crate::tracklets::{
    assign_clusters_by_time, build_tracklets, filter_tracklets, read_tracklets_file, FeatureTracklet, Resolution,
    TrackletConfig,
};
use crate::trajectory::{ContinuousTrajectory, PoseQuery};
use crate::tum::{read_times_file, read_tum_file, write_times_file, write_tum_file, PoseSample, SampledTrajectory};

#[derive(Clone, Debug, PartialEq)]
pub struct PipelineConfig {
    pub camera: StereoCameraModel,
    pub cluster: ClusterConfig,
    pub tracklets: TrackletConfig,
    pub detector: ShiTomasiDetector,
    pub sliding: SlidingConfig,
}

const CAMERA_KEYS: [&str; 7] = [
    "camera.fu",
    "camera.fv",
    "camera.cu",
    "camera.cv",
    "camera.baseline",
    "camera.width",
    "camera.height",
];

fn parse_value<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, PipelineError> {
    value
        .parse()
        .map_err(|_| PipelineError::Config(format!("invalid value '{value}' for {key}")))
}

fn parse_list(key: &str, value: &str, n: usize) -> Result<Vec<f64>, PipelineError> {
    let v: Vec<f64> = value
        .split(',')
        .map(|s| parse_value(key, s.trim()))
        .collect::<Result<_, _>>()?;
    if v.len() != n {
        return Err(PipelineError::Config(format!("{key} needs {n} comma-separated values")));
    }
    if v.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
        return Err(PipelineError::Config(format!("{key} entries must be positive")));
    }
    Ok(v)
}

fn join(v: impl IntoIterator<Item = f64>) -> String {
    v.into_iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl PipelineConfig {
    pub fn with_camera(camera: StereoCameraModel) -> Self {
        Self {
            camera,
            cluster: ClusterConfig::default(),
            tracklets: TrackletConfig::default(),
            detector: ShiTomasiDetector::default(),
            sliding: SlidingConfig::default(),
        }
    }

    /// Parses `section.key = value` lines; `#` starts a comment. Camera
    /// intrinsics, baseline and image size are required.
    pub fn parse(text: &str) -> Result<Self, PipelineError> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| PipelineError::Config(format!("line {}: expected key = value", i + 1)))?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        for key in CAMERA_KEYS {
            if !map.contains_key(key) {
                return Err(PipelineError::Config(format!("missing required key {key}")));
            }
        }
        let f = |k: &str| -> Result<f64, PipelineError> { parse_value(k, &map[k]) };
        let u = |k: &str| -> Result<usize, PipelineError> { parse_value(k, &map[k]) };
        let mut camera = StereoCameraModel::new(
            f("camera.fu")?,
            f("camera.fv")?,
            f("camera.cu")?,
            f("camera.cv")?,
            f("camera.baseline")?,
            u("camera.width")?,
            u("camera.height")?,
        )
        .map_err(|e| PipelineError::Config(e.to_string()))?;
        let mut cfg = Self::with_camera(camera);
        for (key, value) in &map {
            let v = value.as_str();
            match key.as_str() {
                k if CAMERA_KEYS.contains(&k) => {}
                "camera.min_depth" => camera.min_depth = parse_value(key, v)?,
                "camera.min_disparity" => camera.min_disparity = parse_value(key, v)?,
                "events.window" => cfg.cluster.window = parse_value(key, v)?,
                "events.max_count" => cfg.cluster.max_count = parse_value(key, v)?,
                "features.resolutions" => {
                    cfg.tracklets.resolutions = v
                        .split(',')
                        .map(|s| match s.trim() {
                            "full" => Ok(Resolution::Full),
                            "half" => Ok(Resolution::Half),
                            other => Err(PipelineError::Config(format!("unknown resolution '{other}'"))),
                        })
                        .collect::<Result<_, _>>()?;
                }
                "features.min_response" => cfg.detector.min_response = parse_value(key, v)?,
                "features.max_features" => cfg.detector.max_features = parse_value(key, v)?,
                "matching.ratio" => cfg.tracklets.matching.ratio = parse_value(key, v)?,
                "matching.max_hamming" => cfg.tracklets.matching.max_hamming = parse_value(key, v)?,
                "matching.max_disparity" => cfg.tracklets.matching.max_disparity = parse_value(key, v)?,
                "matching.temporal_radius" => cfg.tracklets.matching.temporal_radius = parse_value(key, v)?,
                "matching.depth" => cfg.tracklets.depth = parse_value(key, v)?,
                "tracklets.stereo_dt_max" => cfg.tracklets.thresholds.stereo_dt_max = parse_value(key, v)?,
                "tracklets.disparity_min" => cfg.tracklets.thresholds.disparity_min = parse_value(key, v)?,
                "tracklets.length_min" => cfg.tracklets.thresholds.length_min = parse_value(key, v)?,
                "tracklets.duration_min" => cfg.tracklets.thresholds.duration_min = parse_value(key, v)?,
                "ransac.iterations" => cfg.sliding.ransac.iterations = parse_value(key, v)?,
                "ransac.threshold" => cfg.sliding.ransac.threshold = parse_value(key, v)?,
                "ransac.seed" => cfg.sliding.ransac.seed = parse_value(key, v)?,
                "prior.qc_inv" => {
                    let q = parse_list(key, v, 6)?;
                    cfg.sliding.solver.prior = WnoaPrior::from_inverse_diag(Vector6::from_column_slice(&q))
                        .map_err(|e| PipelineError::Config(e.to_string()))?;
                }
                "measurement.r_inv" => {
                    let r = parse_list(key, v, 3)?;
                    cfg.sliding.solver.r_inv = Matrix3::from_diagonal(&Vector3::from_column_slice(&r));
                }
                "window.width" => cfg.sliding.width = parse_value(key, v)?,
                "window.min_tracklets" => cfg.sliding.min_tracklets = parse_value(key, v)?,
                "solver.tol" => cfg.sliding.solver.rel_tol = parse_value(key, v)?,
                "solver.max_iters" => cfg.sliding.solver.max_iters = parse_value(key, v)?,
                other => return Err(PipelineError::Config(format!("unknown key {other}"))),
            }
        }
        camera.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        cfg.camera = camera;
        cfg.sliding.thresholds = cfg.tracklets.thresholds;
        if cfg.sliding.width == 0 || !(cfg.cluster.window > 0.0) {
            return Err(PipelineError::Config("window.width and events.window must be positive".into()));
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, PipelineError> {
        Self::parse(&fs::read_to_string(path).map_err(|e| PipelineError::io(path, e))?)
    }

    pub fn to_text(&self) -> String {
        let c = &self.camera;
        let t = &self.tracklets;
        let s = &self.sliding;
        let mut out = String::new();
        let mut line = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        line("camera.fu", c.fu.to_string());
        line("camera.fv", c.fv.to_string());
        line("camera.cu", c.cu.to_string());
        line("camera.cv", c.cv.to_string());
        line("camera.baseline", c.baseline.to_string());
        line("camera.width", c.width.to_string());
        line("camera.height", c.height.to_string());
        line("camera.min_depth", c.min_depth.to_string());
        line("camera.min_disparity", c.min_disparity.to_string());
        line("events.window", self.cluster.window.to_string());
        line("events.max_count", self.cluster.max_count.to_string());
        line(
            "features.resolutions",
            t.resolutions.iter().map(|r| r.name()).collect::<Vec<_>>().join(","),
        );
        line("features.min_response", self.detector.min_response.to_string());
        line("features.max_features", self.detector.max_features.to_string());
        line("matching.ratio", t.matching.ratio.to_string());
        line("matching.max_hamming", t.matching.max_hamming.to_string());
        line("matching.max_disparity", t.matching.max_disparity.to_string());
        line("matching.temporal_radius", t.matching.temporal_radius.to_string());
        line("matching.depth", t.depth.to_string());
        line("tracklets.stereo_dt_max", t.thresholds.stereo_dt_max.to_string());
        line("tracklets.disparity_min", t.thresholds.disparity_min.to_string());
        line("tracklets.length_min", t.thresholds.length_min.to_string());
        line("tracklets.duration_min", t.thresholds.duration_min.to_string());
        line("ransac.iterations", s.ransac.iterations.to_string());
        line("ransac.threshold", s.ransac.threshold.to_string());
        line("ransac.seed", s.ransac.seed.to_string());
        line("prior.qc_inv", join(s.solver.prior.qc_diag.iter().map(|q| 1.0 / q)));
        line("measurement.r_inv", join((0..3).map(|i| s.solver.r_inv[(i, i)])));
        line("window.width", s.width.to_string());
        line("window.min_tracklets", s.min_tracklets.to_string());
        line("solver.tol", s.solver.rel_tol.to_string());
        line("solver.max_iters", s.solver.max_iters.to_string());
        out
    }
}

/// Result of an estimation run before anything is written.
#[derive(Clone, Debug)]
pub struct Estimate {
    pub clusters: usize,
    pub tracklets: usize,
    pub sliding: SlidingResult,
}

impl Estimate {
    pub fn trajectory(&self, prior: WnoaPrior) -> Option<ContinuousTrajectory> {
        ContinuousTrajectory::new(self.sliding.knots.clone(), prior).ok()
    }

    pub fn ransac_trajectory(&self, prior: WnoaPrior) -> Option<ContinuousTrajectory> {
        ContinuousTrajectory::new(self.sliding.ransac_knots.clone(), prior).ok()
    }
}

pub fn estimate_from_events(events: &[Event], config: &PipelineConfig) -> Estimate {
    let clusters = cluster_events(events, config.cluster, config.camera.width, config.camera.height);
    log::info!("{} events in {} clusters", events.len(), clusters.len());
    let raw = build_tracklets(&clusters, &config.tracklets, &config.detector);
    log::info!("{} raw tracklets", raw.len());
    let starts: Vec<f64> = clusters.iter().map(|c| c.t_start).collect();
    let sliding = slide_windows(&raw, &starts, &config.camera, &config.sliding);
    Estimate {
        clusters: clusters.len(),
        tracklets: raw.len(),
        sliding,
    }
}

/// Estimation from externally supplied tracklets, clustered on a time grid
/// of `events.window` seconds.
pub fn estimate_from_tracklets(mut tracklets: Vec<FeatureTracklet>, config: &PipelineConfig) -> Estimate {
    let times = tracklets.iter().flat_map(|t| t.observations.iter().map(|o| o.t()));
    let (t0, t1) = times.fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), t| (a.min(t), b.max(t)));
    if !t0.is_finite() {
        return Estimate {
            clusters: 0,
            tracklets: 0,
            sliding: SlidingResult::default(),
        };
    }
    let w = config.cluster.window;
    assign_clusters_by_time(&mut tracklets, t0, w);
    let n = ((t1 - t0) / w).floor() as usize + 1;
    let starts: Vec<f64> = (0..n).map(|i| t0 + i as f64 * w).collect();
    let sliding = slide_windows(&tracklets, &starts, &config.camera, &config.sliding);
    Estimate {
        clusters: n,
        tracklets: tracklets.len(),
        sliding,
    }
}

/// Poses at `times`, skipping (with a warning) times outside the trajectory.
pub fn sample_trajectory(trajectory: &dyn PoseQuery, times: &[f64]) -> Vec<PoseSample> {
    let mut out = Vec::with_capacity(times.len());
    let mut skipped = 0;
    for &t in times {
        match trajectory.pose_at(t) {
            Ok(pose) => out.push(PoseSample { t, pose }),
            Err(_) => skipped += 1,
        }
    }
    if skipped > 0 {
        log::warn!("{skipped} evaluation times lie outside the estimated trajectory and were skipped");
    }
    out
}

fn knot_samples(knots: &[TrajectoryState]) -> Vec<PoseSample> {
    knots.iter().map(|k| PoseSample { t: k.t, pose: k.pose }).collect()
}

fn write_file(path: &Path, f: impl FnOnce(&mut Vec<u8>) -> std::io::Result<()>) -> Result<(), PipelineError> {
    let mut buf = Vec::new();
    f(&mut buf).map_err(|e| PipelineError::io(path, e))?;
    fs::write(path, buf).map_err(|e| PipelineError::io(path, e))
}

pub fn write_diagnostics(path: &Path, sliding: &SlidingResult) -> Result<(), PipelineError> {
    write_file(path, |w| {
        writeln!(
            w,
            "window\tfirst_cluster\tlast_cluster\ttracklets\tinliers\tknots\tlandmarks\titerations\tinitial_cost\tfinal_cost\tconverged\tstatus"
        )?;
        for r in &sliding.reports {
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{:e}\t{:e}\t{}\t{}",
                r.index,
                r.first_cluster,
                r.last_cluster,
                r.tracklets,
                r.inlier_tracklets,
                r.knots,
                r.landmarks,
                r.iterations,
                r.initial_cost,
                r.final_cost,
                r.status == crate::estimator::WindowStatus::Solved,
                r.status
            )?;
        }
        Ok(())
    })
}

pub fn write_metrics(out_dir: &Path, report: &MetricsReport) -> Result<(), PipelineError> {
    write_file(&out_dir.join("metrics.tsv"), |w| write_table(w, report))?;
    write_file(&out_dir.join("ge_re.csv"), |w| write_samples_csv(w, report))
}

fn ensure_dir(dir: &Path) -> Result<(), PipelineError> {
    fs::create_dir_all(dir).map_err(|e| PipelineError::io(dir, e))
}

#[derive(Clone, Debug, Default)]
pub struct RunInputs {
    pub events: Option<PathBuf>,
    pub tracklets: Option<PathBuf>,
    pub ground_truth: Option<PathBuf>,
    pub eval_times: Option<PathBuf>,
}

/// Full run writing `trajectory.txt`, `trajectory_ransac.txt`,
/// `diagnostics.tsv` and, given evaluation times or ground truth,
/// `trajectory_eval.txt`, `metrics.tsv` and `ge_re.csv`.
pub fn run(config: &PipelineConfig, inputs: &RunInputs, out_dir: &Path) -> Result<Option<MetricsReport>, PipelineError> {
    let estimate = match (&inputs.events, &inputs.tracklets) {
        (Some(path), None) => {
            let events = read_events_file(path, config.camera.width, config.camera.height)?;
            estimate_from_events(&events, config)
        }
        (None, Some(path)) => estimate_from_tracklets(read_tracklets_file(path)?, config),
        _ => return Err(PipelineError::Config("give exactly one of --events or --tracklets".into())),
    };
    let prior = config.sliding.solver.prior;
    let trajectory = estimate
        .trajectory(prior)
        .ok_or_else(|| PipelineError::failure("estimation", "no window could be solved"))?;
    ensure_dir(out_dir)?;
    write_tum_file(&out_dir.join("trajectory.txt"), &knot_samples(trajectory.knots()))?;
    write_tum_file(&out_dir.join("trajectory_ransac.txt"), &knot_samples(&estimate.sliding.ransac_knots))?;
    write_diagnostics(&out_dir.join("diagnostics.tsv"), &estimate.sliding)?;
    let truth = match &inputs.ground_truth {
        Some(p) => Some(SampledTrajectory::new(read_tum_file(p)?)?),
        None => None,
    };
    let times = match (&inputs.eval_times, &truth) {
        (Some(p), _) => Some(read_times_file(p)?),
        (None, Some(gt)) => Some(gt.samples().iter().map(|s| s.t).collect()),
        (None, None) => None,
    };
    let Some(times) = times else { return Ok(None) };
    let samples = sample_trajectory(&trajectory, &times);
    write_tum_file(&out_dir.join("trajectory_eval.txt"), &samples)?;
    let Some(gt) = truth else { return Ok(None) };
    let kept: Vec<f64> = samples.iter().map(|s| s.t).collect();
    let report = evaluate(&trajectory, &gt, &kept, &Pose::identity())?;
    write_metrics(out_dir, &report)?;
    Ok(Some(report))
}

/// Compares an estimated TUM trajectory with ground truth. Without explicit
/// times the estimate's own timestamps are used.
pub fn evaluate_files(
    estimate: &Path,
    ground_truth: &Path,
    eval_times: Option<&Path>,
    out_dir: &Path,
) -> Result<MetricsReport, PipelineError> {
    let est = SampledTrajectory::new(read_tum_file(estimate)?)?;
    let gt = SampledTrajectory::new(read_tum_file(ground_truth)?)?;
    let times = match eval_times {
        Some(p) => read_times_file(p)?,
        None => est.samples().iter().map(|s| s.t).collect(),
    };
    let (e0, e1) = est.time_range().expect("non-empty");
    let (g0, g1) = gt.time_range().expect("non-empty");
    let (lo, hi) = (e0.max(g0), e1.min(g1));
    let kept: Vec<f64> = times.iter().copied().filter(|&t| t >= lo && t <= hi).collect();
    if kept.len() < times.len() {
        log::warn!("{} evaluation times outside the common range were skipped", times.len() - kept.len());
    }
    let report = evaluate(&est, &gt, &kept, &Pose::identity())?;
    ensure_dir(out_dir)?;
    write_metrics(out_dir, &report)?;
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SceneKind {
    /// Sideways glyph lattice with exact event timing.
    Lattice,
    /// Glyphs scattered in depth, smooth random motion.
    Random,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimulateOptions {
    pub scene: SceneKind,
    pub duration: f64,
    pub seed: u64,
    /// Spacing of the written evaluation times.
    pub eval_step: f64,
}

impl Default for SimulateOptions {
    fn default() -> Self {
        Self {
            scene: SceneKind::Lattice,
            duration: 1.0,
            seed: 0,
            eval_step: 0.01,
        }
    }
}

pub fn simulated_scene(options: &SimulateOptions) -> SyntheticScene {
    match options.scene {
        SceneKind::Lattice => lattice_scene(options.duration),
        SceneKind::Random => {
            let mean = Twist::from_slice([0.2, 0.0, 0.05, 0.0, 0.1, 0.0]);
            let tr = random_smooth_trajectory(mean, 0.05, options.duration, 0.1, options.seed);
            glyph_scene(tr, 40, options.seed)
        }
    }
}

/// Writes `events.txt`, `gt.txt` (100 Hz), `eval_times.txt` and `config.txt`.
pub fn simulate(options: &SimulateOptions, out_dir: &Path) -> Result<SyntheticScene, PipelineError> {
    if !(options.duration > 0.0) || !(options.eval_step > 0.0) {
        return Err(PipelineError::Config("duration and evaluation step must be positive".into()));
    }
    let scene = simulated_scene(options);
    let events = render_events(&scene, &EventRenderConfig::default());
    let first = events.first().map_or(scene.start, |e| e.t);
    let last = events.last().map_or(scene.end, |e| e.t);
    ensure_dir(out_dir)?;
    let ev_path = out_dir.join("events.txt");
    write_events_file(&ev_path, &events).map_err(|e| PipelineError::io(&ev_path, e))?;
    write_tum_file(&out_dir.join("gt.txt"), &scene.ground_truth_samples(100.0))?;
    let n = ((last - first) / options.eval_step).floor() as usize;
    let times: Vec<f64> = (0..=n).map(|i| first + i as f64 * options.eval_step).filter(|&t| t <= last).collect();
    write_times_file(&out_dir.join("eval_times.txt"), &times)?;
    let mut cfg = PipelineConfig::with_camera(scene.camera);
    cfg.sliding.ransac.seed = options.seed;
    let cfg_path = out_dir.join("config.txt");
    fs::write(&cfg_path, cfg.to_text()).map_err(|e| PipelineError::io(&cfg_path, e))?;
    log::info!("wrote {} events over [{first}, {last}]", events.len());
    Ok(scene)
}

/// Human-readable summary of an event stream and its tracklets.
pub fn inspect(config: &PipelineConfig, events_path: &Path) -> Result<String, PipelineError> {
    let events = read_events_file(events_path, config.camera.width, config.camera.height)?;
    let clusters = cluster_events(&events, config.cluster, config.camera.width, config.camera.height);
    let raw = build_tracklets(&clusters, &config.tracklets, &config.detector);
    let (kept, discarded) = filter_tracklets(raw.clone(), &config.tracklets.thresholds);
    let mut reasons: BTreeMap<String, usize> = BTreeMap::new();
    for (_, why) in &discarded {
        *reasons.entry(why.to_string()).or_default() += 1;
    }
    let mut s = String::new();
    let left = events.iter().filter(|e| e.side == Side::Left).count();
    let _ = writeln!(s, "events\t{} (left {}, right {})", events.len(), left, events.len() - left);
    if let (Some(a), Some(b)) = (events.first(), events.last()) {
        let _ = writeln!(s, "time span\t[{}, {}]", a.t, b.t);
    }
    let _ = writeln!(s, "clusters\t{}", clusters.len());
    let _ = writeln!(s, "raw tracklets\t{}", raw.len());
    let _ = writeln!(s, "kept tracklets\t{}", kept.len());
    for (why, n) in reasons {
        let _ = writeln!(s, "discarded ({why})\t{n}");
    }
    Ok(s)
}
