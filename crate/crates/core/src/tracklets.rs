//! Tracklet construction: per-cluster detection, SAE timestamping, quad
//! matching, extension across clusters and filtering.

use std::collections::BTreeSet;
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::camera::{StereoCameraModel, StereoMeasurement};
use crate::error::{CameraError, EventError};
use crate::events::{sae_lookup, EventCluster, Sae, Side, DEFAULT_LOOKUP_RADIUS};
use crate::features::{downsample, quad_match, Descriptor, Feature, FeatureDetector, MatchParams};
use crate::se3::HomogeneousPoint;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Resolution {
    Full,
    Half,
}

impl Resolution {
    pub fn factor(self) -> i64 {
        match self {
            Resolution::Full => 1,
            Resolution::Half => 2,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Resolution::Full => "full",
            Resolution::Half => "half",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FeatureObservation {
    /// Stereo measurement; its time is the left SAE time.
    pub y: StereoMeasurement,
    pub t_right: f64,
    pub cluster_id: usize,
    pub resolution: Resolution,
    pub descriptor: Descriptor,
}

impl FeatureObservation {
    pub fn t(&self) -> f64 {
        self.y.time
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureTracklet {
    pub id: usize,
    pub observations: Vec<FeatureObservation>,
}

impl FeatureTracklet {
    pub fn duration(&self) -> f64 {
        match (self.observations.first(), self.observations.last()) {
            (Some(a), Some(b)) => b.t() - a.t(),
            _ => 0.0,
        }
    }

    /// Left-image distance between the first and last observation.
    pub fn path_length(&self) -> f64 {
        match (self.observations.first(), self.observations.last()) {
            (Some(a), Some(b)) => (b.y.u_left - a.y.u_left).hypot(b.y.v_left - a.y.v_left),
            _ => 0.0,
        }
    }

    /// Landmark triangulated from the first observation, in that
    /// observation's camera frame.
    pub fn landmark_seed(&self, camera: &StereoCameraModel) -> Result<HomogeneousPoint, CameraError> {
        let first = self
            .observations
            .first()
            .ok_or(CameraError::InvalidParameter("empty tracklet".into()))?;
        camera.triangulate(&first.y.vector())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrackletThresholds {
    pub stereo_dt_max: f64,
    pub disparity_min: f64,
    pub length_min: f64,
    pub duration_min: f64,
}

impl Default for TrackletThresholds {
    fn default() -> Self {
        Self {
            stereo_dt_max: 0.020,
            disparity_min: 2.0,
            length_min: 2.0,
            duration_min: 0.040,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DiscardReason {
    TooFewObservations,
    StereoTime,
    Disparity,
    Length,
    Duration,
}

impl fmt::Display for DiscardReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DiscardReason::TooFewObservations => "too-few-observations",
            DiscardReason::StereoTime => "stereo-time",
            DiscardReason::Disparity => "disparity",
            DiscardReason::Length => "length",
            DiscardReason::Duration => "duration",
        })
    }
}

pub fn discard_reason(t: &FeatureTracklet, th: &TrackletThresholds) -> Option<DiscardReason> {
    if t.observations.len() < 2 {
        return Some(DiscardReason::TooFewObservations);
    }
    if t.observations.iter().any(|o| (o.t() - o.t_right).abs() > th.stereo_dt_max) {
        return Some(DiscardReason::StereoTime);
    }
    if t.observations.iter().any(|o| o.y.disparity() < th.disparity_min) {
        return Some(DiscardReason::Disparity);
    }
    if t.duration() < th.duration_min {
        return Some(DiscardReason::Duration);
    }
    if t.path_length() < th.length_min {
        return Some(DiscardReason::Length);
    }
    None
}

pub type Discarded = Vec<(FeatureTracklet, DiscardReason)>;

pub fn filter_tracklets(
    tracklets: Vec<FeatureTracklet>,
    thresholds: &TrackletThresholds,
) -> (Vec<FeatureTracklet>, Discarded) {
    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for t in tracklets {
        match discard_reason(&t, thresholds) {
            None => kept.push(t),
            Some(r) => dropped.push((t, r)),
        }
    }
    (kept, dropped)
}

/// A keypoint at one pyramid level with its full-resolution pixel and time.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Detection {
    pub feature: Feature,
    pub u: i64,
    pub v: i64,
    pub t: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LevelFrame {
    pub cluster_id: usize,
    pub left: Vec<Detection>,
    pub right: Vec<Detection>,
}

/// Event time for a feature at a full-resolution pixel.
pub fn assign_timestamp(u: i64, v: i64, cluster: &EventCluster, side: Side, radius: i64) -> Result<f64, EventError> {
    sae_lookup(cluster, side, u, v, radius)
}

/// Fired pixel inside the 2x2 block behind a half-resolution pixel; the
/// most recent one wins, ties in row-major order.
fn half_to_full(sae: &Sae, hx: i64, hy: i64) -> Option<(i64, i64)> {
    let mut best: Option<(f64, i64, i64)> = None;
    for dy in 0..2 {
        for dx in 0..2 {
            let (x, y) = (2 * hx + dx, 2 * hy + dy);
            let Some(t) = sae.get_checked(x, y) else { continue };
            if t.is_nan() {
                continue;
            }
            if best.is_none_or(|(bt, _, _)| t > bt) {
                best = Some((t, x, y));
            }
        }
    }
    best.map(|(_, x, y)| (x, y))
}

pub fn detect_level(
    cluster: &EventCluster,
    resolution: Resolution,
    detector: &dyn FeatureDetector,
    radius: i64,
) -> LevelFrame {
    let side_detections = |side: Side| -> Vec<Detection> {
        let frame = match resolution {
            Resolution::Full => cluster.frame(side).clone(),
            Resolution::Half => downsample(cluster.frame(side)),
        };
        let mut out = Vec::new();
        for f in detector.detect(&frame) {
            let (u, v) = match resolution {
                Resolution::Full => (f.x, f.y),
                Resolution::Half => half_to_full(cluster.sae(side), f.x, f.y).unwrap_or((2 * f.x, 2 * f.y)),
            };
            if let Ok(t) = assign_timestamp(u, v, cluster, side, radius) {
                out.push(Detection { feature: f, u, v, t });
            }
        }
        out
    };
    LevelFrame {
        cluster_id: cluster.id,
        left: side_detections(Side::Left),
        right: side_detections(Side::Right),
    }
}

#[derive(Clone, Copy, Debug)]
struct Tail {
    cluster_id: usize,
    left_index: usize,
    feature: Feature,
}

/// Incremental tracklet store for one resolution level.
pub struct TrackletTracker {
    resolution: Resolution,
    params: MatchParams,
    depth: usize,
    prev: Option<LevelFrame>,
    tracklets: Vec<FeatureTracklet>,
    tails: Vec<Tail>,
}

impl TrackletTracker {
    pub fn new(resolution: Resolution, params: MatchParams, depth: usize) -> Self {
        Self {
            resolution,
            params,
            depth,
            prev: None,
            tracklets: Vec::new(),
            tails: Vec::new(),
        }
    }

    fn observation(&self, frame: &LevelFrame, li: usize, ri: usize) -> FeatureObservation {
        let l = &frame.left[li];
        let r = &frame.right[ri];
        FeatureObservation {
            y: StereoMeasurement::new(l.u as f64, l.v as f64, r.u as f64, l.t),
            t_right: r.t,
            cluster_id: frame.cluster_id,
            resolution: self.resolution,
            descriptor: l.feature.descriptor,
        }
    }

    /// Tracklet a quad should extend, if any.
    fn merge_target(&self, cluster_id: usize, prev_cluster: usize, prev_index: usize, prev_feat: &Feature, t_first: f64) -> Option<usize> {
        let mut best: Option<(u32, i64, usize)> = None;
        for (ti, tail) in self.tails.iter().enumerate() {
            let gap = cluster_id.saturating_sub(tail.cluster_id);
            if gap == 0 || gap > self.depth {
                continue;
            }
            let last_t = self.tracklets[ti].observations.last().map_or(f64::NEG_INFINITY, |o| o.t());
            if tail.cluster_id == prev_cluster {
                if tail.left_index == prev_index {
                    return Some(ti);
                }
                continue;
            }
            if !(last_t < t_first) {
                continue;
            }
            let reach = self.params.temporal_radius * (cluster_id - tail.cluster_id - 1).max(1) as i64;
            let dist = (tail.feature.x - prev_feat.x).abs().max((tail.feature.y - prev_feat.y).abs());
            let ham = tail.feature.descriptor.hamming(&prev_feat.descriptor);
            if dist > reach || ham > self.params.max_hamming {
                continue;
            }
            let key = (ham, dist, ti);
            if best.is_none_or(|b| key < b) {
                best = Some(key);
            }
        }
        best.map(|(_, _, ti)| ti)
    }

    pub fn process(&mut self, frame: LevelFrame) {
        if let Some(prev) = self.prev.take() {
            let feats = |d: &[Detection]| d.iter().map(|x| x.feature).collect::<Vec<_>>();
            let quads = quad_match(
                &feats(&frame.left),
                &feats(&frame.right),
                &feats(&prev.right),
                &feats(&prev.left),
                &self.params,
            );
            for q in quads {
                let old = self.observation(&prev, q.prev_left, q.prev_right);
                let new = self.observation(&frame, q.cur_left, q.cur_right);
                if !(old.t() < new.t()) {
                    continue;
                }
                let tail = Tail {
                    cluster_id: frame.cluster_id,
                    left_index: q.cur_left,
                    feature: frame.left[q.cur_left].feature,
                };
                let target = self.merge_target(
                    frame.cluster_id,
                    prev.cluster_id,
                    q.prev_left,
                    &prev.left[q.prev_left].feature,
                    old.t(),
                );
                match target {
                    Some(ti) => {
                        if self.tails[ti].cluster_id != prev.cluster_id {
                            self.tracklets[ti].observations.push(old);
                        }
                        self.tracklets[ti].observations.push(new);
                        self.tails[ti] = tail;
                    }
                    None => {
                        let id = self.tracklets.len();
                        self.tracklets.push(FeatureTracklet {
                            id,
                            observations: vec![old, new],
                        });
                        self.tails.push(tail);
                    }
                }
            }
        }
        self.prev = Some(frame);
    }

    pub fn into_tracklets(self) -> Vec<FeatureTracklet> {
        self.tracklets
    }

    pub fn tracklets(&self) -> &[FeatureTracklet] {
        &self.tracklets
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrackletConfig {
    pub resolutions: Vec<Resolution>,
    pub matching: MatchParams,
    pub depth: usize,
    pub lookup_radius: i64,
    pub thresholds: TrackletThresholds,
}

impl Default for TrackletConfig {
    fn default() -> Self {
        Self {
            resolutions: vec![Resolution::Full, Resolution::Half],
            matching: MatchParams::default(),
            depth: 3,
            lookup_radius: DEFAULT_LOOKUP_RADIUS,
            thresholds: TrackletThresholds::default(),
        }
    }
}

fn track_level(
    clusters: &[EventCluster],
    resolution: Resolution,
    config: &TrackletConfig,
    detector: &dyn FeatureDetector,
) -> Vec<FeatureTracklet> {
    let params = config.matching.scaled(resolution.factor());
    let mut tracker = TrackletTracker::new(resolution, params, config.depth);
    for c in clusters {
        tracker.process(detect_level(c, resolution, detector, config.lookup_radius));
    }
    tracker.into_tracklets()
}

/// Raw (unfiltered) tracklets over a cluster sequence, every configured
/// resolution merged. Half-resolution observations that repeat a
/// full-resolution observation are dropped.
pub fn build_tracklets(
    clusters: &[EventCluster],
    config: &TrackletConfig,
    detector: &dyn FeatureDetector,
) -> Vec<FeatureTracklet> {
    let want_full = config.resolutions.contains(&Resolution::Full);
    let want_half = config.resolutions.contains(&Resolution::Half);
    let (full, half) = rayon::join(
        || {
            if want_full {
                track_level(clusters, Resolution::Full, config, detector)
            } else {
                Vec::new()
            }
        },
        || {
            if want_half {
                track_level(clusters, Resolution::Half, config, detector)
            } else {
                Vec::new()
            }
        },
    );
    let seen: BTreeSet<(u64, i64, i64)> = full
        .iter()
        .flat_map(|t| t.observations.iter())
        .map(|o| (o.t().to_bits(), o.y.u_left as i64, o.y.v_left as i64))
        .collect();
    let mut out = full;
    for mut t in half {
        t.observations
            .retain(|o| !seen.contains(&(o.t().to_bits(), o.y.u_left as i64, o.y.v_left as i64)));
        if t.observations.len() >= 2 {
            out.push(t);
        }
    }
    for (i, t) in out.iter_mut().enumerate() {
        t.id = i;
    }
    out
}

/// Tracklets restricted to observations from clusters `first..=last`, then
/// filtered.
pub fn window_tracklets(
    tracklets: &[FeatureTracklet],
    first: usize,
    last: usize,
    thresholds: &TrackletThresholds,
) -> Vec<FeatureTracklet> {
    let cropped: Vec<FeatureTracklet> = tracklets
        .iter()
        .filter_map(|t| {
            let obs: Vec<FeatureObservation> = t
                .observations
                .iter()
                .filter(|o| o.cluster_id >= first && o.cluster_id <= last)
                .copied()
                .collect();
            (obs.len() >= 2).then(|| FeatureTracklet {
                id: t.id,
                observations: obs,
            })
        })
        .collect();
    filter_tracklets(cropped, thresholds).0
}

pub fn write_tracklets<W: Write>(sink: W, tracklets: &[FeatureTracklet]) -> std::io::Result<()> {
    let mut w = BufWriter::new(sink);
    writeln!(w, "# tracklet_id t u_l v_l u_r")?;
    for t in tracklets {
        for o in &t.observations {
            writeln!(w, "{} {} {} {} {}", t.id, o.t(), o.y.u_left, o.y.v_left, o.y.u_right)?;
        }
    }
    w.flush()
}

pub fn write_tracklets_file(path: &Path, tracklets: &[FeatureTracklet]) -> std::io::Result<()> {
    write_tracklets(File::create(path)?, tracklets)
}

/// Reads a tracklet dump. The right-camera time is taken equal to the left
/// time and every observation is placed in cluster 0; see
/// [`assign_clusters_by_time`].
pub fn read_tracklets<R: Read>(source: R) -> Result<Vec<FeatureTracklet>, EventError> {
    let mut out: Vec<FeatureTracklet> = Vec::new();
    for (i, line) in BufReader::new(source).lines().enumerate() {
        let lineno = i + 1;
        let err = |message: String| EventError::Parse { line: lineno, message };
        let line = line.map_err(|e| err(e.to_string()))?;
        let s = line.trim();
        if s.is_empty() || s.starts_with('#') {
            continue;
        }
        let f: Vec<&str> = s.split_whitespace().collect();
        if f.len() != 5 {
            return Err(err(format!("expected 5 fields, found {}", f.len())));
        }
        let id: usize = f[0].parse().map_err(|_| err(format!("invalid tracklet id '{}'", f[0])))?;
        let mut nums = [0.0f64; 4];
        for (k, slot) in nums.iter_mut().enumerate() {
            *slot = f[k + 1]
                .parse()
                .map_err(|_| err(format!("invalid number '{}'", f[k + 1])))?;
            if !slot.is_finite() {
                return Err(err(format!("non-finite value '{}'", f[k + 1])));
            }
        }
        let obs = FeatureObservation {
            y: StereoMeasurement::new(nums[1], nums[2], nums[3], nums[0]),
            t_right: nums[0],
            cluster_id: 0,
            resolution: Resolution::Full,
            descriptor: Descriptor::default(),
        };
        match out.iter_mut().find(|t| t.id == id) {
            Some(t) => {
                if t.observations.last().is_some_and(|o| !(o.t() < obs.t())) {
                    return Err(err(format!("tracklet {id} times are not strictly increasing")));
                }
                t.observations.push(obs);
            }
            None => out.push(FeatureTracklet {
                id,
                observations: vec![obs],
            }),
        }
    }
    Ok(out)
}

pub fn read_tracklets_file(path: &Path) -> Result<Vec<FeatureTracklet>, EventError> {
    let file = File::open(path).map_err(|source| EventError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_tracklets(file)
}

/// Places observations into clusters of `window` seconds anchored at `t0`.
pub fn assign_clusters_by_time(tracklets: &mut [FeatureTracklet], t0: f64, window: f64) {
    for t in tracklets {
        for o in &mut t.observations {
            o.cluster_id = (((o.t() - t0) / window).floor().max(0.0)) as usize;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::{cluster_events, ClusterConfig, Event};

    fn obs(t: f64, ul: f64, vl: f64, ur: f64, cluster: usize) -> FeatureObservation {
        FeatureObservation {
            y: StereoMeasurement::new(ul, vl, ur, t),
            t_right: t,
            cluster_id: cluster,
            resolution: Resolution::Full,
            descriptor: Descriptor::default(),
        }
    }

    fn tracklet(id: usize, obs: Vec<FeatureObservation>) -> FeatureTracklet {
        FeatureTracklet { id, observations: obs }
    }

    fn good() -> FeatureTracklet {
        tracklet(0, vec![obs(0.0, 50.0, 40.0, 40.0, 0), obs(0.05, 45.0, 40.0, 35.0, 2)])
    }

    #[test]
    fn filter_reasons() {
        let th = TrackletThresholds::default();
        assert_eq!(discard_reason(&good(), &th), None);
        let t = tracklet(1, vec![obs(0.0, 50.0, 40.0, 48.5, 0), obs(0.05, 45.0, 40.0, 35.0, 2)]);
        assert_eq!(discard_reason(&t, &th), Some(DiscardReason::Disparity));
        let t = tracklet(2, vec![obs(0.0, 50.0, 40.0, 40.0, 0), obs(0.035, 45.0, 40.0, 35.0, 1)]);
        assert_eq!(discard_reason(&t, &th), Some(DiscardReason::Duration));
        let t = tracklet(3, vec![obs(0.0, 50.0, 40.0, 40.0, 0), obs(0.05, 49.0, 40.5, 39.0, 2)]);
        assert_eq!(discard_reason(&t, &th), Some(DiscardReason::Length));
        let mut t = good();
        t.observations[1].t_right = 0.08;
        assert_eq!(discard_reason(&t, &th), Some(DiscardReason::StereoTime));
        let t = tracklet(4, vec![obs(0.0, 50.0, 40.0, 40.0, 0)]);
        assert_eq!(discard_reason(&t, &th), Some(DiscardReason::TooFewObservations));
    }

    #[test]
    fn filter_is_idempotent() {
        let th = TrackletThresholds::default();
        let set = vec![
            good(),
            tracklet(1, vec![obs(0.0, 50.0, 40.0, 48.5, 0), obs(0.05, 45.0, 40.0, 35.0, 2)]),
            tracklet(2, vec![obs(0.0, 80.0, 10.0, 60.0, 0), obs(0.1, 70.0, 12.0, 50.0, 4)]),
        ];
        let (once, dropped) = filter_tracklets(set, &th);
        assert_eq!(once.len(), 2);
        assert_eq!(dropped.len(), 1);
        let (twice, none) = filter_tracklets(once.clone(), &th);
        assert_eq!(twice, once);
        assert!(none.is_empty());
    }

    fn glyph_events(t: f64, x0: u32, y0: u32, disparity: u32) -> Vec<Event> {
        // asymmetric pattern so descriptors are distinctive
        let dots = [(0u32, 0u32), (3, 3), (1, 6)];
        let mut ev = Vec::new();
        for (dx, dy) in dots {
            ev.push(Event::new(t, x0 + dx, y0 + dy, 1, Side::Left));
            ev.push(Event::new(t, x0 + dx - disparity, y0 + dy, 1, Side::Right));
        }
        ev
    }

    fn moving_glyph_clusters(step: u32, n: usize) -> Vec<EventCluster> {
        let mut ev = Vec::new();
        for k in 0..n {
            let t = 0.0125 + 0.025 * k as f64;
            ev.extend(glyph_events(t, 60 - step * k as u32, 20, 10));
        }
        ev.sort_by(|a, b| a.t.total_cmp(&b.t));
        cluster_events(&ev, ClusterConfig::default(), 100, 50)
    }

    #[test]
    fn moving_glyph_yields_long_tracklets() {
        let clusters = moving_glyph_clusters(2, 6);
        assert_eq!(clusters.len(), 6);
        let cfg = TrackletConfig {
            resolutions: vec![Resolution::Full],
            ..Default::default()
        };
        let tracklets = build_tracklets(&clusters, &cfg, &crate::features::ShiTomasiDetector::default());
        assert_eq!(tracklets.len(), 3);
        for t in &tracklets {
            assert_eq!(t.observations.len(), 6);
            for w in t.observations.windows(2) {
                assert!(w[0].t() < w[1].t());
                assert_eq!(w[0].y.u_left - w[1].y.u_left, 2.0);
                assert_eq!(w[0].y.v_left, w[1].y.v_left);
            }
            assert_eq!(t.observations[0].y.disparity(), 10.0);
        }
        let (kept, _) = filter_tracklets(tracklets, &TrackletThresholds::default());
        assert_eq!(kept.len(), 3);
    }

    #[test]
    fn observation_times_come_from_events() {
        let clusters = moving_glyph_clusters(3, 5);
        let tracklets = build_tracklets(&clusters, &TrackletConfig::default(), &crate::features::ShiTomasiDetector::default());
        assert!(!tracklets.is_empty());
        let times: Vec<f64> = (0..5).map(|k| 0.0125 + 0.025 * k as f64).collect();
        for t in &tracklets {
            for o in &t.observations {
                assert!(times.contains(&o.t()));
            }
        }
    }

    fn frame_with(cluster_id: usize, feats: &[(i64, i64, u64)]) -> LevelFrame {
        let det: Vec<Detection> = feats
            .iter()
            .map(|&(x, y, code)| Detection {
                feature: Feature {
                    x,
                    y,
                    descriptor: Descriptor([code, 0]),
                    score: 1.0,
                },
                u: x,
                v: y,
                t: 0.01 + cluster_id as f64 * 0.025,
            })
            .collect();
        let right = det
            .iter()
            .map(|d| Detection {
                feature: Feature { x: d.feature.x - 10, ..d.feature },
                u: d.u - 10,
                ..*d
            })
            .collect();
        LevelFrame {
            cluster_id,
            left: det,
            right,
        }
    }

    fn run_gap(depth: usize) -> usize {
        let mut tr = TrackletTracker::new(Resolution::Full, MatchParams::default(), depth);
        // feature seen in clusters 6,7 then missing at 8, back at 9 and 10
        tr.process(frame_with(6, &[(50, 20, 0xFF)]));
        tr.process(frame_with(7, &[(49, 20, 0xFF)]));
        tr.process(frame_with(8, &[]));
        tr.process(frame_with(9, &[(47, 20, 0xFF)]));
        tr.process(frame_with(10, &[(46, 20, 0xFF)]));
        tr.into_tracklets().len()
    }

    #[test]
    fn extension_respects_depth() {
        assert_eq!(run_gap(3), 1);
        assert_eq!(run_gap(1), 2);
        assert_eq!(run_gap(0), 2);
    }

    #[test]
    fn depth_zero_never_chains() {
        let mut tr = TrackletTracker::new(Resolution::Full, MatchParams::default(), 0);
        for k in 0..4 {
            tr.process(frame_with(k, &[(50 - k as i64, 20, 0xFF)]));
        }
        let t = tr.into_tracklets();
        assert_eq!(t.len(), 3);
        assert!(t.iter().all(|t| t.observations.len() == 2));
    }

    #[test]
    fn empty_stream_gives_no_tracklets() {
        assert!(build_tracklets(&[], &TrackletConfig::default(), &crate::features::ShiTomasiDetector::default()).is_empty());
    }

    #[test]
    fn tracklet_file_round_trip() {
        let set = vec![good(), tracklet(7, vec![obs(0.1, 1.5, 2.25, 0.5, 0), obs(0.2, 3.0, 4.0, 1.0, 0)])];
        let mut buf = Vec::new();
        write_tracklets(&mut buf, &set).unwrap();
        let back = read_tracklets(buf.as_slice()).unwrap();
        assert_eq!(back.len(), 2);
        assert_eq!(back[1].id, 7);
        assert_eq!(back[1].observations[0].y, set[1].observations[0].y);
    }

    #[test]
    fn window_crop_uses_cluster_range() {
        let t = tracklet(
            0,
            (0..6).map(|k| obs(0.025 * k as f64, 60.0 - 3.0 * k as f64, 10.0, 50.0 - 3.0 * k as f64, k)).collect(),
        );
        let w = window_tracklets(&[t], 2, 4, &TrackletThresholds::default());
        assert_eq!(w.len(), 1);
        assert_eq!(w[0].observations.len(), 3);
        assert_eq!(w[0].observations[0].cluster_id, 2);
    }
}
