use std::collections::HashSet;

use gpvo::events::{cluster_events, read_events_file, write_events_file, BinaryFrame, ClusterConfig, Event, Side};
use gpvo::features::{Feature, FeatureDetector, ShiTomasiDetector};
use gpvo::pipeline::{estimate_from_events, PipelineConfig};
use gpvo::se3::transform_point;
use gpvo::synth::{lattice_scene, render_events, EventRenderConfig, SyntheticScene};
use gpvo::tracklets::{build_tracklets, FeatureTracklet, Resolution, TrackletConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn is_exact_projection(scene: &SyntheticScene, tracklet: &FeatureTracklet) -> bool {
    // every observation must be the exact image of one and the same landmark
    (0..scene.landmarks.len()).any(|j| {
        tracklet.observations.iter().all(|o| {
            let p = transform_point(&scene.pose_at(o.t()), &scene.landmarks[j]);
            match scene.camera.project(&p) {
                Ok(y) => (y - o.y.vector()).amax() < 1e-6,
                Err(_) => false,
            }
        })
    })
}

#[test]
fn million_event_file_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut t = 0.0;
    let events: Vec<Event> = (0..1_000_000)
        .map(|i| {
            t += rng.random_range(1e-7..2e-6);
            let side = if i % 2 == 0 { Side::Left } else { Side::Right };
            Event::new(t, rng.random_range(0..640), rng.random_range(0..480), if rng.random() { 1 } else { -1 }, side)
        })
        .collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("events.txt");
    write_events_file(&path, &events).unwrap();
    let back = read_events_file(&path, 640, 480).unwrap();
    assert_eq!(back, events);
}

#[test]
fn lattice_tracklets_follow_single_landmarks() {
    let scene = lattice_scene(0.3);
    let events = render_events(&scene, &EventRenderConfig::default());
    let clusters = cluster_events(&events, ClusterConfig::default(), 320, 240);
    let tracklets = build_tracklets(&clusters, &TrackletConfig::default(), &ShiTomasiDetector::default());
    assert!(tracklets.len() >= 20, "{} tracklets", tracklets.len());
    let long: Vec<&FeatureTracklet> = tracklets.iter().filter(|t| t.observations.len() >= 3).collect();
    let sound = long.iter().filter(|t| is_exact_projection(&scene, t)).count();
    assert!(sound * 10 >= long.len() * 9, "{sound} of {} tracklets are consistent", long.len());
}

/// Detects only on downsampled frames, so any tracklet must come from the
/// half-resolution level.
struct HalfOnly {
    inner: ShiTomasiDetector,
    full_width: usize,
}

impl FeatureDetector for HalfOnly {
    fn detect(&self, frame: &BinaryFrame) -> Vec<Feature> {
        if frame.width == self.full_width {
            Vec::new()
        } else {
            self.inner.detect(frame)
        }
    }
}

#[test]
fn half_resolution_features_reach_full_resolution_coordinates() {
    let scene = lattice_scene(0.3);
    let events = render_events(&scene, &EventRenderConfig::default());
    let clusters = cluster_events(&events, ClusterConfig::default(), 320, 240);
    let detector = HalfOnly {
        inner: ShiTomasiDetector::default(),
        full_width: 320,
    };
    let tracklets = build_tracklets(&clusters, &TrackletConfig::default(), &detector);
    assert!(!tracklets.is_empty());
    let left: HashSet<(u64, u32, u32)> = events
        .iter()
        .filter(|e| e.side == Side::Left)
        .map(|e| (e.t.to_bits(), e.x, e.y))
        .collect();
    for t in &tracklets {
        for o in &t.observations {
            assert_eq!(o.resolution, Resolution::Half);
            let key = (o.t().to_bits(), o.y.u_left as u32, o.y.v_left as u32);
            assert!(left.contains(&key), "observation {:?} is not on a left event", o.y);
        }
    }
}

#[test]
fn estimation_is_deterministic() {
    let scene = lattice_scene(0.4);
    let events = render_events(&scene, &EventRenderConfig::default());
    let cfg = PipelineConfig::with_camera(scene.camera);
    let a = estimate_from_events(&events, &cfg);
    let b = estimate_from_events(&events, &cfg);
    assert_eq!(a.sliding, b.sliding);
    assert!(!a.sliding.knots.is_empty());
}
