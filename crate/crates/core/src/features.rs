//! Corner detection on binary event frames, binary patch descriptors and
//! stereo/temporal quad matching.

use crate::events::{BinaryFrame, Grid};

pub const PATCH_RADIUS: i64 = 5;
const PATCH_SIDE: i64 = 2 * PATCH_RADIUS + 1;

/// 11x11 binary patch packed row-major into 121 bits.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Default)]
pub struct Descriptor(pub [u64; 2]);

impl Descriptor {
    pub fn from_frame(frame: &BinaryFrame, x: i64, y: i64) -> Self {
        let mut bits = [0u64; 2];
        let mut k = 0usize;
        for dy in -PATCH_RADIUS..=PATCH_RADIUS {
            for dx in -PATCH_RADIUS..=PATCH_RADIUS {
                if frame.get_checked(x + dx, y + dy).unwrap_or(false) {
                    bits[k / 64] |= 1u64 << (k % 64);
                }
                k += 1;
            }
        }
        debug_assert_eq!(k as i64, PATCH_SIDE * PATCH_SIDE);
        Descriptor(bits)
    }

    pub fn hamming(&self, other: &Descriptor) -> u32 {
        (self.0[0] ^ other.0[0]).count_ones() + (self.0[1] ^ other.0[1]).count_ones()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Feature {
    pub x: i64,
    pub y: i64,
    pub descriptor: Descriptor,
    pub score: f64,
}

/// Pluggable keypoint detector working on binary event frames.
pub trait FeatureDetector: Send + Sync {
    fn detect(&self, frame: &BinaryFrame) -> Vec<Feature>;
}

/// Minimum-eigenvalue (Shi-Tomasi) corners on Sobel gradients of the binary
/// frame. Only pixels that fired are candidates, so every keypoint sits on
/// an event.
#[derive(Clone, Debug, PartialEq)]
pub struct ShiTomasiDetector {
    pub window_radius: i64,
    pub nms_radius: i64,
    pub min_response: f64,
    pub max_features: usize,
}

impl Default for ShiTomasiDetector {
    fn default() -> Self {
        Self {
            window_radius: 1,
            nms_radius: 2,
            min_response: 1.0,
            max_features: 4000,
        }
    }
}

impl ShiTomasiDetector {
    /// Corner response for every pixel (zero outside the valid border).
    pub fn response(&self, frame: &BinaryFrame) -> Grid<f64> {
        let (w, h) = (frame.width, frame.height);
        let val = |x: i64, y: i64| -> f64 {
            if frame.get_checked(x, y).unwrap_or(false) {
                1.0
            } else {
                0.0
            }
        };
        let mut gxx = Grid::filled(w, h, 0.0);
        let mut gyy = Grid::filled(w, h, 0.0);
        let mut gxy = Grid::filled(w, h, 0.0);
        for y in 0..h as i64 {
            for x in 0..w as i64 {
                let gx = (val(x + 1, y - 1) + 2.0 * val(x + 1, y) + val(x + 1, y + 1))
                    - (val(x - 1, y - 1) + 2.0 * val(x - 1, y) + val(x - 1, y + 1));
                let gy = (val(x - 1, y + 1) + 2.0 * val(x, y + 1) + val(x + 1, y + 1))
                    - (val(x - 1, y - 1) + 2.0 * val(x, y - 1) + val(x + 1, y - 1));
                gxx.set(x as usize, y as usize, gx * gx);
                gyy.set(x as usize, y as usize, gy * gy);
                gxy.set(x as usize, y as usize, gx * gy);
            }
        }
        let mut out = Grid::filled(w, h, 0.0);
        let r = self.window_radius;
        for y in 0..h as i64 {
            for x in 0..w as i64 {
                let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
                for dy in -r..=r {
                    for dx in -r..=r {
                        if let Some(v) = gxx.get_checked(x + dx, y + dy) {
                            a += v;
                            b += gxy.get((x + dx) as usize, (y + dy) as usize);
                            c += gyy.get((x + dx) as usize, (y + dy) as usize);
                        }
                    }
                }
                let half_tr = 0.5 * (a + c);
                let disc = (0.25 * (a - c) * (a - c) + b * b).sqrt();
                out.set(x as usize, y as usize, half_tr - disc);
            }
        }
        out
    }
}

impl FeatureDetector for ShiTomasiDetector {
    fn detect(&self, frame: &BinaryFrame) -> Vec<Feature> {
        let (w, h) = (frame.width as i64, frame.height as i64);
        if w <= 2 * PATCH_RADIUS || h <= 2 * PATCH_RADIUS || frame.count_active() == 0 {
            return Vec::new();
        }
        let resp = self.response(frame);
        let is_candidate = |x: i64, y: i64| -> bool {
            x >= PATCH_RADIUS
                && y >= PATCH_RADIUS
                && x < w - PATCH_RADIUS
                && y < h - PATCH_RADIUS
                && frame.get(x as usize, y as usize)
                && resp.get(x as usize, y as usize) >= self.min_response
        };
        let mut kept = Vec::new();
        let n = self.nms_radius;
        for y in PATCH_RADIUS..h - PATCH_RADIUS {
            for x in PATCH_RADIUS..w - PATCH_RADIUS {
                if !is_candidate(x, y) {
                    continue;
                }
                let r0 = resp.get(x as usize, y as usize);
                let mut is_max = true;
                'nms: for dy in -n..=n {
                    for dx in -n..=n {
                        if (dx, dy) == (0, 0) || !is_candidate(x + dx, y + dy) {
                            continue;
                        }
                        let r1 = resp.get((x + dx) as usize, (y + dy) as usize);
                        // equal responses: the earlier pixel in row-major order wins
                        if r1 > r0 || (r1 == r0 && (dy < 0 || (dy == 0 && dx < 0))) {
                            is_max = false;
                            break 'nms;
                        }
                    }
                }
                if is_max {
                    kept.push(Feature {
                        x,
                        y,
                        descriptor: Descriptor::from_frame(frame, x, y),
                        score: r0,
                    });
                }
            }
        }
        if kept.len() > self.max_features {
            kept.sort_by(|a, b| b.score.total_cmp(&a.score).then((a.y, a.x).cmp(&(b.y, b.x))));
            kept.truncate(self.max_features);
            kept.sort_by_key(|f| (f.y, f.x));
        }
        kept
    }
}

/// 2x2 OR-pooling of a binary frame.
pub fn downsample(frame: &BinaryFrame) -> BinaryFrame {
    let (w, h) = (frame.width.div_ceil(2), frame.height.div_ceil(2));
    let mut out = Grid::filled(w, h, false);
    for y in 0..frame.height {
        for x in 0..frame.width {
            if frame.get(x, y) {
                out.set(x / 2, y / 2, true);
            }
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatchParams {
    pub ratio: f64,
    pub max_hamming: u32,
    pub stereo_max_dv: i64,
    pub max_disparity: i64,
    pub temporal_radius: i64,
}

impl Default for MatchParams {
    fn default() -> Self {
        Self {
            ratio: 0.8,
            max_hamming: 40,
            stereo_max_dv: 2,
            max_disparity: 96,
            temporal_radius: 16,
        }
    }
}

impl MatchParams {
    /// Parameters for a level downsampled by `factor`. The temporal search
    /// radius stays in level pixels, so coarse levels follow faster motion.
    pub fn scaled(&self, factor: i64) -> Self {
        Self {
            max_disparity: (self.max_disparity + factor - 1) / factor,
            ..*self
        }
    }

    fn stereo_gate(&self, left: &Feature, right: &Feature) -> bool {
        let d = left.x - right.x;
        (left.y - right.y).abs() <= self.stereo_max_dv && d >= 0 && d <= self.max_disparity
    }

    fn temporal_gate(&self, a: &Feature, b: &Feature) -> bool {
        (a.x - b.x).abs() <= self.temporal_radius && (a.y - b.y).abs() <= self.temporal_radius
    }
}

/// Nearest descriptor among gated candidates, subject to the distance cap
/// and the ratio test. Equal best distances are ambiguous and rejected.
fn nearest(
    query: &Feature,
    candidates: &[Feature],
    params: &MatchParams,
    gate: impl Fn(&Feature) -> bool,
) -> Option<usize> {
    let mut best: Option<(u32, usize)> = None;
    let mut second = u32::MAX;
    for (i, c) in candidates.iter().enumerate() {
        if !gate(c) {
            continue;
        }
        let d = query.descriptor.hamming(&c.descriptor);
        match best {
            Some((bd, _)) if d >= bd => second = second.min(d),
            Some((bd, _)) => {
                second = bd;
                best = Some((d, i));
            }
            None => best = Some((d, i)),
        }
    }
    let (bd, bi) = best?;
    if bd > params.max_hamming {
        return None;
    }
    if second != u32::MAX && bd as f64 >= params.ratio * second as f64 {
        return None;
    }
    Some(bi)
}

/// Match with mutual-consistency check. `gate(q, c)` is oriented from the
/// query set to the candidate set.
fn mutual(
    i: usize,
    from: &[Feature],
    to: &[Feature],
    params: &MatchParams,
    gate: impl Fn(&Feature, &Feature) -> bool,
) -> Option<usize> {
    let q = &from[i];
    let j = nearest(q, to, params, |c| gate(q, c))?;
    let t = &to[j];
    let back = nearest(t, from, params, |c| gate(c, t))?;
    (back == i).then_some(j)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Quad {
    pub cur_left: usize,
    pub cur_right: usize,
    pub prev_right: usize,
    pub prev_left: usize,
}

/// Cyclic matching current-left -> current-right -> previous-right ->
/// previous-left -> current-left; only cycles that close are returned.
pub fn quad_match(
    cur_left: &[Feature],
    cur_right: &[Feature],
    prev_right: &[Feature],
    prev_left: &[Feature],
    params: &MatchParams,
) -> Vec<Quad> {
    let stereo = |l: &Feature, r: &Feature| params.stereo_gate(l, r);
    let temporal = |a: &Feature, b: &Feature| params.temporal_gate(a, b);
    let mut quads = Vec::new();
    for i in 0..cur_left.len() {
        let Some(j) = mutual(i, cur_left, cur_right, params, stereo) else { continue };
        let Some(k) = mutual(j, cur_right, prev_right, params, temporal) else { continue };
        let Some(l) = mutual(k, prev_right, prev_left, params, |r, l| stereo(l, r)) else { continue };
        let Some(m) = mutual(l, prev_left, cur_left, params, temporal) else { continue };
        if m == i {
            quads.push(Quad {
                cur_left: i,
                cur_right: j,
                prev_right: k,
                prev_left: l,
            });
        }
    }
    quads
}
