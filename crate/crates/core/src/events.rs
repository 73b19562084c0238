//! Event ingestion, clustering into binary frames and surfaces of active events.

use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::EventError;

pub const DEFAULT_WINDOW: f64 = 0.025;
pub const DEFAULT_MAX_COUNT: usize = 15_000;
pub const DEFAULT_LOOKUP_RADIUS: i64 = 2;

/// Slack used when comparing event times against cluster boundaries.
const TIME_EPS: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Side {
    Left,
    Right,
}

impl Side {
    pub fn name(self) -> &'static str {
        match self {
            Side::Left => "left",
            Side::Right => "right",
        }
    }

    fn tag(self) -> char {
        match self {
            Side::Left => 'L',
            Side::Right => 'R',
        }
    }
}

impl fmt::Display for Side {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Event {
    pub t: f64,
    pub x: u32,
    pub y: u32,
    pub polarity: i8,
    pub side: Side,
}

impl Event {
    pub fn new(t: f64, x: u32, y: u32, polarity: i8, side: Side) -> Self {
        Self {
            t,
            x,
            y,
            polarity,
            side,
        }
    }
}

/// Row-major image of `T` values.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid<T> {
    pub width: usize,
    pub height: usize,
    pub data: Vec<T>,
}

impl<T: Copy> Grid<T> {
    pub fn filled(width: usize, height: usize, value: T) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: T) {
        self.data[y * self.width + x] = value;
    }

    /// Value at signed coordinates, `None` outside the image.
    #[inline]
    pub fn get_checked(&self, x: i64, y: i64) -> Option<T> {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            None
        } else {
            Some(self.get(x as usize, y as usize))
        }
    }
}

pub type BinaryFrame = Grid<bool>;

/// Surface of active events; `NaN` where no event fired.
pub type Sae = Grid<f64>;

impl Grid<bool> {
    pub fn count_active(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EventCluster {
    pub id: usize,
    pub frame_left: BinaryFrame,
    pub frame_right: BinaryFrame,
    pub sae_left: Sae,
    pub sae_right: Sae,
    pub t_start: f64,
    pub t_end: f64,
    pub count_left: usize,
    pub count_right: usize,
}

impl EventCluster {
    fn empty(id: usize, width: usize, height: usize, t_start: f64) -> Self {
        Self {
            id,
            frame_left: Grid::filled(width, height, false),
            frame_right: Grid::filled(width, height, false),
            sae_left: Grid::filled(width, height, f64::NAN),
            sae_right: Grid::filled(width, height, f64::NAN),
            t_start,
            t_end: t_start,
            count_left: 0,
            count_right: 0,
        }
    }

    pub fn frame(&self, side: Side) -> &BinaryFrame {
        match side {
            Side::Left => &self.frame_left,
            Side::Right => &self.frame_right,
        }
    }

    pub fn sae(&self, side: Side) -> &Sae {
        match side {
            Side::Left => &self.sae_left,
            Side::Right => &self.sae_right,
        }
    }

    pub fn count(&self, side: Side) -> usize {
        match side {
            Side::Left => self.count_left,
            Side::Right => self.count_right,
        }
    }

    pub fn width(&self) -> usize {
        self.frame_left.width
    }

    pub fn height(&self) -> usize {
        self.frame_left.height
    }

    fn add(&mut self, e: &Event) {
        let (frame, sae, count) = match e.side {
            Side::Left => (&mut self.frame_left, &mut self.sae_left, &mut self.count_left),
            Side::Right => (&mut self.frame_right, &mut self.sae_right, &mut self.count_right),
        };
        let (x, y) = (e.x as usize, e.y as usize);
        frame.set(x, y, true);
        let prev = sae.get(x, y);
        if prev.is_nan() || e.t > prev {
            sae.set(x, y, e.t);
        }
        *count += 1;
    }
}

/// Parses the plain-text event format and returns the events of both sides
/// merged into one time-ordered sequence (stable with respect to file order).
pub fn read_events<R: Read>(source: R, width: usize, height: usize) -> Result<Vec<Event>, EventError> {
    let reader = BufReader::new(source);
    let mut events = Vec::new();
    let mut last = [f64::NEG_INFINITY; 2];
    for (i, line) in reader.lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| EventError::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let e = parse_line(trimmed, lineno, width, height)?;
        let slot = &mut last[e.side as usize];
        if e.t < *slot {
            return Err(EventError::NonMonotonicTime {
                side: e.side.name(),
                line: lineno,
                t: e.t,
                previous: *slot,
            });
        }
        *slot = e.t;
        events.push(e);
    }
    events.sort_by(|a, b| a.t.total_cmp(&b.t));
    Ok(events)
}

pub fn read_events_file(path: &Path, width: usize, height: usize) -> Result<Vec<Event>, EventError> {
    let file = File::open(path).map_err(|source| EventError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_events(file, width, height)
}

fn parse_line(line: &str, lineno: usize, width: usize, height: usize) -> Result<Event, EventError> {
    let err = |message: String| EventError::Parse { line: lineno, message };
    let fields: Vec<&str> = line.split_whitespace().collect();
    if fields.len() != 5 {
        return Err(err(format!("expected 5 fields, found {}", fields.len())));
    }
    let t: f64 = fields[0]
        .parse()
        .map_err(|_| err(format!("invalid time '{}'", fields[0])))?;
    if !t.is_finite() || t < 0.0 {
        return Err(err(format!("time {t} must be finite and non-negative")));
    }
    let x: u32 = fields[1].parse().map_err(|_| err(format!("invalid x '{}'", fields[1])))?;
    let y: u32 = fields[2].parse().map_err(|_| err(format!("invalid y '{}'", fields[2])))?;
    if x as usize >= width {
        return Err(err(format!("x = {x} outside image width {width}")));
    }
    if y as usize >= height {
        return Err(err(format!("y = {y} outside image height {height}")));
    }
    let polarity = match fields[3] {
        "1" | "+1" => 1,
        "-1" => -1,
        other => return Err(err(format!("invalid polarity '{other}'"))),
    };
    let side = match fields[4] {
        "L" => Side::Left,
        "R" => Side::Right,
        other => return Err(err(format!("invalid side '{other}'"))),
    };
    Ok(Event::new(t, x, y, polarity, side))
}

pub fn write_events<W: Write>(sink: W, events: &[Event]) -> std::io::Result<()> {
    let mut w = BufWriter::new(sink);
    writeln!(w, "# t x y polarity side")?;
    for e in events {
        writeln!(w, "{} {} {} {} {}", e.t, e.x, e.y, e.polarity, e.side.tag())?;
    }
    w.flush()
}

pub fn write_events_file(path: &Path, events: &[Event]) -> std::io::Result<()> {
    write_events(File::create(path)?, events)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClusterConfig {
    pub window: f64,
    pub max_count: usize,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            window: DEFAULT_WINDOW,
            max_count: DEFAULT_MAX_COUNT,
        }
    }
}

/// Streaming clusterer. Feed time-ordered events with [`push`](Self::push)
/// and flush the last cluster with [`finish`](Self::finish).
///
/// A cluster covers `[t_start, t_start + window)`. It closes early once
/// either side has collected `max_count` events; the next cluster then
/// starts at the following event and the time grid is re-anchored there.
pub struct EventClusterer {
    config: ClusterConfig,
    width: usize,
    height: usize,
    current: Option<EventCluster>,
    next_id: usize,
}

impl EventClusterer {
    pub fn new(config: ClusterConfig, width: usize, height: usize) -> Self {
        assert!(config.window > 0.0, "cluster window must be positive");
        assert!(config.max_count > 0, "cluster max_count must be positive");
        Self {
            config,
            width,
            height,
            current: None,
            next_id: 0,
        }
    }

    fn open(&mut self, t_start: f64) -> EventCluster {
        let c = EventCluster::empty(self.next_id, self.width, self.height, t_start);
        self.next_id += 1;
        c
    }

    /// Adds one event and returns the clusters it closed (at most two: one
    /// closed on time before the event, one closed on count by it).
    pub fn push(&mut self, e: &Event) -> Vec<EventCluster> {
        let window = self.config.window;
        let mut closed = Vec::new();
        let cur = match self.current.take() {
            None => self.open(e.t),
            Some(mut cur) => {
                let elapsed = e.t - cur.t_start;
                if elapsed >= window - TIME_EPS {
                    cur.t_end = cur.t_start + window;
                    let steps = ((elapsed + TIME_EPS) / window).floor().max(1.0);
                    let next_start = cur.t_start + steps * window;
                    closed.push(cur);
                    self.open(next_start)
                } else {
                    cur
                }
            }
        };
        let mut cur = cur;
        cur.add(e);
        if cur.count_left >= self.config.max_count || cur.count_right >= self.config.max_count {
            cur.t_end = if e.t > cur.t_start { e.t } else { next_up(cur.t_start) };
            closed.push(cur);
        } else {
            self.current = Some(cur);
        }
        closed
    }

    pub fn finish(&mut self) -> Option<EventCluster> {
        self.current.take().map(|mut c| {
            c.t_end = c.t_start + self.config.window;
            c
        })
    }
}

fn next_up(x: f64) -> f64 {
    if x == 0.0 {
        f64::from_bits(1)
    } else {
        f64::from_bits(x.to_bits() + 1)
    }
}

/// Clusters a whole time-ordered event sequence.
pub fn cluster_events(events: &[Event], config: ClusterConfig, width: usize, height: usize) -> Vec<EventCluster> {
    let mut clusterer = EventClusterer::new(config, width, height);
    let mut out = Vec::new();
    for e in events {
        out.extend(clusterer.push(e));
    }
    out.extend(clusterer.finish());
    out
}

/// Timestamp of the nearest fired pixel within a Chebyshev `radius` of
/// `(x, y)`. Ties go to the later timestamp, then to row-major order.
pub fn sae_lookup(cluster: &EventCluster, side: Side, x: i64, y: i64, radius: i64) -> Result<f64, EventError> {
    lookup_in(cluster.sae(side), x, y, radius).ok_or(EventError::NoEventNearby {
        x: x as f64,
        y: y as f64,
    })
}

/// Same as [`sae_lookup`] but also returns the pixel the time came from.
pub fn sae_lookup_pixel(sae: &Sae, x: i64, y: i64, radius: i64) -> Option<(i64, i64, f64)> {
    let mut best: Option<(i64, f64, i64, i64)> = None;
    for dy in -radius..=radius {
        for dx in -radius..=radius {
            let (px, py) = (x + dx, y + dy);
            let Some(t) = sae.get_checked(px, py) else { continue };
            if t.is_nan() {
                continue;
            }
            let d2 = dx * dx + dy * dy;
            let better = match best {
                None => true,
                Some((bd2, bt, _, _)) => d2 < bd2 || (d2 == bd2 && t > bt),
            };
            if better {
                best = Some((d2, t, px, py));
            }
        }
    }
    best.map(|(_, t, px, py)| (px, py, t))
}

fn lookup_in(sae: &Sae, x: i64, y: i64, radius: i64) -> Option<f64> {
    sae_lookup_pixel(sae, x, y, radius).map(|(_, _, t)| t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(t: f64, x: u32, y: u32, side: Side) -> Event {
        Event::new(t, x, y, 1, side)
    }

    #[test]
    fn reads_valid_lines() {
        let text = "# header\n0.1 1 2 1 L\n0.2 3 4 -1 R\n\n0.3 5 6 1 L\n";
        let events = read_events(text.as_bytes(), 10, 10).unwrap();
        assert_eq!(events.len(), 3);
        assert_eq!(events[1], Event::new(0.2, 3, 4, -1, Side::Right));
    }

    #[test]
    fn rejects_out_of_bounds_pixel() {
        let err = read_events("0.1 1 2 1 L\n0.2 10 4 1 L\n".as_bytes(), 10, 10).unwrap_err();
        match err {
            EventError::Parse { line, message } => {
                assert_eq!(line, 2);
                assert!(message.contains("width"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_time_going_backwards_per_side() {
        let ok = read_events("0.2 1 1 1 L\n0.1 1 1 1 R\n".as_bytes(), 10, 10).unwrap();
        assert_eq!(ok[0].side, Side::Right);
        let err = read_events("0.2 1 1 1 L\n0.1 1 1 1 L\n".as_bytes(), 10, 10).unwrap_err();
        assert!(matches!(err, EventError::NonMonotonicTime { line: 2, .. }));
    }

    #[test]
    fn rejects_bad_tokens() {
        for line in ["0.1 1 1 0 L", "0.1 1 1 1 X", "abc 1 1 1 L", "0.1 1 1 1", "-1 1 1 1 L"] {
            assert!(matches!(
                read_events(line.as_bytes(), 10, 10),
                Err(EventError::Parse { line: 1, .. })
            ));
        }
    }

    #[test]
    fn uniform_stream_gives_full_windows() {
        let events: Vec<Event> = (0..1000).map(|i| ev(i as f64 * 0.001, 1, 1, Side::Left)).collect();
        let clusters = cluster_events(&events, ClusterConfig { window: 0.025, max_count: 1_000_000 }, 4, 4);
        assert_eq!(clusters.len(), 40);
        for (k, c) in clusters.iter().enumerate() {
            assert_eq!(c.count_left, 25, "cluster {k}");
            assert!((c.t_end - c.t_start - 0.025).abs() < 1e-12);
        }
    }

    #[test]
    fn burst_closes_on_count() {
        let mut events: Vec<Event> = (0..100).map(|i| ev(i as f64 * 1e-5, 1, 1, Side::Right)).collect();
        events.push(ev(0.02, 2, 2, Side::Right));
        let clusters = cluster_events(&events, ClusterConfig { window: 0.025, max_count: 100 }, 4, 4);
        assert_eq!(clusters.len(), 2);
        assert_eq!(clusters[0].count_right, 100);
        assert!(clusters[0].t_end < 0.02);
        assert_eq!(clusters[1].t_start, 0.02);
    }

    #[test]
    fn single_event_cluster() {
        let clusters = cluster_events(&[ev(0.5, 3, 2, Side::Left)], ClusterConfig::default(), 5, 5);
        assert_eq!(clusters.len(), 1);
        let c = &clusters[0];
        let fired: Vec<f64> = c.sae_left.data.iter().copied().filter(|t| !t.is_nan()).collect();
        assert_eq!(fired, vec![0.5]);
        assert_eq!(c.sae_left.get(3, 2), 0.5);
        assert!(c.t_start < c.t_end);
        assert_eq!(c.frame_right.count_active(), 0);
    }

    #[test]
    fn empty_stream_has_no_clusters() {
        assert!(cluster_events(&[], ClusterConfig::default(), 5, 5).is_empty());
    }

    #[test]
    fn boundary_event_starts_next_cluster_and_gaps_are_skipped() {
        let events = vec![
            ev(0.0, 0, 0, Side::Left),
            ev(0.025, 1, 0, Side::Left),
            ev(0.130, 2, 0, Side::Left),
        ];
        let clusters = cluster_events(&events, ClusterConfig::default(), 4, 4);
        assert_eq!(clusters.len(), 3);
        assert_eq!(clusters[0].count_left, 1);
        assert_eq!(clusters[1].t_start, 0.025);
        assert!((clusters[2].t_start - 0.125).abs() < 1e-12);
        assert_eq!(clusters.iter().map(|c| c.id).collect::<Vec<_>>(), vec![0, 1, 2]);
    }

    #[test]
    fn stereo_sides_share_bounds() {
        let events = vec![ev(0.0, 0, 0, Side::Left), ev(0.01, 0, 0, Side::Right), ev(0.03, 1, 1, Side::Right)];
        let clusters = cluster_events(&events, ClusterConfig::default(), 4, 4);
        assert_eq!(clusters.len(), 2);
        assert_eq!(clusters[0].count_left, 1);
        assert_eq!(clusters[0].count_right, 1);
        assert_eq!(clusters[0].sae_right.get(0, 0), 0.01);
    }

    #[test]
    fn lookup_rules() {
        let events = vec![ev(0.5, 10, 10, Side::Left)];
        let c = &cluster_events(&events, ClusterConfig::default(), 20, 20)[0];
        assert_eq!(sae_lookup(c, Side::Left, 10, 10, 2).unwrap(), 0.5);
        assert_eq!(sae_lookup(c, Side::Left, 12, 8, 2).unwrap(), 0.5);
        assert!(matches!(
            sae_lookup(c, Side::Left, 13, 10, 2),
            Err(EventError::NoEventNearby { .. })
        ));
        assert!(sae_lookup(c, Side::Right, 10, 10, 2).is_err());

        let events = vec![ev(0.010, 11, 10, Side::Left), ev(0.012, 9, 10, Side::Left), ev(0.013, 10, 12, Side::Left)];
        let c = &cluster_events(&events, ClusterConfig::default(), 20, 20)[0];
        // two neighbours at distance 1: the later one wins
        assert_eq!(sae_lookup(c, Side::Left, 10, 10, 2).unwrap(), 0.012);
    }

    #[test]
    fn frame_matches_sae_and_keeps_latest_time() {
        let events = vec![ev(0.001, 1, 1, Side::Left), ev(0.002, 1, 1, Side::Left), ev(0.003, 2, 3, Side::Left)];
        let c = &cluster_events(&events, ClusterConfig::default(), 4, 4)[0];
        assert_eq!(c.sae_left.get(1, 1), 0.002);
        for (b, t) in c.frame_left.data.iter().zip(&c.sae_left.data) {
            assert_eq!(*b, !t.is_nan());
        }
    }
}
