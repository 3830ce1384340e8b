//! Empirical route-choice, entry-time and speed statistics of real clips,
//! plus the playback normalisation derived from them.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::arena::{ArenaGeometry, PortalId, INTERIOR_PORTAL};
use crate::error::{Error, Result};
use crate::trajectory::{Clip, TrackId};

/// Expected walking speed used to normalise playback (m/s).
pub const REFERENCE_WALKING_SPEED: f64 = 1.4;
/// Endpoints farther than this from every portal map to the interior pseudo-portal (m).
pub const PORTAL_ASSIGNMENT_THRESHOLD: f64 = 1.0;
pub const SPEED_BIN_WIDTH: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RouteChoiceDistribution {
    probabilities: BTreeMap<(PortalId, PortalId), f64>,
}

impl RouteChoiceDistribution {
    pub fn from_counts(counts: &BTreeMap<(PortalId, PortalId), usize>) -> Self {
        let total: usize = counts.values().sum();
        let probabilities = counts
            .iter()
            .filter(|(_, &c)| c > 0)
            .map(|(&k, &c)| (k, c as f64 / total as f64))
            .collect();
        RouteChoiceDistribution { probabilities }
    }

    pub fn from_probabilities(probabilities: BTreeMap<(PortalId, PortalId), f64>) -> Result<Self> {
        if probabilities.values().any(|p| !(p.is_finite() && *p >= 0.0)) {
            return Err(Error::invalid("route probabilities must be finite and non-negative"));
        }
        let sum: f64 = probabilities.values().sum();
        if !probabilities.is_empty() && (sum - 1.0).abs() > 1e-6 {
            return Err(Error::invalid(format!("route probabilities sum to {sum}, expected 1")));
        }
        Ok(RouteChoiceDistribution { probabilities })
    }

    pub fn probability(&self, origin: PortalId, destination: PortalId) -> f64 {
        self.probabilities.get(&(origin, destination)).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = ((PortalId, PortalId), f64)> + '_ {
        self.probabilities.iter().map(|(&k, &p)| (k, p))
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }

    pub fn total(&self) -> f64 {
        self.probabilities.values().sum()
    }

    /// Destinations and weights for routes leaving `origin`.
    pub fn destinations_from(&self, origin: PortalId) -> Vec<(PortalId, f64)> {
        self.probabilities
            .range((origin, PortalId::MIN)..=(origin, PortalId::MAX))
            .map(|(&(_, d), &p)| (d, p))
            .collect()
    }

    /// Marginal distribution over destinations.
    pub fn destination_marginal(&self) -> Vec<(PortalId, f64)> {
        let mut m: BTreeMap<PortalId, f64> = BTreeMap::new();
        for (&(_, d), &p) in &self.probabilities {
            *m.entry(d).or_default() += p;
        }
        m.into_iter().collect()
    }

    pub fn to_table(&self) -> String {
        let mut out = String::from("origin,destination,probability\n");
        for (&(o, d), p) in &self.probabilities {
            let _ = writeln!(out, "{o},{d},{p}");
        }
        out
    }

    pub fn from_table(text: &str) -> Result<Self> {
        let mut probabilities = BTreeMap::new();
        for (line_no, fields) in table_rows(text, "origin,destination,probability")? {
            let [o, d, p] = fields[..] else {
                return Err(Error::parse(line_no, "expected origin,destination,probability"));
            };
            let o: PortalId = o.parse().map_err(|_| Error::parse(line_no, format!("bad origin `{o}`")))?;
            let d: PortalId = d.parse().map_err(|_| Error::parse(line_no, format!("bad destination `{d}`")))?;
            let p: f64 = p.parse().map_err(|_| Error::parse(line_no, format!("bad probability `{p}`")))?;
            if probabilities.insert((o, d), p).is_some() {
                return Err(Error::parse(line_no, format!("duplicate route {o}->{d}")));
            }
        }
        Self::from_probabilities(probabilities)
    }
}

/// Yields `(line number, fields)` for data rows after the required header.
fn table_rows<'a>(text: &'a str, header: &str) -> Result<Vec<(usize, Vec<&'a str>)>> {
    let mut rows = Vec::new();
    let mut header_seen = false;
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if !header_seen {
            if line != header {
                return Err(Error::parse(idx + 1, format!("expected header `{header}`")));
            }
            header_seen = true;
            continue;
        }
        rows.push((idx + 1, line.split(',').map(str::trim).collect()));
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct RouteExtraction {
    pub distribution: RouteChoiceDistribution,
    /// Tracks with at least one endpoint assigned to the interior pseudo-portal.
    pub interior: Vec<TrackId>,
}

fn assign_portal(arena: &ArenaGeometry, p: crate::geometry::Vec2, threshold: f64) -> PortalId {
    match arena.nearest_portal(p) {
        Some((id, d)) if d <= threshold => id,
        _ => INTERIOR_PORTAL,
    }
}

/// Maps each track to (portal nearest its first sample, portal nearest its
/// last sample) and returns the empirical pair frequencies.
pub fn extract_route_choices(clip: &Clip, arena: &ArenaGeometry, threshold: f64) -> Result<RouteExtraction> {
    if arena.portals.is_empty() {
        return Err(Error::invalid("arena has no portals"));
    }
    let mut counts = BTreeMap::new();
    let mut interior = Vec::new();
    for track in clip.tracks.iter().filter(|t| !t.points.is_empty()) {
        let first = track.points[0].pos();
        let last = track.points[track.points.len() - 1].pos();
        let o = assign_portal(arena, first, threshold);
        let d = assign_portal(arena, last, threshold);
        if o == INTERIOR_PORTAL || d == INTERIOR_PORTAL {
            log::info!("track {} has an interior endpoint ({o} -> {d})", track.id);
            interior.push(track.id.clone());
        }
        *counts.entry((o, d)).or_insert(0usize) += 1;
    }
    Ok(RouteExtraction {
        distribution: RouteChoiceDistribution::from_counts(&counts),
        interior,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntryObservation {
    /// Seconds after clip start.
    pub time: f64,
    pub portal: PortalId,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EntryTimeDistribution {
    pub observations: Vec<EntryObservation>,
    /// Window length the observations were taken over.
    pub duration: f64,
}

impl EntryTimeDistribution {
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }

    /// Bootstrap resample with replacement, sorted by time.
    pub fn resampled(&self, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = self.observations.len();
        let mut observations: Vec<_> = (0..n).map(|_| self.observations[rng.random_range(0..n)]).collect();
        observations.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.portal.cmp(&b.portal)));
        EntryTimeDistribution {
            observations,
            duration: self.duration,
        }
    }

    pub fn to_table(&self) -> String {
        let mut out = format!("# duration={}\ntime,portal\n", self.duration);
        for o in &self.observations {
            let _ = writeln!(out, "{},{}", o.time, o.portal);
        }
        out
    }

    pub fn from_table(text: &str) -> Result<Self> {
        let duration = text
            .lines()
            .filter_map(|l| l.trim().strip_prefix('#'))
            .filter_map(|c| c.trim().strip_prefix("duration="))
            .next()
            .map(|v| v.trim().parse::<f64>())
            .transpose()
            .map_err(|_| Error::invalid("bad `# duration=` metadata"))?;
        let mut observations = Vec::new();
        for (line_no, fields) in table_rows(text, "time,portal")? {
            let [t, p] = fields[..] else {
                return Err(Error::parse(line_no, "expected time,portal"));
            };
            let time: f64 = t.parse().map_err(|_| Error::parse(line_no, format!("bad time `{t}`")))?;
            let portal: PortalId = p.parse().map_err(|_| Error::parse(line_no, format!("bad portal `{p}`")))?;
            if !(time.is_finite() && time >= 0.0) {
                return Err(Error::parse(line_no, "entry time must be non-negative"));
            }
            observations.push(EntryObservation { time, portal });
        }
        let duration = duration.unwrap_or_else(|| observations.iter().map(|o| o.time).fold(0.0, f64::max));
        Ok(EntryTimeDistribution { observations, duration })
    }
}

/// Entry time of every track, relative to the clip start, tagged with the
/// portal nearest its first visible sample.
pub fn extract_entry_times(clip: &Clip, arena: &ArenaGeometry, threshold: f64) -> EntryTimeDistribution {
    let mut observations: Vec<EntryObservation> = clip
        .tracks
        .iter()
        .filter(|t| !t.points.is_empty())
        .map(|t| EntryObservation {
            time: t.points[0].t - clip.start,
            portal: assign_portal(arena, t.points[0].pos(), threshold),
        })
        .collect();
    observations.sort_by(|a, b| a.time.total_cmp(&b.time));
    EntryTimeDistribution {
        observations,
        duration: clip.duration,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    pub bin_width: f64,
    /// `counts[k]` covers `[k * bin_width, (k + 1) * bin_width)`.
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn new(values: &[f64], bin_width: f64) -> Self {
        let mut counts = Vec::new();
        for &v in values {
            // nudge so values on a bin edge are not pushed down by rounding
            let k = (v / bin_width + 1e-9).floor().max(0.0) as usize;
            if counts.len() <= k {
                counts.resize(k + 1, 0);
            }
            counts[k] += 1;
        }
        Histogram { bin_width, counts }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    /// Mean using bin centres.
    pub fn mean(&self) -> f64 {
        let n = self.total();
        if n == 0 {
            return f64::NAN;
        }
        let s: f64 = self
            .counts
            .iter()
            .enumerate()
            .map(|(k, &c)| (k as f64 + 0.5) * self.bin_width * c as f64)
            .sum();
        s / n as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpeedStats {
    pub mean: f64,
    pub histogram: Histogram,
    pub per_track: Vec<f64>,
    /// Tracks with fewer than two visible samples.
    pub excluded: usize,
}

impl SpeedStats {
    pub fn histogram_table(&self) -> String {
        let mut out = String::from("bin_start,bin_end,count\n");
        let w = self.histogram.bin_width;
        for (k, c) in self.histogram.counts.iter().enumerate() {
            let _ = writeln!(out, "{},{},{c}", k as f64 * w, (k + 1) as f64 * w);
        }
        out
    }
}

/// Per-track mean speed (path length / visible duration) across clips.
pub fn speed_stats<'a>(clips: impl IntoIterator<Item = &'a Clip>, bin_width: f64) -> Result<SpeedStats> {
    if !(bin_width > 0.0) {
        return Err(Error::invalid("histogram bin width must be positive"));
    }
    let mut per_track = Vec::new();
    let mut excluded = 0;
    for clip in clips {
        for t in &clip.tracks {
            let dur = t.visible_duration();
            if t.points.len() < 2 || dur <= 0.0 {
                excluded += 1;
                continue;
            }
            per_track.push(t.path_length() / dur);
        }
    }
    if per_track.is_empty() {
        return Err(Error::invalid("no track has two or more visible samples"));
    }
    // sort first so the sum, and therefore the mean, ignores track order
    let mut sorted = per_track.clone();
    sorted.sort_by(f64::total_cmp);
    let mean = sorted.iter().sum::<f64>() / sorted.len() as f64;
    Ok(SpeedStats {
        mean,
        histogram: Histogram::new(&per_track, bin_width),
        per_track,
        excluded,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlaybackScale {
    pub factor: f64,
}

/// Multiplier on playback speed that brings `observed_mean` up (or down) to `reference`.
pub fn playback_scale(observed_mean: f64, reference: f64) -> Result<PlaybackScale> {
    if !(observed_mean > 0.0 && observed_mean.is_finite()) || !(reference > 0.0 && reference.is_finite()) {
        return Err(Error::invalid(format!(
            "playback scale needs positive speeds, got observed {observed_mean} and reference {reference}"
        )));
    }
    Ok(PlaybackScale {
        factor: reference / observed_mean,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Vec2;
    use crate::trajectory::{Source, Track, TrackPoint};

    fn walk(id: &str, from: Vec2, to: Vec2, t0: f64, n: usize) -> Track {
        let pts = (0..n)
            .map(|i| {
                let s = i as f64 / (n - 1) as f64;
                let p = from.lerp(to, s);
                TrackPoint::new(t0 + i as f64 / 9.0, p.x, p.y)
            })
            .collect();
        Track::new(id, Source::Real, pts, 9.0)
    }

    fn forum_clip(tracks: Vec<Track>) -> Clip {
        Clip {
            start: 0.0,
            duration: 60.0,
            tracks,
            rate: 9.0,
            arena: ArenaGeometry::forum(),
        }
    }

    fn portal_mid(id: PortalId) -> Vec2 {
        let forum = ArenaGeometry::forum();
        let p = forum.portal(id).unwrap();
        p.segment().midpoint() + forum.inward_normal(p) * 0.3
    }

    #[test]
    fn single_route() {
        let clip = forum_clip(vec![walk("1", portal_mid(1), portal_mid(5), 0.0, 20)]);
        let r = extract_route_choices(&clip, &ArenaGeometry::forum(), PORTAL_ASSIGNMENT_THRESHOLD).unwrap();
        assert_eq!(r.distribution.probability(1, 5), 1.0);
        assert!(r.interior.is_empty());
    }

    #[test]
    fn symmetric_routes() {
        let clip = forum_clip(vec![
            walk("1", portal_mid(1), portal_mid(5), 0.0, 20),
            walk("2", portal_mid(5), portal_mid(1), 3.0, 20),
        ]);
        let r = extract_route_choices(&clip, &ArenaGeometry::forum(), PORTAL_ASSIGNMENT_THRESHOLD).unwrap();
        assert_eq!(r.distribution.probability(1, 5), 0.5);
        assert_eq!(r.distribution.probability(5, 1), 0.5);
    }

    #[test]
    fn ten_track_fixture_hand_count() {
        // 5 × (2→7), 3 × (4→11), 2 × (9→3)
        let mut tracks = Vec::new();
        let plan = [(2, 7, 5), (4, 11, 3), (9, 3, 2)];
        let mut k = 0;
        for (o, d, n) in plan {
            for _ in 0..n {
                tracks.push(walk(&k.to_string(), portal_mid(o), portal_mid(d), k as f64, 30));
                k += 1;
            }
        }
        let clip = forum_clip(tracks);
        let r = extract_route_choices(&clip, &ArenaGeometry::forum(), PORTAL_ASSIGNMENT_THRESHOLD).unwrap();
        assert_eq!(r.distribution.probability(2, 7), 0.5);
        assert_eq!(r.distribution.probability(4, 11), 0.3);
        assert_eq!(r.distribution.probability(9, 3), 0.2);
        assert!((r.distribution.total() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn interior_endpoint_is_reported() {
        let centre = ArenaGeometry::forum().centre();
        let clip = forum_clip(vec![walk("x", centre, portal_mid(2), 0.0, 20)]);
        let r = extract_route_choices(&clip, &ArenaGeometry::forum(), PORTAL_ASSIGNMENT_THRESHOLD).unwrap();
        assert_eq!(r.distribution.probability(INTERIOR_PORTAL, 2), 1.0);
        assert_eq!(r.interior.len(), 1);
        assert!(extract_route_choices(&clip, &ArenaGeometry::bare(15.8, 11.86), 1.0).is_err());
    }

    #[test]
    fn entry_times_relative_to_clip_start() {
        let mut clip = forum_clip(vec![
            walk("a", portal_mid(1), portal_mid(5), 100.0, 10),
            walk("b", portal_mid(2), portal_mid(6), 110.0, 10),
            walk("c", portal_mid(3), portal_mid(7), 159.0, 10),
        ]);
        clip.start = 100.0;
        let e = extract_entry_times(&clip, &ArenaGeometry::forum(), PORTAL_ASSIGNMENT_THRESHOLD);
        let times: Vec<f64> = e.observations.iter().map(|o| o.time).collect();
        assert_eq!(times, vec![0.0, 10.0, 59.0]);
        assert_eq!(e.observations[1].portal, 2);
    }

    #[test]
    fn entry_of_partial_track_is_first_visible_sample() {
        let full = walk("p", portal_mid(1), portal_mid(6), 95.0, 90);
        let mut clip = forum_clip(vec![full.window(100.0, 160.0)]);
        clip.start = 100.0;
        let e = extract_entry_times(&clip, &ArenaGeometry::forum(), PORTAL_ASSIGNMENT_THRESHOLD);
        assert_eq!(e.len(), 1);
        assert_eq!(e.observations[0].time, 0.0);
        // mid-walk, so not near any portal
        assert_eq!(e.observations[0].portal, INTERIOR_PORTAL);
    }

    #[test]
    fn speed_means() {
        let one = walk("a", Vec2::new(1.0, 1.0), Vec2::new(2.0, 1.0), 0.0, 10); // 1 m in 1 s
        let s = speed_stats([&forum_clip(vec![one.clone()])], SPEED_BIN_WIDTH).unwrap();
        assert!((s.mean - 1.0).abs() < 1e-12);
        let two = walk("b", Vec2::new(1.0, 2.0), Vec2::new(3.0, 2.0), 0.0, 10);
        let single = walk("c", Vec2::new(1.0, 2.0), Vec2::new(1.0, 2.0), 0.0, 2).window(0.0, 0.0);
        let s = speed_stats([&forum_clip(vec![one, two, single])], SPEED_BIN_WIDTH).unwrap();
        assert!((s.mean - 1.5).abs() < 1e-12);
        assert_eq!(s.excluded, 1);
        assert!((s.histogram.mean() - s.mean).abs() <= SPEED_BIN_WIDTH / 2.0 + 1e-12);
        assert_eq!(s.histogram.counts[10], 1);
    }

    #[test]
    fn playback_factors() {
        assert_eq!(playback_scale(1.4, 1.4).unwrap().factor, 1.0);
        assert_eq!(playback_scale(0.7, 1.4).unwrap().factor, 2.0);
        assert!((playback_scale(1.17, REFERENCE_WALKING_SPEED).unwrap().factor - 1.196_581_196_6).abs() < 1e-9);
        assert!(playback_scale(0.0, 1.4).is_err());
        assert!(playback_scale(1.0, -1.0).is_err());
    }

    #[test]
    fn tables_round_trip() {
        let mut counts = BTreeMap::new();
        counts.insert((1, 5), 3usize);
        counts.insert((2, 7), 4);
        counts.insert((0, 3), 2);
        let d = RouteChoiceDistribution::from_counts(&counts);
        let text = d.to_table();
        assert_eq!(RouteChoiceDistribution::from_table(&text).unwrap(), d);

        let e = EntryTimeDistribution {
            observations: vec![
                EntryObservation { time: 0.0, portal: 1 },
                EntryObservation { time: 1.0 / 9.0, portal: 0 },
            ],
            duration: 60.0,
        };
        assert_eq!(EntryTimeDistribution::from_table(&e.to_table()).unwrap(), e);
        assert!(RouteChoiceDistribution::from_table("origin,destination,probability\n1,2,0.5\n").is_err());
    }

    #[test]
    fn resampling_entries_is_seeded() {
        let e = EntryTimeDistribution {
            observations: (0..20).map(|i| EntryObservation { time: i as f64, portal: i % 3 + 1 }).collect(),
            duration: 60.0,
        };
        assert_eq!(e.resampled(4), e.resampled(4));
        assert_eq!(e.resampled(4).len(), 20);
    }
}
