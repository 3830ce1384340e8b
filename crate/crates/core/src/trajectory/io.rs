//! Track and clip files.
//!
//! Both are UTF-8 text with one point per line:
//!
//! ```text
//! # rate=9
//! # arena=15.8x11.86
//! track_id,frame_index,x,y
//! 17,900,3.25,4.5
//! ```
//!
//! Lines starting with `#` are comments; comments of the form `key=value`
//! are collected as metadata. The header line is required. `frame_index`
//! counts samples at the file's rate.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::model::{sample_index, AgentState, Clip, Footage, Frame, Source, Track, TrackId, TrackPoint};
use crate::arena::ArenaGeometry;
use crate::error::{Error, Result};
use crate::geometry::Vec2;

pub const TRACK_HEADER: &str = "track_id,frame_index,x,y";
pub const FRAME_HEADER: &str = "frame_index,track_id,x,y,heading,speed";

/// Maps raw detector coordinates (pixels) onto arena metres.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    /// Metres per source unit along x.
    pub scale_x: f64,
    /// Metres per source unit along y.
    pub scale_y: f64,
    pub native_rate: f64,
    /// Mirror y so that image rows (growing downwards) become arena y.
    pub flip_y: bool,
    pub arena_width: f64,
    pub arena_height: f64,
}

impl Default for IngestConfig {
    fn default() -> Self {
        let forum = ArenaGeometry::forum();
        IngestConfig {
            scale_x: 1.0,
            scale_y: 1.0,
            native_rate: 9.0,
            flip_y: false,
            arena_width: forum.width,
            arena_height: forum.height,
        }
    }
}

impl IngestConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::invalid(format!("ingest config: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [self.scale_x, self.scale_y, self.native_rate, self.arena_width, self.arena_height];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::invalid("ingest config values must be finite and positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum RejectReason {
    NonMonotonicTime { line: usize },
    OutOfArena { line: usize },
    TooFewPoints,
}

impl std::fmt::Display for RejectReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RejectReason::NonMonotonicTime { line } => write!(f, "non-monotonic time at line {line}"),
            RejectReason::OutOfArena { line } => write!(f, "point outside arena at line {line}"),
            RejectReason::TooFewPoints => f.write_str("fewer than 2 points"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RejectedTrack {
    pub id: TrackId,
    pub reason: RejectReason,
}

#[derive(Debug, Clone, Default)]
pub struct IngestReport {
    pub tracks: Vec<Track>,
    pub rejected: Vec<RejectedTrack>,
}

struct RawRow {
    line: usize,
    id: String,
    frame: i64,
    x: f64,
    y: f64,
}

#[derive(Default)]
struct ParsedTable {
    metadata: BTreeMap<String, String>,
    rows: Vec<RawRow>,
}

fn parse_table(text: &str) -> Result<ParsedTable> {
    let mut table = ParsedTable::default();
    let mut header_seen = false;
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw_line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some((k, v)) = comment.trim().split_once('=') {
                table.metadata.insert(k.trim().to_string(), v.trim().to_string());
            }
            continue;
        }
        if !header_seen {
            let header: Vec<&str> = line.split(',').map(str::trim).collect();
            if header.join(",") != TRACK_HEADER {
                return Err(Error::parse(line_no, format!("expected header `{TRACK_HEADER}`, found `{line}`")));
            }
            header_seen = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 4 {
            return Err(Error::parse(line_no, format!("expected 4 fields, found {}", fields.len())));
        }
        if fields[0].is_empty() {
            return Err(Error::parse(line_no, "empty track_id"));
        }
        let frame = fields[1]
            .parse::<i64>()
            .map_err(|_| Error::parse(line_no, format!("frame_index `{}` is not an integer", fields[1])))?;
        let coord = |s: &str, name: &str| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::parse(line_no, format!("{name} `{s}` is not a finite number")))
        };
        table.rows.push(RawRow {
            line: line_no,
            id: fields[0].to_string(),
            frame,
            x: coord(fields[2], "x")?,
            y: coord(fields[3], "y")?,
        });
    }
    if !header_seen && !table.rows.is_empty() {
        return Err(Error::parse(1, "missing header"));
    }
    Ok(table)
}

/// Groups rows by id in first-appearance order.
fn group_rows(rows: Vec<RawRow>) -> Vec<(String, Vec<RawRow>)> {
    let mut order: Vec<(String, Vec<RawRow>)> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for row in rows {
        match index.get(&row.id) {
            Some(&i) => order[i].1.push(row),
            None => {
                index.insert(row.id.clone(), order.len());
                order.push((row.id.clone(), vec![row]));
            }
        }
    }
    order
}

/// Parses a raw track file (source units) into metre-scaled real tracks.
///
/// Malformed lines abort with the offending line number. Tracks that leave
/// the arena after scaling, go back in time or repeat a timestamp, or have
/// fewer than two points are dropped and listed in the report.
pub fn ingest_tracks(raw: &str, config: &IngestConfig) -> Result<IngestReport> {
    config.validate()?;
    let table = parse_table(raw)?;
    let mut report = IngestReport::default();
    for (id, rows) in group_rows(table.rows) {
        let id = TrackId::new(&id);
        let mut points = Vec::with_capacity(rows.len());
        let mut reject = None;
        let mut last_frame = i64::MIN;
        for row in &rows {
            if row.frame <= last_frame {
                reject = Some(RejectReason::NonMonotonicTime { line: row.line });
                break;
            }
            last_frame = row.frame;
            let x = row.x * config.scale_x;
            let mut y = row.y * config.scale_y;
            if config.flip_y {
                y = config.arena_height - y;
            }
            if !(0.0..=config.arena_width).contains(&x) || !(0.0..=config.arena_height).contains(&y) {
                reject = Some(RejectReason::OutOfArena { line: row.line });
                break;
            }
            points.push(TrackPoint::new(row.frame as f64 / config.native_rate, x, y));
        }
        if reject.is_none() && points.len() < 2 {
            reject = Some(RejectReason::TooFewPoints);
        }
        match reject {
            Some(reason) => {
                log::warn!("rejecting track {id}: {reason}");
                report.rejected.push(RejectedTrack { id, reason });
            }
            None => report.tracks.push(Track::new(id, Source::Real, points, config.native_rate)),
        }
    }
    Ok(report)
}

/// Writes tracks at `rate` Hz in metres, with `metadata` as `# key=value` lines.
pub fn write_tracks(tracks: &[Track], rate: f64, metadata: &[(&str, String)]) -> String {
    let mut out = String::new();
    for (k, v) in metadata {
        let _ = writeln!(out, "# {k}={v}");
    }
    out.push_str(TRACK_HEADER);
    out.push('\n');
    for track in tracks {
        for p in &track.points {
            let _ = writeln!(out, "{},{},{},{}", track.id, sample_index(p.t, rate), p.x, p.y);
        }
    }
    out
}

/// Serialises a clip in the canonical clip format.
pub fn write_clip(clip: &Clip, extra: &[(&str, String)]) -> String {
    let mut meta: Vec<(&str, String)> = vec![
        ("rate", clip.rate.to_string()),
        ("arena", format!("{}x{}", clip.arena.width, clip.arena.height)),
        ("start", clip.start.to_string()),
        ("duration", clip.duration.to_string()),
        ("source", clip.source().unwrap_or(Source::Real).to_string()),
    ];
    meta.extend(extra.iter().cloned());
    write_tracks(&clip.tracks, clip.rate, &meta)
}

fn meta_f64(meta: &BTreeMap<String, String>, key: &str) -> Result<Option<f64>> {
    meta.get(key)
        .map(|v| {
            v.parse::<f64>()
                .map_err(|_| Error::invalid(format!("metadata `{key}={v}` is not a number")))
        })
        .transpose()
}

/// Parsed canonical clip plus any extra metadata found in its header.
#[derive(Debug, Clone)]
pub struct ClipFile {
    pub clip: Clip,
    pub metadata: BTreeMap<String, String>,
}

/// Reads a canonical clip file. Coordinates are taken to be metres already.
/// When `arena` is given its dimensions must match the file's header and its
/// portals are attached to the clip.
fn arena_from_meta(meta: &BTreeMap<String, String>, arena: Option<&ArenaGeometry>) -> Result<ArenaGeometry> {
    let dims = meta
        .get("arena")
        .ok_or_else(|| Error::invalid("file lacks `# arena=WxH` metadata"))?;
    let (w, h) = dims
        .split_once('x')
        .and_then(|(w, h)| Some((w.trim().parse::<f64>().ok()?, h.trim().parse::<f64>().ok()?)))
        .ok_or_else(|| Error::invalid(format!("bad arena metadata `{dims}`")))?;
    match arena {
        Some(a) => {
            if (a.width - w).abs() > 1e-9 || (a.height - h).abs() > 1e-9 {
                return Err(Error::invalid(format!(
                    "file arena {w}x{h} does not match configured arena {}x{}",
                    a.width, a.height
                )));
            }
            Ok(a.clone())
        }
        None => Ok(ArenaGeometry::bare(w, h)),
    }
}

pub fn read_clip(text: &str, arena: Option<&ArenaGeometry>) -> Result<ClipFile> {
    let table = parse_table(text)?;
    let meta = table.metadata;
    let rate = meta_f64(&meta, "rate")?.ok_or_else(|| Error::invalid("clip file lacks `# rate=` metadata"))?;
    if !(rate > 0.0) {
        return Err(Error::invalid("clip rate must be positive"));
    }
    let source: Source = meta.get("source").map(|s| s.parse()).transpose()?.unwrap_or(Source::Real);
    let arena = arena_from_meta(&meta, arena)?;
    let mut tracks = Vec::new();
    for (id, rows) in group_rows(table.rows) {
        let mut points = Vec::with_capacity(rows.len());
        for row in &rows {
            if let Some(prev) = points.last() {
                let prev: &TrackPoint = prev;
                if (row.frame as f64 / rate) <= prev.t {
                    return Err(Error::parse(row.line, format!("track {id}: non-monotonic frame index")));
                }
            }
            points.push(TrackPoint::new(row.frame as f64 / rate, row.x, row.y));
        }
        tracks.push(Track::new(TrackId::new(&id), source, points, rate));
    }
    let first = tracks.iter().filter_map(|t| t.first_time()).reduce(f64::min);
    let last = tracks.iter().filter_map(|t| t.last_time()).reduce(f64::max);
    let start = match meta_f64(&meta, "start")? {
        Some(s) => s,
        None => first.unwrap_or(0.0),
    };
    let duration = match meta_f64(&meta, "duration")? {
        Some(d) => d,
        None => last.map(|l| l - start).unwrap_or(0.0),
    };
    Ok(ClipFile {
        clip: Clip {
            start,
            duration,
            tracks,
            rate,
            arena,
        },
        metadata: meta,
    })
}

/// Writes footage one agent per row; floats use shortest round-trip formatting.
pub fn write_footage(footage: &Footage, extra: &[(&str, String)]) -> String {
    let mut out = String::new();
    let mut meta: Vec<(&str, String)> = vec![
        ("rate", footage.rate.to_string()),
        ("arena", format!("{}x{}", footage.arena.width, footage.arena.height)),
        ("start", footage.start.to_string()),
        ("duration", footage.duration.to_string()),
        ("source", footage.source.to_string()),
    ];
    meta.extend(extra.iter().cloned());
    for (k, v) in &meta {
        let _ = writeln!(out, "# {k}={v}");
    }
    out.push_str(FRAME_HEADER);
    out.push('\n');
    for f in &footage.frames {
        let idx = sample_index(f.t, footage.rate);
        for a in &f.agents {
            let _ = writeln!(out, "{idx},{},{},{},{},{}", a.id, a.position.x, a.position.y, a.heading, a.speed);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct FootageFile {
    pub footage: Footage,
    pub metadata: BTreeMap<String, String>,
}

pub fn read_footage(text: &str, arena: Option<&ArenaGeometry>) -> Result<FootageFile> {
    let mut meta = BTreeMap::new();
    let mut header_seen = false;
    let mut by_index: BTreeMap<i64, Vec<AgentState>> = BTreeMap::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw_line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(comment) = line.strip_prefix('#') {
            if let Some((k, v)) = comment.trim().split_once('=') {
                meta.insert(k.trim().to_string(), v.trim().to_string());
            }
            continue;
        }
        if !header_seen {
            if line.split(',').map(str::trim).collect::<Vec<_>>().join(",") != FRAME_HEADER {
                return Err(Error::parse(line_no, format!("expected header `{FRAME_HEADER}`, found `{line}`")));
            }
            header_seen = true;
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 6 {
            return Err(Error::parse(line_no, format!("expected 6 fields, found {}", fields.len())));
        }
        let frame = fields[0]
            .parse::<i64>()
            .map_err(|_| Error::parse(line_no, format!("frame_index `{}` is not an integer", fields[0])))?;
        if fields[1].is_empty() {
            return Err(Error::parse(line_no, "empty track_id"));
        }
        let num = |i: usize| {
            fields[i]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| Error::parse(line_no, format!("field {} `{}` is not a finite number", i + 1, fields[i])))
        };
        by_index.entry(frame).or_default().push(AgentState {
            id: TrackId::new(fields[1]),
            position: Vec2::new(num(2)?, num(3)?),
            heading: num(4)?,
            speed: num(5)?,
        });
    }
    let rate = meta_f64(&meta, "rate")?.ok_or_else(|| Error::invalid("frame file lacks `# rate=` metadata"))?;
    if !(rate > 0.0) {
        return Err(Error::invalid("frame rate must be positive"));
    }
    let arena = arena_from_meta(&meta, arena)?;
    let source: Source = meta.get("source").map(|s| s.parse()).transpose()?.unwrap_or(Source::Simulated);
    let frames: Vec<Frame> = by_index
        .into_iter()
        .map(|(i, agents)| Frame {
            t: i as f64 / rate,
            agents,
        })
        .collect();
    let start = meta_f64(&meta, "start")?.unwrap_or_else(|| frames.first().map_or(0.0, |f| f.t));
    let duration = match meta_f64(&meta, "duration")? {
        Some(d) => d,
        None => frames.last().map_or(0.0, |f| f.t - start),
    };
    Ok(FootageFile {
        footage: Footage {
            frames,
            rate,
            start,
            duration,
            arena,
            source,
        },
        metadata: meta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(scale: f64) -> IngestConfig {
        IngestConfig {
            scale_x: scale,
            scale_y: scale,
            ..IngestConfig::default()
        }
    }

    #[test]
    fn scales_pixels_to_metres() {
        let raw = "track_id,frame_index,x,y\n1,0,100,200\n1,1,110,210\n1,2,120,220\n";
        let report = ingest_tracks(raw, &cfg(0.0247)).unwrap();
        assert_eq!(report.tracks.len(), 1);
        assert!(report.rejected.is_empty());
        let t = &report.tracks[0];
        assert_eq!(t.native_rate, 9.0);
        assert_eq!(t.points.len(), 3);
        assert_eq!(t.points[0].x, 100.0 * 0.0247);
        assert_eq!(t.points[2].y, 220.0 * 0.0247);
        assert_eq!(t.points[1].t, 1.0 / 9.0);
    }

    #[test]
    fn empty_input() {
        let report = ingest_tracks("", &cfg(1.0)).unwrap();
        assert!(report.tracks.is_empty() && report.rejected.is_empty());
        let report = ingest_tracks("# nothing\ntrack_id,frame_index,x,y\n", &cfg(1.0)).unwrap();
        assert!(report.tracks.is_empty());
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let raw = "# c\ntrack_id,frame_index,x,y\n1,0,1,1\n1,x,2,2\n";
        match ingest_tracks(raw, &cfg(1.0)) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("expected parse error, got {other:?}"),
        }
        let raw = "track_id,frame_index,x,y\n1,0,1\n";
        assert!(matches!(ingest_tracks(raw, &cfg(1.0)), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(ingest_tracks("1,0,1,1\n", &cfg(1.0)), Err(Error::Parse { line: 1, .. })));
    }

    #[test]
    fn out_of_arena_track_is_dropped() {
        let raw = "track_id,frame_index,x,y\n1,0,1,1\n1,1,2,2\n2,0,1,1\n2,1,100,2\n";
        let report = ingest_tracks(raw, &cfg(1.0)).unwrap();
        assert_eq!(report.tracks.len(), 1);
        assert_eq!(report.rejected.len(), 1);
        assert_eq!(report.rejected[0].reason, RejectReason::OutOfArena { line: 5 });
    }

    #[test]
    fn flip_y_mirrors_rows() {
        let raw = "track_id,frame_index,x,y\n1,0,1,1\n1,1,1,2\n";
        let config = IngestConfig {
            flip_y: true,
            arena_height: 10.0,
            ..cfg(1.0)
        };
        let report = ingest_tracks(raw, &config).unwrap();
        assert_eq!(report.tracks[0].points[0].y, 9.0);
        assert_eq!(report.tracks[0].points[1].y, 8.0);
    }

    #[test]
    fn ingest_config_from_toml() {
        let c = IngestConfig::from_toml("scale_x = 0.02\nscale_y = 0.03\nflip_y = true\n").unwrap();
        assert_eq!(c.scale_x, 0.02);
        assert_eq!(c.scale_y, 0.03);
        assert!(c.flip_y);
        assert_eq!(c.native_rate, 9.0);
        assert!(IngestConfig::from_toml("scale_z = 1").is_err());
    }

    #[test]
    fn clip_file_round_trip() {
        let tracks = vec![
            Track::new(
                "a",
                Source::Simulated,
                vec![TrackPoint::new(1.0, 0.1, 0.2), TrackPoint::new(1.0 + 1.0 / 9.0, 0.3, 0.30000000000000004)],
                9.0,
            ),
            Track::new("b", Source::Simulated, vec![TrackPoint::new(2.0, 5.0, 5.0)], 9.0),
        ];
        let clip = Clip {
            start: 1.0,
            duration: 60.0,
            tracks,
            rate: 9.0,
            arena: ArenaGeometry::forum(),
        };
        let text = write_clip(&clip, &[("seed", "7".into())]);
        let back = read_clip(&text, Some(&ArenaGeometry::forum())).unwrap();
        assert_eq!(back.clip, clip);
        assert_eq!(back.metadata.get("seed").map(String::as_str), Some("7"));
        assert_eq!(write_clip(&back.clip, &[("seed", "7".into())]), text);
    }

    #[test]
    fn footage_round_trip_is_bit_exact() {
        let arena = ArenaGeometry::forum();
        let track = Track::new(
            "7",
            Source::Simulated,
            vec![TrackPoint::new(0.0, 1.0 / 3.0, 2.0), TrackPoint::new(1.0 / 9.0, 0.1 + 0.2, 2.5)],
            9.0,
        );
        let clip = Clip {
            start: 0.0,
            duration: 1.0,
            tracks: vec![track],
            rate: 9.0,
            arena: arena.clone(),
        };
        let footage = Footage::from_clip(&clip);
        let text = write_footage(&footage, &[("seed", "4".into())]);
        let back = read_footage(&text, Some(&arena)).unwrap();
        assert_eq!(back.footage, footage);
        assert_eq!(back.metadata["seed"], "4");
        assert_eq!(back.footage.population(), 1);
    }

    #[test]
    fn footage_needs_header() {
        assert!(read_footage("# rate=9\n# arena=1x1\n0,a,0,0,0,0\n", None).is_err());
    }
}
