use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::arena::ArenaGeometry;
use crate::error::{Error, Result};
use crate::geometry::Vec2;

/// Opaque track identifier. Cheap to clone; frames copy it once per sample.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TrackId(Arc<str>);

impl TrackId {
    pub fn new(id: impl AsRef<str>) -> Self {
        TrackId(Arc::from(id.as_ref()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for TrackId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for TrackId {
    fn from(s: &str) -> Self {
        TrackId::new(s)
    }
}

impl From<String> for TrackId {
    fn from(s: String) -> Self {
        TrackId(s.into())
    }
}

impl From<u64> for TrackId {
    fn from(n: u64) -> Self {
        TrackId::new(n.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Real,
    Simulated,
}

impl Source {
    pub fn as_str(self) -> &'static str {
        match self {
            Source::Real => "real",
            Source::Simulated => "simulated",
        }
    }
}

impl std::str::FromStr for Source {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "real" => Ok(Source::Real),
            "simulated" => Ok(Source::Simulated),
            other => Err(Error::invalid(format!("unknown source tag `{other}`"))),
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackPoint {
    /// Seconds in dataset (or simulation) time.
    pub t: f64,
    pub x: f64,
    pub y: f64,
}

impl TrackPoint {
    pub const fn new(t: f64, x: f64, y: f64) -> Self {
        TrackPoint { t, x, y }
    }

    #[inline]
    pub fn pos(&self) -> Vec2 {
        Vec2::new(self.x, self.y)
    }
}

/// Sample index of `t` on a grid of `rate` Hz.
#[inline]
pub fn sample_index(t: f64, rate: f64) -> i64 {
    (t * rate).round() as i64
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub id: TrackId,
    pub source: Source,
    pub points: Vec<TrackPoint>,
    pub native_rate: f64,
}

impl Track {
    pub fn new(id: impl Into<TrackId>, source: Source, points: Vec<TrackPoint>, native_rate: f64) -> Self {
        Track {
            id: id.into(),
            source,
            points,
            native_rate,
        }
    }

    pub fn first_time(&self) -> Option<f64> {
        self.points.first().map(|p| p.t)
    }

    pub fn last_time(&self) -> Option<f64> {
        self.points.last().map(|p| p.t)
    }

    /// Sum of straight-line step lengths between consecutive samples.
    pub fn path_length(&self) -> f64 {
        self.points.windows(2).map(|w| w[0].pos().distance(w[1].pos())).sum()
    }

    pub fn visible_duration(&self) -> f64 {
        match (self.first_time(), self.last_time()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }

    /// Strictly increasing, duplicate-free timestamps.
    pub fn is_time_monotonic(&self) -> bool {
        self.points.windows(2).all(|w| w[1].t > w[0].t)
    }

    /// Points whose time lies in `[start, end]`.
    pub fn window(&self, start: f64, end: f64) -> Track {
        let lo = self.points.partition_point(|p| p.t < start);
        let hi = self.points.partition_point(|p| p.t <= end);
        Track {
            id: self.id.clone(),
            source: self.source,
            points: self.points[lo..hi.max(lo)].to_vec(),
            native_rate: self.native_rate,
        }
    }
}

/// A windowed excerpt of trajectory data, real or simulated.
#[derive(Debug, Clone, PartialEq)]
pub struct Clip {
    pub start: f64,
    pub duration: f64,
    pub tracks: Vec<Track>,
    pub rate: f64,
    pub arena: ArenaGeometry,
}

impl Clip {
    pub fn end(&self) -> f64 {
        self.start + self.duration
    }

    /// Number of distinct track ids with at least one sample.
    pub fn population(&self) -> usize {
        self.tracks
            .iter()
            .filter(|t| !t.points.is_empty())
            .map(|t| &t.id)
            .collect::<BTreeSet<_>>()
            .len()
    }

    pub fn sample_count(&self) -> usize {
        self.tracks.iter().map(|t| t.points.len()).sum()
    }

    pub fn source(&self) -> Option<Source> {
        self.tracks.first().map(|t| t.source)
    }

    pub fn is_empty(&self) -> bool {
        self.tracks.iter().all(|t| t.points.is_empty())
    }

    /// The sub-window `[start + offset, start + offset + duration]`.
    pub fn subclip(&self, offset: f64, duration: f64) -> Clip {
        let start = self.start + offset;
        let end = start + duration;
        let tracks = self
            .tracks
            .iter()
            .map(|t| t.window(start, end))
            .filter(|t| !t.points.is_empty())
            .collect();
        Clip {
            start,
            duration,
            tracks,
            rate: self.rate,
            arena: self.arena.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub id: TrackId,
    pub position: Vec2,
    /// Radians in `[-π, π)`.
    pub heading: f64,
    /// Metres per second, never negative.
    pub speed: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub t: f64,
    pub agents: Vec<AgentState>,
}

impl Frame {
    pub fn positions(&self) -> Vec<Vec2> {
        self.agents.iter().map(|a| a.position).collect()
    }

    pub fn headings(&self) -> Vec<f64> {
        self.agents.iter().map(|a| a.heading).collect()
    }
}

/// Frame sequence of a clip, possibly with altered headings, plus the
/// timing needed to render it.
#[derive(Debug, Clone, PartialEq)]
pub struct Footage {
    pub frames: Vec<Frame>,
    pub rate: f64,
    pub start: f64,
    pub duration: f64,
    pub arena: ArenaGeometry,
    pub source: Source,
}

impl Footage {
    pub fn from_clip(clip: &Clip) -> Self {
        Footage {
            frames: super::frames::to_frames(clip),
            rate: clip.rate,
            start: clip.start,
            duration: clip.duration,
            arena: clip.arena.clone(),
            source: clip.source().unwrap_or(Source::Real),
        }
    }

    /// Distinct agents over all frames.
    pub fn population(&self) -> usize {
        let ids: BTreeSet<&TrackId> = self.frames.iter().flat_map(|f| f.agents.iter().map(|a| &a.id)).collect();
        ids.len()
    }

    /// Distinct agents among frames in `[start, start + span)`.
    pub fn population_within(&self, span: f64) -> usize {
        let end = sample_index(self.start + span, self.rate);
        let ids: BTreeSet<&TrackId> = self
            .frames
            .iter()
            .filter(|f| sample_index(f.t, self.rate) < end)
            .flat_map(|f| f.agents.iter().map(|a| &a.id))
            .collect();
        ids.len()
    }
}
