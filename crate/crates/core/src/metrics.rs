//! Crowd descriptors: polarization and mean nearest-neighbour distance, per
//! frame, per clip, and across crowd sizes.

use std::fmt::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::trajectory::{to_frames, Clip, Frame};

/// Below this many agents the grid index is not worth building.
const BRUTE_FORCE_BELOW: usize = 32;

/// `(t, polarization, nnd)` for one frame.
type FrameRow = (f64, Option<f64>, Option<f64>);

/// `|Σ exp(iθ)| / N`; `None` for an empty frame.
pub fn polarization(headings: &[f64]) -> Option<f64> {
    if headings.is_empty() {
        return None;
    }
    // measured from the first heading so an aligned frame sums to exactly (N, 0)
    let reference = headings[0];
    let (mut c, mut s) = (0.0, 0.0);
    for &h in headings {
        let d = h - reference;
        c += d.cos();
        s += d.sin();
    }
    Some(((c * c + s * s).sqrt() / headings.len() as f64).min(1.0))
}

/// Distance from each point to its closest other point, in input order.
pub fn nearest_neighbour_distances(points: &[Vec2]) -> Vec<f64> {
    if points.len() < 2 {
        return Vec::new();
    }
    if points.len() < BRUTE_FORCE_BELOW {
        return brute_force(points);
    }
    match Grid::build(points) {
        Some(grid) => (0..points.len()).map(|i| grid.nearest(points, i)).collect(),
        None => brute_force(points),
    }
}

/// Mean nearest-neighbour distance; `None` below two agents.
pub fn nnd(points: &[Vec2]) -> Option<f64> {
    let d = nearest_neighbour_distances(points);
    if d.is_empty() {
        None
    } else {
        Some(d.iter().sum::<f64>() / d.len() as f64)
    }
}

fn brute_force(points: &[Vec2]) -> Vec<f64> {
    points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            points
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, q)| p.distance(*q))
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// Uniform bucket grid over the bounding box, roughly one point per cell.
struct Grid {
    origin: Vec2,
    cell: f64,
    cols: usize,
    rows: usize,
    buckets: Vec<Vec<usize>>,
}

impl Grid {
    fn build(points: &[Vec2]) -> Option<Grid> {
        let (mut lo, mut hi) = (points[0], points[0]);
        for p in points {
            lo = Vec2::new(lo.x.min(p.x), lo.y.min(p.y));
            hi = Vec2::new(hi.x.max(p.x), hi.y.max(p.y));
        }
        let (w, h) = (hi.x - lo.x, hi.y - lo.y);
        let cell = ((w.max(h) * w.max(h)) / points.len() as f64).sqrt();
        if !(cell.is_finite() && cell > 0.0) {
            return None;
        }
        let cols = (w / cell).floor() as usize + 1;
        let rows = (h / cell).floor() as usize + 1;
        let mut buckets = vec![Vec::new(); cols * rows];
        let mut grid = Grid {
            origin: lo,
            cell,
            cols,
            rows,
            buckets: Vec::new(),
        };
        for (i, p) in points.iter().enumerate() {
            let (cx, cy) = grid.cell_of(*p);
            buckets[cy * cols + cx].push(i);
        }
        grid.buckets = buckets;
        Some(grid)
    }

    fn cell_of(&self, p: Vec2) -> (usize, usize) {
        let cx = ((p.x - self.origin.x) / self.cell).floor().max(0.0) as usize;
        let cy = ((p.y - self.origin.y) / self.cell).floor().max(0.0) as usize;
        (cx.min(self.cols - 1), cy.min(self.rows - 1))
    }

    /// Expands square rings of cells until no unvisited cell can hold a closer point.
    fn nearest(&self, points: &[Vec2], i: usize) -> f64 {
        let p = points[i];
        let (cx, cy) = self.cell_of(p);
        let (cx, cy) = (cx as i64, cy as i64);
        let mut best = f64::INFINITY;
        let max_ring = self.cols.max(self.rows) as i64;
        for ring in 0..=max_ring {
            for dy in -ring..=ring {
                for dx in -ring..=ring {
                    if dx.abs() != ring && dy.abs() != ring {
                        continue;
                    }
                    let (x, y) = (cx + dx, cy + dy);
                    if x < 0 || y < 0 || x >= self.cols as i64 || y >= self.rows as i64 {
                        continue;
                    }
                    for &j in &self.buckets[y as usize * self.cols + x as usize] {
                        if j != i {
                            best = best.min(p.distance(points[j]));
                        }
                    }
                }
            }
            // every cell beyond this ring lies at least `ring * cell` away
            if best <= ring as f64 * self.cell {
                break;
            }
        }
        best
    }
}

/// Per-frame values of one descriptor over a clip.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSeries {
    /// `(t, value)` for every frame where the descriptor is defined.
    pub values: Vec<(f64, f64)>,
    /// Arithmetic mean of `values`; `None` when every frame was skipped.
    pub mean: Option<f64>,
    pub population: usize,
    /// Frames where the descriptor was undefined.
    pub skipped: usize,
}

impl MetricSeries {
    fn from_values(values: Vec<(f64, f64)>, population: usize, skipped: usize) -> Self {
        let mean = (!values.is_empty()).then(|| values.iter().map(|v| v.1).sum::<f64>() / values.len() as f64);
        MetricSeries {
            values,
            mean,
            population,
            skipped,
        }
    }

    pub fn to_table(&self) -> String {
        let mut out = String::from("t,value\n");
        for (t, v) in &self.values {
            let _ = writeln!(out, "{t},{v}");
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClipMetrics {
    pub polarization: MetricSeries,
    pub nnd: MetricSeries,
}

/// Both descriptors over an explicit frame sequence (e.g. after noise).
pub fn frame_metrics(frames: &[Frame], population: usize) -> Result<ClipMetrics> {
    let per_frame: Vec<FrameRow> = frames
        .par_iter()
        .map(|f| (f.t, polarization(&f.headings()), nnd(&f.positions())))
        .collect();
    let collect = |pick: fn(&FrameRow) -> Option<f64>| {
        let values: Vec<(f64, f64)> = per_frame.iter().filter_map(|r| pick(r).map(|v| (r.0, v))).collect();
        let skipped = per_frame.len() - values.len();
        MetricSeries::from_values(values, population, skipped)
    };
    let metrics = ClipMetrics {
        polarization: collect(|r| r.1),
        nnd: collect(|r| r.2),
    };
    if metrics.polarization.values.is_empty() {
        return Err(Error::invalid("every frame is empty; no descriptor is defined"));
    }
    Ok(metrics)
}

pub fn clip_metrics(clip: &Clip) -> Result<ClipMetrics> {
    frame_metrics(&to_frames(clip), clip.population())
}

/// One clip's position in the crowd-size comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub size: usize,
    pub nnd: Option<f64>,
    pub polarization: f64,
    pub label: String,
}

/// One point per clip, sorted by population (ties keep input order).
pub fn sweep<'a>(clips: &[(&'a str, &'a Clip)]) -> Result<Vec<SweepPoint>> {
    let mut points = clips
        .par_iter()
        .map(|(label, clip)| {
            let m = clip_metrics(clip)?;
            Ok(SweepPoint {
                size: clip.population(),
                nnd: m.nnd.mean,
                polarization: m.polarization.mean.expect("checked non-empty"),
                label: label.to_string(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    points.sort_by_key(|p| p.size);
    Ok(points)
}

pub fn sweep_table(points: &[SweepPoint]) -> String {
    let mut out = String::from("size,nnd,polarization,label\n");
    for p in points {
        let nnd = p.nnd.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{nnd},{},{}", p.size, p.polarization, p.label);
    }
    out
}
