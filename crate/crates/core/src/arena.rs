//! Rectangular arena with numbered ingress/egress portals and optional
//! polygonal obstacles.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Segment, Vec2};

/// Portal id reserved for track endpoints that are not near any real portal.
pub const INTERIOR_PORTAL: PortalId = 0;

pub type PortalId = u32;

const ON_BOUNDARY_TOL: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Portal {
    pub id: PortalId,
    pub from: Vec2,
    pub to: Vec2,
}

impl Portal {
    pub fn new(id: PortalId, from: Vec2, to: Vec2) -> Self {
        Portal { id, from, to }
    }

    pub fn segment(&self) -> Segment {
        Segment::new(self.from, self.to)
    }

    pub fn distance_to(&self, p: Vec2) -> f64 {
        self.segment().distance_to(p)
    }
}

/// Simple (non self-intersecting) polygon given by its vertices in order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    pub vertices: Vec<Vec2>,
}

impl Polygon {
    pub fn new(vertices: Vec<Vec2>) -> Self {
        Polygon { vertices }
    }

    pub fn edges(&self) -> impl Iterator<Item = Segment> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| Segment::new(self.vertices[i], self.vertices[(i + 1) % n]))
    }

    /// Even-odd point-in-polygon test. Points on the boundary count as outside.
    pub fn contains(&self, p: Vec2) -> bool {
        let mut inside = false;
        for e in self.edges() {
            let (a, b) = (e.a, e.b);
            if (a.y > p.y) != (b.y > p.y) {
                let x = a.x + (p.y - a.y) / (b.y - a.y) * (b.x - a.x);
                if p.x < x {
                    inside = !inside;
                }
            }
        }
        inside && self.boundary_distance(p) > 0.0
    }

    pub fn closest_boundary_point(&self, p: Vec2) -> Vec2 {
        let mut best = self.vertices[0];
        let mut best_d = f64::INFINITY;
        for e in self.edges() {
            let c = e.closest_point(p);
            let d = c.distance(p);
            if d < best_d {
                best_d = d;
                best = c;
            }
        }
        best
    }

    pub fn boundary_distance(&self, p: Vec2) -> f64 {
        self.closest_boundary_point(p).distance(p)
    }

    pub fn centroid(&self) -> Vec2 {
        let n = self.vertices.len() as f64;
        self.vertices.iter().fold(Vec2::ZERO, |acc, v| acc + *v) / n
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArenaGeometry {
    pub width: f64,
    pub height: f64,
    pub portals: Vec<Portal>,
    #[serde(default)]
    pub obstacles: Vec<Polygon>,
}

impl ArenaGeometry {
    pub fn new(width: f64, height: f64, portals: Vec<Portal>, obstacles: Vec<Polygon>) -> Result<Self> {
        let arena = ArenaGeometry {
            width,
            height,
            portals,
            obstacles,
        };
        arena.validate()?;
        Ok(arena)
    }

    /// An arena without portals. Useful for metric fixtures.
    pub fn bare(width: f64, height: f64) -> Self {
        ArenaGeometry {
            width,
            height,
            portals: Vec::new(),
            obstacles: Vec::new(),
        }
    }

    /// The Edinburgh Informatics Forum: 15.8 m × 11.86 m with eleven portals
    /// spread over the four walls and no obstacles.
    pub fn forum() -> Self {
        let (w, h) = (15.8, 11.86);
        let p = |id, x0: f64, y0: f64, x1: f64, y1: f64| Portal::new(id, Vec2::new(x0, y0), Vec2::new(x1, y1));
        let portals = vec![
            // bottom wall, left to right
            p(1, 1.2, 0.0, 3.2, 0.0),
            p(2, 6.9, 0.0, 8.9, 0.0),
            p(3, 12.4, 0.0, 14.2, 0.0),
            // right wall
            p(4, w, 2.0, w, 3.8),
            p(5, w, 7.4, w, 9.6),
            // top wall, right to left
            p(6, 14.0, h, 12.2, h),
            p(7, 10.3, h, 8.5, h),
            p(8, 6.6, h, 4.8, h),
            p(9, 2.9, h, 1.1, h),
            // left wall
            p(10, 0.0, 8.8, 0.0, 6.8),
            p(11, 0.0, 4.2, 0.0, 2.4),
        ];
        ArenaGeometry {
            width: w,
            height: h,
            portals,
            obstacles: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.width > 0.0 && self.height > 0.0) || !self.width.is_finite() || !self.height.is_finite() {
            return Err(Error::invalid(format!(
                "arena dimensions must be positive, got {} x {}",
                self.width, self.height
            )));
        }
        let mut seen = std::collections::BTreeSet::new();
        for portal in &self.portals {
            if portal.id == INTERIOR_PORTAL {
                return Err(Error::invalid("portal id 0 is reserved for the interior pseudo-portal"));
            }
            if !seen.insert(portal.id) {
                return Err(Error::invalid(format!("duplicate portal id {}", portal.id)));
            }
            for end in [portal.from, portal.to] {
                if !self.on_boundary(end) {
                    return Err(Error::invalid(format!(
                        "portal {} endpoint ({}, {}) is not on the arena boundary",
                        portal.id, end.x, end.y
                    )));
                }
            }
            if !self.same_wall(portal.from, portal.to) {
                return Err(Error::invalid(format!("portal {} spans more than one wall", portal.id)));
            }
        }
        for (i, ob) in self.obstacles.iter().enumerate() {
            if ob.vertices.len() < 3 {
                return Err(Error::invalid(format!("obstacle {i} has fewer than 3 vertices")));
            }
        }
        Ok(())
    }

    fn on_boundary(&self, p: Vec2) -> bool {
        let inside = p.x >= -ON_BOUNDARY_TOL
            && p.x <= self.width + ON_BOUNDARY_TOL
            && p.y >= -ON_BOUNDARY_TOL
            && p.y <= self.height + ON_BOUNDARY_TOL;
        inside
            && (p.x.abs() <= ON_BOUNDARY_TOL
                || (p.x - self.width).abs() <= ON_BOUNDARY_TOL
                || p.y.abs() <= ON_BOUNDARY_TOL
                || (p.y - self.height).abs() <= ON_BOUNDARY_TOL)
    }

    fn same_wall(&self, a: Vec2, b: Vec2) -> bool {
        let t = ON_BOUNDARY_TOL;
        (a.x.abs() <= t && b.x.abs() <= t)
            || ((a.x - self.width).abs() <= t && (b.x - self.width).abs() <= t)
            || (a.y.abs() <= t && b.y.abs() <= t)
            || ((a.y - self.height).abs() <= t && (b.y - self.height).abs() <= t)
    }

    pub fn contains(&self, p: Vec2) -> bool {
        p.x >= 0.0 && p.x <= self.width && p.y >= 0.0 && p.y <= self.height
    }

    pub fn centre(&self) -> Vec2 {
        Vec2::new(self.width / 2.0, self.height / 2.0)
    }

    pub fn portal(&self, id: PortalId) -> Option<&Portal> {
        self.portals.iter().find(|p| p.id == id)
    }

    pub fn portal_ids(&self) -> Vec<PortalId> {
        self.portals.iter().map(|p| p.id).collect()
    }

    /// Nearest portal to `p` and its distance.
    pub fn nearest_portal(&self, p: Vec2) -> Option<(PortalId, f64)> {
        self.portals
            .iter()
            .map(|portal| (portal.id, portal.distance_to(p)))
            .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
    }

    /// Unit normal of the wall carrying `portal`, pointing into the arena.
    pub fn inward_normal(&self, portal: &Portal) -> Vec2 {
        let t = ON_BOUNDARY_TOL;
        let m = portal.segment().midpoint();
        if m.y.abs() <= t {
            Vec2::new(0.0, 1.0)
        } else if (m.y - self.height).abs() <= t {
            Vec2::new(0.0, -1.0)
        } else if m.x.abs() <= t {
            Vec2::new(1.0, 0.0)
        } else {
            Vec2::new(-1.0, 0.0)
        }
    }

    /// Solid wall pieces: the four sides with every portal opening cut out.
    pub fn wall_segments(&self) -> Vec<Segment> {
        let (w, h) = (self.width, self.height);
        // each side parametrised along one axis: (fixed coordinate, axis, length)
        let sides: [(Vec2, Vec2, f64); 4] = [
            (Vec2::new(0.0, 0.0), Vec2::new(1.0, 0.0), w),
            (Vec2::new(w, 0.0), Vec2::new(0.0, 1.0), h),
            (Vec2::new(0.0, h), Vec2::new(1.0, 0.0), w),
            (Vec2::new(0.0, 0.0), Vec2::new(0.0, 1.0), h),
        ];
        let mut out = Vec::new();
        for (origin, axis, len) in sides {
            let mut cuts: Vec<(f64, f64)> = self
                .portals
                .iter()
                .filter(|p| {
                    let seg = p.segment();
                    [seg.a, seg.b].iter().all(|e| {
                        let off = *e - origin;
                        (off - axis * off.dot(axis)).norm() <= ON_BOUNDARY_TOL
                    })
                })
                .map(|p| {
                    let s0 = (p.from - origin).dot(axis);
                    let s1 = (p.to - origin).dot(axis);
                    (s0.min(s1), s0.max(s1))
                })
                .collect();
            cuts.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut cursor = 0.0;
            for (lo, hi) in cuts {
                if lo > cursor {
                    out.push(Segment::new(origin + axis * cursor, origin + axis * lo));
                }
                cursor = cursor.max(hi);
            }
            if cursor < len {
                out.push(Segment::new(origin + axis * cursor, origin + axis * len));
            }
        }
        out
    }
}
