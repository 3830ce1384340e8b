use image::{Rgb, RgbImage};
use serde::{Deserialize, Serialize};

use crate::arena::ArenaGeometry;
use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::trajectory::Frame;

/// Drawing parameters shared by both sides of every comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderStyle {
    /// Pixels per side.
    pub width: u32,
    pub height: u32,
    /// Gap between the two sides of a composite frame (px).
    pub divider: u32,
    pub metres_per_pixel: f64,
    /// Agent disc radius (px).
    pub agent_radius: f64,
    /// Heading arrow length from the disc centre (px); independent of speed.
    pub arrow_length: f64,
    pub background: [u8; 3],
    pub floor: [u8; 3],
    pub agent: [u8; 3],
    pub arrow: [u8; 3],
    pub divider_colour: [u8; 3],
    pub frame_rate: f64,
}

impl Default for RenderStyle {
    fn default() -> Self {
        RenderStyle {
            width: 640,
            height: 480,
            divider: 4,
            metres_per_pixel: 0.025,
            agent_radius: 8.0,
            arrow_length: 14.0,
            background: [32, 32, 32],
            floor: [232, 232, 228],
            agent: [46, 92, 184],
            arrow: [200, 40, 40],
            divider_colour: [0, 0, 0],
            frame_rate: 72.0,
        }
    }
}

impl RenderStyle {
    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("canvas must be at least one pixel"));
        }
        let positive = [self.metres_per_pixel, self.agent_radius, self.frame_rate];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) || !(self.arrow_length >= 0.0) {
            return Err(Error::invalid("render scale, radius, arrow length and frame rate must be positive"));
        }
        Ok(())
    }

    pub fn composite_width(&self) -> u32 {
        2 * self.width + self.divider
    }
}

/// Canvas coordinates (px, y down) of an arena point; the arena centre maps
/// to the canvas centre. The flag is set when the point had to be clamped.
pub fn canvas_position(p: Vec2, arena: &ArenaGeometry, style: &RenderStyle) -> (f64, f64, bool) {
    let c = arena.centre();
    let x = style.width as f64 / 2.0 + (p.x - c.x) / style.metres_per_pixel;
    let y = style.height as f64 / 2.0 - (p.y - c.y) / style.metres_per_pixel;
    let cx = x.clamp(0.0, style.width as f64);
    let cy = y.clamp(0.0, style.height as f64);
    (cx, cy, cx != x || cy != y)
}

fn fill_disc(img: &mut RgbImage, cx: f64, cy: f64, r: f64, colour: Rgb<u8>) {
    let (w, h) = (img.width() as i64, img.height() as i64);
    let x0 = ((cx - r).floor() as i64).max(0);
    let x1 = ((cx + r).ceil() as i64).min(w - 1);
    let y0 = ((cy - r).floor() as i64).max(0);
    let y1 = ((cy + r).ceil() as i64).min(h - 1);
    for py in y0..=y1 {
        for px in x0..=x1 {
            let dx = px as f64 + 0.5 - cx;
            let dy = py as f64 + 0.5 - cy;
            if dx * dx + dy * dy <= r * r {
                img.put_pixel(px as u32, py as u32, colour);
            }
        }
    }
}

fn draw_line(img: &mut RgbImage, from: (f64, f64), to: (f64, f64), colour: Rgb<u8>) {
    let (dx, dy) = (to.0 - from.0, to.1 - from.1);
    let steps = ((dx.abs().max(dy.abs())) * 4.0).ceil().max(1.0) as usize;
    for s in 0..=steps {
        let f = s as f64 / steps as f64;
        let (x, y) = (from.0 + dx * f, from.1 + dy * f);
        if x >= 0.0 && y >= 0.0 && x < img.width() as f64 && y < img.height() as f64 {
            img.put_pixel(x as u32, y as u32, colour);
        }
    }
}

/// Floor rectangle, then one disc and heading arrow per agent.
pub fn render_frame(frame: &Frame, arena: &ArenaGeometry, style: &RenderStyle) -> RgbImage {
    let mut img = RgbImage::from_pixel(style.width, style.height, Rgb(style.background));
    let (fx0, fy0, _) = canvas_position(Vec2::new(0.0, arena.height), arena, style);
    let (fx1, fy1, _) = canvas_position(Vec2::new(arena.width, 0.0), arena, style);
    for py in fy0.round() as u32..(fy1.round() as u32).min(style.height) {
        for px in fx0.round() as u32..(fx1.round() as u32).min(style.width) {
            img.put_pixel(px, py, Rgb(style.floor));
        }
    }
    let mut clamped = 0;
    for agent in &frame.agents {
        let (x, y, was_clamped) = canvas_position(agent.position, arena, style);
        if was_clamped {
            clamped += 1;
        }
        fill_disc(&mut img, x, y, style.agent_radius, Rgb(style.agent));
        let dir = (agent.heading.cos(), -agent.heading.sin());
        let tip = (x + dir.0 * style.arrow_length, y + dir.1 * style.arrow_length);
        draw_line(&mut img, (x, y), tip, Rgb(style.arrow));
        let barb = style.arrow_length * 0.35;
        for turn in [2.6f64, -2.6] {
            let (c, s) = (turn.cos(), turn.sin());
            let b = (dir.0 * c - dir.1 * s, dir.0 * s + dir.1 * c);
            draw_line(&mut img, tip, (tip.0 + b.0 * barb, tip.1 + b.1 * barb), Rgb(style.arrow));
        }
    }
    if clamped > 0 {
        log::warn!("frame t={}: {clamped} agents fell outside the canvas and were clamped", frame.t);
    }
    img
}

/// Left and right images side by side with the divider between them.
pub fn compose_side_by_side(left: &RgbImage, right: &RgbImage, style: &RenderStyle) -> RgbImage {
    let mut img = RgbImage::from_pixel(style.composite_width(), style.height, Rgb(style.divider_colour));
    image::imageops::replace(&mut img, left, 0, 0);
    image::imageops::replace(&mut img, right, (style.width + style.divider) as i64, 0);
    img
}

/// Blank card shown before pair `index` (1-based): one marker square per pair number.
pub fn pause_card(index: usize, style: &RenderStyle) -> RgbImage {
    let mut img = RgbImage::from_pixel(style.composite_width(), style.height, Rgb(style.background));
    let side = (style.height / 24).max(2);
    let gap = side;
    let total = index as u32 * side + (index as u32).saturating_sub(1) * gap;
    let x0 = (style.composite_width().saturating_sub(total)) / 2;
    let y0 = (style.height.saturating_sub(side)) / 2;
    for i in 0..index as u32 {
        for dy in 0..side {
            for dx in 0..side {
                let (x, y) = (x0 + i * (side + gap) + dx, y0 + dy);
                if x < img.width() && y < img.height() {
                    img.put_pixel(x, y, Rgb(style.floor));
                }
            }
        }
    }
    img
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::{AgentState, TrackId};

    fn frame(agents: Vec<(Vec2, f64)>) -> Frame {
        Frame {
            t: 0.0,
            agents: agents
                .into_iter()
                .enumerate()
                .map(|(i, (position, heading))| AgentState {
                    id: TrackId::from(i as u64),
                    position,
                    heading,
                    speed: 1.0,
                })
                .collect(),
        }
    }

    fn count(img: &RgbImage, c: [u8; 3]) -> usize {
        img.pixels().filter(|p| p.0 == c).count()
    }

    #[test]
    fn empty_frame_is_background_and_floor() {
        let style = RenderStyle::default();
        let img = render_frame(&frame(vec![]), &ArenaGeometry::forum(), &style);
        assert_eq!(count(&img, style.agent) + count(&img, style.arrow), 0);
        assert_eq!(count(&img, style.floor) + count(&img, style.background), (640 * 480) as usize);
    }

    #[test]
    fn centre_agent_points_right() {
        let style = RenderStyle::default();
        let arena = ArenaGeometry::forum();
        let img = render_frame(&frame(vec![(arena.centre(), 0.0)]), &arena, &style);
        let drawn = |p: &Rgb<u8>| p.0 == style.agent || p.0 == style.arrow;
        let xs: Vec<u32> = img.enumerate_pixels().filter(|e| drawn(e.2)).map(|e| e.0).collect();
        let ys: Vec<u32> = img.enumerate_pixels().filter(|e| drawn(e.2)).map(|e| e.1).collect();
        // disc spans pixels 312..=327 and 232..=247, centred on (320, 240)
        assert_eq!((*xs.iter().min().unwrap(), *ys.iter().min().unwrap()), (312, 232));
        assert_eq!(*ys.iter().max().unwrap(), 247);
        let arrow_x: Vec<u32> = img.enumerate_pixels().filter(|e| e.2 .0 == style.arrow).map(|e| e.0).collect();
        assert_eq!(*arrow_x.iter().min().unwrap(), 320);
        assert_eq!(*arrow_x.iter().max().unwrap(), 334);
        assert_eq!(*img.get_pixel(334, 240), Rgb(style.arrow));
    }

    #[test]
    fn rendering_is_deterministic() {
        let style = RenderStyle::default();
        let arena = ArenaGeometry::forum();
        let f = frame(vec![(Vec2::new(3.0, 4.0), 1.0), (Vec2::new(10.0, 2.0), -2.5)]);
        assert_eq!(render_frame(&f, &arena, &style), render_frame(&f, &arena, &style));
    }

    #[test]
    fn outside_points_are_clamped() {
        let style = RenderStyle::default();
        let arena = ArenaGeometry::forum();
        let (x, y, c) = canvas_position(Vec2::new(-50.0, 5.0), &arena, &style);
        assert!(c);
        assert_eq!(x, 0.0);
        assert!(y > 0.0 && y < 480.0);
        let img = render_frame(&frame(vec![(Vec2::new(-50.0, 5.0), 0.0)]), &arena, &style);
        assert!(count(&img, style.agent) > 0);
    }

    #[test]
    fn composite_layout() {
        let style = RenderStyle {
            width: 8,
            height: 4,
            divider: 2,
            ..RenderStyle::default()
        };
        let l = RgbImage::from_pixel(8, 4, Rgb([1, 1, 1]));
        let r = RgbImage::from_pixel(8, 4, Rgb([2, 2, 2]));
        let c = compose_side_by_side(&l, &r, &style);
        assert_eq!(c.dimensions(), (18, 4));
        assert_eq!(c.get_pixel(7, 0).0, [1, 1, 1]);
        assert_eq!(c.get_pixel(8, 0).0, style.divider_colour);
        assert_eq!(c.get_pixel(10, 3).0, [2, 2, 2]);
        assert_eq!(pause_card(3, &style).dimensions(), (18, 4));
    }
}
