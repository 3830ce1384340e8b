use std::collections::HashMap;
use std::path::Path;

use image::RgbImage;
use rayon::prelude::*;

use super::raster::{render_frame, RenderStyle};
use super::trial::{frame_name, save};
use crate::error::{Error, Result};
use crate::trajectory::{sample_index, Footage, Frame};

/// Lazily rendered image sequence for one clip at the style's frame rate.
///
/// Output image `k` shows source sample `start + round(k * factor)`, so a
/// factor above one plays the clip faster and yields fewer images.
#[derive(Debug, Clone)]
pub struct Segment<'a> {
    footage: &'a Footage,
    factor: f64,
    len: usize,
    first: i64,
    by_index: HashMap<i64, usize>,
}

impl<'a> Segment<'a> {
    fn new(footage: &'a Footage, style: &RenderStyle, factor: f64, len: usize) -> Result<Self> {
        style.validate()?;
        if (footage.rate - style.frame_rate).abs() > 1e-9 {
            return Err(Error::RateMismatch {
                expected: style.frame_rate,
                found: footage.rate,
            });
        }
        if !(factor > 0.0 && factor.is_finite()) {
            return Err(Error::invalid(format!("playback factor {factor} must be positive")));
        }
        let by_index = footage
            .frames
            .iter()
            .enumerate()
            .map(|(i, f)| (sample_index(f.t, footage.rate), i))
            .collect();
        Ok(Segment {
            footage,
            factor,
            len,
            first: sample_index(footage.start, footage.rate),
            by_index,
        })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn factor(&self) -> f64 {
        self.factor
    }

    pub fn source_index(&self, k: usize) -> i64 {
        self.first + (k as f64 * self.factor).round() as i64
    }

    /// Source frame shown as image `k`; `None` when no agent is visible then.
    pub fn frame(&self, k: usize) -> Option<&'a Frame> {
        let footage: &'a Footage = self.footage;
        self.by_index.get(&self.source_index(k)).map(|&i| &footage.frames[i])
    }

    pub fn render(&self, k: usize, style: &RenderStyle) -> RgbImage {
        let empty = Frame {
            t: self.source_index(k) as f64 / self.footage.rate,
            agents: Vec::new(),
        };
        render_frame(self.frame(k).unwrap_or(&empty), &self.footage.arena, style)
    }

    pub fn render_all(&self, style: &RenderStyle) -> Vec<RgbImage> {
        (0..self.len).into_par_iter().map(|k| self.render(k, style)).collect()
    }

    /// Saves every image as `dir/frame_%06d.png`; returns the count.
    pub fn write_frames(&self, style: &RenderStyle, dir: &Path) -> Result<usize> {
        (0..self.len)
            .into_par_iter()
            .try_for_each(|k| save(&self.render(k, style), &dir.join(frame_name(k))))?;
        Ok(self.len)
    }
}

/// Whole clip as an image sequence: `round(duration * rate / factor)` images
/// covering `[start, start + duration)`.
pub fn render_clip<'a>(footage: &'a Footage, style: &RenderStyle, factor: f64) -> Result<Segment<'a>> {
    if !(footage.duration > 0.0) {
        return Err(Error::invalid("cannot render a clip of zero duration"));
    }
    let len = (footage.duration * style.frame_rate / factor).round() as usize;
    Segment::new(footage, style, factor, len)
}

/// The first `seconds` of display time; the clip must cover `seconds * factor`
/// of source time so that the sequence never loops or runs dry.
pub fn render_opening<'a>(footage: &'a Footage, style: &RenderStyle, factor: f64, seconds: f64) -> Result<Segment<'a>> {
    let needed = seconds * factor;
    if footage.duration + 1e-9 < needed {
        return Err(Error::invalid(format!(
            "clip lasts {} s but {needed} s of source are needed",
            footage.duration
        )));
    }
    let len = (seconds * style.frame_rate).round() as usize;
    Segment::new(footage, style, factor, len)
}
