use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use image::RgbImage;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::raster::{compose_side_by_side, pause_card, RenderStyle};
use super::segment::{render_opening, Segment};
use crate::error::{Error, Result};
use crate::trajectory::Footage;

pub const PAIR_COUNT: usize = 6;
pub const PAUSE_SECONDS: f64 = 3.0;
pub const SEGMENT_SECONDS: f64 = 30.0;
/// Seed whose draw places the real clips at A, A, B, A, B, B.
pub const AABABB_SEED: u64 = 98;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Side {
    A,
    B,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::A => Side::B,
            Side::B => Side::A,
        }
    }

    pub fn as_char(self) -> char {
        match self {
            Side::A => 'A',
            Side::B => 'B',
        }
    }
}

impl TryFrom<char> for Side {
    type Error = Error;

    fn try_from(c: char) -> Result<Side> {
        match c {
            'A' | 'a' => Ok(Side::A),
            'B' | 'b' => Ok(Side::B),
            _ => Err(Error::invalid(format!("`{c}` is not A or B"))),
        }
    }
}

/// Side holding the real clip, per pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AnswerKey(pub [Side; PAIR_COUNT]);

impl AnswerKey {
    /// One fair coin flip per pair from a seeded stream.
    pub fn draw(seed: u64) -> AnswerKey {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sides = [Side::A; PAIR_COUNT];
        for s in &mut sides {
            *s = if rng.random_bool(0.5) { Side::A } else { Side::B };
        }
        AnswerKey(sides)
    }

    pub fn complement(&self) -> AnswerKey {
        AnswerKey(self.0.map(Side::other))
    }
}

impl fmt::Display for AnswerKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for s in self.0 {
            write!(f, "{}", s.as_char())?;
        }
        Ok(())
    }
}

impl FromStr for AnswerKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<AnswerKey> {
        let chars: Vec<char> = s.trim().chars().filter(|c| *c != ',').collect();
        if chars.len() != PAIR_COUNT {
            return Err(Error::invalid(format!("key `{s}` must have {PAIR_COUNT} choices")));
        }
        let mut sides = [Side::A; PAIR_COUNT];
        for (slot, c) in sides.iter_mut().zip(chars) {
            *slot = Side::try_from(c)?;
        }
        Ok(AnswerKey(sides))
    }
}

/// Real and simulated footage for one comparison.
#[derive(Debug, Clone, Copy)]
pub struct PairInput<'a> {
    pub real: &'a Footage,
    pub simulated: &'a Footage,
    /// Playback factor for the real clip, from its own mean walking speed.
    pub real_playback: f64,
}

#[derive(Debug, Clone)]
pub struct PairPlan<'a> {
    /// 1-based position in the trial.
    pub index: usize,
    pub real_side: Side,
    pub real_playback: f64,
    pub a: Segment<'a>,
    pub b: Segment<'a>,
}

#[derive(Debug, Clone)]
pub struct Trial<'a> {
    pub seed: u64,
    pub key: AnswerKey,
    pub style: RenderStyle,
    pub pairs: Vec<PairPlan<'a>>,
}

/// Which part of the trial a composite frame belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrialFrame {
    Pause { pair: usize, k: usize },
    Segment { pair: usize, k: usize },
}

/// Participant-facing description of a built trial; carries no key.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialManifest {
    pub frame_rate: f64,
    pub pause_seconds: f64,
    pub segment_seconds: f64,
    pub total_seconds: f64,
    pub total_frames: usize,
    pub frame_pattern: String,
    pub width: u32,
    pub height: u32,
    pub divider: u32,
    pub pairs: Vec<ManifestPair>,
    #[serde(default)]
    pub composite_dir: Option<String>,
    #[serde(default)]
    pub config_hash: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestPair {
    pub index: usize,
    pub pause_dir: String,
    pub a_dir: String,
    pub b_dir: String,
    pub pause_frames: usize,
    pub segment_frames: usize,
    /// Position of this pair's first pause frame in the composite sequence.
    pub first_frame: usize,
}

/// Restricted companion to the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnswerKeyFile {
    pub key: String,
    pub seed: u64,
    /// Per pair, in order.
    pub real_playback: Vec<f64>,
    #[serde(default)]
    pub config_hash: Option<String>,
}

impl AnswerKeyFile {
    pub fn answer_key(&self) -> Result<AnswerKey> {
        self.key.parse()
    }
}

pub const FRAME_PATTERN: &str = "frame_%06d.png";

pub fn frame_name(k: usize) -> String {
    format!("frame_{k:06}.png")
}

/// Pairs each real clip with its simulated twin, places the real one at A or
/// B by seeded coin flip, and lays out a pause card before every segment.
pub fn compose_trial<'a>(pairs: &[PairInput<'a>], seed: u64, style: &RenderStyle) -> Result<Trial<'a>> {
    style.validate()?;
    if pairs.len() != PAIR_COUNT {
        return Err(Error::invalid(format!("a trial needs {PAIR_COUNT} pairs, got {}", pairs.len())));
    }
    let key = AnswerKey::draw(seed);
    let mut plans = Vec::with_capacity(PAIR_COUNT);
    for (i, (input, real_side)) in pairs.iter().zip(key.0).enumerate() {
        let (real, simulated) = (input.real.population(), input.simulated.population());
        if real != simulated {
            return Err(Error::PopulationMismatch {
                pair: i + 1,
                real,
                simulated,
            });
        }
        let r = render_opening(input.real, style, input.real_playback, SEGMENT_SECONDS)?;
        let s = render_opening(input.simulated, style, 1.0, SEGMENT_SECONDS)?;
        let (a, b) = match real_side {
            Side::A => (r, s),
            Side::B => (s, r),
        };
        plans.push(PairPlan {
            index: i + 1,
            real_side,
            real_playback: input.real_playback,
            a,
            b,
        });
    }
    Ok(Trial {
        seed,
        key,
        style: style.clone(),
        pairs: plans,
    })
}

impl<'a> Trial<'a> {
    pub fn pause_frames(&self) -> usize {
        (PAUSE_SECONDS * self.style.frame_rate).round() as usize
    }

    fn pair_frames(&self, pair: &PairPlan<'_>) -> usize {
        self.pause_frames() + pair.a.len()
    }

    pub fn total_frames(&self) -> usize {
        self.pairs.iter().map(|p| self.pair_frames(p)).sum()
    }

    pub fn total_seconds(&self) -> f64 {
        self.total_frames() as f64 / self.style.frame_rate
    }

    /// Composite frame `n` of the whole trial.
    pub fn locate(&self, mut n: usize) -> Option<TrialFrame> {
        for p in &self.pairs {
            if n < self.pause_frames() {
                return Some(TrialFrame::Pause { pair: p.index, k: n });
            }
            n -= self.pause_frames();
            if n < p.a.len() {
                return Some(TrialFrame::Segment { pair: p.index, k: n });
            }
            n -= p.a.len();
        }
        None
    }

    pub fn frames(&self) -> impl Iterator<Item = TrialFrame> + '_ {
        (0..self.total_frames()).map(|n| self.locate(n).expect("in range"))
    }

    pub fn render_side(&self, pair: usize, side: Side, k: usize) -> RgbImage {
        let p = &self.pairs[pair - 1];
        match side {
            Side::A => p.a.render(k, &self.style),
            Side::B => p.b.render(k, &self.style),
        }
    }

    pub fn render_composite(&self, frame: TrialFrame) -> RgbImage {
        match frame {
            TrialFrame::Pause { pair, .. } => pause_card(pair, &self.style),
            TrialFrame::Segment { pair, k } => compose_side_by_side(
                &self.render_side(pair, Side::A, k),
                &self.render_side(pair, Side::B, k),
                &self.style,
            ),
        }
    }

    pub fn manifest(&self, composite: bool, config_hash: Option<String>) -> TrialManifest {
        let mut first = 0;
        let pairs = self
            .pairs
            .iter()
            .map(|p| {
                let m = ManifestPair {
                    index: p.index,
                    pause_dir: format!("pair{}/pause", p.index),
                    a_dir: format!("pair{}/A", p.index),
                    b_dir: format!("pair{}/B", p.index),
                    pause_frames: self.pause_frames(),
                    segment_frames: p.a.len(),
                    first_frame: first,
                };
                first += self.pair_frames(p);
                m
            })
            .collect();
        TrialManifest {
            frame_rate: self.style.frame_rate,
            pause_seconds: PAUSE_SECONDS,
            segment_seconds: SEGMENT_SECONDS,
            total_seconds: self.total_seconds(),
            total_frames: self.total_frames(),
            frame_pattern: FRAME_PATTERN.to_string(),
            width: self.style.width,
            height: self.style.height,
            divider: self.style.divider,
            pairs,
            composite_dir: composite.then(|| "composite".to_string()),
            config_hash,
        }
    }

    pub fn answer_key_file(&self, config_hash: Option<String>) -> AnswerKeyFile {
        AnswerKeyFile {
            key: self.key.to_string(),
            seed: self.seed,
            real_playback: self.pairs.iter().map(|p| p.real_playback).collect(),
            config_hash,
        }
    }
}

/// Files produced by [`write_trial`].
#[derive(Debug, Clone, PartialEq)]
pub struct WrittenTrial {
    pub manifest_path: PathBuf,
    pub key_path: PathBuf,
    pub images: usize,
}

pub(super) fn save(img: &RgbImage, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    img.save(path)?;
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Writes the participant bundle (manifest plus frames) under `bundle` and
/// the answer key to `key_path`, which should lie outside the bundle.
pub fn write_trial(
    trial: &Trial<'_>,
    bundle: &Path,
    key_path: &Path,
    composite: bool,
    config_hash: Option<String>,
) -> Result<WrittenTrial> {
    if key_path.starts_with(bundle) {
        return Err(Error::invalid("the answer key must not be written inside the participant bundle"));
    }
    let manifest = trial.manifest(composite, config_hash.clone());
    let manifest_path = bundle.join("manifest.toml");
    write_text(
        &manifest_path,
        &toml::to_string(&manifest).map_err(|e| Error::invalid(e.to_string()))?,
    )?;
    write_text(
        key_path,
        &toml::to_string(&trial.answer_key_file(config_hash)).map_err(|e| Error::invalid(e.to_string()))?,
    )?;

    let mut images = 0;
    for (plan, entry) in trial.pairs.iter().zip(&manifest.pairs) {
        let card = pause_card(plan.index, &trial.style);
        let pause_dir = bundle.join(&entry.pause_dir);
        (0..entry.pause_frames)
            .into_par_iter()
            .try_for_each(|k| save(&card, &pause_dir.join(frame_name(k))))?;
        images += entry.pause_frames;
        let (a_dir, b_dir) = (bundle.join(&entry.a_dir), bundle.join(&entry.b_dir));
        (0..entry.segment_frames).into_par_iter().try_for_each(|k| -> Result<()> {
            save(&plan.a.render(k, &trial.style), &a_dir.join(frame_name(k)))?;
            save(&plan.b.render(k, &trial.style), &b_dir.join(frame_name(k)))
        })?;
        images += 2 * entry.segment_frames;
    }
    if composite {
        let dir = bundle.join("composite");
        (0..trial.total_frames()).into_par_iter().try_for_each(|n| {
            let frame = trial.locate(n).expect("in range");
            save(&trial.render_composite(frame), &dir.join(frame_name(n)))
        })?;
        images += trial.total_frames();
    }
    Ok(WrittenTrial {
        manifest_path,
        key_path: key_path.to_path_buf(),
        images,
    })
}

pub fn read_manifest(text: &str) -> Result<TrialManifest> {
    toml::from_str(text).map_err(|e| Error::invalid(format!("trial manifest: {e}")))
}

pub fn read_answer_key(text: &str) -> Result<AnswerKeyFile> {
    toml::from_str(text).map_err(|e| Error::invalid(format!("answer key file: {e}")))
}
