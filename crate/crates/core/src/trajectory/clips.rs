use std::collections::BTreeSet;
use std::ops::RangeInclusive;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::model::{sample_index, Clip, Track};
use crate::arena::ArenaGeometry;
use crate::error::{Error, Result};

/// Seeded window draws attempted per requested clip before giving up.
pub const DEFAULT_SEARCH_BUDGET: usize = 10_000;

#[derive(Debug, Clone)]
pub struct ClipSearch {
    pub duration: f64,
    pub population: RangeInclusive<usize>,
    pub count: usize,
    pub seed: u64,
    pub budget: usize,
}

impl ClipSearch {
    pub fn new(duration: f64, population: RangeInclusive<usize>, count: usize, seed: u64) -> Self {
        ClipSearch {
            duration,
            population,
            count,
            seed,
            budget: DEFAULT_SEARCH_BUDGET,
        }
    }
}

/// Counts tracks overlapping a window in O(log n) using sorted endpoints.
/// Gap-repaired tracks are contiguous, so overlap implies a sample inside.
struct OverlapIndex {
    firsts: Vec<i64>,
    lasts: Vec<i64>,
}

impl OverlapIndex {
    fn new(tracks: &[Track], rate: f64) -> Self {
        let mut firsts: Vec<i64> = tracks.iter().filter_map(|t| t.first_time()).map(|t| sample_index(t, rate)).collect();
        let mut lasts: Vec<i64> = tracks.iter().filter_map(|t| t.last_time()).map(|t| sample_index(t, rate)).collect();
        firsts.sort_unstable();
        lasts.sort_unstable();
        OverlapIndex { firsts, lasts }
    }

    fn count(&self, lo: i64, hi: i64) -> usize {
        let starting_after = self.firsts.len() - self.firsts.partition_point(|&f| f <= hi);
        let ended_before = self.lasts.partition_point(|&l| l < lo);
        self.firsts.len() - starting_after - ended_before
    }
}

/// Randomly searches the dataset for `count` distinct windows of the given
/// duration whose distinct-track population falls in the requested range.
/// Window starts are drawn uniformly on the sample grid; partially visible
/// tracks are kept and counted.
pub fn extract_clips(tracks: &[Track], search: &ClipSearch, arena: &ArenaGeometry) -> Result<Vec<Clip>> {
    let rate = match tracks.first() {
        Some(t) => t.native_rate,
        None => {
            return Err(Error::invalid("cannot extract clips from an empty dataset"));
        }
    };
    if tracks.iter().any(|t| t.native_rate != rate) {
        return Err(Error::invalid("all tracks must share one native rate"));
    }
    if !(search.duration > 0.0) {
        return Err(Error::invalid("clip duration must be positive"));
    }
    let first = tracks.iter().filter_map(|t| t.first_time()).map(|t| sample_index(t, rate)).min();
    let last = tracks.iter().filter_map(|t| t.last_time()).map(|t| sample_index(t, rate)).max();
    let (first, last) = match (first, last) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(Error::invalid("dataset contains no samples")),
    };
    let window = (search.duration * rate).round() as i64;
    if last - first < window {
        return Err(Error::invalid(format!(
            "dataset spans {:.3} s, shorter than the requested {} s",
            (last - first) as f64 / rate,
            search.duration
        )));
    }
    let index = OverlapIndex::new(tracks, rate);
    let mut rng = ChaCha8Rng::seed_from_u64(search.seed);
    let mut used = BTreeSet::new();
    let mut clips = Vec::with_capacity(search.count);
    for _ in 0..search.count {
        let mut found = None;
        for _ in 0..search.budget {
            let lo = rng.random_range(first..=last - window);
            if used.contains(&lo) {
                continue;
            }
            if search.population.contains(&index.count(lo, lo + window)) {
                found = Some(lo);
                break;
            }
        }
        let lo = found.ok_or(Error::ClipNotFound {
            budget: search.budget,
            min: *search.population.start(),
            max: *search.population.end(),
            duration: search.duration,
        })?;
        used.insert(lo);
        let start = lo as f64 / rate;
        let end = (lo + window) as f64 / rate;
        let clip_tracks = tracks
            .iter()
            .map(|t| t.window(start, end))
            .filter(|t| !t.points.is_empty())
            .collect();
        clips.push(Clip {
            start,
            duration: search.duration,
            tracks: clip_tracks,
            rate,
            arena: arena.clone(),
        });
    }
    Ok(clips)
}
