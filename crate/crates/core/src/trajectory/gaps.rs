use super::model::{sample_index, Track, TrackId, TrackPoint};

/// Default longest run of missing samples that is bridged by interpolation
/// (about 0.56 s at 9 Hz). Longer outages are treated as identity loss.
pub const DEFAULT_MAX_GAP: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct GapRepair {
    /// One track, or several when an outage longer than `max_gap` split it.
    pub tracks: Vec<Track>,
    pub interpolated: usize,
    pub splits: usize,
    /// Single-sample fragments produced by splitting, which are discarded.
    pub dropped_fragments: usize,
}

/// Fills runs of up to `max_gap` missing samples with linear interpolation
/// and splits the track at longer outages. Continuation pieces get the id
/// `<id>.<k>` for k = 1, 2, ...
pub fn fill_gaps(track: &Track, max_gap: usize) -> GapRepair {
    let rate = track.native_rate;
    let mut pieces: Vec<Vec<TrackPoint>> = vec![Vec::new()];
    let mut interpolated = 0;
    for (i, p) in track.points.iter().enumerate() {
        if i > 0 {
            let prev = track.points[i - 1];
            let i0 = sample_index(prev.t, rate);
            let steps = sample_index(p.t, rate) - i0;
            let missing = (steps - 1).max(0) as usize;
            if missing > max_gap {
                pieces.push(Vec::new());
            } else {
                let cur = pieces.last_mut().expect("non-empty");
                for j in 1..steps {
                    let s = j as f64 / steps as f64;
                    cur.push(TrackPoint::new(
                        (i0 + j) as f64 / rate,
                        prev.x + (p.x - prev.x) * s,
                        prev.y + (p.y - prev.y) * s,
                    ));
                    interpolated += 1;
                }
            }
        }
        pieces.last_mut().expect("non-empty").push(*p);
    }
    let splits = pieces.len() - 1;
    let mut dropped_fragments = 0;
    let mut tracks = Vec::with_capacity(pieces.len());
    for (k, points) in pieces.into_iter().enumerate() {
        if splits > 0 && points.len() < 2 {
            dropped_fragments += 1;
            continue;
        }
        let id = if k == 0 {
            track.id.clone()
        } else {
            TrackId::new(format!("{}.{k}", track.id))
        };
        tracks.push(Track {
            id,
            source: track.source,
            points,
            native_rate: rate,
        });
    }
    GapRepair {
        tracks,
        interpolated,
        splits,
        dropped_fragments,
    }
}

/// Applies [`fill_gaps`] to every track and concatenates the results.
pub fn fill_all_gaps(tracks: &[Track], max_gap: usize) -> (Vec<Track>, GapRepairSummary) {
    let mut out = Vec::with_capacity(tracks.len());
    let mut summary = GapRepairSummary::default();
    for t in tracks {
        let r = fill_gaps(t, max_gap);
        summary.interpolated += r.interpolated;
        summary.splits += r.splits;
        summary.dropped_fragments += r.dropped_fragments;
        out.extend(r.tracks);
    }
    (out, summary)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct GapRepairSummary {
    pub interpolated: usize,
    pub splits: usize,
    pub dropped_fragments: usize,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::model::Source;

    fn track(frames: &[(i64, f64, f64)]) -> Track {
        Track::new(
            "7",
            Source::Real,
            frames.iter().map(|&(f, x, y)| TrackPoint::new(f as f64 / 9.0, x, y)).collect(),
            9.0,
        )
    }

    #[test]
    fn single_missing_step_is_midpoint() {
        let r = fill_gaps(&track(&[(0, 0.0, 0.0), (2, 2.0, 2.0)]), DEFAULT_MAX_GAP);
        assert_eq!(r.tracks.len(), 1);
        assert_eq!(r.interpolated, 1);
        let p = r.tracks[0].points[1];
        assert_eq!(p.t, 1.0 / 9.0);
        assert_eq!((p.x, p.y), (1.0, 1.0));
    }

    #[test]
    fn no_gaps_is_identity() {
        let t = track(&[(0, 0.0, 0.0), (1, 1.0, 0.0), (2, 2.0, 0.5)]);
        let r = fill_gaps(&t, DEFAULT_MAX_GAP);
        assert_eq!(r.tracks, vec![t]);
        assert_eq!((r.interpolated, r.splits), (0, 0));
    }

    #[test]
    fn long_outage_splits() {
        // frames 0,1 then a 30-frame hole, then 32,33
        let t = track(&[(0, 0.0, 0.0), (1, 0.1, 0.0), (32, 3.0, 0.0), (33, 3.1, 0.0)]);
        let r = fill_gaps(&t, 10);
        assert_eq!(r.tracks.len(), 2);
        assert_eq!(r.splits, 1);
        assert_eq!(r.tracks[0].id.as_str(), "7");
        assert_eq!(r.tracks[1].id.as_str(), "7.1");
        assert_eq!(r.tracks[1].points.len(), 2);
    }

    #[test]
    fn idempotent() {
        let t = track(&[(0, 0.0, 0.0), (3, 3.0, 1.0), (4, 3.5, 1.0), (20, 9.0, 9.0), (22, 9.2, 9.0)]);
        let once = fill_gaps(&t, 5);
        let (twice, summary) = fill_all_gaps(&once.tracks, 5);
        assert_eq!(twice, once.tracks);
        assert_eq!(summary, GapRepairSummary::default());
    }
}
