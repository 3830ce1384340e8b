use std::collections::BTreeMap;

use super::model::{sample_index, AgentState, Clip, Frame, Track};
use crate::geometry::wrap_angle;

/// Per-sample displacement below which an agent counts as stationary and
/// keeps its previous heading (metres).
pub const STATIONARY_EPS: f64 = 0.01;

/// Heading and speed for every sample of one track.
///
/// Heading follows the displacement to the next sample (the last sample
/// reuses the previous step). Steps shorter than [`STATIONARY_EPS`] carry the
/// previous heading over; a track that starts stationary borrows the first
/// heading it ever takes.
pub fn track_kinematics(track: &Track) -> Vec<(f64, f64)> {
    let n = track.points.len();
    if n < 2 {
        return vec![(0.0, 0.0); n];
    }
    // one entry per step i -> i+1
    let steps: Vec<(Option<f64>, f64)> = track
        .points
        .windows(2)
        .map(|w| {
            let d = w[1].pos() - w[0].pos();
            let len = d.norm();
            let dt = w[1].t - w[0].t;
            let heading = (len >= STATIONARY_EPS).then(|| wrap_angle(d.angle()));
            (heading, len / dt)
        })
        .collect();
    let mut current = steps.iter().find_map(|s| s.0).unwrap_or(0.0);
    let mut out = Vec::with_capacity(n);
    for (heading, speed) in &steps {
        if let Some(h) = heading {
            current = *h;
        }
        out.push((current, *speed));
    }
    let last = *out.last().expect("n >= 2");
    out.push(last);
    out
}

/// One frame per sample instant of the clip, agents in clip track order.
pub fn to_frames(clip: &Clip) -> Vec<Frame> {
    let mut by_index: BTreeMap<i64, Vec<AgentState>> = BTreeMap::new();
    for track in &clip.tracks {
        let kin = track_kinematics(track);
        for (p, (heading, speed)) in track.points.iter().zip(kin) {
            by_index.entry(sample_index(p.t, clip.rate)).or_default().push(AgentState {
                id: track.id.clone(),
                position: p.pos(),
                heading,
                speed,
            });
        }
    }
    by_index
        .into_iter()
        .map(|(idx, agents)| Frame {
            t: idx as f64 / clip.rate,
            agents,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arena::ArenaGeometry;
    use crate::trajectory::model::{Source, TrackPoint};
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn clip_of(tracks: Vec<Track>, rate: f64) -> Clip {
        Clip {
            start: 0.0,
            duration: 10.0,
            tracks,
            rate,
            arena: ArenaGeometry::bare(20.0, 20.0),
        }
    }

    fn line(id: &str, n: usize, rate: f64, v: (f64, f64)) -> Track {
        Track::new(
            id,
            Source::Real,
            (0..n)
                .map(|i| {
                    let t = i as f64 / rate;
                    TrackPoint::new(t, 1.0 + v.0 * t, 1.0 + v.1 * t)
                })
                .collect(),
            rate,
        )
    }

    #[test]
    fn walking_plus_x() {
        let frames = to_frames(&clip_of(vec![line("a", 10, 9.0, (1.0, 0.0))], 9.0));
        assert_eq!(frames.len(), 10);
        for f in &frames {
            assert_eq!(f.agents.len(), 1);
            assert_eq!(f.agents[0].heading, 0.0);
            assert!((f.agents[0].speed - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn diagonal_walk() {
        let frames = to_frames(&clip_of(vec![line("a", 5, 9.0, (1.0, 1.0))], 9.0));
        for f in &frames {
            assert!((f.agents[0].heading - FRAC_PI_4).abs() < 1e-12);
            assert!((f.agents[0].speed - 2f64.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn stationary_after_moving_keeps_heading() {
        let mut pts: Vec<_> = (0..4).map(|i| TrackPoint::new(i as f64, 1.0, 1.0 + i as f64)).collect();
        for i in 4..8 {
            pts.push(TrackPoint::new(i as f64, 1.0, 4.0));
        }
        let frames = to_frames(&clip_of(vec![Track::new("a", Source::Real, pts, 1.0)], 1.0));
        for f in &frames[3..] {
            assert_eq!(f.agents[0].heading, FRAC_PI_2);
            assert_eq!(f.agents[0].speed, 0.0);
        }
        assert_eq!(frames[0].agents[0].speed, 1.0);
    }

    #[test]
    fn leading_stationary_borrows_first_heading() {
        let pts = vec![
            TrackPoint::new(0.0, 1.0, 1.0),
            TrackPoint::new(1.0, 1.0, 1.0),
            TrackPoint::new(2.0, 0.0, 1.0),
        ];
        let kin = track_kinematics(&Track::new("a", Source::Real, pts, 1.0));
        assert_eq!(kin[0].0, -std::f64::consts::PI);
        assert_eq!(kin[0].1, 0.0);
    }

    #[test]
    fn frames_group_by_instant() {
        let a = line("a", 5, 9.0, (1.0, 0.0));
        let mut b = line("b", 3, 9.0, (0.0, 1.0));
        for p in &mut b.points {
            p.t += 2.0 / 9.0;
        }
        let frames = to_frames(&clip_of(vec![a, b], 9.0));
        let counts: Vec<usize> = frames.iter().map(|f| f.agents.len()).collect();
        assert_eq!(counts, vec![1, 1, 2, 2, 2]);
        let total: usize = counts.iter().sum();
        assert_eq!(total, 8);
    }
}
