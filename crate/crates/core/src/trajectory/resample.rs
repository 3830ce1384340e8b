use super::model::{sample_index, Clip, Track, TrackPoint};
use crate::error::{Error, Result};

fn integer_ratio(target: f64, base: f64) -> Option<i64> {
    if !(target > 0.0 && base > 0.0) {
        return None;
    }
    let ratio = target / base;
    let r = ratio.round();
    ((ratio - r).abs() < 1e-9 && r >= 1.0).then_some(r as i64)
}

fn upsample_track(track: &Track, target_rate: f64) -> Track {
    let mut points = Vec::with_capacity(track.points.len() * 8);
    for (i, p) in track.points.iter().enumerate() {
        if i > 0 {
            let prev = track.points[i - 1];
            let i0 = sample_index(prev.t, target_rate);
            let steps = sample_index(p.t, target_rate) - i0;
            for j in 1..steps {
                let s = j as f64 / steps as f64;
                points.push(TrackPoint::new(
                    (i0 + j) as f64 / target_rate,
                    prev.x + (p.x - prev.x) * s,
                    prev.y + (p.y - prev.y) * s,
                ));
            }
        }
        points.push(*p);
    }
    Track {
        id: track.id.clone(),
        source: track.source,
        points,
        native_rate: target_rate,
    }
}

/// Raises the sampling rate by an integer factor with linear interpolation.
/// Original samples are kept verbatim; `factor - 1` interpolants are inserted
/// per original interval (7 when going from 9 to 72 Hz).
pub fn resample(clip: &Clip, target_rate: f64) -> Result<Clip> {
    let factor = integer_ratio(target_rate, clip.rate).ok_or_else(|| {
        Error::invalid(format!(
            "target rate {target_rate} Hz is not an integer multiple of clip rate {} Hz",
            clip.rate
        ))
    })?;
    if factor == 1 {
        return Ok(clip.clone());
    }
    Ok(Clip {
        start: clip.start,
        duration: clip.duration,
        tracks: clip.tracks.iter().map(|t| upsample_track(t, target_rate)).collect(),
        rate: target_rate,
        arena: clip.arena.clone(),
    })
}

/// Keeps only the samples that fall on the `target_rate` grid.
pub fn downsample(clip: &Clip, target_rate: f64) -> Result<Clip> {
    let factor = integer_ratio(clip.rate, target_rate).ok_or_else(|| {
        Error::invalid(format!(
            "clip rate {} Hz is not an integer multiple of target {target_rate} Hz",
            clip.rate
        ))
    })?;
    let tracks = clip
        .tracks
        .iter()
        .map(|t| Track {
            id: t.id.clone(),
            source: t.source,
            points: t
                .points
                .iter()
                .filter(|p| sample_index(p.t, clip.rate).rem_euclid(factor) == 0)
                .copied()
                .collect(),
            native_rate: target_rate,
        })
        .filter(|t| !t.points.is_empty())
        .collect();
    Ok(Clip {
        start: clip.start,
        duration: clip.duration,
        tracks,
        rate: target_rate,
        arena: clip.arena.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arena::ArenaGeometry;
    use crate::trajectory::model::Source;

    fn clip(points: Vec<TrackPoint>, rate: f64) -> Clip {
        Clip {
            start: 0.0,
            duration: 10.0,
            tracks: vec![Track::new("1", Source::Real, points, rate)],
            rate,
            arena: ArenaGeometry::bare(20.0, 20.0),
        }
    }

    #[test]
    fn one_to_four_hz_is_collinear_and_equally_spaced() {
        let c = clip(vec![TrackPoint::new(0.0, 0.0, 0.0), TrackPoint::new(1.0, 4.0, 2.0)], 1.0);
        let r = resample(&c, 4.0).unwrap();
        let pts = &r.tracks[0].points;
        assert_eq!(pts.len(), 5);
        for (j, p) in pts.iter().enumerate() {
            assert_eq!(p.t, j as f64 / 4.0);
            assert_eq!(p.x, j as f64);
            assert_eq!(p.y, j as f64 * 0.5);
        }
        assert_eq!(r.rate, 4.0);
    }

    #[test]
    fn same_rate_is_identity() {
        let c = clip(vec![TrackPoint::new(0.0, 0.0, 0.0), TrackPoint::new(1.0 / 9.0, 0.1, 0.0)], 9.0);
        assert_eq!(resample(&c, 9.0).unwrap(), c);
    }

    #[test]
    fn non_integer_ratio_rejected() {
        let c = clip(vec![TrackPoint::new(0.0, 0.0, 0.0), TrackPoint::new(1.0 / 9.0, 0.1, 0.0)], 9.0);
        assert!(resample(&c, 20.0).is_err());
        assert!(resample(&c, 4.5).is_err());
        assert!(resample(&c, 0.0).is_err());
    }

    #[test]
    fn nine_to_seventy_two_keeps_originals() {
        let pts: Vec<_> = (0..10)
            .map(|i| TrackPoint::new(i as f64 / 9.0, 0.3 * i as f64 + 0.1, 1.7 - 0.05 * i as f64))
            .collect();
        let c = clip(pts.clone(), 9.0);
        let r = resample(&c, 72.0).unwrap();
        let up = &r.tracks[0].points;
        assert_eq!(up.len(), (pts.len() - 1) * 8 + 1);
        for (i, p) in pts.iter().enumerate() {
            assert_eq!(up[i * 8], *p);
        }
        assert_eq!(downsample(&r, 9.0).unwrap(), c);
    }
}
