use std::collections::BTreeMap;
use std::f64::consts::PI;

use proptest::prelude::*;

use crowdtest::arena::ArenaGeometry;
use crowdtest::calibration::{playback_scale, Histogram, RouteChoiceDistribution};
use crowdtest::geometry::Vec2;
use crowdtest::metrics::{nearest_neighbour_distances, nnd, polarization};
use crowdtest::noise::{apply_flicks, NoiseParams};
use crowdtest::render::AnswerKey;
use crowdtest::sim::{ModelConfig, ScenarioFile, SfmParams};
use crowdtest::trajectory::{read_clip, resample, to_frames, write_clip, Clip, Source, Track, TrackPoint};

fn points(max: usize) -> impl Strategy<Value = Vec<Vec2>> {
    proptest::collection::vec((0.0..15.8f64, 0.0..11.86f64).prop_map(|(x, y)| Vec2::new(x, y)), 2..max)
}

fn brute(points: &[Vec2]) -> Vec<f64> {
    points
        .iter()
        .enumerate()
        .map(|(i, p)| {
            points
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .map(|(_, q)| ((p.x - q.x).powi(2) + (p.y - q.y).powi(2)).sqrt())
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

fn walking_clip(starts: &[(f64, f64, f64)], samples: usize) -> Clip {
    let tracks = starts
        .iter()
        .enumerate()
        .map(|(i, &(x, y, h))| {
            let pts = (0..samples)
                .map(|k| {
                    let s = k as f64 * 0.1;
                    TrackPoint::new(k as f64 / 9.0, (x + s * h.cos()).clamp(0.0, 15.8), (y + s * h.sin()).clamp(0.0, 11.86))
                })
                .collect();
            Track::new(i as u64, Source::Simulated, pts, 9.0)
        })
        .collect();
    Clip {
        start: 0.0,
        duration: samples as f64 / 9.0,
        tracks,
        rate: 9.0,
        arena: ArenaGeometry::forum(),
    }
}

fn starts() -> impl Strategy<Value = Vec<(f64, f64, f64)>> {
    proptest::collection::vec((0.0..15.8f64, 0.0..11.86f64, -PI..PI), 1..12)
}

proptest! {
    #[test]
    fn polarization_bounded_and_rotation_invariant(
        headings in proptest::collection::vec(-PI..PI, 1..200),
        alpha in -PI..PI,
    ) {
        let phi = polarization(&headings).unwrap();
        prop_assert!((0.0..=1.0).contains(&phi));
        let turned: Vec<f64> = headings.iter().map(|h| h + alpha).collect();
        prop_assert!((polarization(&turned).unwrap() - phi).abs() < 1e-12);
        let mut reversed = headings.clone();
        reversed.reverse();
        prop_assert!((polarization(&reversed).unwrap() - phi).abs() < 1e-12);
    }

    #[test]
    fn nnd_matches_brute_force_and_ignores_translation(pts in points(120), dx in -50.0..50.0f64, dy in -50.0..50.0f64) {
        prop_assert_eq!(nearest_neighbour_distances(&pts), brute(&pts));
        let moved: Vec<Vec2> = pts.iter().map(|p| Vec2::new(p.x + dx, p.y + dy)).collect();
        prop_assert!((nnd(&moved).unwrap() - nnd(&pts).unwrap()).abs() < 1e-9);
        let mut shuffled = pts.clone();
        shuffled.rotate_left(pts.len() / 2);
        prop_assert!((nnd(&shuffled).unwrap() - nnd(&pts).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn clip_file_round_trip(s in starts(), n in 2usize..30) {
        let clip = walking_clip(&s, n);
        let back = read_clip(&write_clip(&clip, &[]), Some(&ArenaGeometry::forum())).unwrap().clip;
        prop_assert_eq!(back.tracks.len(), clip.tracks.len());
        for (a, b) in clip.tracks.iter().zip(&back.tracks) {
            prop_assert_eq!(&a.points, &b.points);
        }
    }

    #[test]
    fn upsampling_keeps_originals(s in starts(), n in 2usize..30) {
        let clip = walking_clip(&s, n);
        let up = resample(&clip, 72.0).unwrap();
        for (a, b) in clip.tracks.iter().zip(&up.tracks) {
            prop_assert_eq!(b.points.len(), (a.points.len() - 1) * 8 + 1);
            for (k, p) in a.points.iter().enumerate() {
                prop_assert_eq!(b.points[8 * k], *p);
            }
        }
    }

    #[test]
    fn flicks_touch_headings_only(s in starts(), seed in any::<u64>(), p in 0.0..=1.0f64) {
        let frames = to_frames(&walking_clip(&s, 20));
        let params = NoiseParams { flick_probability: p, seed, ..NoiseParams::default() };
        let noisy = apply_flicks(&frames, &params).unwrap();
        prop_assert_eq!(&apply_flicks(&frames, &params).unwrap(), &noisy);
        for (a, b) in frames.iter().zip(&noisy) {
            for (x, y) in a.agents.iter().zip(&b.agents) {
                prop_assert_eq!(x.position, y.position);
                prop_assert_eq!(x.speed, y.speed);
                prop_assert!(y.heading.abs() <= PI + 1e-12);
            }
        }
    }

    #[test]
    fn playback_scale_reaches_reference(observed in 0.05..5.0f64, reference in 0.05..5.0f64) {
        let f = playback_scale(observed, reference).unwrap().factor;
        prop_assert!((f * observed - reference).abs() <= 1e-12 * reference);
    }

    #[test]
    fn histogram_counts_every_value(values in proptest::collection::vec(0.0..4.0f64, 0..200)) {
        prop_assert_eq!(Histogram::new(&values, 0.1).total(), values.len());
    }

    #[test]
    fn route_table_round_trip(counts in proptest::collection::btree_map((0u32..12, 1u32..12), 1usize..50, 1..20)) {
        let counts: BTreeMap<_, _> = counts.into_iter().collect();
        let d = RouteChoiceDistribution::from_counts(&counts);
        let back = RouteChoiceDistribution::from_table(&d.to_table()).unwrap();
        for ((o, dst), p) in d.iter() {
            prop_assert!((back.probability(o, dst) - p).abs() < 1e-12);
        }
        prop_assert!((d.total() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn scenario_file_round_trip(seed in any::<u64>(), duration in 1.0..600.0f64, accel in 0.5..4.0f64, resample_entries in proptest::option::of(any::<u64>())) {
        let file = ScenarioFile {
            seed,
            duration,
            output_rate: 9.0,
            arena: "forum".into(),
            routes: "routes.csv".into(),
            entries: "entries.csv".into(),
            resample_entries,
            params: SfmParams { acceleration: accel, ..SfmParams::default() },
            model: ModelConfig::default(),
            noise: Some(NoiseParams { seed, ..NoiseParams::default() }),
        };
        prop_assert_eq!(ScenarioFile::from_toml(&file.to_toml()).unwrap(), file);
    }

    #[test]
    fn answer_key_text_and_complement(seed in any::<u64>()) {
        let k = AnswerKey::draw(seed);
        prop_assert_eq!(k.to_string().parse::<AnswerKey>().unwrap(), k);
        let c = k.complement();
        prop_assert!(k.0.iter().zip(c.0).all(|(a, b)| *a != b));
        prop_assert_eq!(c.complement(), k);
    }
}
