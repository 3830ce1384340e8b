//! Display-level heading flicks for simulated frames.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::wrap_angle;
use crate::trajectory::Frame;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseParams {
    /// Chance per agent per frame of a flick.
    pub flick_probability: f64,
    /// Radians.
    pub max_flick: f64,
    pub seed: u64,
}

impl Default for NoiseParams {
    fn default() -> Self {
        NoiseParams {
            flick_probability: 0.15,
            max_flick: std::f64::consts::FRAC_PI_4,
            seed: 0,
        }
    }
}

impl NoiseParams {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.flick_probability) {
            return Err(Error::invalid(format!(
                "flick probability {} outside [0, 1]",
                self.flick_probability
            )));
        }
        if !(self.max_flick >= 0.0 && self.max_flick.is_finite()) {
            return Err(Error::invalid("max flick must be a finite non-negative angle"));
        }
        Ok(())
    }
}

/// Offsets each displayed heading, independently per agent and frame, by a
/// uniform angle in `[-max_flick, max_flick]` with the configured probability.
/// Positions and speeds are left untouched.
pub fn apply_flicks(frames: &[Frame], params: &NoiseParams) -> Result<Vec<Frame>> {
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut out = frames.to_vec();
    for frame in &mut out {
        for agent in &mut frame.agents {
            if rng.random_bool(params.flick_probability) {
                let offset = rng.random_range(-params.max_flick..=params.max_flick);
                agent.heading = wrap_angle(agent.heading + offset);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{angle_diff, Vec2};
    use crate::trajectory::{AgentState, TrackId};

    fn frames(n_frames: usize, n_agents: usize) -> Vec<Frame> {
        (0..n_frames)
            .map(|k| Frame {
                t: k as f64 / 9.0,
                agents: (0..n_agents)
                    .map(|i| AgentState {
                        id: TrackId::from(i as u64),
                        position: Vec2::new(i as f64 * 0.5, k as f64 * 0.1),
                        heading: wrap_angle(0.3 * i as f64 + 0.01 * k as f64),
                        speed: 1.2,
                    })
                    .collect(),
            })
            .collect()
    }

    fn flicked(a: &[Frame], b: &[Frame]) -> usize {
        a.iter()
            .zip(b)
            .flat_map(|(fa, fb)| fa.agents.iter().zip(&fb.agents))
            .filter(|(x, y)| x.heading != y.heading)
            .count()
    }

    #[test]
    fn zero_probability_is_identity() {
        let f = frames(20, 5);
        let p = NoiseParams {
            flick_probability: 0.0,
            ..Default::default()
        };
        assert_eq!(apply_flicks(&f, &p).unwrap(), f);
    }

    #[test]
    fn certain_flicks_keep_positions() {
        let f = frames(20, 5);
        let p = NoiseParams {
            flick_probability: 1.0,
            ..Default::default()
        };
        let g = apply_flicks(&f, &p).unwrap();
        assert_eq!(flicked(&f, &g), 100);
        for (fa, fb) in f.iter().zip(&g) {
            for (x, y) in fa.agents.iter().zip(&fb.agents) {
                assert_eq!(x.position.x.to_bits(), y.position.x.to_bits());
                assert_eq!(x.position.y.to_bits(), y.position.y.to_bits());
                assert_eq!(x.speed.to_bits(), y.speed.to_bits());
                assert!(angle_diff(x.heading, y.heading).abs() <= p.max_flick + 1e-12);
            }
        }
    }

    #[test]
    fn default_rate_over_ten_thousand_steps() {
        let f = frames(1000, 10);
        let g = apply_flicks(&f, &NoiseParams::default()).unwrap();
        let frac = flicked(&f, &g) as f64 / 10_000.0;
        assert!((0.14..=0.16).contains(&frac), "fraction {frac}");
    }

    #[test]
    fn seeded() {
        let f = frames(50, 4);
        let p = NoiseParams::default();
        assert_eq!(apply_flicks(&f, &p).unwrap(), apply_flicks(&f, &p).unwrap());
        let q = NoiseParams { seed: 9, ..p };
        assert_ne!(apply_flicks(&f, &p).unwrap(), apply_flicks(&f, &q).unwrap());
    }

    #[test]
    fn invalid_params() {
        let p = NoiseParams {
            flick_probability: 1.5,
            ..Default::default()
        };
        assert!(apply_flicks(&[], &p).is_err());
    }
}
