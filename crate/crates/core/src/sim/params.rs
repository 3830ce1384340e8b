use serde::{Deserialize, Serialize};

use super::dopri::Tolerances;
use crate::error::{Error, Result};

/// Social-force parameters, defaults as distributed with the Vadere SFM template.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SfmParams {
    pub ped_body_potential: f64,
    /// Metres.
    pub ped_recognition_distance: f64,
    pub obstacle_body_potential: f64,
    pub obstacle_repulsion_strength: f64,
    /// Metres.
    pub ped_radius: f64,
    pub speed_mean: f64,
    pub speed_min: f64,
    pub speed_max: f64,
    /// m/s².
    pub acceleration: f64,
    /// Metres; neighbours and walls beyond this exert no force.
    pub search_radius: f64,
}

impl Default for SfmParams {
    fn default() -> Self {
        SfmParams {
            ped_body_potential: 2.72,
            ped_recognition_distance: 0.3,
            obstacle_body_potential: 20.1,
            obstacle_repulsion_strength: 0.25,
            ped_radius: 0.2,
            speed_mean: 1.4,
            speed_min: 0.4,
            speed_max: 3.2,
            acceleration: 2.0,
            search_radius: 2.0,
        }
    }
}

impl SfmParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.ped_body_potential,
            self.ped_recognition_distance,
            self.obstacle_body_potential,
            self.obstacle_repulsion_strength,
            self.ped_radius,
            self.speed_mean,
            self.speed_min,
            self.speed_max,
            self.acceleration,
            self.search_radius,
        ];
        if all.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(Error::invalid("all social-force parameters must be positive"));
        }
        if !(self.speed_min <= self.speed_mean && self.speed_mean <= self.speed_max) {
            return Err(Error::invalid(format!(
                "speed bounds violated: min {} <= mean {} <= max {}",
                self.speed_min, self.speed_mean, self.speed_max
            )));
        }
        Ok(())
    }

    /// Amplitudes and decay lengths of the exponential repulsions, reading
    /// "body potential" as amplitude and "recognition distance" / "repulsion
    /// strength" as decay length.
    pub fn repulsion(&self) -> Repulsion {
        Repulsion {
            ped_amplitude: self.ped_body_potential,
            ped_decay: self.ped_recognition_distance,
            obstacle_amplitude: self.obstacle_body_potential,
            obstacle_decay: self.obstacle_repulsion_strength,
        }
    }
}

/// Coefficients of the two exponential repulsion terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Repulsion {
    pub ped_amplitude: f64,
    pub ped_decay: f64,
    pub obstacle_amplitude: f64,
    pub obstacle_decay: f64,
}

impl Repulsion {
    pub const NONE: Repulsion = Repulsion {
        ped_amplitude: 0.0,
        ped_decay: 1.0,
        obstacle_amplitude: 0.0,
        obstacle_decay: 1.0,
    };
}

/// Integration and behaviour settings beyond the force-model parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Standard deviation of the desired-speed normal before truncation.
    pub desired_speed_sd: f64,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub initial_step: f64,
    pub max_step: f64,
    pub min_step: f64,
    /// Cap on the magnitude of the net acceleration (m/s²).
    pub force_cap: f64,
    /// Distance from the destination portal at which a pedestrian leaves (m).
    pub exit_reach: f64,
    /// Keep bodies from interpenetrating by projecting overlapping pairs
    /// apart after every accepted step.
    pub resolve_contacts: bool,
    /// Overrides the parameter-table reading of the repulsion coefficients.
    pub repulsion: Option<Repulsion>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            desired_speed_sd: 0.26,
            abs_tol: 1e-4,
            rel_tol: 1e-4,
            initial_step: 0.05,
            max_step: 0.2,
            min_step: 1e-9,
            force_cap: 50.0,
            exit_reach: 0.5,
            resolve_contacts: true,
            repulsion: None,
        }
    }
}

impl ModelConfig {
    pub fn tolerances(&self) -> Tolerances {
        Tolerances {
            abs: self.abs_tol,
            rel: self.rel_tol,
            initial_step: self.initial_step,
            max_step: self.max_step,
            min_step: self.min_step,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.abs_tol,
            self.initial_step,
            self.max_step,
            self.min_step,
            self.force_cap,
            self.exit_reach,
        ];
        if positive.iter().any(|v| !(v.is_finite() && *v > 0.0)) || !(self.rel_tol >= 0.0) || !(self.desired_speed_sd >= 0.0) {
            return Err(Error::invalid("model tolerances, caps and reach must be positive"));
        }
        if let Some(r) = self.repulsion {
            if r.ped_amplitude < 0.0 || r.obstacle_amplitude < 0.0 || !(r.ped_decay > 0.0) || !(r.obstacle_decay > 0.0) {
                return Err(Error::invalid("repulsion amplitudes must be >= 0 and decays > 0"));
            }
        }
        Ok(())
    }
}
