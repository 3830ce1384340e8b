use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::params::{ModelConfig, SfmParams};
use crate::arena::{ArenaGeometry, PortalId, INTERIOR_PORTAL};
use crate::calibration::{EntryTimeDistribution, RouteChoiceDistribution};
use crate::error::{Error, Result};
use crate::geometry::Vec2;
use crate::noise::NoiseParams;

/// Everything needed for one seeded simulation run.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub arena: ArenaGeometry,
    pub routes: RouteChoiceDistribution,
    pub entries: EntryTimeDistribution,
    pub params: SfmParams,
    pub model: ModelConfig,
    pub seed: u64,
    pub duration: f64,
    pub output_rate: f64,
}

impl Scenario {
    pub fn validate(&self) -> Result<()> {
        self.arena.validate()?;
        self.params.validate()?;
        self.model.validate()?;
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(Error::invalid("scenario duration must be positive"));
        }
        if !(self.output_rate > 0.0) {
            return Err(Error::invalid("output rate must be positive"));
        }
        if self.arena.portals.is_empty() {
            return Err(Error::invalid("scenario arena has no portals"));
        }
        let known = |id: PortalId| id == INTERIOR_PORTAL || self.arena.portal(id).is_some();
        for ((o, d), _) in self.routes.iter() {
            if !known(o) || !known(d) {
                return Err(Error::invalid(format!("route {o}->{d} references an unknown portal")));
            }
        }
        for e in &self.entries.observations {
            if !known(e.portal) {
                return Err(Error::invalid(format!("entry at {} s uses unknown portal {}", e.time, e.portal)));
            }
            if !(e.time >= 0.0 && e.time <= self.duration) {
                return Err(Error::invalid(format!("entry time {} s outside [0, {}]", e.time, self.duration)));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpawnEvent {
    /// Position in the schedule; also the pedestrian's id.
    pub index: u64,
    pub time: f64,
    pub origin: PortalId,
    pub destination: PortalId,
    pub desired_speed: f64,
    pub position: Vec2,
    /// Intermediate point for routes that leave by the portal they entered.
    pub waypoint: Option<Vec2>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SpawnSchedule {
    pub events: Vec<SpawnEvent>,
    pub warnings: Vec<String>,
}

fn weighted_choice<R: Rng>(rng: &mut R, options: &[(PortalId, f64)]) -> Option<PortalId> {
    let total: f64 = options.iter().map(|o| o.1).sum();
    if !(total > 0.0) {
        return None;
    }
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    for &(id, w) in options {
        acc += w;
        if u < acc {
            return Some(id);
        }
    }
    options.iter().rev().find(|o| o.1 > 0.0).map(|o| o.0)
}

/// Normal(mean, sd) truncated to `[min, max]` by rejection.
pub fn sample_desired_speed<R: Rng>(rng: &mut R, params: &SfmParams, sd: f64) -> f64 {
    if sd == 0.0 {
        return params.speed_mean.clamp(params.speed_min, params.speed_max);
    }
    let normal = Normal::new(params.speed_mean, sd).expect("finite positive sd");
    loop {
        let v = normal.sample(rng);
        if v >= params.speed_min && v <= params.speed_max {
            return v;
        }
    }
}

/// Spawn point on a portal, `radius` inside the wall, kept clear of the
/// portal's jambs where possible.
fn portal_spawn_point<R: Rng>(rng: &mut R, arena: &ArenaGeometry, id: PortalId, radius: f64) -> Vec2 {
    let portal = arena.portal(id).expect("validated portal");
    let seg = portal.segment().shrunk(2.0 * radius);
    seg.a.lerp(seg.b, rng.random::<f64>()) + arena.inward_normal(portal) * radius
}

fn interior_spawn_point<R: Rng>(rng: &mut R, arena: &ArenaGeometry, radius: f64) -> Vec2 {
    loop {
        let p = Vec2::new(
            rng.random_range(radius..=arena.width - radius),
            rng.random_range(radius..=arena.height - radius),
        );
        if !arena.obstacles.iter().any(|o| o.contains(p) || o.boundary_distance(p) < radius) {
            return p;
        }
    }
}

/// One spawn per entry observation, at its recorded time and origin, with a
/// destination drawn from the routes leaving that origin.
pub fn spawn_schedule(scenario: &Scenario) -> Result<SpawnSchedule> {
    scenario.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let arena = &scenario.arena;
    let real_marginal: Vec<(PortalId, f64)> = scenario
        .routes
        .destination_marginal()
        .into_iter()
        .filter(|(d, _)| *d != INTERIOR_PORTAL)
        .collect();
    let uniform: Vec<(PortalId, f64)> = arena.portal_ids().into_iter().map(|id| (id, 1.0)).collect();

    let mut order: Vec<usize> = (0..scenario.entries.observations.len()).collect();
    order.sort_by(|&a, &b| {
        scenario.entries.observations[a]
            .time
            .total_cmp(&scenario.entries.observations[b].time)
            .then(a.cmp(&b))
    });

    let mut schedule = SpawnSchedule::default();
    for (index, &i) in order.iter().enumerate() {
        let entry = scenario.entries.observations[i];
        let conditional: Vec<(PortalId, f64)> = scenario.routes.destinations_from(entry.portal);
        let mut destination = weighted_choice(&mut rng, &conditional);
        if destination.is_none() {
            schedule.warnings.push(format!(
                "origin portal {} has no route mass; destination drawn from the marginal",
                entry.portal
            ));
        }
        if destination.is_none() || destination == Some(INTERIOR_PORTAL) {
            destination = weighted_choice(&mut rng, &real_marginal).or_else(|| weighted_choice(&mut rng, &uniform));
        }
        let destination = destination.expect("arena has portals");
        let desired_speed = sample_desired_speed(&mut rng, &scenario.params, scenario.model.desired_speed_sd);
        let radius = scenario.params.ped_radius;
        let position = if entry.portal == INTERIOR_PORTAL {
            interior_spawn_point(&mut rng, arena, radius)
        } else {
            portal_spawn_point(&mut rng, arena, entry.portal, radius)
        };
        let waypoint = (destination == entry.portal).then(|| arena.centre());
        schedule.events.push(SpawnEvent {
            index: index as u64,
            time: entry.time,
            origin: entry.portal,
            destination,
            desired_speed,
            position,
            waypoint,
        });
    }
    for w in &schedule.warnings {
        log::warn!("{w}");
    }
    Ok(schedule)
}

/// Arena given either as the built-in `"forum"` or as a path to a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    pub seed: u64,
    pub duration: f64,
    pub output_rate: f64,
    pub arena: String,
    pub routes: PathBuf,
    pub entries: PathBuf,
    #[serde(default)]
    pub resample_entries: Option<u64>,
    #[serde(default)]
    pub params: SfmParams,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<NoiseParams>,
}

impl ScenarioFile {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::invalid(format!("scenario file: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serialises")
    }

    /// Loads referenced files, resolving relative paths against `base`.
    pub fn resolve(&self, base: &Path) -> Result<Scenario> {
        let read = |p: &Path| {
            let full = if p.is_absolute() { p.to_path_buf() } else { base.join(p) };
            std::fs::read_to_string(&full).map_err(|e| Error::io(full, e))
        };
        let arena = load_arena(&self.arena, base)?;
        let routes = RouteChoiceDistribution::from_table(&read(&self.routes)?)?;
        let mut entries = EntryTimeDistribution::from_table(&read(&self.entries)?)?;
        if let Some(seed) = self.resample_entries {
            entries = entries.resampled(seed);
        }
        let scenario = Scenario {
            arena,
            routes,
            entries,
            params: self.params,
            model: self.model,
            seed: self.seed,
            duration: self.duration,
            output_rate: self.output_rate,
        };
        scenario.validate()?;
        Ok(scenario)
    }
}

pub fn load_arena(spec: &str, base: &Path) -> Result<ArenaGeometry> {
    if spec == "forum" {
        return Ok(ArenaGeometry::forum());
    }
    let path = if Path::new(spec).is_absolute() {
        PathBuf::from(spec)
    } else {
        base.join(spec)
    };
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let arena: ArenaGeometry = toml::from_str(&text).map_err(|e| Error::Format {
        path: path.clone(),
        message: e.to_string(),
    })?;
    arena.validate()?;
    Ok(arena)
}
