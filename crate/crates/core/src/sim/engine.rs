use rayon::prelude::*;

use super::dopri::{self, StepStats, Tolerances, Workspace};
use super::force::{coincident_direction, net_force, Body, ForceField};
use super::scenario::{spawn_schedule, Scenario, SpawnEvent, SpawnSchedule};
use crate::arena::{ArenaGeometry, PortalId};
use crate::error::{Error, Result};
use crate::geometry::{Segment, Vec2};
use crate::trajectory::{Clip, Source, Track, TrackId, TrackPoint};

/// Distance at which a same-portal route's intermediate waypoint counts as visited.
pub const WAYPOINT_REACH: f64 = 1.0;
const CONTACT_PASSES: usize = 64;
const CONTACT_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SimEventKind {
    Spawn,
    Exit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimEvent {
    pub time: f64,
    pub pedestrian: u64,
    pub kind: SimEventKind,
    pub portal: PortalId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    /// One track per spawned pedestrian that was present at an output time.
    pub tracks: Vec<Track>,
    /// Velocity at every sample, parallel to `tracks[i].points`.
    pub velocities: Vec<Vec<Vec2>>,
    pub spawns: Vec<SpawnEvent>,
    pub events: Vec<SimEvent>,
    pub warnings: Vec<String>,
    pub stats: StepStats,
    /// Smallest centre distance between any two pedestrians after any accepted step.
    pub min_separation: f64,
    /// Largest speed at an output sample.
    pub peak_speed: f64,
    /// Output samples lying outside the arena or inside an obstacle.
    pub penetrations: usize,
    pub duration: f64,
    pub rate: f64,
    pub arena: ArenaGeometry,
}

impl SimOutput {
    /// Mean over tracks of path length / visible duration.
    pub fn realized_mean_speed(&self) -> Option<f64> {
        let speeds: Vec<f64> = self
            .tracks
            .iter()
            .filter(|t| t.points.len() >= 2 && t.visible_duration() > 0.0)
            .map(|t| t.path_length() / t.visible_duration())
            .collect();
        if speeds.is_empty() {
            None
        } else {
            Some(speeds.iter().sum::<f64>() / speeds.len() as f64)
        }
    }

    pub fn exits(&self) -> usize {
        self.events.iter().filter(|e| e.kind == SimEventKind::Exit).count()
    }

    pub fn to_clip(&self) -> Clip {
        Clip {
            start: 0.0,
            duration: self.duration,
            tracks: self.tracks.clone(),
            rate: self.rate,
            arena: self.arena.clone(),
        }
    }
}

#[derive(Debug, Clone)]
struct Agent {
    spawn: usize,
    id: u64,
    desired_speed: f64,
    destination: PortalId,
    target: Segment,
    exit: Segment,
    waypoint: Option<Vec2>,
    track: Option<usize>,
}

impl Agent {
    fn heading(&self, p: Vec2) -> Option<Vec2> {
        let goal = self.waypoint.unwrap_or_else(|| self.target.closest_point(p));
        (goal - p).normalized()
    }
}

struct Engine<'a> {
    scenario: &'a Scenario,
    walls: Vec<Segment>,
    tol: Tolerances,
    agents: Vec<Agent>,
    /// `[x, y, vx, vy]` per agent.
    y: Vec<f64>,
    t: f64,
    h: f64,
    ws: Workspace,
    bodies: Vec<Body>,
    out: SimOutput,
}

impl<'a> Engine<'a> {
    fn new(scenario: &'a Scenario, schedule: SpawnSchedule) -> Self {
        let tol = scenario.model.tolerances();
        Engine {
            scenario,
            walls: scenario.arena.wall_segments(),
            tol,
            agents: Vec::new(),
            y: Vec::new(),
            t: 0.0,
            h: tol.initial_step,
            ws: Workspace::default(),
            bodies: Vec::new(),
            out: SimOutput {
                tracks: Vec::new(),
                velocities: Vec::new(),
                spawns: schedule.events,
                events: Vec::new(),
                warnings: schedule.warnings,
                stats: StepStats::default(),
                min_separation: f64::INFINITY,
                peak_speed: 0.0,
                penetrations: 0,
                duration: scenario.duration,
                rate: scenario.output_rate,
                arena: scenario.arena.clone(),
            },
        }
    }

    fn position(&self, i: usize) -> Vec2 {
        Vec2::new(self.y[4 * i], self.y[4 * i + 1])
    }

    fn velocity(&self, i: usize) -> Vec2 {
        Vec2::new(self.y[4 * i + 2], self.y[4 * i + 3])
    }

    fn set(&mut self, i: usize, p: Vec2, v: Vec2) {
        self.y[4 * i..4 * i + 4].copy_from_slice(&[p.x, p.y, v.x, v.y]);
    }

    fn run(&mut self) -> Result<()> {
        let rate = self.scenario.output_rate;
        let last = (self.scenario.duration * rate + 1e-9).floor() as u64;
        let n_spawns = self.out.spawns.len();
        let mut next = 0;
        for k in 0..=last {
            let t_out = k as f64 / rate;
            while next < n_spawns && self.out.spawns[next].time < t_out {
                let ts = self.out.spawns[next].time;
                self.advance(ts)?;
                while next < n_spawns && self.out.spawns[next].time <= ts {
                    self.spawn(next);
                    next += 1;
                }
                self.after_spawn();
            }
            self.advance(t_out)?;
            let before = next;
            while next < n_spawns && self.out.spawns[next].time <= t_out {
                self.spawn(next);
                next += 1;
            }
            if next > before {
                self.after_spawn();
            }
            self.record(t_out);
        }
        if next < n_spawns {
            let msg = format!(
                "{} spawns fall after the last output time and were not simulated",
                n_spawns - next
            );
            log::warn!("{msg}");
            self.out.warnings.push(msg);
        }
        Ok(())
    }

    fn spawn(&mut self, index: usize) {
        let ev = self.out.spawns[index];
        let arena = &self.scenario.arena;
        let radius = self.scenario.params.ped_radius;
        let portal = arena.portal(ev.destination).expect("validated destination");
        self.agents.push(Agent {
            spawn: index,
            id: ev.index,
            desired_speed: ev.desired_speed,
            destination: ev.destination,
            target: portal.segment().shrunk(2.0 * radius),
            exit: portal.segment(),
            waypoint: ev.waypoint,
            track: None,
        });
        self.y.extend_from_slice(&[ev.position.x, ev.position.y, 0.0, 0.0]);
        self.out.events.push(SimEvent {
            time: ev.time,
            pedestrian: ev.index,
            kind: SimEventKind::Spawn,
            portal: ev.origin,
        });
    }

    fn after_spawn(&mut self) {
        self.constrain();
        self.update_separation();
    }

    fn advance(&mut self, target: f64) -> Result<()> {
        while target - self.t > 1e-12 {
            if self.agents.is_empty() {
                self.t = target;
                return Ok(());
            }
            let limit = target - self.t;
            let h_try = self.h;
            let accepted = {
                let scenario = self.scenario;
                let field = ForceField {
                    params: &scenario.params,
                    repulsion: scenario.model.repulsion.unwrap_or_else(|| scenario.params.repulsion()),
                    walls: &self.walls,
                    obstacles: &scenario.arena.obstacles,
                    force_cap: scenario.model.force_cap,
                    seed: scenario.seed,
                };
                let agents = &self.agents;
                let radius = scenario.params.ped_radius;
                let bodies = &mut self.bodies;
                let mut rhs = |_t: f64, y: &[f64], dy: &mut [f64]| {
                    bodies.clear();
                    bodies.extend(agents.iter().enumerate().map(|(i, a)| Body {
                        id: a.id,
                        position: Vec2::new(y[4 * i], y[4 * i + 1]),
                        velocity: Vec2::new(y[4 * i + 2], y[4 * i + 3]),
                        desired_speed: a.desired_speed,
                        radius,
                    }));
                    for (i, a) in agents.iter().enumerate() {
                        let me = &bodies[i];
                        let acc = net_force(&field, me, a.heading(me.position), bodies);
                        dy[4 * i] = me.velocity.x;
                        dy[4 * i + 1] = me.velocity.y;
                        dy[4 * i + 2] = acc.x;
                        dy[4 * i + 3] = acc.y;
                    }
                };
                dopri::step(&mut rhs, self.t, &mut self.y, h_try, limit, &self.tol, &mut self.ws, &mut self.out.stats)
            };
            let acc = match accepted {
                Ok(a) => a,
                Err(u) => return Err(self.underflow(u.h)),
            };
            let truncated = acc.h >= limit * (1.0 - 1e-12) && limit < h_try;
            self.t = if acc.h >= limit * (1.0 - 1e-12) { target } else { self.t + acc.h };
            self.h = if truncated { h_try.max(acc.h_next).min(self.tol.max_step) } else { acc.h_next };
            self.post_step();
        }
        self.t = target;
        Ok(())
    }

    fn underflow(&self, h: f64) -> Error {
        let mut dump = String::from("id,x,y,vx,vy,destination\n");
        for (i, a) in self.agents.iter().enumerate() {
            let (p, v) = (self.position(i), self.velocity(i));
            dump.push_str(&format!("{},{},{},{},{},{}\n", a.id, p.x, p.y, v.x, v.y, a.destination));
        }
        Error::StepUnderflow { t: self.t, h, dump }
    }

    fn post_step(&mut self) {
        let vmax = self.scenario.params.speed_max;
        for i in 0..self.agents.len() {
            let v = self.velocity(i);
            let s = v.norm();
            if s > vmax {
                let p = self.position(i);
                self.set(i, p, v * (vmax / s));
            }
        }
        self.constrain();
        self.update_separation();
        self.exits();
    }

    /// Arena and obstacle confinement, alternated with contact resolution
    /// when that is enabled.
    fn constrain(&mut self) {
        self.confine();
        if !self.scenario.model.resolve_contacts {
            return;
        }
        for _ in 0..CONTACT_PASSES {
            if !self.separate_pairs() {
                break;
            }
            self.confine();
        }
    }

    /// One sweep over overlapping pairs; false when none overlapped.
    fn separate_pairs(&mut self) -> bool {
        let min_d = 2.0 * self.scenario.params.ped_radius;
        let n = self.agents.len();
        let mut moved = false;
        for i in 0..n {
            for j in i + 1..n {
                let (pi, pj) = (self.position(i), self.position(j));
                let d = pi.distance(pj);
                if d >= min_d {
                    continue;
                }
                moved = true;
                let nrm = (pi - pj)
                    .normalized()
                    .unwrap_or_else(|| coincident_direction(self.scenario.seed, self.agents[i].id, self.agents[j].id));
                let push = (min_d - d) / 2.0 + CONTACT_SLACK;
                let (mut vi, mut vj) = (self.velocity(i), self.velocity(j));
                let closing = (vi - vj).dot(nrm);
                if closing < 0.0 {
                    vi -= nrm * (closing / 2.0);
                    vj += nrm * (closing / 2.0);
                }
                self.set(i, pi + nrm * push, vi);
                self.set(j, pj - nrm * push, vj);
            }
        }
        moved
    }

    fn confine(&mut self) {
        let radius = self.scenario.params.ped_radius;
        let arena = &self.scenario.arena;
        for i in 0..self.agents.len() {
            let (mut p, mut v) = (self.position(i), self.velocity(i));
            let cx = p.x.clamp(radius, arena.width - radius);
            let cy = p.y.clamp(radius, arena.height - radius);
            if cx != p.x {
                v.x = 0.0;
            }
            if cy != p.y {
                v.y = 0.0;
            }
            p = Vec2::new(cx, cy);
            for ob in &arena.obstacles {
                if ob.contains(p) {
                    let edge = ob.closest_boundary_point(p);
                    let out = (edge - p).normalized().unwrap_or(Vec2::new(1.0, 0.0));
                    p = edge + out * radius;
                    let into = v.dot(out);
                    if into < 0.0 {
                        v -= out * into;
                    }
                }
            }
            self.set(i, p, v);
        }
    }

    fn update_separation(&mut self) {
        let n = self.agents.len();
        for i in 0..n {
            let pi = self.position(i);
            for j in i + 1..n {
                let d = pi.distance(self.position(j));
                if d < self.out.min_separation {
                    self.out.min_separation = d;
                }
            }
        }
    }

    fn exits(&mut self) {
        let reach = self.scenario.model.exit_reach;
        let mut i = 0;
        while i < self.agents.len() {
            let p = self.position(i);
            let agent = &mut self.agents[i];
            if let Some(w) = agent.waypoint {
                if p.distance(w) <= WAYPOINT_REACH {
                    agent.waypoint = None;
                }
            }
            if agent.waypoint.is_none() && agent.exit.distance_to(p) <= reach {
                self.out.events.push(SimEvent {
                    time: self.t,
                    pedestrian: agent.id,
                    kind: SimEventKind::Exit,
                    portal: agent.destination,
                });
                self.agents.remove(i);
                self.y.drain(4 * i..4 * i + 4);
            } else {
                i += 1;
            }
        }
    }

    fn record(&mut self, t: f64) {
        let arena = &self.scenario.arena;
        for i in 0..self.agents.len() {
            let (p, v) = (self.position(i), self.velocity(i));
            let slot = match self.agents[i].track {
                Some(s) => s,
                None => {
                    let s = self.out.tracks.len();
                    let ev = &self.out.spawns[self.agents[i].spawn];
                    self.out.tracks.push(Track {
                        id: TrackId::from(ev.index),
                        source: Source::Simulated,
                        points: Vec::new(),
                        native_rate: self.scenario.output_rate,
                    });
                    self.out.velocities.push(Vec::new());
                    self.agents[i].track = Some(s);
                    s
                }
            };
            self.out.tracks[slot].points.push(TrackPoint { t, x: p.x, y: p.y });
            self.out.velocities[slot].push(v);
            self.out.peak_speed = self.out.peak_speed.max(v.norm());
            if !arena.contains(p) || arena.obstacles.iter().any(|o| o.contains(p)) {
                self.out.penetrations += 1;
            }
        }
    }
}

/// Runs a scenario with its own spawn schedule.
pub fn integrate(scenario: &Scenario) -> Result<SimOutput> {
    let schedule = spawn_schedule(scenario)?;
    integrate_schedule(scenario, schedule)
}

/// Runs a scenario with an explicit spawn schedule, ignoring its entries and routes.
pub fn integrate_schedule(scenario: &Scenario, mut schedule: SpawnSchedule) -> Result<SimOutput> {
    scenario.params.validate()?;
    scenario.model.validate()?;
    for ev in &schedule.events {
        if scenario.arena.portal(ev.destination).is_none() {
            return Err(Error::invalid(format!("spawn {} heads to unknown portal {}", ev.index, ev.destination)));
        }
    }
    schedule.events.sort_by(|a, b| a.time.total_cmp(&b.time).then(a.index.cmp(&b.index)));
    let mut engine = Engine::new(scenario, schedule);
    engine.run()?;
    Ok(engine.out)
}

/// Independent runs in parallel; results keep the input order.
pub fn run_batch(scenarios: &[Scenario]) -> Vec<Result<SimOutput>> {
    scenarios.par_iter().map(integrate).collect()
}

/// Minimum centre distance over a run; infinite when fewer than two pedestrians met.
pub fn head_on_clearance(scenario: &Scenario, schedule: SpawnSchedule) -> Result<f64> {
    Ok(integrate_schedule(scenario, schedule)?.min_separation)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arena::Portal;
    use crate::calibration::{EntryTimeDistribution, RouteChoiceDistribution};
    use crate::sim::params::{ModelConfig, Repulsion, SfmParams};

    /// Empty 15.8 x 6 corridor with facing portals on the short walls.
    fn corridor() -> ArenaGeometry {
        ArenaGeometry::new(
            15.8,
            6.0,
            vec![
                Portal::new(1, Vec2::new(0.0, 2.0), Vec2::new(0.0, 4.0)),
                Portal::new(2, Vec2::new(15.8, 2.0), Vec2::new(15.8, 4.0)),
                Portal::new(3, Vec2::new(0.0, 5.0), Vec2::new(0.0, 5.8)),
            ],
            vec![],
        )
        .unwrap()
    }

    fn scenario(arena: ArenaGeometry, model: ModelConfig) -> Scenario {
        Scenario {
            arena,
            routes: RouteChoiceDistribution::default(),
            entries: EntryTimeDistribution::default(),
            params: SfmParams::default(),
            model,
            seed: 1,
            duration: 20.0,
            output_rate: 9.0,
        }
    }

    fn spawn(index: u64, origin: PortalId, destination: PortalId, x: f64, y: f64) -> SpawnEvent {
        SpawnEvent {
            index,
            time: 0.0,
            origin,
            destination,
            desired_speed: 1.4,
            position: Vec2::new(x, y),
            waypoint: None,
        }
    }

    fn schedule(events: Vec<SpawnEvent>) -> SpawnSchedule {
        SpawnSchedule {
            events,
            warnings: vec![],
        }
    }

    #[test]
    fn free_flow_matches_relaxation() {
        let model = ModelConfig {
            repulsion: Some(Repulsion::NONE),
            ..ModelConfig::default()
        };
        let s = scenario(corridor(), model);
        let out = integrate_schedule(&s, schedule(vec![spawn(0, 1, 2, 0.2, 3.0)])).unwrap();
        let tau = 1.4 / 2.0;
        for (p, v) in out.tracks[0].points.iter().zip(&out.velocities[0]) {
            let analytic = 1.4 * (1.0 - (-p.t / tau).exp());
            assert!((v.norm() - analytic).abs() < 1e-3, "t={} v={} want {}", p.t, v.norm(), analytic);
            assert!(v.y.abs() < 1e-12);
        }
    }

    #[test]
    fn crossing_time_is_width_over_speed() {
        let s = scenario(corridor(), ModelConfig::default());
        let out = integrate_schedule(&s, schedule(vec![spawn(0, 1, 2, 0.2, 3.0)])).unwrap();
        let exit = out.events.iter().find(|e| e.kind == SimEventKind::Exit).unwrap();
        let tau = 1.4 / 2.0;
        assert!((exit.time - 15.8 / 1.4).abs() < tau, "exit at {}", exit.time);
        assert_eq!(exit.portal, 2);
    }

    #[test]
    fn single_pedestrian_has_infinite_clearance() {
        let s = scenario(corridor(), ModelConfig::default());
        let c = head_on_clearance(&s, schedule(vec![spawn(0, 1, 2, 0.2, 3.0)])).unwrap();
        assert!(c.is_infinite());
    }

    #[test]
    fn parallel_lanes_keep_their_distance() {
        let arena = ArenaGeometry::new(
            15.8,
            9.0,
            vec![
                Portal::new(1, Vec2::new(0.0, 2.0), Vec2::new(0.0, 4.0)),
                Portal::new(2, Vec2::new(15.8, 5.0), Vec2::new(15.8, 7.0)),
                Portal::new(3, Vec2::new(0.0, 5.0), Vec2::new(0.0, 7.0)),
                Portal::new(4, Vec2::new(15.8, 2.0), Vec2::new(15.8, 4.0)),
            ],
            vec![],
        )
        .unwrap();
        let s = scenario(arena, ModelConfig::default());
        let mut b = spawn(1, 2, 3, 15.6, 6.0);
        b.time = 0.0;
        let c = head_on_clearance(&s, schedule(vec![spawn(0, 1, 4, 0.2, 3.0), b])).unwrap();
        assert!((c - 3.0).abs() < 0.05, "clearance {c}");
    }

    #[test]
    fn head_on_pair_stays_apart() {
        let s = scenario(corridor(), ModelConfig::default());
        let c = head_on_clearance(&s, schedule(vec![spawn(0, 1, 2, 0.2, 3.0), spawn(1, 2, 1, 15.6, 3.0)])).unwrap();
        assert!(c >= 0.4, "clearance {c}");
    }

    #[test]
    fn exits_are_logged_once() {
        let s = scenario(corridor(), ModelConfig::default());
        let out = integrate_schedule(&s, schedule(vec![spawn(0, 1, 2, 0.2, 3.0), spawn(1, 2, 3, 15.6, 3.0)])).unwrap();
        assert_eq!(out.events.iter().filter(|e| e.kind == SimEventKind::Spawn).count(), 2);
        assert!(out.exits() <= 2);
        assert_eq!(out.penetrations, 0);
        assert!(out.peak_speed <= 3.2);
    }
}
