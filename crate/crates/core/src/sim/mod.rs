//! Social-force pedestrian simulator with an adaptive Dormand–Prince integrator.

pub mod dopri;
mod engine;
pub mod force;
mod params;
mod scenario;

pub use engine::{
    head_on_clearance, integrate, integrate_schedule, run_batch, SimEvent, SimEventKind, SimOutput, WAYPOINT_REACH,
};
pub use params::{ModelConfig, Repulsion, SfmParams};
pub use scenario::{
    load_arena, sample_desired_speed, spawn_schedule, Scenario, ScenarioFile, SpawnEvent, SpawnSchedule,
};
