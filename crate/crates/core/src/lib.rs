//! Deterministic multi-agent evacuation simulator.
//!
//! The per-tick loop senses an immutable world snapshot, runs a social-force
//! decision stage per agent (goal drive, exponential repulsion, and lateral
//! evasion around stopped or fallen agents), and integrates a reduced-order
//! disc-body motor with contacts, falls, recovery, and trampling. Waypoints
//! come from A* over an inflated-obstacle cost grid. Per-class speed settings
//! are calibrated so measured straight-line speeds match configured
//! real-world escape speeds. Analysis tooling reproduces density, corridor
//! width, terrain, and ablation experiments from persisted traces, and
//! contact forces are recorded per body part for heatmap export.

pub mod analysis;
pub mod calib;
pub mod engine;
pub mod forces;
pub mod gait;
pub mod geom;
pub mod motor;
pub mod pathfind;
pub mod rng;
pub mod scenario;
pub mod sfm;
pub mod spatial;
pub mod trace;

pub use analysis::{compute_metrics, run_sweep, speed_distribution, RunMetrics, SweepSpec};
pub use calib::{calibrate, calibrate_all, CalibrationReport, CalibrationTable, ClassName, ClassTable};
pub use engine::{run, RunStats, SimConfig};
pub use scenario::{load_scenario, rasterize, spawn_positions, ScenarioSpec};
