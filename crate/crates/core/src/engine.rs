//! Fixed-timestep simulation loop.
//!
//! Each tick: build an immutable world snapshot, evaluate every walking
//! agent's decision against it in parallel (every `decision_every`-th tick),
//! integrate the motor stage, apply status transitions, and persist a trace
//! frame. Decisions read only the snapshot, so evaluation order cannot change
//! results; randomness is counter-based per agent. Together these make runs
//! bit-identical for a fixed seed under any thread count.

use crate::analysis::{MetricsAccumulator, RunMetrics};
use crate::calib::{CalibrationTable, ClassName, ClassTable};
use crate::forces::{self, AgentPose};
use crate::geom::{Segment, Vec2};
use crate::motor::{
    self, Agent, AgentStatus, StepContext, TerrainEffect, Transition,
};
use crate::pathfind::{self, NavGrid, PlanError, WaypointPath};
use crate::scenario::{self, ScenarioSpec, ScenarioError};
use crate::sfm::{self, DecisionInput, ForceBreakdown, Neighbor, NeighborStatus, SfmCoefficients};
use crate::spatial::SpatialHash;
use crate::trace::{
    AgentRecord, ContactSummary, ForceComponents, PlannedPath, RunMeta, TraceFrame, TraceSink,
};
use rayon::prelude::*;
use std::collections::BTreeMap;
use std::time::Instant;
use thiserror::Error;

/// Engine configuration; scenario-independent run knobs.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    /// Fixed motor timestep (s).
    pub dt: f64,
    /// Decision cadence in motor ticks.
    pub decision_every: u32,
    pub max_ticks: u64,
    /// Overrides the scenario seed when set.
    pub seed: Option<u64>,
    /// Worker thread hint; `None` uses the global default.
    pub threads: Option<usize>,
    /// Waypoints closer than this are consumed.
    pub arrive_radius: f64,
    /// Record part-level force records and decision force components.
    pub dump_forces: bool,
    /// Record waypoint polylines on (re)plans.
    pub dump_paths: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            dt: 1.0 / 60.0,
            decision_every: 3,
            max_ticks: 6000,
            seed: None,
            threads: None,
            arrive_radius: 0.4,
            dump_forces: false,
            dump_paths: false,
        }
    }
}

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("missing calibration for class {0}")]
    MissingCalibration(ClassName),
    #[error("invalid class table: {0}")]
    InvalidClasses(String),
    #[error(transparent)]
    Trace(#[from] crate::trace::TraceError),
}

/// Configuration check for the CLI: every class spawned by the scenario must
/// be covered by the calibration file.
pub fn check_calibration_coverage(
    spec: &ScenarioSpec,
    calib: &CalibrationTable,
) -> Result<(), EngineError> {
    for group in &spec.spawns {
        for class in group.class_mix.keys() {
            if !calib.covers(*class) {
                return Err(EngineError::MissingCalibration(*class));
            }
        }
    }
    Ok(())
}

/// Immutable sensory view of one tick, shared by all decisions.
pub struct WorldSnapshot {
    ids: Vec<u64>,
    positions: Vec<Vec2>,
    velocities: Vec<Vec2>,
    statuses: Vec<NeighborStatus>,
    hash: SpatialHash,
}

impl WorldSnapshot {
    fn build(agents: &[Agent], stall_window: f64, bounds: (Vec2, Vec2)) -> WorldSnapshot {
        let mut ids = Vec::new();
        let mut positions = Vec::new();
        let mut velocities = Vec::new();
        let mut statuses = Vec::new();
        for agent in agents {
            if matches!(agent.status, AgentStatus::Escaped) {
                continue;
            }
            ids.push(agent.id);
            positions.push(agent.pos);
            velocities.push(agent.vel);
            statuses.push(match agent.status {
                AgentStatus::Fallen { .. } | AgentStatus::Trampled => NeighborStatus::Fallen,
                AgentStatus::Trapped => NeighborStatus::Stopped,
                AgentStatus::Walking => {
                    if agent.slow_time >= stall_window {
                        NeighborStatus::Stopped
                    } else {
                        NeighborStatus::Moving
                    }
                }
                AgentStatus::Escaped => unreachable!(),
            });
        }
        let hash = SpatialHash::build(
            bounds.0,
            bounds.1 - bounds.0,
            2.0,
            positions.iter().enumerate().map(|(i, &p)| (i as u32, p)),
        );
        WorldSnapshot {
            ids,
            positions,
            velocities,
            statuses,
            hash,
        }
    }

    /// All and only agents (excluding `exclude_id`) within `range` of `pos`,
    /// sorted by distance ascending with ties broken by id.
    pub fn query_neighbors(&self, pos: Vec2, range: f64, exclude_id: u64) -> Vec<Neighbor> {
        let mut cands = Vec::new();
        self.hash.candidates_into(pos, range, &mut cands);
        let mut out: Vec<(f64, Neighbor)> = Vec::with_capacity(cands.len());
        for &c in &cands {
            let i = c as usize;
            if self.ids[i] == exclude_id {
                continue;
            }
            let d = self.positions[i].distance(pos);
            if d <= range {
                out.push((
                    d,
                    Neighbor {
                        id: self.ids[i],
                        rel_pos: self.positions[i] - pos,
                        vel: self.velocities[i],
                        status: self.statuses[i],
                    },
                ));
            }
        }
        out.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.id.cmp(&b.1.id)));
        out.into_iter().map(|(_, n)| n).collect()
    }

    /// Positions of fallen/trampled bodies in the snapshot.
    fn down_positions(&self) -> Vec<Vec2> {
        self.statuses
            .iter()
            .zip(&self.positions)
            .filter(|(s, _)| matches!(s, NeighborStatus::Fallen))
            .map(|(_, &p)| p)
            .collect()
    }
}

/// Run outcome: metrics plus wall-clock accounting for throughput checks.
#[derive(Debug, Clone)]
pub struct RunStats {
    pub metrics: RunMetrics,
    pub ticks: u64,
    pub wall_seconds: f64,
    pub sim_seconds: f64,
}

#[derive(Clone)]
struct ResolvedClass {
    coeffs: SfmCoefficients,
    v_setting: f64,
    v_max: f64,
    mass: f64,
    fall_robustness: f64,
}

/// How long an agent must stay under the stall speed before neighbors see it
/// as stopped (s).
const STALL_WINDOW: f64 = 0.5;
const STALL_SPEED: f64 = 0.1;
/// Cost multiplier overlaid on cells covered by fallen bodies when replanning
/// around a blockage.
const DOWN_COST_FACTOR: f64 = 8.0;
/// Periodic replan interval (s); blockage replans are immediate.
const REPLAN_INTERVAL: f64 = 1.0;

/// Run a scenario to completion.
pub fn run(
    spec: &ScenarioSpec,
    config: &SimConfig,
    classes: &ClassTable,
    sink: &mut dyn TraceSink,
) -> Result<RunStats, EngineError> {
    run_scripted(spec, config, classes, sink, |_| {})
}

/// Run with a post-spawn setup hook for scripted scenarios (pinned positions,
/// pre-placed fallen bodies). The hook runs once before the first tick.
pub fn run_scripted(
    spec: &ScenarioSpec,
    config: &SimConfig,
    classes: &ClassTable,
    sink: &mut dyn TraceSink,
    setup: impl FnOnce(&mut [Agent]) + Send,
) -> Result<RunStats, EngineError> {
    let mut spec = spec.clone();
    if let Some(seed) = config.seed {
        spec.seed = seed;
    }
    spec.validate()?;
    classes
        .validate()
        .map_err(|e| EngineError::InvalidClasses(e.to_string()))?;

    match config.threads {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| EngineError::InvalidClasses(e.to_string()))?;
            pool.install(|| run_inner(&spec, config, classes, sink, setup))
        }
        None => run_inner(&spec, config, classes, sink, setup),
    }
}

fn run_inner(
    spec: &ScenarioSpec,
    config: &SimConfig,
    classes: &ClassTable,
    sink: &mut dyn TraceSink,
    setup: impl FnOnce(&mut [Agent]),
) -> Result<RunStats, EngineError> {
    let started = Instant::now();
    let dt = config.dt;
    let grid = scenario::rasterize(spec);
    let spawned = scenario::spawn_positions(spec, &grid)?;

    // Per-class resolved parameters: defaults, then scenario overrides, then
    // class-specific overrides.
    let mut resolved: BTreeMap<ClassName, ResolvedClass> = BTreeMap::new();
    {
        let mut table = classes.clone();
        table.apply_overrides(&spec.classes);
        for (name, class) in &table.classes {
            let mut coeffs = SfmCoefficients::default();
            spec.sfm.apply(&mut coeffs);
            if let Some(ov) = &class.sfm_overrides {
                ov.apply(&mut coeffs);
            }
            resolved.insert(
                *name,
                ResolvedClass {
                    coeffs,
                    v_setting: class.v_setting,
                    v_max: class.v_max,
                    mass: class.mass,
                    fall_robustness: class.fall_robustness,
                },
            );
        }
    }

    let window_ticks = (spec.motor.contact_window / dt).round().max(1.0) as usize;
    let mut agents: Vec<Agent> = spawned
        .iter()
        .enumerate()
        .map(|(i, s)| Agent::new(i as u64, s.class, s.pos, window_ticks))
        .collect();
    setup(&mut agents);

    // Initial plans; statically cut-off agents are trapped from the start.
    for agent in agents.iter_mut() {
        if !matches!(agent.status, AgentStatus::Walking) {
            continue;
        }
        match plan_from(&grid, agent.pos) {
            Ok(path) => {
                agent.path = Some(path);
                agent.last_plan_time = 0.0;
            }
            Err(_) => agent.status = AgentStatus::Trapped,
        }
    }

    let walls = spec.collision_walls();
    let total_agents = agents.len();
    sink.meta(&RunMeta {
        scenario: spec.name.clone(),
        dt,
        decision_every: config.decision_every,
        seed: spec.seed,
        total_agents,
        max_ticks: config.max_ticks,
    })?;

    let mut acc = MetricsAccumulator::new(dt, total_agents);
    let mut desired = vec![Vec2::ZERO; total_agents];
    let mut breakdowns: Vec<Option<ForceBreakdown>> = vec![None; total_agents];
    let mut ticks_run = 0u64;

    for tick in 0..config.max_ticks {
        if agents.iter().all(|a| {
            matches!(
                a.status,
                AgentStatus::Escaped | AgentStatus::Trampled | AgentStatus::Trapped
            )
        }) {
            break;
        }
        ticks_run = tick + 1;
        let now = tick as f64 * dt;

        let mut replans: Vec<PlannedPath> = Vec::new();
        if tick % config.decision_every as u64 == 0 {
            let snapshot =
                WorldSnapshot::build(&agents, STALL_WINDOW, (spec.bounds.min, spec.bounds.max));
            let down = snapshot.down_positions();
            let overlay = (!down.is_empty()).then(|| overlay_grid(&grid, &down, spec.motor.body_radius));

            let results: Vec<(Vec2, Option<ForceBreakdown>, Option<PlannedPath>)> = agents
                .par_iter_mut()
                .map(|agent| {
                    if !matches!(agent.status, AgentStatus::Walking) {
                        return (Vec2::ZERO, None, None);
                    }
                    let class = &resolved[&agent.class];
                    let mut planned = None;

                    let blocked = corridor_blocked(agent, &down, spec.motor.body_radius, config.arrive_radius);
                    let due = now - agent.last_plan_time >= REPLAN_INTERVAL;
                    if agent.path.is_none() || blocked || due {
                        let plan_grid = if blocked {
                            overlay.as_ref().unwrap_or(&grid)
                        } else {
                            &grid
                        };
                        match plan_from(plan_grid, agent.pos) {
                            Ok(path) => {
                                if config.dump_paths {
                                    planned = Some(PlannedPath {
                                        id: agent.id,
                                        points: path.points.clone(),
                                        total_cost: path.total_cost,
                                    });
                                }
                                agent.path = Some(path);
                                agent.last_plan_time = now;
                            }
                            Err(_) => {
                                agent.status = AgentStatus::Trapped;
                                agent.path = None;
                                return (Vec2::ZERO, None, None);
                            }
                        }
                    }

                    let path = agent.path.as_mut().expect("walking agent has a path");
                    let target = path.next_waypoint(agent.pos, config.arrive_radius);
                    let desired_dir = (target - agent.pos).normalize_or_zero();
                    let input = DecisionInput {
                        self_id: agent.id,
                        self_pos: agent.pos,
                        self_vel: agent.vel,
                        desired_dir,
                        v_setting: class.v_setting,
                        v_max: class.v_max,
                        neighbors: snapshot.query_neighbors(
                            agent.pos,
                            class.coeffs.sense_range,
                            agent.id,
                        ),
                    };
                    let (v, parts) =
                        sfm::decide(&input, &class.coeffs, spec.motor.body_radius, dt * config.decision_every as f64, &grid);
                    (v, Some(parts), planned)
                })
                .collect();

            for (i, (v, parts, planned)) in results.into_iter().enumerate() {
                desired[i] = v;
                breakdowns[i] = parts;
                if let Some(pp) = planned {
                    replans.push(pp);
                }
            }
        }
        // Non-walking agents hold zero desired velocity between decisions.
        for (i, agent) in agents.iter().enumerate() {
            if !matches!(agent.status, AgentStatus::Walking) {
                desired[i] = Vec2::ZERO;
                breakdowns[i] = None;
            }
        }

        let terrain: Vec<TerrainEffect> = agents
            .iter()
            .map(|a| {
                if matches!(a.status, AgentStatus::Walking) {
                    spec.effect_at(a.pos)
                } else {
                    TerrainEffect::default()
                }
            })
            .collect();
        let masses: Vec<f64> = agents.iter().map(|a| resolved[&a.class].mass).collect();

        let outcome = motor::step_motor(
            &mut agents,
            &StepContext {
                desired: &desired,
                terrain: &terrain,
                masses: &masses,
                walls: &walls,
                bounds: spec.bounds,
                params: &spec.motor,
                seed: spec.seed,
                tick,
                dt,
            },
        );

        for (i, agent) in agents.iter_mut().enumerate() {
            let in_exit =
                matches!(agent.status, AgentStatus::Walking) && spec.in_any_exit(agent.pos);
            let transition = motor::update_status(
                agent,
                &outcome.per_agent[i],
                in_exit,
                dt,
                &spec.motor,
                resolved[&agent.class].fall_robustness,
            );
            if transition == Some(Transition::Recovered) {
                // Stand back up with a fresh plan on the next decision tick.
                agent.last_plan_time = f64::NEG_INFINITY;
            }
            if matches!(agent.status, AgentStatus::Walking) {
                if agent.vel.norm() < STALL_SPEED {
                    agent.slow_time += dt;
                } else {
                    agent.slow_time = 0.0;
                }
            }
        }

        let frame = build_frame(
            tick,
            &agents,
            &outcome.events,
            &breakdowns,
            &replans,
            config,
            dt,
        );
        sink.frame(&frame)?;
        acc.push(&frame);
    }

    sink.finish()?;
    let metrics = acc.finish();
    Ok(RunStats {
        metrics,
        ticks: ticks_run,
        wall_seconds: started.elapsed().as_secs_f64(),
        sim_seconds: ticks_run as f64 * dt,
    })
}

fn build_frame(
    tick: u64,
    agents: &[Agent],
    events: &[motor::ContactEvent],
    breakdowns: &[Option<ForceBreakdown>],
    replans: &[PlannedPath],
    config: &SimConfig,
    dt: f64,
) -> TraceFrame {
    let records: Vec<AgentRecord> = agents
        .iter()
        .map(|a| AgentRecord {
            id: a.id,
            class: a.class,
            pos: a.pos,
            vel: a.vel,
            status: a.status,
            gait: a.gait.value,
        })
        .collect();
    let mut contacts = ContactSummary {
        count: events.len(),
        total_impulse: 0.0,
        max_impulse: 0.0,
    };
    for ev in events {
        contacts.total_impulse += ev.impulse;
        contacts.max_impulse = contacts.max_impulse.max(ev.impulse);
    }
    let forces = config.dump_forces.then(|| {
        let poses: Vec<AgentPose> = agents
            .iter()
            .map(|a| AgentPose {
                id: a.id,
                pos: a.pos,
                heading: a.heading,
                fallen: a.status.is_down(),
            })
            .collect();
        forces::accumulate_tick(&poses, events, dt, tick)
    });
    let force_components = config.dump_forces.then(|| {
        agents
            .iter()
            .zip(breakdowns)
            .filter_map(|(a, b)| {
                b.map(|b| ForceComponents {
                    id: a.id,
                    drive: b.drive,
                    repulsive: b.repulsive,
                    evasive: b.evasive,
                })
            })
            .collect()
    });
    let planned_paths = (config.dump_paths && !replans.is_empty()).then(|| replans.to_vec());
    TraceFrame {
        tick,
        agents: records,
        contacts,
        forces,
        force_components,
        planned_paths,
    }
}

/// Plan from a position, nudging to the nearest free cell when the exact
/// position sits in a blocked cell (crowd pressure can push a body that far).
fn plan_from(grid: &NavGrid, pos: Vec2) -> Result<WaypointPath, PlanError> {
    match pathfind::plan(grid, pos) {
        Err(PlanError::StartBlocked | PlanError::StartOutOfBounds) => {
            let (cx, cy) = grid
                .cell_at(pos)
                .unwrap_or((0, 0));
            let mut best: Option<(f64, usize, usize)> = None;
            for dy in -2i64..=2 {
                for dx in -2i64..=2 {
                    let (nx, ny) = (cx as i64 + dx, cy as i64 + dy);
                    if nx < 0 || ny < 0 || nx as usize >= grid.width || ny as usize >= grid.height {
                        continue;
                    }
                    let (nx, ny) = (nx as usize, ny as usize);
                    if grid.blocked[grid.idx(nx, ny)] {
                        continue;
                    }
                    let d = grid.cell_center(nx, ny).distance(pos);
                    if best.map_or(true, |(bd, _, _)| d < bd) {
                        best = Some((d, nx, ny));
                    }
                }
            }
            match best {
                Some((_, nx, ny)) => pathfind::plan(grid, grid.cell_center(nx, ny)),
                None => Err(PlanError::StartBlocked),
            }
        }
        other => other,
    }
}

/// Cost overlay marking cells covered by fallen bodies; used for replanning
/// around pileups. Costs only rise, so reachability never changes.
fn overlay_grid(grid: &NavGrid, down: &[Vec2], body_radius: f64) -> NavGrid {
    let mut overlay = grid.clone();
    for &p in down {
        let lo = p - crate::geom::vec2(body_radius, body_radius);
        let hi = p + crate::geom::vec2(body_radius, body_radius);
        let (Some((x0, y0)), Some((x1, y1))) = (
            overlay.cell_at(crate::geom::vec2(
                lo.x.max(overlay.origin.x),
                lo.y.max(overlay.origin.y),
            )),
            overlay.cell_at(crate::geom::vec2(
                hi.x.min(overlay.origin.x + overlay.width as f64 * overlay.cell_size - 1e-9),
                hi.y.min(overlay.origin.y + overlay.height as f64 * overlay.cell_size - 1e-9),
            )),
        ) else {
            continue;
        };
        for y in y0..=y1 {
            for x in x0..=x1 {
                let idx = overlay.idx(x, y);
                overlay.cost[idx] *= DOWN_COST_FACTOR;
            }
        }
    }
    overlay
}

/// True when at least two fallen bodies sit on the lane to the next waypoint.
fn corridor_blocked(agent: &Agent, down: &[Vec2], body_radius: f64, arrive_radius: f64) -> bool {
    if down.len() < 2 {
        return false;
    }
    let Some(path) = &agent.path else {
        return false;
    };
    let Some(&target) = path.remaining().first() else {
        return false;
    };
    if agent.pos.distance(target) <= arrive_radius {
        return false;
    }
    let lane = Segment::new(agent.pos, target);
    let mut hits = 0;
    for &p in down {
        if lane.distance_to_point(p) < 2.0 * body_radius {
            hits += 1;
            if hits >= 2 {
                return true;
            }
        }
    }
    false
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::vec2;
    use crate::scenario::presets;
    use crate::trace::MemorySink;

    #[test]
    fn single_agent_escapes_straight_corridor() {
        let spec = presets::calibration_corridor(ClassName::Young);
        let config = SimConfig {
            max_ticks: 4000,
            ..SimConfig::default()
        };
        let mut sink = MemorySink::default();
        let stats = run(&spec, &config, &ClassTable::default(), &mut sink).unwrap();
        assert_eq!(stats.metrics.escaped, 1);
        assert_eq!(stats.metrics.success_rate, 1.0);
        assert_eq!(stats.metrics.fallen_count, 0);

        // Liveness: distance to the exit never increases over 5 s windows
        // while walking.
        let goal = vec2(34.0, 2.0);
        let window = (5.0 / config.dt) as usize;
        let dist: Vec<Option<f64>> = sink
            .frames
            .iter()
            .map(|f| {
                let a = &f.agents[0];
                matches!(a.status, AgentStatus::Walking).then(|| a.pos.distance(goal))
            })
            .collect();
        for i in 0..dist.len().saturating_sub(window) {
            if let (Some(d0), Some(d1)) = (dist[i], dist[i + window]) {
                assert!(
                    d1 <= d0 + 1e-6,
                    "geodesic distance increased over a 5 s window at frame {i}"
                );
            }
        }
    }

    #[test]
    fn zero_agents_clean_exit() {
        let mut spec = presets::room_evacuation(10, 1);
        spec.spawns.clear();
        let config = SimConfig::default();
        let mut sink = MemorySink::default();
        let stats = run(&spec, &config, &ClassTable::default(), &mut sink).unwrap();
        assert_eq!(stats.ticks, 0);
        assert!(sink.frames.is_empty());
        assert_eq!(stats.metrics.total_agents, 0);
        assert_eq!(stats.metrics.fallen_count, 0);
    }

    #[test]
    fn neighbor_query_matches_brute_force() {
        let mut rng = crate::rng::SplitMix64::new(0xFEED);
        let mut agents: Vec<Agent> = (0..120)
            .map(|i| {
                Agent::new(
                    i,
                    ClassName::NonPersonalized,
                    vec2(rng.range_f64(0.0, 20.0), rng.range_f64(0.0, 12.0)),
                    30,
                )
            })
            .collect();
        agents[5].status = AgentStatus::Fallen { time_down: 0.1 };
        agents[9].status = AgentStatus::Escaped;
        let snap = WorldSnapshot::build(&agents, STALL_WINDOW, (vec2(0.0, 0.0), vec2(20.0, 12.0)));

        for probe in 0..40 {
            let pos = vec2(rng.range_f64(0.0, 20.0), rng.range_f64(0.0, 12.0));
            let range = rng.range_f64(0.2, 5.0);
            let got = snap.query_neighbors(pos, range, u64::MAX);
            // Brute force over non-escaped agents.
            let mut expect: Vec<(f64, u64)> = agents
                .iter()
                .filter(|a| !matches!(a.status, AgentStatus::Escaped))
                .filter(|a| a.pos.distance(pos) <= range)
                .map(|a| (a.pos.distance(pos), a.id))
                .collect();
            expect.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            assert_eq!(
                got.iter().map(|n| n.id).collect::<Vec<_>>(),
                expect.iter().map(|&(_, id)| id).collect::<Vec<_>>(),
                "probe {probe} mismatch"
            );
            // Sorted ascending by distance.
            for w in got.windows(2) {
                assert!(w[0].rel_pos.norm() <= w[1].rel_pos.norm() + 1e-12);
            }
        }

        // Degenerate queries.
        assert!(snap.query_neighbors(vec2(-50.0, -50.0), 1.0, u64::MAX).is_empty());
        let tight = snap.query_neighbors(agents[0].pos, 1e-6, agents[0].id);
        assert!(tight.iter().all(|n| n.id != agents[0].id));
    }

    #[test]
    fn decisions_are_order_independent() {
        let spec = presets::room_evacuation(30, 5);
        let grid = scenario::rasterize(&spec);
        let spawned = scenario::spawn_positions(&spec, &grid).unwrap();
        let mut agents: Vec<Agent> = spawned
            .iter()
            .enumerate()
            .map(|(i, s)| Agent::new(i as u64, s.class, s.pos, 30))
            .collect();
        for agent in agents.iter_mut() {
            agent.path = Some(pathfind::plan(&grid, agent.pos).unwrap());
        }
        let snap = WorldSnapshot::build(&agents, STALL_WINDOW, (spec.bounds.min, spec.bounds.max));
        let table = ClassTable::default();
        let coeffs = SfmCoefficients::default();

        let decide_one = |agent: &Agent| {
            let class = table.get(agent.class);
            let target = agent.path.as_ref().unwrap().remaining()[0];
            let input = DecisionInput {
                self_id: agent.id,
                self_pos: agent.pos,
                self_vel: agent.vel,
                desired_dir: (target - agent.pos).normalize_or_zero(),
                v_setting: class.v_setting,
                v_max: class.v_max,
                neighbors: snap.query_neighbors(agent.pos, coeffs.sense_range, agent.id),
            };
            sfm::decide(&input, &coeffs, 0.25, 0.05, &grid).0
        };

        let forward: Vec<Vec2> = agents.iter().map(decide_one).collect();
        let mut reversed: Vec<Vec2> = agents.iter().rev().map(decide_one).collect();
        reversed.reverse();
        assert_eq!(forward, reversed, "permuted evaluation must be bit-identical");
    }

    #[test]
    fn evasion_routes_past_fallen_blocker_and_ablation_stalls() {
        // Scripted corridor: a trampled body mid-lane; the walker starts
        // exactly on the blocker's axis so only the evasive force can break
        // the symmetry.
        let corridor = |k_evade: f64| -> (bool, f64) {
            let mut spec = presets::calibration_corridor(ClassName::NonPersonalized);
            spec.bounds = crate::geom::Rect::new(vec2(0.0, 0.0), vec2(20.0, 4.0));
            spec.walls = vec![
                Segment::new(vec2(0.0, 0.0), vec2(20.0, 0.0)),
                Segment::new(vec2(0.0, 4.0), vec2(20.0, 4.0)),
                Segment::new(vec2(0.0, 0.0), vec2(0.0, 4.0)),
                Segment::new(vec2(20.0, 0.0), vec2(20.0, 1.0)),
                Segment::new(vec2(20.0, 3.0), vec2(20.0, 4.0)),
            ];
            spec.exits = vec![crate::scenario::ExitRegion {
                a: vec2(20.0, 1.0),
                b: vec2(20.0, 3.0),
                width: 0.8,
            }];
            spec.spawns = vec![crate::scenario::SpawnGroup {
                region: crate::geom::Polygon::rect(vec2(0.6, 0.6), vec2(3.4, 3.4)),
                count: 2,
                class_mix: std::collections::BTreeMap::from([(ClassName::NonPersonalized, 1.0)]),
            }];
            spec.sfm.k_evade = Some(k_evade);
            spec.name = format!("evasion_regression_{k_evade}");
            let config = SimConfig {
                max_ticks: 1800, // 30 s budget
                ..SimConfig::default()
            };
            let mut sink = MemorySink::default();
            let stats = run_scripted(
                &spec,
                &config,
                &ClassTable::default(),
                &mut sink,
                |agents| {
                    agents[0].pos = vec2(10.0, 2.0);
                    agents[0].status = AgentStatus::Trampled;
                    agents[1].pos = vec2(2.0, 2.0);
                },
            )
            .unwrap();
            let walker_x = sink
                .frames
                .last()
                .map(|f| f.agents[1].pos.x)
                .unwrap_or(0.0);
            (stats.metrics.escaped >= 1, walker_x)
        };

        let (escaped_with, _) = corridor(2.0);
        assert!(escaped_with, "evading walker must pass within the budget");
        let (escaped_without, stalled_x) = corridor(0.0);
        assert!(
            !escaped_without && stalled_x < 10.0,
            "k_evade = 0 must stall behind the blocker (reached x = {stalled_x:.2})"
        );
    }

    #[test]
    fn determinism_across_thread_hints() {
        let spec = presets::room_evacuation(20, 11);
        let run_with_threads = |threads: usize| -> Vec<u8> {
            let config = SimConfig {
                max_ticks: 360,
                threads: Some(threads),
                ..SimConfig::default()
            };
            let mut sink = MemorySink::default();
            run(&spec, &config, &ClassTable::default(), &mut sink).unwrap();
            sink.frames
                .iter()
                .flat_map(|f| serde_json::to_vec(f).unwrap())
                .collect()
        };
        assert_eq!(run_with_threads(1), run_with_threads(4));
    }

    #[test]
    fn missing_calibration_detected() {
        let spec = presets::room_evacuation(10, 1);
        let calib = CalibrationTable::default();
        let err = check_calibration_coverage(&spec, &calib).unwrap_err();
        assert!(matches!(err, EngineError::MissingCalibration(_)));
    }
}
