//! Reduced-order locomotion and contact stage.
//!
//! Agents are 2D discs. Walking agents relax their velocity toward the
//! commanded velocity (terrain-scaled), advance a speed-coupled gait phase,
//! and resolve disc-disc / disc-wall contacts with a restitution-free
//! sequential-impulse solver plus positional correction. Contacts on fallen
//! bodies use a soft penalty so walkers can step over them while the trampling
//! impulses are still recorded. Terrain can also trip walkers stochastically
//! via a counter-based per-agent stream, keeping runs reproducible under any
//! thread count.

use crate::calib::ClassName;
use crate::geom::{vec2, Rect, Segment, Vec2};
use crate::pathfind::WaypointPath;
use crate::rng::{counter_hash, counter_unit};
use crate::spatial::SpatialHash;
use serde::{Deserialize, Serialize};
use std::f64::consts::{PI, TAU};

/// Motor-stage constants. All thresholds are configuration, overridable from
/// the scenario file's `[motor]` block.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotorParams {
    /// Disc radius of every agent body (m).
    pub body_radius: f64,
    /// Velocity relaxation time on normal ground (s); scaled by
    /// 1/friction_scale on low-friction terrain.
    pub tau_motor: f64,
    /// Rolling window for fall-triggering impulse accumulation (s).
    pub contact_window: f64,
    /// Windowed impulse above which a walking agent falls (N*s), scaled by
    /// the class fall robustness.
    pub i_fall: f64,
    /// Single-partner tick impulse that counts as a heavy step on a fallen
    /// agent (N*s).
    pub i_step: f64,
    /// Distinct heavy-contact sources that tramples a fallen agent.
    pub k_trample: usize,
    /// Seconds down without heavy contact before a fallen agent stands up.
    pub t_recover: f64,
    /// Step length used to couple gait frequency to speed (m).
    pub stride_length: f64,
    /// Amplitude of the within-cycle speed pulsation.
    pub gait_amplitude: f64,
    /// Penalty stiffness for stepping over fallen bodies (N/m).
    pub contact_stiffness: f64,
    /// Penalty damping for stepping over fallen bodies (N*s/m).
    pub contact_damping: f64,
    /// Fraction of the step-over impulse fed back to the walker.
    pub stepover_reaction: f64,
    pub solver_iterations: usize,
    pub projection_iterations: usize,
    /// Penetration allowed before positional correction engages (m).
    pub contact_slop: f64,
    /// Velocity-level positional stabilization factor.
    pub baumgarte: f64,
}

impl Default for MotorParams {
    fn default() -> Self {
        MotorParams {
            body_radius: 0.25,
            tau_motor: 0.3,
            contact_window: 0.5,
            i_fall: 25.0,
            i_step: 8.0,
            k_trample: 3,
            t_recover: 3.0,
            stride_length: 0.65,
            gait_amplitude: 0.12,
            contact_stiffness: 2000.0,
            contact_damping: 50.0,
            stepover_reaction: 0.3,
            solver_iterations: 8,
            projection_iterations: 8,
            contact_slop: 0.01,
            baumgarte: 0.2,
        }
    }
}

/// Behavioral status. `Escaped` and `Trampled` are terminal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentStatus {
    Walking,
    Fallen { time_down: f64 },
    Trampled,
    Escaped,
    Trapped,
}

impl AgentStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, AgentStatus::Escaped | AgentStatus::Trampled)
    }

    pub fn is_down(self) -> bool {
        matches!(self, AgentStatus::Fallen { .. } | AgentStatus::Trampled)
    }
}

/// Cyclic locomotion phase in [0,1), advanced by a speed-coupled frequency.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GaitPhase {
    pub value: f64,
    pub frequency: f64,
}

/// Rolling per-tick impulse sums over the fall window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImpulseWindow {
    ring: Vec<f64>,
    head: usize,
}

impl ImpulseWindow {
    pub fn new(ticks: usize) -> ImpulseWindow {
        ImpulseWindow {
            ring: vec![0.0; ticks.max(1)],
            head: 0,
        }
    }

    pub fn push(&mut self, tick_sum: f64) {
        self.head = (self.head + 1) % self.ring.len();
        self.ring[self.head] = tick_sum;
    }

    pub fn sum(&self) -> f64 {
        self.ring.iter().sum()
    }

    pub fn clear(&mut self) {
        self.ring.fill(0.0);
    }
}

#[derive(Debug, Clone)]
pub struct Agent {
    pub id: u64,
    pub class: ClassName,
    pub pos: Vec2,
    pub vel: Vec2,
    pub heading: f64,
    pub status: AgentStatus,
    pub gait: GaitPhase,
    pub contact_window: ImpulseWindow,
    pub path: Option<WaypointPath>,
    /// Seconds spent below the stall speed while walking.
    pub slow_time: f64,
    /// Simulation time of the last (re)plan, seconds.
    pub last_plan_time: f64,
    /// Distinct heavy-contact sources received during the current down spell.
    pub down_heavy_sources: Vec<u64>,
}

impl Agent {
    pub fn new(id: u64, class: ClassName, pos: Vec2, window_ticks: usize) -> Agent {
        Agent {
            id,
            class,
            pos,
            vel: Vec2::ZERO,
            heading: 0.0,
            status: AgentStatus::Walking,
            gait: GaitPhase::default(),
            contact_window: ImpulseWindow::new(window_ticks),
            path: None,
            slow_time: 0.0,
            last_plan_time: f64::NEG_INFINITY,
            down_heavy_sources: Vec::new(),
        }
    }
}

/// One side of a contact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContactBody {
    Agent(u64),
    Wall(u32),
}

impl ContactBody {
    pub fn key(self) -> u64 {
        match self {
            ContactBody::Agent(id) => id << 1,
            ContactBody::Wall(w) => (u64::from(w) << 1) | 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContactEvent {
    pub a: ContactBody,
    pub b: ContactBody,
    pub point: Vec2,
    /// Unit normal from body `a` toward body `b`.
    pub normal: Vec2,
    /// Total impulse exchanged this tick (N*s).
    pub impulse: f64,
}

/// Terrain influence at an agent's position, resolved by the caller.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TerrainEffect {
    pub friction_scale: f64,
    pub speed_scale: f64,
    pub trip_rate: f64,
}

impl Default for TerrainEffect {
    fn default() -> Self {
        TerrainEffect {
            friction_scale: 1.0,
            speed_scale: 1.0,
            trip_rate: 0.0,
        }
    }
}

/// Per-agent contact digest for one tick.
#[derive(Debug, Clone, Default)]
pub struct AgentTick {
    pub impulse_sum: f64,
    /// Contact sources whose single-tick impulse exceeded `i_step`.
    pub heavy_sources: Vec<u64>,
    pub tripped: bool,
}

#[derive(Debug, Default)]
pub struct TickOutcome {
    pub events: Vec<ContactEvent>,
    pub per_agent: Vec<AgentTick>,
}

pub struct StepContext<'a> {
    /// Commanded velocity per agent, from the decision stage.
    pub desired: &'a [Vec2],
    /// Terrain effect at each agent's position.
    pub terrain: &'a [TerrainEffect],
    /// Body mass per agent (kg).
    pub masses: &'a [f64],
    pub walls: &'a [Segment],
    pub bounds: Rect,
    pub params: &'a MotorParams,
    pub seed: u64,
    pub tick: u64,
    pub dt: f64,
}

const TRIP_STREAM: u64 = 0x7121;

struct Contact {
    i: usize,
    /// Other agent index, or None for a wall contact.
    j: Option<usize>,
    body_b: ContactBody,
    normal: Vec2,
    point: Vec2,
    m_eff: f64,
    inv_i: f64,
    inv_j: f64,
    lambda: f64,
}

/// Advance every agent by one fixed timestep and resolve contacts.
///
/// Panics with a diagnostic if a commanded velocity is not finite; the
/// decision stage guarantees finiteness for finite inputs.
pub fn step_motor(agents: &mut [Agent], ctx: &StepContext) -> TickOutcome {
    let n = agents.len();
    assert_eq!(ctx.desired.len(), n);
    for (i, d) in ctx.desired.iter().enumerate() {
        assert!(
            d.is_finite(),
            "non-finite desired velocity for agent index {i}: ({}, {})",
            d.x,
            d.y
        );
    }
    let p = ctx.params;
    let dt = ctx.dt;

    // Velocity relaxation and gait phase advance.
    for (i, agent) in agents.iter_mut().enumerate() {
        match agent.status {
            AgentStatus::Walking => {
                let eff = ctx.terrain[i];
                let tau_eff = p.tau_motor / eff.friction_scale.max(1e-6);
                let alpha = (dt / tau_eff).min(1.0);
                let target = ctx.desired[i] * eff.speed_scale;
                agent.vel += (target - agent.vel) * alpha;
            }
            _ => agent.vel = Vec2::ZERO,
        }
        let speed = agent.vel.norm();
        agent.gait.frequency = if speed < 0.05 {
            0.0
        } else {
            speed / (2.0 * p.stride_length)
        };
        agent.gait.value = (agent.gait.value + agent.gait.frequency * dt).rem_euclid(1.0);
    }

    // Broad phase over all grounded colliders (escaped agents are gone).
    let collidable: Vec<usize> = (0..n)
        .filter(|&i| !matches!(agents[i].status, AgentStatus::Escaped))
        .collect();
    let hash = SpatialHash::build(
        ctx.bounds.min,
        ctx.bounds.max - ctx.bounds.min,
        (4.0 * p.body_radius).max(0.5),
        collidable.iter().map(|&i| (i as u32, agents[i].pos)),
    );
    let margin = 2.0 * p.body_radius + 0.1;
    let mut pair_set: Vec<(usize, usize)> = Vec::new();
    let mut scratch = Vec::new();
    for &i in &collidable {
        scratch.clear();
        hash.candidates_into(agents[i].pos, margin, &mut scratch);
        for &jc in &scratch {
            let j = jc as usize;
            if j > i && agents[i].pos.distance(agents[j].pos) < margin {
                pair_set.push((i, j));
            }
        }
    }
    pair_set.sort_unstable();

    let diameter = 2.0 * p.body_radius;
    let is_dynamic = |a: &Agent| matches!(a.status, AgentStatus::Walking);
    let is_prone = |a: &Agent| a.status.is_down();

    // Split narrow-phase pairs: impulse-solver contacts between upright
    // bodies, soft step-over contacts against prone bodies.
    let mut contacts: Vec<Contact> = Vec::new();
    let mut stepovers: Vec<(usize, usize)> = Vec::new();
    for &(i, j) in &pair_set {
        let (ai, aj) = (&agents[i], &agents[j]);
        if ai.pos.distance(aj.pos) >= diameter {
            continue;
        }
        match (is_prone(ai), is_prone(aj)) {
            (true, true) => {}
            (false, true) => stepovers.push((i, j)),
            (true, false) => stepovers.push((j, i)),
            (false, false) => {
                if !is_dynamic(ai) && !is_dynamic(aj) {
                    continue;
                }
                let delta = aj.pos - ai.pos;
                let normal = delta.try_normalize().unwrap_or_else(|| {
                    let h = counter_hash(ai.id.min(aj.id), ai.id.max(aj.id), 0xC0);
                    let angle = TAU * (h >> 11) as f64 / (1u64 << 53) as f64;
                    vec2(angle.cos(), angle.sin())
                });
                let inv_i = if is_dynamic(ai) { 1.0 / ctx.masses[i] } else { 0.0 };
                let inv_j = if is_dynamic(aj) { 1.0 / ctx.masses[j] } else { 0.0 };
                contacts.push(Contact {
                    i,
                    j: Some(j),
                    body_b: ContactBody::Agent(aj.id),
                    normal,
                    point: ai.pos + delta * 0.5,
                    m_eff: 1.0 / (inv_i + inv_j),
                    inv_i,
                    inv_j,
                    lambda: 0.0,
                });
            }
        }
    }

    // Disc-wall contacts for dynamic agents.
    for &i in &collidable {
        if !is_dynamic(&agents[i]) {
            continue;
        }
        for (w, wall) in ctx.walls.iter().enumerate() {
            let closest = wall.closest_point(agents[i].pos);
            let delta = closest - agents[i].pos;
            let dist = delta.norm();
            if dist >= p.body_radius || dist < 1e-12 {
                continue;
            }
            contacts.push(Contact {
                i,
                j: None,
                body_b: ContactBody::Wall(w as u32),
                normal: delta / dist,
                point: closest,
                m_eff: ctx.masses[i],
                inv_i: 1.0 / ctx.masses[i],
                inv_j: 0.0,
                lambda: 0.0,
            });
        }
    }

    // Restitution-free sequential impulses with positional bias.
    for _ in 0..p.solver_iterations {
        for c in contacts.iter_mut() {
            let vel_j = c.j.map_or(Vec2::ZERO, |j| agents[j].vel);
            let v_sep = (vel_j - agents[c.i].vel).dot(c.normal);
            let dist = match c.j {
                Some(j) => agents[c.i].pos.distance(agents[j].pos),
                None => agents[c.i].pos.distance(c.point),
            };
            let target = if c.j.is_some() { diameter } else { p.body_radius };
            let depth = target - dist;
            let bias = p.baumgarte * (depth - p.contact_slop).max(0.0) / dt;
            let want = bias.max(0.0);
            let delta_l = c.m_eff * (want - v_sep);
            let new_l = (c.lambda + delta_l).max(0.0);
            let applied = new_l - c.lambda;
            c.lambda = new_l;
            if applied != 0.0 {
                agents[c.i].vel -= c.normal * (applied * c.inv_i);
                if let Some(j) = c.j {
                    agents[j].vel += c.normal * (applied * c.inv_j);
                }
            }
        }
    }

    // Step-over penalty against prone bodies: full impulse recorded on the
    // body, a reduced reaction deflects the walker.
    let mut stepover_events: Vec<(usize, usize, f64, Vec2, Vec2)> = Vec::new();
    for &(walker, prone) in &stepovers {
        let delta = agents[walker].pos - agents[prone].pos;
        let dist = delta.norm();
        let depth = diameter - dist;
        if depth <= 0.0 {
            continue;
        }
        let normal = delta.try_normalize().unwrap_or(vec2(1.0, 0.0));
        let approach = (-agents[walker].vel).dot(normal).max(0.0);
        let force = p.contact_stiffness * depth + p.contact_damping * approach;
        let impulse = force * dt;
        if matches!(agents[walker].status, AgentStatus::Walking) {
            let kick = normal * (impulse * p.stepover_reaction / ctx.masses[walker]);
            agents[walker].vel += kick;
        }
        let point = agents[prone].pos + (agents[walker].pos - agents[prone].pos) * 0.5;
        stepover_events.push((walker, prone, impulse, point, -normal));
    }

    // Integrate positions; the gait pulsation modulates stride speed.
    for agent in agents.iter_mut() {
        if matches!(agent.status, AgentStatus::Walking) {
            let modulation = 1.0 + p.gait_amplitude * (2.0 * TAU * agent.gait.value).cos();
            agent.pos += agent.vel * (modulation * dt);
            if agent.vel.norm() > 0.05 {
                agent.heading = agent.vel.angle();
            }
        }
    }

    // Positional correction between upright bodies and against walls keeps
    // residual penetration inside the tolerance.
    let mut projection_push: Vec<f64> = vec![0.0; contacts.len()];
    for _ in 0..p.projection_iterations {
        for (ci, c) in contacts.iter().enumerate() {
            match c.j {
                Some(j) => {
                    let delta = agents[j].pos - agents[c.i].pos;
                    let dist = delta.norm().max(1e-9);
                    let depth = diameter - dist - p.contact_slop * 0.5;
                    if depth <= 0.0 {
                        continue;
                    }
                    let nrm = delta / dist;
                    let total_inv = c.inv_i + c.inv_j;
                    if total_inv == 0.0 {
                        continue;
                    }
                    let corr = 0.9 * depth;
                    let share_i = c.inv_i / total_inv;
                    let share_j = c.inv_j / total_inv;
                    agents[c.i].pos -= nrm * (corr * share_i);
                    agents[j].pos += nrm * (corr * share_j);
                    projection_push[ci] += corr;
                }
                None => {
                    let wall = &ctx.walls[match c.body_b {
                        ContactBody::Wall(w) => w as usize,
                        ContactBody::Agent(_) => unreachable!(),
                    }];
                    let closest = wall.closest_point(agents[c.i].pos);
                    let delta = agents[c.i].pos - closest;
                    let dist = delta.norm().max(1e-9);
                    let depth = p.body_radius - dist;
                    if depth <= 0.0 {
                        continue;
                    }
                    let corr = 0.9 * depth;
                    agents[c.i].pos += (delta / dist) * corr;
                    projection_push[ci] += corr;
                }
            }
        }
    }

    // Emit events and per-agent digests.
    let mut outcome = TickOutcome {
        events: Vec::new(),
        per_agent: vec![AgentTick::default(); n],
    };
    for (ci, c) in contacts.iter().enumerate() {
        let implied = c.m_eff * projection_push[ci] / dt;
        let impulse = c.lambda + implied;
        if impulse <= 1e-12 {
            continue;
        }
        let a_body = ContactBody::Agent(agents[c.i].id);
        outcome.events.push(ContactEvent {
            a: a_body,
            b: c.body_b,
            point: c.point,
            normal: c.normal,
            impulse,
        });
        record(&mut outcome.per_agent[c.i], c.body_b, impulse, p);
        if let Some(j) = c.j {
            record(&mut outcome.per_agent[j], a_body, impulse, p);
        }
    }
    for &(walker, prone, impulse, point, normal) in &stepover_events {
        if impulse <= 1e-12 {
            continue;
        }
        let a_body = ContactBody::Agent(agents[walker].id);
        let b_body = ContactBody::Agent(agents[prone].id);
        outcome.events.push(ContactEvent {
            a: a_body,
            b: b_body,
            point,
            // From the walker toward the prone body.
            normal,
            impulse,
        });
        record(&mut outcome.per_agent[walker], b_body, impulse, p);
        record(&mut outcome.per_agent[prone], a_body, impulse, p);
    }

    // Terrain trips and impulse windows.
    for (i, agent) in agents.iter_mut().enumerate() {
        if matches!(agent.status, AgentStatus::Walking) {
            let rate = ctx.terrain[i].trip_rate;
            if rate > 0.0 && counter_unit(ctx.seed, TRIP_STREAM ^ agent.id, ctx.tick) < rate * dt {
                outcome.per_agent[i].tripped = true;
            }
        }
        if !agent.status.is_terminal() {
            agent.contact_window.push(outcome.per_agent[i].impulse_sum);
        }
    }

    outcome
}

fn record(tick: &mut AgentTick, source: ContactBody, impulse: f64, p: &MotorParams) {
    tick.impulse_sum += impulse;
    if impulse > p.i_step {
        tick.heavy_sources.push(source.key());
    }
}

/// Status transition applied by [`update_status`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transition {
    Fell,
    Recovered,
    Trampled,
    Escaped,
    Trapped,
}

/// Apply the per-tick status rules to one agent.
///
/// Walking agents escape on exit entry, fall on terrain trips or when the
/// windowed contact impulse exceeds the robustness-scaled threshold. Fallen
/// agents recover after `t_recover` seconds free of heavy contacts (heavy
/// contacts reset the clock), and are trampled once `k_trample` distinct
/// sources have landed heavy contacts during the down spell.
pub fn update_status(
    agent: &mut Agent,
    tick: &AgentTick,
    in_exit: bool,
    dt: f64,
    params: &MotorParams,
    fall_robustness: f64,
) -> Option<Transition> {
    match agent.status {
        AgentStatus::Escaped | AgentStatus::Trampled | AgentStatus::Trapped => None,
        AgentStatus::Walking => {
            if in_exit {
                agent.status = AgentStatus::Escaped;
                agent.vel = Vec2::ZERO;
                return Some(Transition::Escaped);
            }
            let threshold = params.i_fall * fall_robustness;
            if tick.tripped || agent.contact_window.sum() > threshold {
                agent.status = AgentStatus::Fallen { time_down: 0.0 };
                agent.vel = Vec2::ZERO;
                agent.contact_window.clear();
                agent.down_heavy_sources.clear();
                return Some(Transition::Fell);
            }
            None
        }
        AgentStatus::Fallen { time_down } => {
            let mut heavy_hit = false;
            for &src in &tick.heavy_sources {
                heavy_hit = true;
                if !agent.down_heavy_sources.contains(&src) {
                    agent.down_heavy_sources.push(src);
                }
            }
            if agent.down_heavy_sources.len() >= params.k_trample {
                agent.status = AgentStatus::Trampled;
                return Some(Transition::Trampled);
            }
            let t = if heavy_hit { 0.0 } else { time_down + dt };
            if t >= params.t_recover {
                agent.status = AgentStatus::Walking;
                agent.contact_window.clear();
                agent.down_heavy_sources.clear();
                Some(Transition::Recovered)
            } else {
                agent.status = AgentStatus::Fallen { time_down: t };
                None
            }
        }
    }
}

/// Wrap an angle into (-pi, pi].
pub fn wrap_angle(a: f64) -> f64 {
    let mut r = a.rem_euclid(TAU);
    if r > PI {
        r -= TAU;
    }
    r
}
