//! World description: geometry, terrain, population, and the scenario file.
//!
//! Scenario files are TOML (key/value with nested lists, UTF-8). All lengths
//! are meters, probabilities are per second. The file may carry either
//! explicit geometry (walls/exits/spawns) or a `[corridor]` template that is
//! expanded into explicit geometry at load time.

use crate::calib::{ClassName, ClassOverrides};
use crate::geom::{vec2, OrientedRect, Polygon, Rect, Segment, Vec2};
use crate::motor::{MotorParams, TerrainEffect};
use crate::pathfind::NavGrid;
use crate::rng::SplitMix64;
use crate::sfm::SfmOverrides;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::Path;
use thiserror::Error;

pub const DEFAULT_CELL_SIZE: f64 = 0.25;
/// Default catch depth of an exit region, perpendicular to its segment.
pub const DEFAULT_EXIT_WIDTH: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerrainKind {
    Normal,
    Uneven,
    ObstacleField,
    Slippery,
}

impl TerrainKind {
    pub const ALL: [TerrainKind; 4] = [
        TerrainKind::Normal,
        TerrainKind::Uneven,
        TerrainKind::ObstacleField,
        TerrainKind::Slippery,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TerrainKind::Normal => "normal",
            TerrainKind::Uneven => "uneven",
            TerrainKind::ObstacleField => "obstacle_field",
            TerrainKind::Slippery => "slippery",
        }
    }
}

impl std::str::FromStr for TerrainKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "normal" => Ok(TerrainKind::Normal),
            "uneven" => Ok(TerrainKind::Uneven),
            "obstacle_field" => Ok(TerrainKind::ObstacleField),
            "slippery" => Ok(TerrainKind::Slippery),
            other => Err(format!("unknown terrain kind {other:?}")),
        }
    }
}

/// Ground patch altering locomotion inside its polygon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TerrainZone {
    pub kind: TerrainKind,
    pub region: Polygon,
    #[serde(default = "one")]
    pub friction_scale: f64,
    #[serde(default)]
    pub trip_rate: f64,
    #[serde(default = "one")]
    pub speed_scale: f64,
}

fn one() -> f64 {
    1.0
}

impl TerrainZone {
    /// Zone presets matching the four terrain kinds.
    pub fn preset(kind: TerrainKind, region: Polygon) -> TerrainZone {
        let (friction_scale, trip_rate, speed_scale) = match kind {
            TerrainKind::Normal => (1.0, 0.0, 1.0),
            TerrainKind::Uneven => (1.0, 0.05, 0.8),
            TerrainKind::ObstacleField => (1.0, 0.035, 0.85),
            TerrainKind::Slippery => (0.3, 0.0, 1.0),
        };
        TerrainZone {
            kind,
            region,
            friction_scale,
            trip_rate,
            speed_scale,
        }
    }

    pub fn effect(&self) -> TerrainEffect {
        TerrainEffect {
            friction_scale: self.friction_scale,
            speed_scale: self.speed_scale,
            trip_rate: self.trip_rate,
        }
    }
}

/// Exit opening: `a`-`b` is the opening segment (usually along a wall line),
/// `width` is the catch depth of the escape region perpendicular to it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExitRegion {
    pub a: Vec2,
    pub b: Vec2,
    #[serde(default = "default_exit_width")]
    pub width: f64,
}

fn default_exit_width() -> f64 {
    DEFAULT_EXIT_WIDTH
}

impl ExitRegion {
    pub fn segment(&self) -> Segment {
        Segment::new(self.a, self.b)
    }

    pub fn region(&self) -> OrientedRect {
        OrientedRect {
            spine: self.segment(),
            half_width: self.width * 0.5,
        }
    }

    pub fn contains(&self, p: Vec2) -> bool {
        self.region().contains(p)
    }
}

/// Population patch: `count` agents placed inside `region` with the given
/// class mix (fractions summing to 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpawnGroup {
    pub region: Polygon,
    pub count: usize,
    pub class_mix: BTreeMap<ClassName, f64>,
}

/// Bottleneck-scene template expanded into explicit geometry at load time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorridorTemplate {
    /// Corridor width (m); the swept variable of the width experiments.
    pub width: f64,
    pub agents: usize,
    #[serde(default = "default_terrain_kind")]
    pub terrain: TerrainKind,
    #[serde(default = "default_corridor_length")]
    pub length: f64,
    #[serde(default = "default_room_size")]
    pub room: Vec2,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub class_mix: Option<BTreeMap<ClassName, f64>>,
}

fn default_terrain_kind() -> TerrainKind {
    TerrainKind::Normal
}
fn default_corridor_length() -> f64 {
    8.0
}
fn default_room_size() -> Vec2 {
    vec2(12.0, 10.0)
}

/// Static world description plus population and engine-tuning blocks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub name: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_cell_size")]
    pub cell_size: f64,
    pub bounds: Rect,
    #[serde(default, skip_serializing_if = "SfmOverrides::is_empty")]
    pub sfm: SfmOverrides,
    #[serde(default, skip_serializing_if = "is_default_motor")]
    pub motor: MotorParams,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub classes: BTreeMap<ClassName, ClassOverrides>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corridor: Option<CorridorTemplate>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub walls: Vec<Segment>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub exits: Vec<ExitRegion>,
    #[serde(default, rename = "terrain", skip_serializing_if = "Vec::is_empty")]
    pub terrain_zones: Vec<TerrainZone>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub spawns: Vec<SpawnGroup>,
}

fn default_cell_size() -> f64 {
    DEFAULT_CELL_SIZE
}

fn is_default_motor(m: &MotorParams) -> bool {
    *m == MotorParams::default()
}

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("{path}: {message}")]
    Validation { path: String, message: String },
}

fn invalid(path: impl Into<String>, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Validation {
        path: path.into(),
        message: message.into(),
    }
}

impl ScenarioSpec {
    pub fn from_toml_str(text: &str) -> Result<ScenarioSpec, ScenarioError> {
        toml::from_str(text).map_err(|e| ScenarioError::Parse(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String, ScenarioError> {
        toml::to_string_pretty(self).map_err(|e| ScenarioError::Parse(e.to_string()))
    }

    /// Expand the corridor template (if any) into explicit geometry. The
    /// template is consumed so a serialized expanded spec round-trips.
    pub fn expand(&mut self) -> Result<(), ScenarioError> {
        let Some(template) = self.corridor.take() else {
            return Ok(());
        };
        if !self.walls.is_empty() || !self.exits.is_empty() || !self.spawns.is_empty() {
            return Err(invalid(
                "corridor",
                "template scenarios must not also declare walls/exits/spawns",
            ));
        }
        let expanded = presets::bottleneck_corridor_from(&template, self.seed);
        self.bounds = expanded.bounds;
        self.walls = expanded.walls;
        self.exits = expanded.exits;
        self.terrain_zones = expanded.terrain_zones;
        self.spawns = expanded.spawns;
        Ok(())
    }

    /// Combined terrain effect at a position. Overlapping zones combine to the
    /// most restrictive values (min friction/speed, max trip rate).
    pub fn effect_at(&self, p: Vec2) -> TerrainEffect {
        let mut eff = TerrainEffect::default();
        for zone in &self.terrain_zones {
            if zone.region.contains(p) {
                eff.friction_scale = eff.friction_scale.min(zone.friction_scale);
                eff.speed_scale = eff.speed_scale.min(zone.speed_scale);
                eff.trip_rate = eff.trip_rate.max(zone.trip_rate);
            }
        }
        eff
    }

    pub fn in_any_exit(&self, p: Vec2) -> bool {
        self.exits.iter().any(|e| e.contains(p))
    }

    /// Wall set the motor collides against: declared walls plus the domain
    /// boundary. Escape triggers before boundary contact because exit regions
    /// reach deeper than the body radius.
    pub fn collision_walls(&self) -> Vec<Segment> {
        let mut walls = self.walls.clone();
        walls.extend(self.bounds.edges());
        walls
    }

    pub fn total_agents(&self) -> usize {
        self.spawns.iter().map(|s| s.count).sum()
    }

    /// Validate every structural invariant; errors carry the field path.
    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.corridor.is_some() {
            return Err(invalid("corridor", "expand() must run before validate()"));
        }
        if !(self.bounds.area() > 0.0) {
            return Err(invalid("bounds", "area must be positive"));
        }
        let max_cell = self.bounds.width().min(self.bounds.height()) / 4.0;
        if !(self.cell_size > 0.0 && self.cell_size <= max_cell) {
            return Err(invalid(
                "cell_size",
                format!("must be in (0, {max_cell:.3}] for these bounds"),
            ));
        }
        for (i, wall) in self.walls.iter().enumerate() {
            if !self.bounds.contains(wall.a) || !self.bounds.contains(wall.b) {
                return Err(invalid(format!("walls[{i}]"), "segment leaves bounds"));
            }
        }
        if self.exits.is_empty() {
            return Err(invalid("exits", "at least one exit"));
        }
        for (i, exit) in self.exits.iter().enumerate() {
            let path = format!("exits[{i}]");
            if !self.bounds.contains(exit.a) || !self.bounds.contains(exit.b) {
                return Err(invalid(path, "segment leaves bounds"));
            }
            if exit.width < 0.5 {
                return Err(invalid(path, "width must be at least 0.5 m (one body diameter)"));
            }
            if exit.segment().length() < 0.5 {
                return Err(invalid(path, "opening must span at least one body diameter"));
            }
            for (w, wall) in self.walls.iter().enumerate() {
                if properly_intersects(&exit.segment(), wall) {
                    return Err(invalid(path, format!("intersects walls[{w}]")));
                }
            }
        }
        for (i, zone) in self.terrain_zones.iter().enumerate() {
            let path = format!("terrain[{i}]");
            if zone.region.vertices.len() < 3 {
                return Err(invalid(path, "region needs at least 3 vertices"));
            }
            if zone.region.area() <= 0.0 {
                return Err(invalid(path, "region area must be positive"));
            }
            for v in &zone.region.vertices {
                if !self.bounds.contains(*v) {
                    return Err(invalid(path, "region leaves bounds"));
                }
            }
            if !(zone.friction_scale > 0.0) {
                return Err(invalid(path, "friction_scale must be positive"));
            }
            if !(0.0..=1.0).contains(&zone.trip_rate) {
                return Err(invalid(path, "trip_rate must lie in [0,1]"));
            }
            if !(zone.speed_scale > 0.0 && zone.speed_scale <= 1.0) {
                return Err(invalid(path, "speed_scale must lie in (0,1]"));
            }
            match zone.kind {
                TerrainKind::Normal => {
                    if zone.friction_scale != 1.0 || zone.trip_rate != 0.0 || zone.speed_scale != 1.0
                    {
                        return Err(invalid(path, "normal terrain must be (1, 0, 1)"));
                    }
                }
                TerrainKind::Slippery => {
                    if zone.friction_scale >= 1.0 {
                        return Err(invalid(path, "slippery terrain needs friction_scale < 1"));
                    }
                }
                TerrainKind::Uneven | TerrainKind::ObstacleField => {
                    if zone.trip_rate <= 0.0 {
                        return Err(invalid(path, "uneven/obstacle terrain needs trip_rate > 0"));
                    }
                }
            }
        }
        if self.spawns.is_empty() {
            return Err(invalid("spawns", "at least one spawn group"));
        }
        for (i, spawn) in self.spawns.iter().enumerate() {
            let path = format!("spawns[{i}]");
            if spawn.region.vertices.len() < 3 {
                return Err(invalid(path, "region needs at least 3 vertices"));
            }
            for v in &spawn.region.vertices {
                if !self.bounds.contains(*v) {
                    return Err(invalid(path, "region leaves bounds"));
                }
            }
            if spawn.count == 0 {
                return Err(invalid(path, "count must be positive"));
            }
            if spawn.class_mix.is_empty() {
                return Err(invalid(path, "class_mix must not be empty"));
            }
            let sum: f64 = spawn.class_mix.values().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(invalid(
                    format!("{path}.class_mix"),
                    format!("fractions sum to {sum}, expected 1"),
                ));
            }
            if spawn.class_mix.values().any(|&f| f < 0.0) {
                return Err(invalid(format!("{path}.class_mix"), "fractions must be nonnegative"));
            }
        }

        // Rasterization-dependent checks: usable exit cells and spawn fit.
        let grid = rasterize(self);
        for (i, exit) in self.exits.iter().enumerate() {
            let usable = (0..grid.width * grid.height).any(|idx| {
                grid.exit[idx]
                    && exit.contains(grid.cell_center(idx % grid.width, idx / grid.width))
            });
            if !usable {
                return Err(invalid(
                    format!("exits[{i}]"),
                    "no unblocked grid cell falls inside the exit region",
                ));
            }
        }
        spawn_positions(self, &grid).map(|_| ())
    }
}

/// Strict segment crossing / collinear-overlap test; endpoint touching is
/// allowed (door frames meet their walls).
fn properly_intersects(a: &Segment, b: &Segment) -> bool {
    let d1 = (a.b - a.a).cross(b.a - a.a);
    let d2 = (a.b - a.a).cross(b.b - a.a);
    let d3 = (b.b - b.a).cross(a.a - b.a);
    let d4 = (b.b - b.a).cross(a.b - b.a);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    // Collinear overlap of positive length.
    if d1 == 0.0 && d2 == 0.0 && d3 == 0.0 && d4 == 0.0 {
        let dir = (a.b - a.a).normalize_or_zero();
        let (s0, s1) = ((b.a - a.a).dot(dir), (b.b - a.a).dot(dir));
        let len = a.length();
        let (lo, hi) = (s0.min(s1), s0.max(s1));
        return hi.min(len) - lo.max(0.0) > 1e-9;
    }
    false
}

/// Load, expand, and validate a scenario file.
pub fn load_scenario(path: &Path) -> Result<ScenarioSpec, ScenarioError> {
    let text = std::fs::read_to_string(path)?;
    let mut spec = ScenarioSpec::from_toml_str(&text)?;
    spec.expand()?;
    spec.validate()?;
    Ok(spec)
}

/// Rasterize the scenario onto the pathfinding grid.
///
/// A cell is blocked iff its rectangle lies strictly within `body_radius` of
/// some wall segment (the wall inflated by the agent body). Cell cost is the
/// max of 1/speed_scale over terrain zones containing the cell center. Exit
/// cells are unblocked cells whose center falls inside an exit region.
pub fn rasterize(spec: &ScenarioSpec) -> NavGrid {
    let r = spec.motor.body_radius;
    let cs = spec.cell_size;
    let width = ((spec.bounds.width() / cs) - 1e-9).ceil().max(1.0) as usize;
    let height = ((spec.bounds.height() / cs) - 1e-9).ceil().max(1.0) as usize;
    let mut grid = NavGrid::new(width, height, cs, spec.bounds.min);
    for y in 0..height {
        for x in 0..width {
            let idx = grid.idx(x, y);
            let cell_min = spec.bounds.min + vec2(x as f64 * cs, y as f64 * cs);
            let cell = Rect::new(cell_min, cell_min + vec2(cs, cs));
            let blocked = spec.walls.iter().any(|w| w.distance_to_rect(&cell) < r);
            grid.blocked[idx] = blocked;
            let center = grid.cell_center(x, y);
            let mut cost: f64 = 1.0;
            for zone in &spec.terrain_zones {
                if zone.region.contains(center) {
                    cost = cost.max(1.0 / zone.speed_scale);
                }
            }
            grid.cost[idx] = cost;
            grid.exit[idx] = !blocked && spec.in_any_exit(center);
        }
    }
    grid
}

/// One placed agent before engine initialization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpawnedAgent {
    pub pos: Vec2,
    pub class: ClassName,
}

/// Deterministic collision-free placement: seeded dart throwing with minimum
/// spacing of one body diameter, rejecting blocked cells, wall overlap, and
/// the domain margin. Identical spec and seed give identical placements.
pub fn spawn_positions(
    spec: &ScenarioSpec,
    grid: &NavGrid,
) -> Result<Vec<SpawnedAgent>, ScenarioError> {
    let r = spec.motor.body_radius;
    let spacing = 2.0 * r;
    let mut rng = SplitMix64::new(spec.seed ^ 0x5EED_5EED);
    let mut placed: Vec<SpawnedAgent> = Vec::with_capacity(spec.total_agents());

    for (gi, group) in spec.spawns.iter().enumerate() {
        let classes = assign_classes(&group.class_mix, group.count);
        let bbox = group.region.bounding_box();
        for k in 0..group.count {
            let mut ok = None;
            for _ in 0..5000 {
                let p = vec2(
                    rng.range_f64(bbox.min.x, bbox.max.x),
                    rng.range_f64(bbox.min.y, bbox.max.y),
                );
                if !group.region.contains(p) {
                    continue;
                }
                if p.x < spec.bounds.min.x + r
                    || p.x > spec.bounds.max.x - r
                    || p.y < spec.bounds.min.y + r
                    || p.y > spec.bounds.max.y - r
                {
                    continue;
                }
                if grid.blocked_at(p) {
                    continue;
                }
                if spec.walls.iter().any(|w| w.distance_to_point(p) < spacing) {
                    continue;
                }
                if placed.iter().any(|a| a.pos.distance(p) < spacing) {
                    continue;
                }
                ok = Some(p);
                break;
            }
            match ok {
                Some(pos) => placed.push(SpawnedAgent {
                    pos,
                    class: classes[k],
                }),
                None => {
                    return Err(invalid(
                        format!("spawns[{gi}]"),
                        format!(
                            "could not place agent {}/{} without overlap at body radius",
                            k + 1,
                            group.count
                        ),
                    ))
                }
            }
        }
    }
    Ok(placed)
}

/// Largest-remainder split of `count` agents over the class mix; ties go to
/// the earlier class name. Exact fractions split exactly.
fn assign_classes(mix: &BTreeMap<ClassName, f64>, count: usize) -> Vec<ClassName> {
    let mut quotas: Vec<(ClassName, usize, f64)> = mix
        .iter()
        .map(|(&name, &frac)| {
            let exact = frac * count as f64;
            let base = exact.floor() as usize;
            (name, base, exact - base as f64)
        })
        .collect();
    let assigned: usize = quotas.iter().map(|q| q.1).sum();
    let mut order: Vec<usize> = (0..quotas.len()).collect();
    order.sort_by(|&a, &b| {
        quotas[b]
            .2
            .partial_cmp(&quotas[a].2)
            .unwrap()
            .then(quotas[a].0.cmp(&quotas[b].0))
    });
    for &i in order.iter().take(count - assigned) {
        quotas[i].1 += 1;
    }
    let mut out = Vec::with_capacity(count);
    for (name, n, _) in quotas {
        out.extend(std::iter::repeat(name).take(n));
    }
    out
}

/// Canonical scene builders used by the calibration benchmark, the analysis
/// experiments, and the test suites.
pub mod presets {
    use super::*;

    fn perimeter_with_gaps(bounds: Rect, gaps: &[(usize, f64, f64)]) -> Vec<Segment> {
        // Gap list entries: (edge index 0..4 as min-y, max-x, max-y, min-x
        // ordering of Rect::edges, start offset along edge, end offset).
        let mut walls = Vec::new();
        for (i, edge) in bounds.edges().iter().enumerate() {
            let mut cuts: Vec<(f64, f64)> = gaps
                .iter()
                .filter(|g| g.0 == i)
                .map(|g| (g.1, g.2))
                .collect();
            cuts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
            let dir = edge.direction();
            let len = edge.length();
            let mut cursor = 0.0;
            for (s, e) in cuts {
                if s > cursor {
                    walls.push(Segment::new(edge.a + dir * cursor, edge.a + dir * s));
                }
                cursor = e.min(len);
            }
            if cursor < len {
                walls.push(Segment::new(edge.a + dir * cursor, edge.a + dir * len));
            }
        }
        walls
    }

    fn uniform_mix(class: ClassName) -> BTreeMap<ClassName, f64> {
        BTreeMap::from([(class, 1.0)])
    }

    /// Six-way mix weighted toward the common classes.
    pub fn mixed_population() -> BTreeMap<ClassName, f64> {
        BTreeMap::from([
            (ClassName::Young, 0.22),
            (ClassName::MiddleAged, 0.22),
            (ClassName::Old, 0.2),
            (ClassName::Patient, 0.12),
            (ClassName::Disabled, 0.12),
            (ClassName::NonPersonalized, 0.12),
        ])
    }

    /// Unobstructed straight corridor for the speed-calibration benchmark:
    /// one agent walks 33 m left to right; speed is measured over the
    /// central 20 m.
    pub fn calibration_corridor(class: ClassName) -> ScenarioSpec {
        let bounds = Rect::new(vec2(0.0, 0.0), vec2(34.0, 4.0));
        // Exit opening on the right edge (edge index 1 runs min-y to max-y
        // along x = max). Leave the door between y=1 and y=3.
        let walls = perimeter_with_gaps(bounds, &[(1, 1.0, 3.0)]);
        ScenarioSpec {
            name: format!("calibration_corridor_{}", class.as_str()),
            seed: 17,
            cell_size: DEFAULT_CELL_SIZE,
            bounds,
            sfm: SfmOverrides::default(),
            motor: MotorParams::default(),
            classes: BTreeMap::new(),
            corridor: None,
            walls,
            exits: vec![ExitRegion {
                a: vec2(34.0, 1.0),
                b: vec2(34.0, 3.0),
                width: DEFAULT_EXIT_WIDTH,
            }],
            terrain_zones: vec![],
            spawns: vec![SpawnGroup {
                region: Polygon::rect(vec2(0.8, 1.7), vec2(1.4, 2.3)),
                count: 1,
                class_mix: uniform_mix(class),
            }],
        }
    }

    /// Mixed-class room with two opposite 2.4 m exits; light congestion so
    /// class speed differences stay visible.
    pub fn room_evacuation(agents: usize, seed: u64) -> ScenarioSpec {
        let bounds = Rect::new(vec2(0.0, 0.0), vec2(20.0, 12.0));
        let walls = perimeter_with_gaps(
            bounds,
            &[
                // Right edge (index 1): gap centered at y=6.
                (1, 4.8, 7.2),
                // Left edge (index 3) runs max-y down to min-y.
                (3, 4.8, 7.2),
            ],
        );
        ScenarioSpec {
            name: "room_two_exits".into(),
            seed,
            cell_size: DEFAULT_CELL_SIZE,
            bounds,
            sfm: SfmOverrides::default(),
            motor: MotorParams::default(),
            classes: BTreeMap::new(),
            corridor: None,
            walls,
            exits: vec![
                ExitRegion {
                    a: vec2(20.0, 4.8),
                    b: vec2(20.0, 7.2),
                    width: DEFAULT_EXIT_WIDTH,
                },
                ExitRegion {
                    a: vec2(0.0, 4.8),
                    b: vec2(0.0, 7.2),
                    width: DEFAULT_EXIT_WIDTH,
                },
            ],
            terrain_zones: vec![],
            spawns: vec![SpawnGroup {
                region: Polygon::rect(vec2(5.0, 2.0), vec2(15.0, 10.0)),
                count: agents,
                class_mix: mixed_population(),
            }],
        }
    }

    /// Room feeding a single corridor of the given width; the stampede and
    /// width experiments sweep over this scene.
    pub fn bottleneck_corridor(
        width: f64,
        agents: usize,
        terrain: TerrainKind,
        seed: u64,
    ) -> ScenarioSpec {
        let template = CorridorTemplate {
            width,
            agents,
            terrain,
            length: default_corridor_length(),
            room: default_room_size(),
            class_mix: None,
        };
        let mut spec = bottleneck_corridor_from(&template, seed);
        spec.name = format!("bottleneck_w{width:.1}_n{agents}_{}", terrain.as_str());
        spec
    }

    pub(super) fn bottleneck_corridor_from(template: &CorridorTemplate, seed: u64) -> ScenarioSpec {
        let room = template.room;
        let w = template.width;
        let length = template.length;
        let bounds = Rect::new(vec2(0.0, 0.0), vec2(room.x + length, room.y));
        let mouth_lo = (room.y - w) * 0.5;
        let mouth_hi = (room.y + w) * 0.5;
        let mut walls = vec![
            // Room perimeter except the corridor mouth.
            Segment::new(vec2(0.0, 0.0), vec2(room.x, 0.0)),
            Segment::new(vec2(0.0, room.y), vec2(room.x, room.y)),
            Segment::new(vec2(0.0, 0.0), vec2(0.0, room.y)),
            Segment::new(vec2(room.x, 0.0), vec2(room.x, mouth_lo)),
            Segment::new(vec2(room.x, mouth_hi), vec2(room.x, room.y)),
        ];
        // Corridor side walls out to the exit.
        walls.push(Segment::new(
            vec2(room.x, mouth_lo),
            vec2(room.x + length, mouth_lo),
        ));
        walls.push(Segment::new(
            vec2(room.x, mouth_hi),
            vec2(room.x + length, mouth_hi),
        ));
        let mix = template.class_mix.clone().unwrap_or_else(|| uniform_mix(ClassName::NonPersonalized));
        let terrain_zones = match template.terrain {
            TerrainKind::Normal => vec![],
            kind => vec![TerrainZone::preset(
                kind,
                Polygon::rect(vec2(0.0, 0.0), vec2(room.x + length, room.y)),
            )],
        };
        ScenarioSpec {
            name: "bottleneck_corridor".into(),
            seed,
            cell_size: DEFAULT_CELL_SIZE,
            bounds,
            sfm: SfmOverrides::default(),
            motor: MotorParams::default(),
            classes: BTreeMap::new(),
            corridor: None,
            walls,
            exits: vec![ExitRegion {
                a: vec2(room.x + length, mouth_lo),
                b: vec2(room.x + length, mouth_hi),
                width: DEFAULT_EXIT_WIDTH,
            }],
            terrain_zones,
            spawns: vec![SpawnGroup {
                region: Polygon::rect(vec2(0.6, 0.6), vec2(room.x - 1.0, room.y - 0.6)),
                count: template.agents,
                class_mix: mix,
            }],
        }
    }

    /// Room with a terrain band between the crowd and the exit; used by the
    /// terrain-comparison experiment.
    pub fn terrain_room(kind: TerrainKind, agents: usize, seed: u64) -> ScenarioSpec {
        let bounds = Rect::new(vec2(0.0, 0.0), vec2(16.0, 10.0));
        let walls = perimeter_with_gaps(bounds, &[(1, 4.0, 6.0)]);
        let terrain_zones = match kind {
            TerrainKind::Normal => vec![],
            other => vec![TerrainZone::preset(
                other,
                Polygon::rect(vec2(4.0, 0.0), vec2(12.0, 10.0)),
            )],
        };
        ScenarioSpec {
            name: format!("terrain_room_{}", kind.as_str()),
            seed,
            cell_size: DEFAULT_CELL_SIZE,
            bounds,
            sfm: SfmOverrides::default(),
            motor: MotorParams::default(),
            classes: BTreeMap::new(),
            corridor: None,
            walls,
            exits: vec![ExitRegion {
                a: vec2(16.0, 4.0),
                b: vec2(16.0, 6.0),
                width: DEFAULT_EXIT_WIDTH,
            }],
            terrain_zones,
            spawns: vec![SpawnGroup {
                region: Polygon::rect(vec2(0.6, 0.6), vec2(3.4, 9.4)),
                count: agents,
                class_mix: uniform_mix(ClassName::NonPersonalized),
            }],
        }
    }
}
