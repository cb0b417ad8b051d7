//! Waypoint planning over an occupancy grid.
//!
//! The grid is 8-connected. Step costs are the mean of the two adjacent
//! cells' traversal multipliers, scaled by sqrt(2) for diagonal moves.
//! Planned cell paths are simplified to waypoints by greedy line-of-sight
//! string pulling; line of sight uses a supercover traversal so a simplified
//! segment never cuts through a blocked cell.

use crate::geom::{vec2, Vec2};
use serde::{Deserialize, Serialize};
use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::f64::consts::SQRT_2;
use thiserror::Error;

/// Occupancy grid with per-cell traversal cost, the A* search substrate.
#[derive(Debug, Clone)]
pub struct NavGrid {
    pub width: usize,
    pub height: usize,
    pub cell_size: f64,
    /// World position of the grid's min corner.
    pub origin: Vec2,
    pub blocked: Vec<bool>,
    /// Traversal multiplier per cell, >= 1.
    pub cost: Vec<f64>,
    pub exit: Vec<bool>,
}

impl NavGrid {
    pub fn new(width: usize, height: usize, cell_size: f64, origin: Vec2) -> NavGrid {
        NavGrid {
            width,
            height,
            cell_size,
            origin,
            blocked: vec![false; width * height],
            cost: vec![1.0; width * height],
            exit: vec![false; width * height],
        }
    }

    #[inline]
    pub fn idx(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    pub fn cell_center(&self, x: usize, y: usize) -> Vec2 {
        self.origin + vec2((x as f64 + 0.5) * self.cell_size, (y as f64 + 0.5) * self.cell_size)
    }

    /// Cell containing a world position, or `None` outside the grid.
    pub fn cell_at(&self, p: Vec2) -> Option<(usize, usize)> {
        let gx = (p.x - self.origin.x) / self.cell_size;
        let gy = (p.y - self.origin.y) / self.cell_size;
        if gx < 0.0 || gy < 0.0 {
            return None;
        }
        let (x, y) = (gx as usize, gy as usize);
        if x >= self.width || y >= self.height {
            return None;
        }
        Some((x, y))
    }

    /// True when the position lies inside a blocked cell or outside the grid.
    pub fn blocked_at(&self, p: Vec2) -> bool {
        match self.cell_at(p) {
            Some((x, y)) => self.blocked[self.idx(x, y)],
            None => true,
        }
    }

    pub fn exit_indices(&self) -> Vec<usize> {
        self.exit
            .iter()
            .enumerate()
            .filter_map(|(i, &e)| e.then_some(i))
            .collect()
    }

    pub fn min_cost(&self) -> f64 {
        self.cost
            .iter()
            .zip(&self.blocked)
            .filter(|(_, &b)| !b)
            .map(|(&c, _)| c)
            .fold(f64::INFINITY, f64::min)
    }

    /// Supercover line of sight between two points (intended: cell centers).
    /// Every cell the segment touches must be in bounds and unblocked;
    /// exact corner crossings conservatively include both adjacent cells.
    pub fn line_of_sight(&self, a: Vec2, b: Vec2) -> bool {
        let pa = (a - self.origin) / self.cell_size;
        let pb = (b - self.origin) / self.cell_size;
        let (mut cx, mut cy) = (pa.x.floor() as i64, pa.y.floor() as i64);
        let (ex, ey) = (pb.x.floor() as i64, pb.y.floor() as i64);
        let dx = pb.x - pa.x;
        let dy = pb.y - pa.y;
        let step_x: i64 = if dx > 0.0 { 1 } else { -1 };
        let step_y: i64 = if dy > 0.0 { 1 } else { -1 };
        let t_delta_x = if dx != 0.0 { 1.0 / dx.abs() } else { f64::INFINITY };
        let t_delta_y = if dy != 0.0 { 1.0 / dy.abs() } else { f64::INFINITY };
        let mut t_max_x = if dx != 0.0 {
            let edge = if dx > 0.0 { cx as f64 + 1.0 } else { cx as f64 };
            (edge - pa.x) / dx
        } else {
            f64::INFINITY
        };
        let mut t_max_y = if dy != 0.0 {
            let edge = if dy > 0.0 { cy as f64 + 1.0 } else { cy as f64 };
            (edge - pa.y) / dy
        } else {
            f64::INFINITY
        };

        let open = |x: i64, y: i64| -> bool {
            x >= 0
                && y >= 0
                && (x as usize) < self.width
                && (y as usize) < self.height
                && !self.blocked[y as usize * self.width + x as usize]
        };

        let max_steps = 2 * ((ex - cx).abs() + (ey - cy).abs()) + 4;
        for _ in 0..max_steps {
            if !open(cx, cy) {
                return false;
            }
            if cx == ex && cy == ey {
                return true;
            }
            if (t_max_x - t_max_y).abs() < 1e-12 {
                // Corner crossing: the segment touches both side cells.
                if !open(cx + step_x, cy) || !open(cx, cy + step_y) {
                    return false;
                }
                cx += step_x;
                cy += step_y;
                t_max_x += t_delta_x;
                t_max_y += t_delta_y;
            } else if t_max_x < t_max_y {
                cx += step_x;
                t_max_x += t_delta_x;
            } else {
                cy += step_y;
                t_max_y += t_delta_y;
            }
        }
        false
    }
}

/// Planned route to an exit: waypoints plus the A* cost of the cell path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaypointPath {
    pub points: Vec<Vec2>,
    pub total_cost: f64,
    /// Progression cursor for waypoint consumption.
    #[serde(skip)]
    cursor: usize,
}

impl WaypointPath {
    pub fn remaining(&self) -> &[Vec2] {
        &self.points[self.cursor..]
    }

    pub fn last(&self) -> Vec2 {
        *self.points.last().expect("path is never empty")
    }

    /// First waypoint farther than `arrive_radius`; closer waypoints are
    /// consumed. The final waypoint is never consumed.
    pub fn next_waypoint(&mut self, pos: Vec2, arrive_radius: f64) -> Vec2 {
        while self.cursor + 1 < self.points.len()
            && pos.distance(self.points[self.cursor]) <= arrive_radius
        {
            self.cursor += 1;
        }
        self.points[self.cursor]
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PlanError {
    #[error("start position outside the grid")]
    StartOutOfBounds,
    #[error("start position inside a blocked cell")]
    StartBlocked,
    #[error("no exit reachable from start")]
    Unreachable,
    #[error("grid has no exit cells")]
    NoExitCells,
}

#[derive(Clone, Copy)]
struct Node {
    f: f64,
    g: f64,
    idx: usize,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}

impl Ord for Node {
    // BinaryHeap is a max-heap; order so the popped maximum is the node with
    // the smallest f, tie-broken by larger g, then smaller cell index.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .f
            .total_cmp(&self.f)
            .then(self.g.total_cmp(&other.g))
            .then(other.idx.cmp(&self.idx))
    }
}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

const DIRS: [(i64, i64, bool); 8] = [
    (1, 0, false),
    (-1, 0, false),
    (0, 1, false),
    (0, -1, false),
    (1, 1, true),
    (1, -1, true),
    (-1, 1, true),
    (-1, -1, true),
];

/// Octile distance in cell units.
fn octile(ax: usize, ay: usize, bx: usize, by: usize) -> f64 {
    let dx = ax.abs_diff(bx) as f64;
    let dy = ay.abs_diff(by) as f64;
    dx + dy + (SQRT_2 - 2.0) * dx.min(dy)
}

/// Cost-optimal 8-connected route from `start` to the nearest exit cell,
/// simplified to line-of-sight waypoints.
pub fn plan(grid: &NavGrid, start: Vec2) -> Result<WaypointPath, PlanError> {
    let (sx, sy) = grid.cell_at(start).ok_or(PlanError::StartOutOfBounds)?;
    let start_idx = grid.idx(sx, sy);
    if grid.blocked[start_idx] {
        return Err(PlanError::StartBlocked);
    }
    let exits = grid.exit_indices();
    if exits.is_empty() {
        return Err(PlanError::NoExitCells);
    }

    let n = grid.width * grid.height;
    let mut g = vec![f64::INFINITY; n];
    let mut parent = vec![u32::MAX; n];
    let mut closed = vec![false; n];
    let mut heap = BinaryHeap::new();

    // Scaled a hair below the true lower bound so floating-point rounding can
    // never push the heuristic above the remaining cost.
    let h_scale = grid.min_cost() * (1.0 - 1e-9);
    let heuristic = |idx: usize| -> f64 {
        let (x, y) = (idx % grid.width, idx / grid.width);
        exits
            .iter()
            .map(|&e| octile(x, y, e % grid.width, e / grid.width))
            .fold(f64::INFINITY, f64::min)
            * h_scale
    };

    g[start_idx] = 0.0;
    heap.push(Node {
        f: heuristic(start_idx),
        g: 0.0,
        idx: start_idx,
    });

    let mut goal = None;
    while let Some(node) = heap.pop() {
        if closed[node.idx] {
            continue;
        }
        closed[node.idx] = true;
        if grid.exit[node.idx] {
            goal = Some(node.idx);
            break;
        }
        let (x, y) = ((node.idx % grid.width) as i64, (node.idx / grid.width) as i64);
        for &(dx, dy, diag) in &DIRS {
            let (nx, ny) = (x + dx, y + dy);
            if nx < 0 || ny < 0 || nx as usize >= grid.width || ny as usize >= grid.height {
                continue;
            }
            let nidx = grid.idx(nx as usize, ny as usize);
            if grid.blocked[nidx] || closed[nidx] {
                continue;
            }
            if diag {
                // No corner cutting past blocked orthogonal neighbors.
                let a = grid.idx(nx as usize, y as usize);
                let b = grid.idx(x as usize, ny as usize);
                if grid.blocked[a] || grid.blocked[b] {
                    continue;
                }
            }
            let base = if diag { SQRT_2 } else { 1.0 };
            let step = base * 0.5 * (grid.cost[node.idx] + grid.cost[nidx]);
            let cand = node.g + step;
            if cand < g[nidx] {
                g[nidx] = cand;
                parent[nidx] = node.idx as u32;
                heap.push(Node {
                    f: cand + heuristic(nidx),
                    g: cand,
                    idx: nidx,
                });
            }
        }
    }

    let goal = goal.ok_or(PlanError::Unreachable)?;
    let mut cells = vec![goal];
    let mut cur = goal;
    while parent[cur] != u32::MAX {
        cur = parent[cur] as usize;
        cells.push(cur);
    }
    cells.reverse();

    let centers: Vec<Vec2> = cells
        .iter()
        .map(|&i| grid.cell_center(i % grid.width, i / grid.width))
        .collect();
    let points = string_pull(grid, &centers);

    Ok(WaypointPath {
        points,
        total_cost: g[goal],
        cursor: 0,
    })
}

/// Greedy line-of-sight simplification of a cell-center polyline.
fn string_pull(grid: &NavGrid, centers: &[Vec2]) -> Vec<Vec2> {
    if centers.len() <= 2 {
        return centers.to_vec();
    }
    let mut points = vec![centers[0]];
    let mut anchor = 0;
    while anchor + 1 < centers.len() {
        let mut best = anchor + 1;
        for j in (anchor + 2)..centers.len() {
            if grid.line_of_sight(centers[anchor], centers[j]) {
                best = j;
            } else {
                break;
            }
        }
        points.push(centers[best]);
        anchor = best;
    }
    points
}
