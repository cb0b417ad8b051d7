//! Social-force decision stage.
//!
//! Converts a per-agent sensory snapshot into the desired velocity for the
//! next decision interval: a goal-seeking drive force, exponential inter-agent
//! repulsion, and a lateral evasive force that steers around stopped or fallen
//! agents detected in the forward sector, combined by a single explicit-Euler
//! velocity update and clamped to the agent's speed ceiling.

use crate::geom::{vec2, Vec2};
use crate::rng::counter_hash;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_8, TAU};

/// Tunable decision coefficients. Forces are mass-normalized accelerations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SfmCoefficients {
    /// Relaxation time of the drive force (s).
    pub tau_relax: f64,
    /// Repulsion magnitude at body contact (m/s^2).
    pub a_rep: f64,
    /// Spatial decay length of repulsion (m).
    pub b_decay: f64,
    /// Neighbors beyond this distance exert no repulsion (m).
    pub r_interact: f64,
    /// Evasive force magnitude (m/s^2).
    pub k_evade: f64,
    /// Half-angle of the forward perception sector; fixed at 22.5° for the
    /// 45° total sector.
    pub sector_half_angle: f64,
    /// Sensing radius for the neighbor snapshot (m).
    pub sense_range: f64,
}

impl Default for SfmCoefficients {
    fn default() -> Self {
        SfmCoefficients {
            tau_relax: 0.5,
            a_rep: 3.0,
            b_decay: 0.3,
            r_interact: 2.0,
            k_evade: 2.0,
            sector_half_angle: FRAC_PI_8,
            sense_range: 4.0,
        }
    }
}

/// Partial coefficient overrides, loadable from the scenario file and from
/// per-class settings. `sector_half_angle` is fixed by contract and not
/// overridable.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SfmOverrides {
    pub tau_relax: Option<f64>,
    pub a_rep: Option<f64>,
    pub b_decay: Option<f64>,
    pub r_interact: Option<f64>,
    pub k_evade: Option<f64>,
    pub sense_range: Option<f64>,
}

impl SfmOverrides {
    pub fn apply(&self, base: &mut SfmCoefficients) {
        if let Some(v) = self.tau_relax {
            base.tau_relax = v;
        }
        if let Some(v) = self.a_rep {
            base.a_rep = v;
        }
        if let Some(v) = self.b_decay {
            base.b_decay = v;
        }
        if let Some(v) = self.r_interact {
            base.r_interact = v;
        }
        if let Some(v) = self.k_evade {
            base.k_evade = v;
        }
        if let Some(v) = self.sense_range {
            base.sense_range = v;
        }
    }

    pub fn is_empty(&self) -> bool {
        *self == SfmOverrides::default()
    }
}

/// How a neighbor reads to the deciding agent's sensors.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NeighborStatus {
    Moving,
    /// Walking but effectively stationary (slow for at least the stall window).
    Stopped,
    Fallen,
}

impl NeighborStatus {
    /// Stopped-or-fallen neighbors are what the evasive force detours around.
    pub fn impedes(self) -> bool {
        matches!(self, NeighborStatus::Stopped | NeighborStatus::Fallen)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Neighbor {
    pub id: u64,
    /// Position relative to the deciding agent.
    pub rel_pos: Vec2,
    pub vel: Vec2,
    pub status: NeighborStatus,
}

/// Sensory snapshot for one agent's decision.
#[derive(Debug, Clone)]
pub struct DecisionInput {
    pub self_id: u64,
    pub self_pos: Vec2,
    pub self_vel: Vec2,
    /// Unit vector toward the next waypoint.
    pub desired_dir: Vec2,
    /// Calibrated target speed (m/s).
    pub v_setting: f64,
    /// Class speed ceiling (m/s).
    pub v_max: f64,
    /// Neighbors within sense range, sorted by distance ascending.
    pub neighbors: Vec<Neighbor>,
}

/// Static-obstacle lookup used by the evasive side-clearance probe.
pub trait ClearanceProbe {
    fn blocked_at(&self, p: Vec2) -> bool;
}

/// Probe for obstacle-free settings (tests, open fields).
pub struct NoObstacles;

impl ClearanceProbe for NoObstacles {
    fn blocked_at(&self, _p: Vec2) -> bool {
        false
    }
}

impl ClearanceProbe for crate::pathfind::NavGrid {
    fn blocked_at(&self, p: Vec2) -> bool {
        crate::pathfind::NavGrid::blocked_at(self, p)
    }
}

/// Goal-seeking acceleration: relax the current velocity toward
/// `v_setting * desired_dir`.
pub fn drive_force(input: &DecisionInput, coeff: &SfmCoefficients) -> Vec2 {
    (input.desired_dir * input.v_setting - input.self_vel) / coeff.tau_relax
}

/// Exponential repulsion summed over neighbors within the interaction radius.
/// Coincident neighbors get a deterministic substitute direction derived from
/// the id pair so the pairwise antisymmetry still holds.
pub fn repulsive_force(input: &DecisionInput, coeff: &SfmCoefficients, body_radius: f64) -> Vec2 {
    let mut total = Vec2::ZERO;
    for n in &input.neighbors {
        let d = n.rel_pos.norm();
        if d > coeff.r_interact {
            continue;
        }
        let away = if d < 1e-6 {
            let (lo, hi) = if input.self_id < n.id {
                (input.self_id, n.id)
            } else {
                (n.id, input.self_id)
            };
            let angle = TAU * (counter_hash(lo, hi, 0x0C01) >> 11) as f64 / (1u64 << 53) as f64;
            let dir = vec2(angle.cos(), angle.sin());
            if input.self_id < n.id {
                dir
            } else {
                -dir
            }
        } else {
            -n.rel_pos / d
        };
        total += away * (coeff.a_rep * ((2.0 * body_radius - d) / coeff.b_decay).exp());
    }
    total
}

/// Lateral evasion around stopped/fallen agents in the 45° forward sector.
///
/// Active only when (a) an impeding neighbor sits inside the sector within
/// sense range and (b) at least one side passes a capsule clearance probe at
/// lateral offset `2*body_radius` over one body length ahead. The force is
/// `k_evade` along the perpendicular of the desired direction, on the side
/// away from the sector neighbors' mean position (or the only free side).
pub fn evasive_force(
    input: &DecisionInput,
    coeff: &SfmCoefficients,
    body_radius: f64,
    probe: &impl ClearanceProbe,
) -> Vec2 {
    let dir = input.desired_dir;
    if dir.norm_sq() < 1e-12 {
        return Vec2::ZERO;
    }

    let mut blocker_found = false;
    let mut sector_sum = Vec2::ZERO;
    let mut sector_count = 0usize;
    for n in &input.neighbors {
        let d = n.rel_pos.norm();
        if d > coeff.sense_range || d < 1e-9 {
            continue;
        }
        let cos_angle = n.rel_pos.dot(dir) / d;
        if cos_angle < coeff.sector_half_angle.cos() {
            continue;
        }
        sector_sum += n.rel_pos;
        sector_count += 1;
        if n.status.impedes() {
            blocker_found = true;
        }
    }
    if !blocker_found {
        return Vec2::ZERO;
    }

    let perp = dir.perp();
    let left_free = side_clear(input, coeff, body_radius, probe, perp);
    let right_free = side_clear(input, coeff, body_radius, probe, -perp);
    let side = match (left_free, right_free) {
        (false, false) => return Vec2::ZERO,
        (true, false) => 1.0,
        (false, true) => -1.0,
        (true, true) => {
            let mean = sector_sum / sector_count as f64;
            if mean.dot(perp) > 0.0 {
                -1.0
            } else {
                1.0
            }
        }
    };
    perp * (coeff.k_evade * side)
}

/// Capsule clearance probe: the lane at lateral offset `2*body_radius`,
/// extending one body length ahead, must contain no agent and no blocked cell.
fn side_clear(
    input: &DecisionInput,
    coeff: &SfmCoefficients,
    body_radius: f64,
    probe: &impl ClearanceProbe,
    lateral: Vec2,
) -> bool {
    let body_len = 2.0 * body_radius;
    let base = input.self_pos + lateral * (2.0 * body_radius);
    let tip = base + input.desired_dir * body_len;

    // No agent center within a body diameter of the lane spine.
    for n in &input.neighbors {
        let p = input.self_pos + n.rel_pos;
        if crate::geom::Segment::new(base, tip).distance_to_point(p) < 2.0 * body_radius {
            return false;
        }
    }
    // No blocked cell across the capsule footprint, sampled at sub-cell pitch.
    let steps = 5;
    let r_side = lateral.normalize_or_zero() * body_radius;
    for k in 0..=steps {
        let c = base + (tip - base) * (k as f64 / steps as f64);
        for p in [c, c + r_side, c - r_side] {
            if probe.blocked_at(p) {
                return false;
            }
        }
    }
    let _ = coeff;
    true
}

/// Combined per-interval force components, exported when force dumping is on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForceBreakdown {
    pub drive: Vec2,
    pub repulsive: Vec2,
    pub evasive: Vec2,
}

/// One explicit velocity update over the decision interval, clamped to the
/// class ceiling. Never returns NaN for finite inputs.
pub fn decide(
    input: &DecisionInput,
    coeff: &SfmCoefficients,
    body_radius: f64,
    dt: f64,
    probe: &impl ClearanceProbe,
) -> (Vec2, ForceBreakdown) {
    debug_assert!(dt > 0.0);
    let breakdown = ForceBreakdown {
        drive: drive_force(input, coeff),
        repulsive: repulsive_force(input, coeff, body_radius),
        evasive: evasive_force(input, coeff, body_radius, probe),
    };
    let sum = breakdown.drive + breakdown.repulsive + breakdown.evasive;
    let v = (input.self_vel + sum * dt).clamp_norm(input.v_max);
    debug_assert!(v.is_finite());
    (v, breakdown)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_input() -> DecisionInput {
        DecisionInput {
            self_id: 0,
            self_pos: Vec2::ZERO,
            self_vel: Vec2::ZERO,
            desired_dir: vec2(1.0, 0.0),
            v_setting: 1.5,
            v_max: 2.1,
            neighbors: vec![],
        }
    }

    fn neighbor(id: u64, rel: Vec2, status: NeighborStatus) -> Neighbor {
        Neighbor {
            id,
            rel_pos: rel,
            vel: Vec2::ZERO,
            status,
        }
    }

    const R: f64 = 0.25;

    #[test]
    fn drive_equilibrium_is_zero() {
        let mut input = base_input();
        input.self_vel = input.desired_dir * input.v_setting;
        assert_eq!(drive_force(&input, &SfmCoefficients::default()), Vec2::ZERO);
    }

    #[test]
    fn drive_from_rest_closed_form() {
        let input = base_input();
        let f = drive_force(&input, &SfmCoefficients::default());
        assert!((f - vec2(3.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn drive_perpendicular_motion() {
        let mut input = base_input();
        input.v_setting = 1.0;
        input.self_vel = vec2(0.0, 1.0);
        let f = drive_force(&input, &SfmCoefficients::default());
        // (1.0*dir - vel)/0.5 = (2, -2), norm = 2*sqrt(2).
        assert!((f - vec2(2.0, -2.0)).norm() < 1e-12);
        assert!((f.norm() - 2.0 * std::f64::consts::SQRT_2).abs() < 1e-12);
    }

    #[test]
    fn repulsion_empty_and_contact() {
        let coeff = SfmCoefficients::default();
        let input = base_input();
        assert_eq!(repulsive_force(&input, &coeff, R), Vec2::ZERO);

        let mut input = base_input();
        input.neighbors = vec![neighbor(1, vec2(2.0 * R, 0.0), NeighborStatus::Moving)];
        let f = repulsive_force(&input, &coeff, R);
        // At contact distance the exponent is zero: magnitude exactly a_rep.
        assert_eq!(f.norm(), coeff.a_rep);
        assert!(f.x < 0.0);
    }

    #[test]
    fn repulsion_beyond_radius_is_zero() {
        let coeff = SfmCoefficients::default();
        let mut input = base_input();
        input.neighbors = vec![neighbor(1, vec2(coeff.r_interact + 0.01, 0.0), NeighborStatus::Moving)];
        assert_eq!(repulsive_force(&input, &coeff, R), Vec2::ZERO);
    }

    #[test]
    fn symmetric_neighbors_cancel_laterally() {
        let coeff = SfmCoefficients::default();
        let mut input = base_input();
        input.neighbors = vec![
            neighbor(1, vec2(0.8, 0.3), NeighborStatus::Moving),
            neighbor(2, vec2(0.8, -0.3), NeighborStatus::Moving),
        ];
        let f = repulsive_force(&input, &coeff, R);
        assert!(f.y.abs() < 1e-9);
        assert!(f.x < 0.0, "net force points directly backward");
    }

    #[test]
    fn repulsion_pairwise_antisymmetry() {
        let coeff = SfmCoefficients::default();
        for (rel, note) in [
            (vec2(0.4, 0.1), "ordinary"),
            (vec2(1e-8, 0.0), "coincident"),
        ] {
            let mut a = base_input();
            a.self_id = 7;
            a.neighbors = vec![neighbor(9, rel, NeighborStatus::Moving)];
            let mut b = base_input();
            b.self_id = 9;
            b.neighbors = vec![neighbor(7, -rel, NeighborStatus::Moving)];
            let fa = repulsive_force(&a, &coeff, R);
            let fb = repulsive_force(&b, &coeff, R);
            assert_eq!(fa, -fb, "{note}: forces must be exact negations");
        }
    }

    #[test]
    fn evasion_empty_sector_is_zero() {
        let coeff = SfmCoefficients::default();
        let input = base_input();
        assert_eq!(evasive_force(&input, &coeff, R, &NoObstacles), Vec2::ZERO);

        // A moving neighbor ahead does not trigger evasion either.
        let mut input = base_input();
        input.neighbors = vec![neighbor(1, vec2(1.0, 0.0), NeighborStatus::Moving)];
        assert_eq!(evasive_force(&input, &coeff, R, &NoObstacles), Vec2::ZERO);
    }

    #[test]
    fn evasion_moves_away_from_blocker_side() {
        let coeff = SfmCoefficients::default();
        let mut input = base_input();
        // Fallen neighbor dead ahead, mean offset slightly left of the axis.
        input.neighbors = vec![neighbor(1, vec2(1.0, 0.05), NeighborStatus::Fallen)];
        let f = evasive_force(&input, &coeff, R, &NoObstacles);
        // Brute-force side check: both lanes are free, crowd mean is on the
        // left (+y), so the force must point right (-y) at magnitude k_evade.
        assert!((f.norm() - coeff.k_evade).abs() < 1e-12);
        assert!(f.y < 0.0);
        assert_eq!(f.x, 0.0);
    }

    struct LeftWall;
    impl ClearanceProbe for LeftWall {
        fn blocked_at(&self, p: Vec2) -> bool {
            p.y > 0.3
        }
    }

    #[test]
    fn evasion_takes_the_only_free_side() {
        let coeff = SfmCoefficients::default();
        let mut input = base_input();
        // Blocker ahead-left; the left lane is walled so the force must go
        // right regardless of the crowd mean.
        input.neighbors = vec![neighbor(1, vec2(1.0, 0.1), NeighborStatus::Fallen)];
        let f = evasive_force(&input, &coeff, R, &LeftWall);
        assert!(f.y < 0.0);

        // And if the blocker sits ahead-right while the left is walled, the
        // free-side rule still sends the agent right.
        input.neighbors = vec![neighbor(1, vec2(1.0, -0.1), NeighborStatus::Fallen)];
        let f = evasive_force(&input, &coeff, R, &LeftWall);
        assert!(f.y < 0.0);
    }

    #[test]
    fn evasion_blocked_both_sides_is_zero() {
        struct BothWalls;
        impl ClearanceProbe for BothWalls {
            fn blocked_at(&self, p: Vec2) -> bool {
                p.y.abs() > 0.3
            }
        }
        let coeff = SfmCoefficients::default();
        let mut input = base_input();
        input.neighbors = vec![neighbor(1, vec2(0.9, 0.0), NeighborStatus::Fallen)];
        assert_eq!(evasive_force(&input, &coeff, R, &BothWalls), Vec2::ZERO);
    }

    #[test]
    fn evasion_side_agent_blocks_lane() {
        let coeff = SfmCoefficients::default();
        let mut input = base_input();
        input.neighbors = vec![
            neighbor(1, vec2(1.0, 0.0), NeighborStatus::Fallen),
            // Agent parked in the left lane.
            neighbor(2, vec2(0.3, 0.5), NeighborStatus::Moving),
        ];
        let f = evasive_force(&input, &coeff, R, &NoObstacles);
        assert!(f.y < 0.0, "left lane occupied, must evade right");
    }

    #[test]
    fn decide_zero_forces_keeps_velocity() {
        let coeff = SfmCoefficients::default();
        let mut input = base_input();
        input.self_vel = input.desired_dir * input.v_setting;
        let (v, _) = decide(&input, &coeff, R, 0.1, &NoObstacles);
        assert_eq!(v, input.self_vel);
    }

    #[test]
    fn decide_single_step_from_rest() {
        let coeff = SfmCoefficients::default();
        let input = base_input();
        let (v, _) = decide(&input, &coeff, R, 0.1, &NoObstacles);
        assert!((v - vec2(0.3, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn decide_crowded_front_slows_below_setting() {
        let coeff = SfmCoefficients::default();
        let mut input = base_input();
        input.self_vel = vec2(1.0, 0.0);
        input.neighbors = vec![
            neighbor(1, vec2(0.55, 0.0), NeighborStatus::Moving),
            neighbor(2, vec2(0.7, 0.2), NeighborStatus::Moving),
            neighbor(3, vec2(0.7, -0.2), NeighborStatus::Moving),
        ];
        let (v, parts) = decide(&input, &coeff, R, 0.1, &NoObstacles);
        // Cross-check against the hand-summed force composition.
        let manual = (input.self_vel
            + (parts.drive + parts.repulsive + parts.evasive) * 0.1)
            .clamp_norm(input.v_max);
        assert_eq!(v, manual);
        assert!(v.norm() < input.v_setting, "frontal blockage must slow below setting");
    }

    #[test]
    fn locality_of_far_neighbors() {
        let coeff = SfmCoefficients::default();
        let mut with_far = base_input();
        with_far.neighbors = vec![
            neighbor(1, vec2(1.0, 0.2), NeighborStatus::Moving),
            neighbor(2, vec2(coeff.sense_range + 0.5, 0.0), NeighborStatus::Fallen),
        ];
        let mut without = with_far.clone();
        without.neighbors.truncate(1);
        let (va, _) = decide(&with_far, &coeff, R, 0.05, &NoObstacles);
        let (vb, _) = decide(&without, &coeff, R, 0.05, &NoObstacles);
        assert_eq!(va, vb, "removing out-of-range neighbor must be bit-exact no-op");
    }

    #[test]
    fn clamp_holds_under_fuzz() {
        let coeff = SfmCoefficients::default();
        let mut rng = crate::rng::SplitMix64::new(0xFA57);
        for _ in 0..100_000 {
            let mut input = base_input();
            input.self_vel = vec2(rng.range_f64(-3.0, 3.0), rng.range_f64(-3.0, 3.0));
            input.desired_dir = vec2(rng.range_f64(-1.0, 1.0), rng.range_f64(-1.0, 1.0))
                .try_normalize()
                .unwrap_or(vec2(1.0, 0.0));
            input.v_max = rng.range_f64(0.5, 3.0);
            let n = rng.range_usize(4);
            for k in 0..n {
                input.neighbors.push(neighbor(
                    k as u64 + 1,
                    vec2(rng.range_f64(-4.0, 4.0), rng.range_f64(-4.0, 4.0)),
                    if rng.unit_f64() < 0.3 {
                        NeighborStatus::Fallen
                    } else {
                        NeighborStatus::Moving
                    },
                ));
            }
            let (v, _) = decide(&input, &coeff, R, 0.05, &NoObstacles);
            assert!(v.norm() <= input.v_max * (1.0 + 1e-12));
            assert!(v.is_finite());
        }
    }

    #[test]
    fn continuity_away_from_mask_boundaries() {
        let coeff = SfmCoefficients::default();
        let eps = 1e-9;
        let mut rng = crate::rng::SplitMix64::new(0x0CE4);
        for _ in 0..200 {
            let mut input = base_input();
            input.self_vel = vec2(rng.range_f64(-1.0, 1.0), rng.range_f64(-1.0, 1.0));
            // Keep the neighbor well inside the interaction annulus and away
            // from the sector boundary so no mask flips.
            let angle = rng.range_f64(0.6, 2.0);
            let dist = rng.range_f64(0.8, 1.6);
            let rel = vec2(angle.cos(), angle.sin()) * dist;
            input.neighbors = vec![neighbor(1, rel, NeighborStatus::Moving)];
            let (v0, _) = decide(&input, &coeff, R, 0.05, &NoObstacles);
            input.neighbors[0].rel_pos += vec2(eps, -eps);
            let (v1, _) = decide(&input, &coeff, R, 0.05, &NoObstacles);
            assert!(
                (v1 - v0).norm() < 1e-5,
                "output jumped {} for an {eps} perturbation",
                (v1 - v0).norm()
            );
        }
    }
}
