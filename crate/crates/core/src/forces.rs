//! Part-level contact-force recording and heatmap export.
//!
//! Disc agents carry a 24-bin body-part force record as a stand-in for an
//! articulated body: a deterministic bearing-and-status table attributes each
//! contact to a part. Standing agents spread agent contacts over torso and
//! limb parts by contact bearing; wall contacts land on shoulders/arms; a
//! fallen agent takes hits on a 12-bin prone strip indexed by attacker
//! bearing. The layout is versioned in every export header.

use crate::geom::Vec2;
use crate::motor::{wrap_angle, ContactBody, ContactEvent};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::FRAC_PI_6;
use std::fmt::Write as _;

pub const PART_COUNT: usize = 24;
pub const PART_LAYOUT_VERSION: &str = "v1";

/// Part names, standing bins first (0..12), prone bins second (12..24).
pub const PART_NAMES: [&str; PART_COUNT] = [
    "back",
    "upper_back_left",
    "chest_left",
    "chest",
    "chest_right",
    "arm_left",
    "arm_right",
    "upper_back_right",
    "shoulder_left",
    "shoulder_right",
    "flank_left",
    "flank_right",
    "prone_head",
    "prone_neck",
    "prone_shoulder_left",
    "prone_shoulder_right",
    "prone_back_upper",
    "prone_back_lower",
    "prone_hip_left",
    "prone_hip_right",
    "prone_thigh_left",
    "prone_thigh_right",
    "prone_calf_left",
    "prone_calf_right",
];

/// Torso subset of the standing bins (used by analysis assertions).
pub const TORSO_BINS: [usize; 8] = [0, 1, 2, 3, 4, 7, 10, 11];
/// Limb subset of the standing bins.
pub const LIMB_BINS: [usize; 4] = [5, 6, 8, 9];

/// Standing agent-agent table: 30° sectors by bearing, sector 0 centered on
/// the agent's heading, positive bearings counterclockwise (left side).
const STANDING_TABLE: [usize; 12] = [
    3,  // 0°: chest
    2,  // +30°: chest_left
    5,  // +60°: arm_left
    8,  // +90°: shoulder_left
    10, // +120°: flank_left
    1,  // +150°: upper_back_left
    0,  // 180°: back
    7,  // -150°: upper_back_right
    11, // -120°: flank_right
    9,  // -90°: shoulder_right
    6,  // -60°: arm_right
    4,  // -30°: chest_right
];

fn sector12(bearing: f64) -> usize {
    (bearing / FRAC_PI_6).round().rem_euclid(12.0) as usize
}

/// Deterministic part attribution for one side of a contact.
///
/// `heading`/`pos` belong to the receiving agent; `point` is the contact
/// location; `wall` marks wall contacts; `fallen` selects the prone strip.
pub fn bin_contact(heading: f64, pos: Vec2, point: Vec2, wall: bool, fallen: bool) -> usize {
    let bearing = wrap_angle((point - pos).angle() - heading);
    if fallen {
        return 12 + sector12(bearing);
    }
    if wall {
        // Walls meet shoulders and arms: front half on the arms, rear half
        // on the shoulders, by side.
        return if bearing.abs() <= std::f64::consts::FRAC_PI_2 {
            if bearing >= 0.0 {
                5
            } else {
                6
            }
        } else if bearing >= 0.0 {
            8
        } else {
            9
        };
    }
    STANDING_TABLE[sector12(bearing)]
}

/// Per-agent per-tick body-part force magnitudes (N).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartForceRecord {
    pub agent: u64,
    pub tick: u64,
    pub force: [f64; PART_COUNT],
}

impl PartForceRecord {
    pub fn zero(agent: u64, tick: u64) -> PartForceRecord {
        PartForceRecord {
            agent,
            tick,
            force: [0.0; PART_COUNT],
        }
    }

    pub fn total(&self) -> f64 {
        self.force.iter().sum()
    }
}

/// Pose information the binning needs about each agent this tick.
#[derive(Debug, Clone, Copy)]
pub struct AgentPose {
    pub id: u64,
    pub pos: Vec2,
    pub heading: f64,
    pub fallen: bool,
}

/// Attribute one tick's contact events to part bins: each agent involved in
/// an event accumulates |impulse|/dt into the part selected by its own pose.
/// Agents without contacts this tick emit no record (their record is the zero
/// vector by convention).
pub fn accumulate_tick(
    poses: &[AgentPose],
    events: &[ContactEvent],
    dt: f64,
    tick: u64,
) -> Vec<PartForceRecord> {
    let index: BTreeMap<u64, usize> = poses.iter().enumerate().map(|(i, p)| (p.id, i)).collect();
    let mut records: BTreeMap<u64, PartForceRecord> = BTreeMap::new();
    let mut add = |agent_id: u64, point: Vec2, wall: bool, impulse: f64| {
        let Some(&pi) = index.get(&agent_id) else {
            return;
        };
        let pose = poses[pi];
        let bin = bin_contact(pose.heading, pose.pos, point, wall, pose.fallen);
        records
            .entry(agent_id)
            .or_insert_with(|| PartForceRecord::zero(agent_id, tick))
            .force[bin] += impulse.abs() / dt;
    };
    for ev in events {
        if let ContactBody::Agent(a) = ev.a {
            add(a, ev.point, matches!(ev.b, ContactBody::Wall(_)), ev.impulse);
        }
        if let ContactBody::Agent(b) = ev.b {
            add(b, ev.point, matches!(ev.a, ContactBody::Wall(_)), ev.impulse);
        }
    }
    records.into_values().collect()
}

/// Light-to-dark gradient with a normalization ceiling.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ColorMap {
    pub light: [u8; 3],
    pub dark: [u8; 3],
    /// Forces at or above this map to the darkest color.
    pub f_max: f64,
}

impl ColorMap {
    pub fn with_max(f_max: f64) -> ColorMap {
        ColorMap {
            light: [0xF2, 0xF2, 0xF2],
            dark: [0x7F, 0x00, 0x00],
            f_max: f_max.max(1e-9),
        }
    }

    pub fn color(&self, force: f64) -> [u8; 3] {
        let t = (force / self.f_max).clamp(0.0, 1.0);
        let mut rgb = [0u8; 3];
        for c in 0..3 {
            let lo = self.light[c] as f64;
            let hi = self.dark[c] as f64;
            rgb[c] = (lo + (hi - lo) * t).round() as u8;
        }
        rgb
    }

    pub fn luminance(rgb: [u8; 3]) -> f64 {
        0.2126 * rgb[0] as f64 + 0.7152 * rgb[1] as f64 + 0.0722 * rgb[2] as f64
    }
}

/// Binary PPM (P6) raster.
pub struct Ppm {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl Ppm {
    pub fn new(width: usize, height: usize, fill: [u8; 3]) -> Ppm {
        let mut data = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            data.extend_from_slice(&fill);
        }
        Ppm {
            width,
            height,
            data,
        }
    }

    pub fn set(&mut self, x: usize, y: usize, rgb: [u8; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        out
    }

    pub fn write_to(&self, path: &std::path::Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_bytes())
    }
}

/// Per-agent per-part statistics over a record window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowStats {
    pub agent: u64,
    pub peak: [f64; PART_COUNT],
    pub mean: [f64; PART_COUNT],
    pub ticks: usize,
}

/// Aggregate a window of records per agent. `window_ticks` is the divisor for
/// mean forces (records are sparse: absent tick = zero).
pub fn window_stats(records: &[PartForceRecord], window_ticks: usize) -> Vec<WindowStats> {
    let mut by_agent: BTreeMap<u64, WindowStats> = BTreeMap::new();
    for rec in records {
        let st = by_agent.entry(rec.agent).or_insert(WindowStats {
            agent: rec.agent,
            peak: [0.0; PART_COUNT],
            mean: [0.0; PART_COUNT],
            ticks: window_ticks.max(1),
        });
        for k in 0..PART_COUNT {
            st.peak[k] = st.peak[k].max(rec.force[k]);
            st.mean[k] += rec.force[k];
        }
    }
    for st in by_agent.values_mut() {
        for k in 0..PART_COUNT {
            st.mean[k] /= st.ticks as f64;
        }
    }
    by_agent.into_values().collect()
}

/// 95th percentile of nonzero forces in the window; 1.0 when there are none.
pub fn default_f_max(records: &[PartForceRecord]) -> f64 {
    let mut nonzero: Vec<f64> = records
        .iter()
        .flat_map(|r| r.force.iter().copied())
        .filter(|&f| f > 0.0)
        .collect();
    if nonzero.is_empty() {
        return 1.0;
    }
    nonzero.sort_by(|a, b| a.total_cmp(b));
    let rank = 0.95 * (nonzero.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    nonzero[lo] * (1.0 - frac) + nonzero[hi] * frac
}

/// Glyph geometry: 24 cells as 4 columns x 6 rows per agent, row-major by
/// part index, standing bins on the upper half, prone bins below.
const GLYPH_COLS: usize = 4;
const GLYPH_ROWS: usize = 6;
const CELL_PX: usize = 8;
const GAP_PX: usize = 2;
const AGENTS_PER_ROW: usize = 16;

/// Tabular export plus one glyph-per-agent raster for a record window.
pub fn render_heatmap(
    records: &[PartForceRecord],
    window_ticks: usize,
    f_max_override: Option<f64>,
) -> (String, Ppm) {
    let stats = window_stats(records, window_ticks);
    let f_max = f_max_override.unwrap_or_else(|| default_f_max(records));
    let map = ColorMap::with_max(f_max);

    let mut table = String::new();
    let _ = writeln!(table, "# part_layout {PART_LAYOUT_VERSION}");
    let _ = writeln!(table, "# f_max {f_max}");
    let _ = writeln!(table, "# window_ticks {window_ticks}");
    let _ = writeln!(table, "agent\tpart\tpart_name\tpeak_n\tmean_n");
    for st in &stats {
        for k in 0..PART_COUNT {
            let _ = writeln!(
                table,
                "{}\t{}\t{}\t{:.6}\t{:.6}",
                st.agent, k, PART_NAMES[k], st.peak[k], st.mean[k]
            );
        }
    }

    let n = stats.len().max(1);
    let glyph_w = GLYPH_COLS * CELL_PX + GAP_PX;
    let glyph_h = GLYPH_ROWS * CELL_PX + GAP_PX;
    let cols = n.min(AGENTS_PER_ROW);
    let rows = n.div_ceil(AGENTS_PER_ROW);
    let mut img = Ppm::new(cols * glyph_w + GAP_PX, rows * glyph_h + GAP_PX, [255, 255, 255]);
    for (gi, st) in stats.iter().enumerate() {
        let gx = (gi % AGENTS_PER_ROW) * glyph_w + GAP_PX;
        let gy = (gi / AGENTS_PER_ROW) * glyph_h + GAP_PX;
        for part in 0..PART_COUNT {
            let rgb = map.color(st.mean[part]);
            let cx = gx + (part % GLYPH_COLS) * CELL_PX;
            let cy = gy + (part / GLYPH_COLS) * CELL_PX;
            for dy in 0..CELL_PX - 1 {
                for dx in 0..CELL_PX - 1 {
                    img.set(cx + dx, cy + dy, rgb);
                }
            }
        }
    }
    (table, img)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::vec2;

    #[test]
    fn head_on_contact_hits_chest_bin() {
        // Heading +x, contact straight ahead: canonical table entry 3.
        let bin = bin_contact(0.0, vec2(0.0, 0.0), vec2(0.3, 0.0), false, false);
        assert_eq!(bin, 3);
        assert_eq!(PART_NAMES[bin], "chest");
    }

    #[test]
    fn fallen_contacts_land_in_prone_range() {
        for k in 0..32 {
            let angle = k as f64 * std::f64::consts::TAU / 32.0;
            let point = vec2(angle.cos(), angle.sin()) * 0.3;
            let bin = bin_contact(0.7, vec2(0.0, 0.0), point, false, true);
            assert!((12..24).contains(&bin));
        }
    }

    #[test]
    fn wall_contacts_land_on_shoulders_or_arms() {
        for k in 0..32 {
            let angle = k as f64 * std::f64::consts::TAU / 32.0;
            let point = vec2(angle.cos(), angle.sin()) * 0.25;
            let bin = bin_contact(0.0, vec2(0.0, 0.0), point, true, false);
            assert!(LIMB_BINS.contains(&bin), "wall bin {bin}");
        }
    }

    #[test]
    fn bearing_sweep_total_and_piecewise_constant() {
        let mut prev = None;
        let mut changes = 0;
        for k in 0..=3600 {
            let angle = k as f64 * std::f64::consts::TAU / 3600.0;
            let point = vec2(angle.cos(), angle.sin()) * 0.3;
            let bin = bin_contact(0.0, vec2(0.0, 0.0), point, false, false);
            assert!(bin < PART_COUNT);
            if prev.is_some_and(|p| p != bin) {
                changes += 1;
            }
            prev = Some(bin);
        }
        // 12 sector boundaries crossed once each over the full sweep.
        assert_eq!(changes, 12);
    }

    #[test]
    fn accumulate_empty_and_summed() {
        let poses = [AgentPose {
            id: 0,
            pos: vec2(0.0, 0.0),
            heading: 0.0,
            fallen: false,
        }];
        assert!(accumulate_tick(&poses, &[], 1.0 / 60.0, 0).is_empty());

        // Two events on the same bin: impulses 1 and 2 N*s at dt=1/60 give
        // (1+2)*60 = 180 N on the chest bin.
        let mk = |imp: f64| crate::motor::ContactEvent {
            a: ContactBody::Agent(0),
            b: ContactBody::Agent(99),
            point: vec2(0.3, 0.0),
            normal: vec2(1.0, 0.0),
            impulse: imp,
        };
        let recs = accumulate_tick(&poses, &[mk(1.0), mk(2.0)], 1.0 / 60.0, 7);
        assert_eq!(recs.len(), 1);
        assert_eq!(recs[0].tick, 7);
        assert!((recs[0].force[3] - 180.0).abs() < 1e-9);
        assert!((recs[0].total() - 180.0).abs() < 1e-9);
    }

    #[test]
    fn conservation_against_event_list() {
        let poses: Vec<AgentPose> = (0..4)
            .map(|i| AgentPose {
                id: i,
                pos: vec2(i as f64, 0.0),
                heading: 0.3 * i as f64,
                fallen: i == 2,
            })
            .collect();
        let mut rng = crate::rng::SplitMix64::new(5);
        let mut events = Vec::new();
        for _ in 0..50 {
            let a = rng.range_usize(4) as u64;
            let mut b = rng.range_usize(4) as u64;
            if b == a {
                b = (b + 1) % 4;
            }
            events.push(crate::motor::ContactEvent {
                a: ContactBody::Agent(a),
                b: ContactBody::Agent(b),
                point: vec2(rng.range_f64(-1.0, 5.0), rng.range_f64(-1.0, 1.0)),
                normal: vec2(1.0, 0.0),
                impulse: rng.range_f64(0.0, 3.0),
            });
        }
        let dt = 1.0 / 60.0;
        let recs = accumulate_tick(&poses, &events, dt, 0);
        for pose in &poses {
            let attributed: f64 = events
                .iter()
                .map(|e| {
                    let mut sum = 0.0;
                    if e.a == ContactBody::Agent(pose.id) {
                        sum += e.impulse.abs();
                    }
                    if e.b == ContactBody::Agent(pose.id) {
                        sum += e.impulse.abs();
                    }
                    sum
                })
                .sum();
            let recorded: f64 = recs
                .iter()
                .filter(|r| r.agent == pose.id)
                .map(|r| r.total() * dt)
                .sum();
            let rel = if attributed > 0.0 {
                (recorded - attributed).abs() / attributed
            } else {
                recorded.abs()
            };
            assert!(rel < 1e-9, "agent {} attribution off by {rel}", pose.id);
        }
    }

    #[test]
    fn colormap_monotone_darkness() {
        let map = ColorMap::with_max(100.0);
        let mut prev = ColorMap::luminance(map.color(0.0));
        for k in 1..=120 {
            let lum = ColorMap::luminance(map.color(k as f64));
            assert!(lum <= prev + 1e-9, "luminance increased at force {k}");
            prev = lum;
        }
        // Clamp rule: beyond f_max everything is the darkest color.
        assert_eq!(map.color(150.0), map.color(100.0));
    }

    #[test]
    fn zero_window_renders_uniform_lightest() {
        let recs = vec![PartForceRecord::zero(0, 0), PartForceRecord::zero(1, 0)];
        let (_table, img) = render_heatmap(&recs, 10, Some(50.0));
        let light = ColorMap::with_max(50.0).color(0.0);
        // Probe the first cell of the first glyph.
        assert_eq!(img.get(GAP_PX + 1, GAP_PX + 1), light);
    }

    #[test]
    fn ppm_bytes_shape() {
        let img = Ppm::new(3, 2, [1, 2, 3]);
        let bytes = img.to_bytes();
        assert!(bytes.starts_with(b"P6\n3 2\n255\n"));
        assert_eq!(bytes.len(), 11 + 18);
    }
}
