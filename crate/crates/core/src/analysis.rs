//! Post-run metrics and the illustrative experiment drivers.
//!
//! Everything here is a pure function of trace frames, so analysis can run
//! online while the engine streams frames or offline from a trace directory
//! and produce identical numbers.

use crate::calib::{ClassName, ClassTable};
use crate::engine::{self, SimConfig};
use crate::motor::AgentStatus;
use crate::scenario::{ScenarioError, ScenarioSpec, TerrainKind, TerrainZone};
use crate::trace::{NullSink, TraceFrame};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

/// Summary statistics of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub total_agents: usize,
    pub escaped: usize,
    pub trampled_count: usize,
    pub trapped: usize,
    /// escaped / total at the final tick.
    pub success_rate: f64,
    /// Count of walking-to-fallen transitions (events, not final state).
    pub fallen_count: u64,
    pub mean_evac_time: Option<f64>,
    /// Walking-speed samples, one per agent per second, by class.
    pub speed_samples: BTreeMap<ClassName, Vec<f64>>,
    /// Peak local crowd density (agents per square meter), sampled per second.
    pub density_series: Vec<f64>,
    pub ticks: u64,
    /// False when the trace ended with non-terminal agents or decode errors.
    pub complete: bool,
}

impl RunMetrics {
    pub fn empty(total_agents: usize) -> RunMetrics {
        RunMetrics {
            total_agents,
            escaped: 0,
            trampled_count: 0,
            trapped: 0,
            success_rate: if total_agents == 0 { 0.0 } else { 0.0 },
            fallen_count: 0,
            mean_evac_time: None,
            speed_samples: BTreeMap::new(),
            density_series: Vec::new(),
            ticks: 0,
            complete: total_agents == 0,
        }
    }
}

/// Streaming metrics builder; the engine feeds it the same frames it writes
/// to the trace, and offline recomputation feeds it frames read back in.
pub struct MetricsAccumulator {
    dt: f64,
    sample_every: u64,
    total_agents: usize,
    prev: HashMap<u64, AgentStatus>,
    last: HashMap<u64, AgentStatus>,
    fallen_count: u64,
    escape_times: Vec<f64>,
    speeds: BTreeMap<ClassName, Vec<f64>>,
    density: Vec<f64>,
    ticks: u64,
    saw_frame: bool,
}

impl MetricsAccumulator {
    pub fn new(dt: f64, total_agents: usize) -> MetricsAccumulator {
        MetricsAccumulator {
            dt,
            sample_every: (1.0 / dt).round().max(1.0) as u64,
            total_agents,
            prev: HashMap::new(),
            last: HashMap::new(),
            fallen_count: 0,
            escape_times: Vec::new(),
            speeds: BTreeMap::new(),
            density: Vec::new(),
            ticks: 0,
            saw_frame: false,
        }
    }

    pub fn push(&mut self, frame: &TraceFrame) {
        self.saw_frame = true;
        self.ticks = self.ticks.max(frame.tick + 1);
        let sample_tick = frame.tick % self.sample_every == 0;
        let mut bins: HashMap<(i64, i64), usize> = HashMap::new();
        for agent in &frame.agents {
            let prev = self.prev.get(&agent.id).copied();
            match (prev, agent.status) {
                (Some(AgentStatus::Walking), AgentStatus::Fallen { .. }) => {
                    self.fallen_count += 1;
                }
                (Some(p), AgentStatus::Escaped) if !matches!(p, AgentStatus::Escaped) => {
                    self.escape_times.push(frame.tick as f64 * self.dt);
                }
                _ => {}
            }
            self.prev.insert(agent.id, agent.status);
            self.last.insert(agent.id, agent.status);
            if sample_tick {
                if matches!(agent.status, AgentStatus::Walking) {
                    self.speeds
                        .entry(agent.class)
                        .or_default()
                        .push(agent.vel.norm());
                }
                if !matches!(agent.status, AgentStatus::Escaped) {
                    *bins
                        .entry((agent.pos.x.floor() as i64, agent.pos.y.floor() as i64))
                        .or_default() += 1;
                }
            }
        }
        if sample_tick {
            let peak = bins.values().copied().max().unwrap_or(0);
            self.density.push(peak as f64);
        }
    }

    pub fn finish(self) -> RunMetrics {
        let escaped = self
            .last
            .values()
            .filter(|s| matches!(s, AgentStatus::Escaped))
            .count();
        let trampled = self
            .last
            .values()
            .filter(|s| matches!(s, AgentStatus::Trampled))
            .count();
        let trapped = self
            .last
            .values()
            .filter(|s| matches!(s, AgentStatus::Trapped))
            .count();
        let all_terminal = self.last.values().all(|s| {
            matches!(
                s,
                AgentStatus::Escaped | AgentStatus::Trampled | AgentStatus::Trapped
            )
        });
        let mean_evac_time = if self.escape_times.is_empty() {
            None
        } else {
            Some(self.escape_times.iter().sum::<f64>() / self.escape_times.len() as f64)
        };
        RunMetrics {
            total_agents: self.total_agents,
            escaped,
            trampled_count: trampled,
            trapped,
            success_rate: if self.total_agents == 0 {
                0.0
            } else {
                escaped as f64 / self.total_agents as f64
            },
            fallen_count: self.fallen_count,
            mean_evac_time,
            speed_samples: self.speeds,
            density_series: self.density,
            ticks: self.ticks,
            complete: self.total_agents == 0 || (self.saw_frame && all_terminal),
        }
    }
}

/// Recompute metrics from persisted frames.
pub fn compute_metrics<'a>(
    frames: impl IntoIterator<Item = &'a TraceFrame>,
    dt: f64,
    total_agents: usize,
) -> RunMetrics {
    let mut acc = MetricsAccumulator::new(dt, total_agents);
    for frame in frames {
        acc.push(frame);
    }
    acc.finish()
}

/// Linear-interpolation percentile (type 7) over a sorted slice.
fn percentile_sorted(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = p * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    sorted[lo] * (1.0 - frac) + sorted[hi] * frac
}

/// min / Q1 / median / Q3 / max of a sample set.
pub fn five_number_summary(samples: &[f64]) -> Option<(f64, f64, f64, f64, f64)> {
    if samples.is_empty() {
        return None;
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    Some((
        sorted[0],
        percentile_sorted(&sorted, 0.25),
        percentile_sorted(&sorted, 0.5),
        percentile_sorted(&sorted, 0.75),
        sorted[sorted.len() - 1],
    ))
}

/// Spearman rank correlation with average ranks for ties. `None` when either
/// side has zero rank variance or fewer than two points.
pub fn spearman(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    let n = rx.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for i in 0..rx.len() {
        let dx = rx[i] - mx;
        let dy = ry[i] - my;
        cov += dx * dy;
        vx += dx * dx;
        vy += dy * dy;
    }
    if vx <= 0.0 || vy <= 0.0 {
        return None;
    }
    Some(cov / (vx.sqrt() * vy.sqrt()))
}

fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &idx in &order[i..=j] {
            ranks[idx] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Per-class boxplot summary row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpeedRow {
    pub class: ClassName,
    pub count: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

/// Pool walking-speed samples across runs into per-class quartile summaries.
/// Classes absent from every trace produce an empty row.
pub fn speed_distribution(runs: &[RunMetrics]) -> Vec<SpeedRow> {
    ClassName::ALL
        .iter()
        .map(|&class| {
            let pooled: Vec<f64> = runs
                .iter()
                .filter_map(|r| r.speed_samples.get(&class))
                .flatten()
                .copied()
                .collect();
            match five_number_summary(&pooled) {
                Some((min, q1, median, q3, max)) => SpeedRow {
                    class,
                    count: pooled.len(),
                    min,
                    q1,
                    median,
                    q3,
                    max,
                },
                None => SpeedRow {
                    class,
                    count: 0,
                    min: 0.0,
                    q1: 0.0,
                    median: 0.0,
                    q3: 0.0,
                    max: 0.0,
                },
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVariable {
    AgentCount,
    CorridorWidth,
    TerrainKind,
}

impl SweepVariable {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepVariable::AgentCount => "agent_count",
            SweepVariable::CorridorWidth => "corridor_width",
            SweepVariable::TerrainKind => "terrain_kind",
        }
    }
}

/// Experiment grid: one variable, its values, and paired-seed repetitions
/// over a base scenario (kept unexpanded so templates stay mutable).
#[derive(Debug, Clone)]
pub struct SweepSpec {
    pub variable: SweepVariable,
    pub values: Vec<String>,
    pub repetitions: usize,
    pub base: ScenarioSpec,
}

#[derive(Debug, Clone)]
pub struct SweepCell {
    pub value: String,
    pub repetition: usize,
    pub seed: u64,
    pub result: Result<RunMetrics, String>,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub variable: SweepVariable,
    pub cells: Vec<SweepCell>,
    /// Spearman rank correlation between the swept value and trample counts;
    /// only defined for numeric variables.
    pub trample_spearman: Option<f64>,
}

/// Apply one sweep value to the base scenario, returning an expanded and
/// validated spec.
pub fn apply_sweep_value(
    base: &ScenarioSpec,
    variable: SweepVariable,
    value: &str,
) -> Result<ScenarioSpec, String> {
    let mut spec = base.clone();
    match variable {
        SweepVariable::AgentCount => {
            let count: usize = value.parse().map_err(|_| format!("bad agent count {value:?}"))?;
            if let Some(t) = spec.corridor.as_mut() {
                t.agents = count;
            } else {
                let total: usize = spec.spawns.iter().map(|s| s.count).sum();
                if total == 0 {
                    return Err("base scenario has no spawns to scale".into());
                }
                let mut assigned = 0;
                let n_groups = spec.spawns.len();
                for (i, group) in spec.spawns.iter_mut().enumerate() {
                    let share = if i + 1 == n_groups {
                        count - assigned
                    } else {
                        ((group.count as f64 / total as f64) * count as f64).round() as usize
                    };
                    group.count = share;
                    assigned += share;
                }
                spec.spawns.retain(|g| g.count > 0);
            }
        }
        SweepVariable::CorridorWidth => {
            let width: f64 = value.parse().map_err(|_| format!("bad width {value:?}"))?;
            let t = spec
                .corridor
                .as_mut()
                .ok_or("corridor_width sweep requires a [corridor] template scenario")?;
            t.width = width;
        }
        SweepVariable::TerrainKind => {
            let kind: TerrainKind = value.parse()?;
            if let Some(t) = spec.corridor.as_mut() {
                t.terrain = kind;
            } else {
                match kind {
                    TerrainKind::Normal => spec.terrain_zones.clear(),
                    other => {
                        if spec.terrain_zones.is_empty() {
                            return Err(
                                "terrain sweep on a template-free scenario needs at least one \
                                 terrain zone to retarget"
                                    .into(),
                            );
                        }
                        spec.terrain_zones = spec
                            .terrain_zones
                            .iter()
                            .map(|z| TerrainZone::preset(other, z.region.clone()))
                            .collect();
                    }
                }
            }
        }
    }
    spec.expand().map_err(|e| e.to_string())?;
    spec.name = format!("{}_{}={}", spec.name, variable.as_str(), value);
    Ok(spec)
}

/// Execute the sweep grid; cells run in parallel, each with seed
/// `base_seed + repetition`.
pub fn run_sweep(
    sweep: &SweepSpec,
    config: &SimConfig,
    classes: &ClassTable,
) -> Result<SweepResult, ScenarioError> {
    if sweep.values.is_empty() {
        return Err(ScenarioError::Validation {
            path: "sweep.values".into(),
            message: "must be nonempty".into(),
        });
    }
    if sweep.repetitions == 0 {
        return Err(ScenarioError::Validation {
            path: "sweep.repetitions".into(),
            message: "must be at least 1".into(),
        });
    }
    let jobs: Vec<(String, usize)> = sweep
        .values
        .iter()
        .flat_map(|v| (0..sweep.repetitions).map(move |r| (v.clone(), r)))
        .collect();
    let cells: Vec<SweepCell> = jobs
        .par_iter()
        .map(|(value, rep)| {
            let seed = sweep.base.seed + *rep as u64;
            let result = apply_sweep_value(&sweep.base, sweep.variable, value).and_then(|spec| {
                let cfg = SimConfig {
                    seed: Some(seed),
                    ..config.clone()
                };
                engine::run(&spec, &cfg, classes, &mut NullSink)
                    .map(|stats| stats.metrics)
                    .map_err(|e| e.to_string())
            });
            SweepCell {
                value: value.clone(),
                repetition: *rep,
                seed,
                result,
            }
        })
        .collect();

    let trample_spearman = match sweep.variable {
        SweepVariable::TerrainKind => None,
        _ => {
            let pairs: Vec<(f64, f64)> = cells
                .iter()
                .filter_map(|c| {
                    let x: f64 = c.value.parse().ok()?;
                    let m = c.result.as_ref().ok()?;
                    Some((x, m.trampled_count as f64))
                })
                .collect();
            let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            spearman(&xs, &ys)
        }
    };
    Ok(SweepResult {
        variable: sweep.variable,
        cells,
        trample_spearman,
    })
}

pub fn metrics_to_tsv(items: &[(String, &RunMetrics)]) -> String {
    let mut out = String::from(
        "run\ttotal\tescaped\tsuccess_rate\tfallen_count\ttrampled\ttrapped\tmean_evac_s\tticks\tcomplete\n",
    );
    for (label, m) in items {
        let _ = writeln!(
            out,
            "{label}\t{}\t{}\t{:.4}\t{}\t{}\t{}\t{}\t{}\t{}",
            m.total_agents,
            m.escaped,
            m.success_rate,
            m.fallen_count,
            m.trampled_count,
            m.trapped,
            m.mean_evac_time
                .map(|t| format!("{t:.2}"))
                .unwrap_or_else(|| "-".into()),
            m.ticks,
            m.complete
        );
    }
    out
}

pub fn speeds_to_tsv(rows: &[SpeedRow]) -> String {
    let mut out = String::from("class\tcount\tmin\tq1\tmedian\tq3\tmax\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{}\t{}\t{:.4}\t{:.4}\t{:.4}\t{:.4}\t{:.4}",
            r.class, r.count, r.min, r.q1, r.median, r.q3, r.max
        );
    }
    out
}

pub fn sweep_to_tsv(result: &SweepResult) -> String {
    let mut out = String::from(
        "variable\tvalue\trepetition\tseed\tsuccess_rate\tfallen_count\ttrampled\terror\n",
    );
    for c in &result.cells {
        match &c.result {
            Ok(m) => {
                let _ = writeln!(
                    out,
                    "{}\t{}\t{}\t{}\t{:.4}\t{}\t{}\t-",
                    result.variable.as_str(),
                    c.value,
                    c.repetition,
                    c.seed,
                    m.success_rate,
                    m.fallen_count,
                    m.trampled_count
                );
            }
            Err(e) => {
                let _ = writeln!(
                    out,
                    "{}\t{}\t{}\t{}\t-\t-\t-\t{}",
                    result.variable.as_str(),
                    c.value,
                    c.repetition,
                    c.seed,
                    e.replace(['\t', '\n'], " ")
                );
            }
        }
    }
    if let Some(rho) = result.trample_spearman {
        let _ = writeln!(out, "# spearman_trample\t{rho:.4}");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::vec2;
    use crate::trace::{AgentRecord, ContactSummary};

    fn frame(tick: u64, states: &[(u64, ClassName, AgentStatus, f64)]) -> TraceFrame {
        TraceFrame {
            tick,
            agents: states
                .iter()
                .map(|&(id, class, status, speed)| AgentRecord {
                    id,
                    class,
                    pos: vec2(id as f64, 0.0),
                    vel: vec2(speed, 0.0),
                    status,
                    gait: 0.0,
                })
                .collect(),
            contacts: ContactSummary::default(),
            forces: None,
            force_components: None,
            planned_paths: None,
        }
    }

    #[test]
    fn hand_built_trace_metrics() {
        use AgentStatus::*;
        let dt = 1.0 / 60.0;
        // Agent 7 falls twice and escapes; agent 8 walks out; agent 9 is
        // trampled. Frames are one second apart so every frame samples.
        let frames = vec![
            frame(0, &[(7, ClassName::Young, Walking, 1.2), (8, ClassName::Old, Walking, 0.9), (9, ClassName::Old, Walking, 0.8)]),
            frame(60, &[(7, ClassName::Young, Fallen { time_down: 0.0 }, 0.0), (8, ClassName::Old, Walking, 0.9), (9, ClassName::Old, Fallen { time_down: 0.0 }, 0.0)]),
            frame(120, &[(7, ClassName::Young, Walking, 1.0), (8, ClassName::Old, Walking, 0.8), (9, ClassName::Old, Trampled, 0.0)]),
            frame(180, &[(7, ClassName::Young, Fallen { time_down: 0.0 }, 0.0), (8, ClassName::Old, Escaped, 0.0), (9, ClassName::Old, Trampled, 0.0)]),
            frame(240, &[(7, ClassName::Young, Walking, 1.1), (8, ClassName::Old, Escaped, 0.0), (9, ClassName::Old, Trampled, 0.0)]),
            frame(300, &[(7, ClassName::Young, Escaped, 0.0), (8, ClassName::Old, Escaped, 0.0), (9, ClassName::Old, Trampled, 0.0)]),
        ];
        let m = compute_metrics(&frames, dt, 3);
        assert_eq!(m.fallen_count, 2, "both of agent 7's falls count");
        assert_eq!(m.escaped, 2);
        assert_eq!(m.trampled_count, 1);
        assert!((m.success_rate - 2.0 / 3.0).abs() < 1e-12);
        // Escape times: agent 8 at t=3 s, agent 7 at t=5 s.
        assert!((m.mean_evac_time.unwrap() - 4.0).abs() < 1e-9);
        assert!(m.complete);
        // Walking speed samples: young collected at frames 0,120,240.
        assert_eq!(m.speed_samples[&ClassName::Young].len(), 3);
        assert_eq!(m.speed_samples[&ClassName::Old].len(), 4);
    }

    #[test]
    fn all_escape_no_falls() {
        use AgentStatus::*;
        let frames = vec![
            frame(0, &[(0, ClassName::Young, Walking, 1.0)]),
            frame(60, &[(0, ClassName::Young, Escaped, 0.0)]),
        ];
        let m = compute_metrics(&frames, 1.0 / 60.0, 1);
        assert_eq!(m.success_rate, 1.0);
        assert_eq!(m.fallen_count, 0);
    }

    #[test]
    fn truncated_trace_flagged() {
        use AgentStatus::*;
        let frames = vec![frame(0, &[(0, ClassName::Young, Walking, 1.0)])];
        let m = compute_metrics(&frames, 1.0 / 60.0, 1);
        assert!(!m.complete);
    }

    #[test]
    fn stationary_trace_zero_distribution() {
        use AgentStatus::*;
        let frames = vec![
            frame(0, &[(0, ClassName::Old, Walking, 0.0)]),
            frame(60, &[(0, ClassName::Old, Walking, 0.0)]),
        ];
        let m = compute_metrics(&frames, 1.0 / 60.0, 1);
        let rows = speed_distribution(&[m]);
        let old = rows.iter().find(|r| r.class == ClassName::Old).unwrap();
        assert_eq!(old.max, 0.0);
        let young = rows.iter().find(|r| r.class == ClassName::Young).unwrap();
        assert_eq!(young.count, 0, "absent class reports an empty row");
    }

    #[test]
    fn quartiles_match_known_values() {
        let samples = [1.0, 2.0, 3.0, 4.0];
        let (min, q1, med, q3, max) = five_number_summary(&samples).unwrap();
        assert_eq!(min, 1.0);
        assert_eq!(q1, 1.75);
        assert_eq!(med, 2.5);
        assert_eq!(q3, 3.25);
        assert_eq!(max, 4.0);
        assert!(five_number_summary(&[]).is_none());
    }

    #[test]
    fn spearman_reference_values() {
        let xs = [1.0, 2.0, 3.0, 4.0, 5.0];
        let ys = [2.0, 4.0, 5.0, 8.0, 9.0];
        assert!((spearman(&xs, &ys).unwrap() - 1.0).abs() < 1e-12);
        let anti: Vec<f64> = ys.iter().rev().copied().collect();
        assert!((spearman(&xs, &anti).unwrap() + 1.0).abs() < 1e-12);
        // Tied x-values with average ranks: hand-computed rho.
        // xs ranks: [1.5, 1.5, 3, 4, 5]; ys ranks: [1, 2, 3, 4, 5].
        // Pearson over those ranks = 0.975 / sqrt(0.95) / ... computed below.
        let xs_t = [1.0, 1.0, 2.0, 3.0, 4.0];
        let rho = spearman(&xs_t, &ys).unwrap();
        // cov = 9.5, vx = 9.0, vy = 10.0 on centered ranks.
        let expected = 9.5 / (9.0f64.sqrt() * 10.0f64.sqrt());
        assert!((rho - expected).abs() < 1e-12, "rho {rho} vs {expected}");
        // Degenerate inputs.
        assert!(spearman(&[1.0], &[1.0]).is_none());
        assert!(spearman(&[1.0, 1.0], &[1.0, 2.0]).is_none());
    }

    #[test]
    fn degenerate_sweep_equals_direct_metrics() {
        let base = crate::scenario::presets::room_evacuation(8, 21);
        let sweep = SweepSpec {
            variable: SweepVariable::AgentCount,
            values: vec!["8".into()],
            repetitions: 1,
            base: base.clone(),
        };
        let config = SimConfig {
            max_ticks: 2400,
            ..SimConfig::default()
        };
        let classes = ClassTable::default();
        let result = run_sweep(&sweep, &config, &classes).unwrap();
        assert_eq!(result.cells.len(), 1);
        let cell_metrics = result.cells[0].result.as_ref().unwrap();

        let mut direct_spec = apply_sweep_value(&base, SweepVariable::AgentCount, "8").unwrap();
        direct_spec.seed = base.seed; // repetition 0 keeps the base seed
        let cfg = SimConfig {
            seed: Some(base.seed),
            ..config
        };
        let direct = engine::run(&direct_spec, &cfg, &classes, &mut NullSink).unwrap();
        assert_eq!(*cell_metrics, direct.metrics);
    }
}
