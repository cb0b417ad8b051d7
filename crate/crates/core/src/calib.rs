//! Attribute classes and per-class speed calibration.
//!
//! The motor stage loses speed to gait pulsation and velocity-relaxation lag,
//! so the speed fed to the engine must sit above the speed we want to observe.
//! Calibration bisects the engine input `v_setting` on a straight unobstructed
//! corridor until the measured speed matches the class's real-world escape
//! speed within tolerance.

use crate::engine::{self, SimConfig};
use crate::scenario::presets;
use crate::sfm::SfmOverrides;
use crate::trace::MemorySink;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use thiserror::Error;

/// Bisection stops when |v_sim - v_real| falls within this band (m/s).
pub const CALIBRATION_TOLERANCE: f64 = 0.005;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassName {
    Young,
    MiddleAged,
    Old,
    Patient,
    Disabled,
    NonPersonalized,
}

impl ClassName {
    pub const ALL: [ClassName; 6] = [
        ClassName::Young,
        ClassName::MiddleAged,
        ClassName::Old,
        ClassName::Patient,
        ClassName::Disabled,
        ClassName::NonPersonalized,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ClassName::Young => "young",
            ClassName::MiddleAged => "middle_aged",
            ClassName::Old => "old",
            ClassName::Patient => "patient",
            ClassName::Disabled => "disabled",
            ClassName::NonPersonalized => "non_personalized",
        }
    }
}

impl fmt::Display for ClassName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Per-class movement profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeClass {
    pub name: ClassName,
    /// Real-world escape speed target (m/s). Configuration, not ground truth.
    pub v_real: f64,
    /// Engine input speed; starts at `v_real` until calibrated.
    pub v_setting: f64,
    /// Hard speed ceiling (m/s).
    pub v_max: f64,
    /// Body mass (kg).
    pub mass: f64,
    /// Scale on the fall impulse threshold.
    pub fall_robustness: f64,
    pub gait_style_label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sfm_overrides: Option<SfmOverrides>,
}

impl AttributeClass {
    fn new(
        name: ClassName,
        v_real: f64,
        v_max: f64,
        mass: f64,
        fall_robustness: f64,
        label: &str,
    ) -> AttributeClass {
        AttributeClass {
            name,
            v_real,
            v_setting: v_real,
            v_max,
            mass,
            fall_robustness,
            gait_style_label: label.to_string(),
            sfm_overrides: None,
        }
    }
}

/// Optional per-class overrides from the scenario file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassOverrides {
    pub v_real: Option<f64>,
    pub v_max: Option<f64>,
    pub mass: Option<f64>,
    pub fall_robustness: Option<f64>,
    pub gait_style_label: Option<String>,
    pub sfm: Option<SfmOverrides>,
}

/// The six shipped classes and their movement profiles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassTable {
    pub classes: BTreeMap<ClassName, AttributeClass>,
}

impl Default for ClassTable {
    fn default() -> Self {
        let mut classes = BTreeMap::new();
        for class in [
            AttributeClass::new(ClassName::Young, 1.5, 2.1, 70.0, 1.2, "brisk"),
            AttributeClass::new(ClassName::MiddleAged, 1.35, 1.9, 75.0, 1.0, "steady"),
            AttributeClass::new(ClassName::Old, 1.0, 1.4, 65.0, 0.7, "cautious"),
            AttributeClass::new(ClassName::Patient, 0.8, 1.15, 62.0, 0.6, "guarded"),
            AttributeClass::new(ClassName::Disabled, 0.6, 0.9, 68.0, 0.5, "assisted"),
            AttributeClass::new(ClassName::NonPersonalized, 1.25, 1.75, 70.0, 1.0, "neutral"),
        ] {
            classes.insert(class.name, class);
        }
        ClassTable { classes }
    }
}

impl ClassTable {
    pub fn get(&self, name: ClassName) -> &AttributeClass {
        &self.classes[&name]
    }

    pub fn apply_overrides(&mut self, overrides: &BTreeMap<ClassName, ClassOverrides>) {
        for (name, ov) in overrides {
            let class = self.classes.get_mut(name).expect("all classes present");
            if let Some(v) = ov.v_real {
                class.v_real = v;
                class.v_setting = class.v_setting.max(v);
            }
            if let Some(v) = ov.v_max {
                class.v_max = v;
            }
            if let Some(v) = ov.mass {
                class.mass = v;
            }
            if let Some(v) = ov.fall_robustness {
                class.fall_robustness = v;
            }
            if let Some(label) = &ov.gait_style_label {
                class.gait_style_label = label.clone();
            }
            if let Some(sfm) = ov.sfm {
                class.sfm_overrides = Some(sfm);
            }
        }
    }

    /// Class-profile invariants: positive speeds under their ceilings, and
    /// the published speed ordering across the personalized classes.
    pub fn validate(&self) -> Result<(), CalibError> {
        for class in self.classes.values() {
            if class.v_real <= 0.0 || class.v_real > class.v_max {
                return Err(CalibError::InvalidClassTable(format!(
                    "{}: need 0 < v_real <= v_max, got v_real {} v_max {}",
                    class.name, class.v_real, class.v_max
                )));
            }
        }
        let v = |n: ClassName| self.classes[&n].v_real;
        let personalized = [
            ClassName::Young,
            ClassName::MiddleAged,
            ClassName::Old,
            ClassName::Patient,
            ClassName::Disabled,
        ];
        for i in 0..personalized.len() {
            for j in (i + 1)..personalized.len() {
                if v(personalized[i]) == v(personalized[j]) {
                    return Err(CalibError::InvalidClassTable(format!(
                        "personalized classes must have distinct v_real: {} == {}",
                        personalized[i], personalized[j]
                    )));
                }
            }
        }
        if !(v(ClassName::Young) > v(ClassName::MiddleAged)
            && v(ClassName::MiddleAged) > v(ClassName::Old))
        {
            return Err(CalibError::InvalidClassTable(
                "require v_real ordering young > middle_aged > old".into(),
            ));
        }
        if v(ClassName::Patient) > v(ClassName::Old) || v(ClassName::Disabled) > v(ClassName::Old) {
            return Err(CalibError::InvalidClassTable(
                "patients and disabled may not exceed the old class v_real".into(),
            ));
        }
        Ok(())
    }
}

/// Result of one class calibration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub class: ClassName,
    pub v_setting: f64,
    pub v_sim: f64,
    pub residual: f64,
    pub iterations: u32,
}

/// Calibrated speed settings, persisted as the calibration file.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CalibrationTable {
    pub v_setting: BTreeMap<ClassName, f64>,
}

impl CalibrationTable {
    pub fn from_reports(reports: &[CalibrationReport]) -> CalibrationTable {
        CalibrationTable {
            v_setting: reports.iter().map(|r| (r.class, r.v_setting)).collect(),
        }
    }

    pub fn apply_to(&self, table: &mut ClassTable) -> Result<(), CalibError> {
        for (name, &v) in &self.v_setting {
            table
                .classes
                .get_mut(name)
                .ok_or(CalibError::MissingClass(*name))?
                .v_setting = v;
        }
        Ok(())
    }

    /// Classes present in the table.
    pub fn covers(&self, name: ClassName) -> bool {
        self.v_setting.contains_key(&name)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("calibration table serializes")
    }

    pub fn from_toml_str(text: &str) -> Result<CalibrationTable, CalibError> {
        toml::from_str(text).map_err(|e| CalibError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<CalibrationTable, CalibError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }

    pub fn save(&self, path: &Path) -> Result<(), CalibError> {
        std::fs::write(path, self.to_toml_string())?;
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum CalibError {
    #[error("measured speed is not monotone over the bracket: f(lo)={lo:.4}, f(hi)={hi:.4}")]
    NonMonotone { lo: f64, hi: f64 },
    #[error(
        "no convergence after {iterations} iterations: best v_setting {v_setting:.4} gives \
         v_sim {v_sim:.4} (residual {residual:.4})"
    )]
    MaxIter {
        v_setting: f64,
        v_sim: f64,
        residual: f64,
        iterations: u32,
    },
    #[error("agent covered only {covered:.2} m of the corridor")]
    DidNotTraverse { covered: f64 },
    #[error("invalid class table: {0}")]
    InvalidClassTable(String),
    #[error("calibration file names unknown class {0}")]
    MissingClass(ClassName),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("simulation failed: {0}")]
    Sim(String),
}

/// Measured mean speed over the central 20 m of a straight 30 m walk with the
/// full motor model. Deterministic for a fixed preset seed.
pub fn measure_straight_speed(class: &AttributeClass, v_setting: f64) -> Result<f64, CalibError> {
    if !(v_setting > 0.0) {
        return Err(CalibError::Sim(format!("v_setting must be positive, got {v_setting}")));
    }
    let spec = presets::calibration_corridor(class.name);
    let mut table = ClassTable::default();
    let mut probe = class.clone();
    probe.v_setting = v_setting;
    table.classes.insert(class.name, probe);

    let config = SimConfig {
        max_ticks: 6000,
        ..SimConfig::default()
    };
    let mut sink = MemorySink::default();
    engine::run(&spec, &config, &table, &mut sink).map_err(|e| CalibError::Sim(e.to_string()))?;

    let frames = sink.frames;
    let x0 = frames
        .first()
        .and_then(|f| f.agents.first())
        .map(|a| a.pos.x)
        .ok_or_else(|| CalibError::Sim("empty trace".into()))?;
    let dt = config.dt;
    let cross = |target: f64| -> Option<f64> {
        let mut prev_x = x0;
        for (i, frame) in frames.iter().enumerate() {
            let x = frame.agents.first().map(|a| a.pos.x)?;
            if x >= target && i > 0 {
                let frac = if x > prev_x { (target - prev_x) / (x - prev_x) } else { 0.0 };
                return Some(((i - 1) as f64 + frac) * dt);
            }
            prev_x = x;
        }
        None
    };
    let t1 = cross(x0 + 5.0);
    let t2 = cross(x0 + 25.0);
    match (t1, t2) {
        (Some(t1), Some(t2)) if t2 > t1 => Ok(20.0 / (t2 - t1)),
        _ => {
            let covered = frames
                .last()
                .and_then(|f| f.agents.first())
                .map(|a| a.pos.x - x0)
                .unwrap_or(0.0);
            Err(CalibError::DidNotTraverse { covered })
        }
    }
}

/// Bisection driver over an arbitrary speed-measurement function. The probe
/// asserts the response is monotone nondecreasing over the bracket
/// `[v_real, 3*v_real]` before refining.
pub fn calibrate_with(
    class: ClassName,
    mut measure: impl FnMut(f64) -> Result<f64, CalibError>,
    v_real: f64,
    tolerance: f64,
    max_iter: u32,
) -> Result<CalibrationReport, CalibError> {
    let mut lo = v_real;
    let mut hi = 3.0 * v_real;
    let mut iterations = 0u32;

    let mut best = (f64::INFINITY, v_real, 0.0);
    let check = |v: f64, m: f64, best: &mut (f64, f64, f64)| {
        let residual = (m - v_real).abs();
        if residual < best.0 {
            *best = (residual, v, m);
        }
        residual <= tolerance
    };

    iterations += 1;
    let m_lo = measure(lo)?;
    if check(lo, m_lo, &mut best) {
        return Ok(report(class, lo, m_lo, v_real, iterations));
    }
    iterations += 1;
    let m_hi = measure(hi)?;
    if m_hi + 1e-9 < m_lo {
        return Err(CalibError::NonMonotone { lo: m_lo, hi: m_hi });
    }
    if check(hi, m_hi, &mut best) {
        return Ok(report(class, hi, m_hi, v_real, iterations));
    }

    while iterations < max_iter {
        iterations += 1;
        let mid = 0.5 * (lo + hi);
        let m = measure(mid)?;
        if check(mid, m, &mut best) {
            return Ok(report(class, mid, m, v_real, iterations));
        }
        if m < v_real {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(CalibError::MaxIter {
        v_setting: best.1,
        v_sim: best.2,
        residual: best.0,
        iterations,
    })
}

fn report(class: ClassName, v_setting: f64, v_sim: f64, v_real: f64, iterations: u32) -> CalibrationReport {
    CalibrationReport {
        class,
        v_setting,
        v_sim,
        residual: (v_sim - v_real).abs(),
        iterations,
    }
}

/// Calibrate one class on the straight-corridor benchmark.
pub fn calibrate(
    class: &AttributeClass,
    tolerance: f64,
    max_iter: u32,
) -> Result<CalibrationReport, CalibError> {
    calibrate_with(
        class.name,
        |v| measure_straight_speed(class, v),
        class.v_real,
        tolerance,
        max_iter,
    )
}

/// Calibrate every class in the table; classes run in parallel, each on an
/// isolated simulation instance.
pub fn calibrate_all(
    table: &ClassTable,
    tolerance: f64,
    max_iter: u32,
) -> Result<Vec<CalibrationReport>, CalibError> {
    table.validate()?;
    let mut classes: Vec<&AttributeClass> = table.classes.values().collect();
    classes.sort_by_key(|c| c.name);
    classes
        .par_iter()
        .map(|class| calibrate(class, tolerance, max_iter))
        .collect()
}
