//! Gait-cycle analysis over motion sequences.
//!
//! The ankle-distance waveform of a walk traces two peak/trough pairs per
//! gait cycle. Peaks and troughs are detected with a hysteresis threshold and
//! labeled InitialContact / MidStance / OppositeInitialContact / FeetAdjacent
//! carrying gait values 0, 0.3, 0.5, 0.75; other frames interpolate linearly
//! (the cycle wraps 0.75 -> 1.0 == 0). Annotated sequences can then be paired
//! frame-by-frame across styles by equal gait value with nearest-joint-angle
//! tie-breaking.
//!
//! Motion file format (tabular text): leading `# frame_rate <hz>` and
//! `# style <label>` metadata lines, a whitespace-separated header row, then
//! one row of floats per frame. Columns named `<joint>.x/.y/.z` are joint
//! positions (meters, y-up); `<name>.angle` are joint angles (radians);
//! `root.yaw` is the root orientation about the vertical axis.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::fmt::Write as _;
use thiserror::Error;

pub const LEFT_ANKLE: &str = "left_ankle";
pub const RIGHT_ANKLE: &str = "right_ankle";
pub const ROOT_JOINT: &str = "root";

/// Fewest frames a sequence needs before gait analysis is meaningful.
pub const MIN_FRAMES: usize = 10;
/// Extrema must rise above this fraction of the waveform range.
pub const PROMINENCE_FRACTION: f64 = 0.1;
/// Centered moving-average window for the ankle-distance waveform.
pub const SMOOTH_WINDOW: usize = 5;
/// Default cyclic gait-value distance for frame matching.
pub const MATCH_TOLERANCE: f64 = 0.02;

#[derive(Debug, Clone, PartialEq)]
pub struct MotionFrame {
    pub positions: Vec<[f64; 3]>,
    pub angles: Vec<f64>,
    pub root_yaw: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MotionSequence {
    pub frame_rate: f64,
    pub style_label: String,
    pub joint_names: Vec<String>,
    pub angle_names: Vec<String>,
    pub frames: Vec<MotionFrame>,
}

#[derive(Debug, Error)]
pub enum GaitError {
    #[error("missing joint {0:?}")]
    MissingJoint(String),
    #[error("sequence too short: {got} frames, need at least {need} (two gait cycles)")]
    TooShort { got: usize, need: usize },
    #[error("waveform is flat; no gait cycles to detect")]
    Flat,
    #[error("only {0} qualifying extrema; need at least 4 (two waveform cycles)")]
    TooFewExtrema(usize),
    #[error("keyframes out of canonical event order at index {0}")]
    KeyframesOutOfOrder(usize),
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GaitEvent {
    InitialContact,
    MidStance,
    OppositeInitialContact,
    FeetAdjacent,
}

impl GaitEvent {
    pub const CYCLE: [GaitEvent; 4] = [
        GaitEvent::InitialContact,
        GaitEvent::MidStance,
        GaitEvent::OppositeInitialContact,
        GaitEvent::FeetAdjacent,
    ];

    /// The anchored gait value of this event.
    pub fn value(self) -> f64 {
        match self {
            GaitEvent::InitialContact => 0.0,
            GaitEvent::MidStance => 0.3,
            GaitEvent::OppositeInitialContact => 0.5,
            GaitEvent::FeetAdjacent => 0.75,
        }
    }

    pub fn is_peak(self) -> bool {
        matches!(self, GaitEvent::InitialContact | GaitEvent::OppositeInitialContact)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Keyframe {
    pub frame: usize,
    pub event: GaitEvent,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GaitAnnotation {
    /// Per-frame gait value in [0, 1).
    pub values: Vec<f64>,
    pub keyframes: Vec<Keyframe>,
}

impl MotionSequence {
    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.joint_names.iter().position(|n| n == name)
    }

    pub fn from_tsv_str(text: &str) -> Result<MotionSequence, GaitError> {
        let mut frame_rate = 30.0;
        let mut style_label = String::from("unknown");
        let mut header: Option<Vec<String>> = None;
        let mut joint_names: Vec<String> = Vec::new();
        let mut angle_names: Vec<String> = Vec::new();
        // Column layout: per column either position component, angle, or yaw.
        enum Col {
            Pos(usize, usize),
            Angle(usize),
            RootYaw,
        }
        let mut cols: Vec<Col> = Vec::new();
        let mut frames = Vec::new();

        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                let mut parts = rest.split_whitespace();
                match parts.next() {
                    Some("frame_rate") => {
                        frame_rate = parts
                            .next()
                            .and_then(|v| v.parse().ok())
                            .ok_or(GaitError::Parse {
                                line: lineno + 1,
                                message: "bad frame_rate".into(),
                            })?;
                    }
                    Some("style") => {
                        style_label = parts.collect::<Vec<_>>().join(" ");
                    }
                    _ => {}
                }
                continue;
            }
            if header.is_none() {
                let names: Vec<String> = line.split_whitespace().map(str::to_string).collect();
                for name in &names {
                    if name == "root.yaw" {
                        cols.push(Col::RootYaw);
                    } else if let Some(joint) = name.strip_suffix(".x") {
                        joint_names.push(joint.to_string());
                        cols.push(Col::Pos(joint_names.len() - 1, 0));
                    } else if let Some(joint) = name.strip_suffix(".y") {
                        let j = joint_names
                            .iter()
                            .position(|n| n == joint)
                            .ok_or(GaitError::Parse {
                                line: lineno + 1,
                                message: format!("{joint}.y before {joint}.x"),
                            })?;
                        cols.push(Col::Pos(j, 1));
                    } else if let Some(joint) = name.strip_suffix(".z") {
                        let j = joint_names
                            .iter()
                            .position(|n| n == joint)
                            .ok_or(GaitError::Parse {
                                line: lineno + 1,
                                message: format!("{joint}.z before {joint}.x"),
                            })?;
                        cols.push(Col::Pos(j, 2));
                    } else if let Some(angle) = name.strip_suffix(".angle") {
                        angle_names.push(angle.to_string());
                        cols.push(Col::Angle(angle_names.len() - 1));
                    } else {
                        return Err(GaitError::Parse {
                            line: lineno + 1,
                            message: format!("unrecognized column {name:?}"),
                        });
                    }
                }
                header = Some(names);
                continue;
            }
            let values: Result<Vec<f64>, _> = line.split_whitespace().map(str::parse).collect();
            let values = values.map_err(|e| GaitError::Parse {
                line: lineno + 1,
                message: format!("{e}"),
            })?;
            if values.len() != cols.len() {
                return Err(GaitError::Parse {
                    line: lineno + 1,
                    message: format!("expected {} columns, got {}", cols.len(), values.len()),
                });
            }
            let mut frame = MotionFrame {
                positions: vec![[0.0; 3]; joint_names.len()],
                angles: vec![0.0; angle_names.len()],
                root_yaw: 0.0,
            };
            for (col, &v) in cols.iter().zip(&values) {
                match *col {
                    Col::Pos(j, c) => frame.positions[j][c] = v,
                    Col::Angle(a) => frame.angles[a] = v,
                    Col::RootYaw => frame.root_yaw = v,
                }
            }
            frames.push(frame);
        }
        if header.is_none() {
            return Err(GaitError::Parse {
                line: 0,
                message: "no header row".into(),
            });
        }
        Ok(MotionSequence {
            frame_rate,
            style_label,
            joint_names,
            angle_names,
            frames,
        })
    }

    pub fn to_tsv_string(&self, annotation: Option<&GaitAnnotation>) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "# frame_rate {}", self.frame_rate);
        let _ = writeln!(out, "# style {}", self.style_label);
        let mut cols: Vec<String> = Vec::new();
        for j in &self.joint_names {
            cols.push(format!("{j}.x"));
            cols.push(format!("{j}.y"));
            cols.push(format!("{j}.z"));
        }
        cols.push("root.yaw".into());
        for a in &self.angle_names {
            cols.push(format!("{a}.angle"));
        }
        if annotation.is_some() {
            cols.push("gait_value".into());
        }
        let _ = writeln!(out, "{}", cols.join("\t"));
        for (i, frame) in self.frames.iter().enumerate() {
            let mut row: Vec<String> = Vec::new();
            for p in &frame.positions {
                row.push(format!("{}", p[0]));
                row.push(format!("{}", p[1]));
                row.push(format!("{}", p[2]));
            }
            row.push(format!("{}", frame.root_yaw));
            for a in &frame.angles {
                row.push(format!("{a}"));
            }
            if let Some(ann) = annotation {
                row.push(format!("{}", ann.values[i]));
            }
            let _ = writeln!(out, "{}", row.join("\t"));
        }
        out
    }
}

/// Per-frame distance between the two ankles, smoothed with a centered
/// moving average (window clipped at the sequence edges).
pub fn ankle_distance(seq: &MotionSequence) -> Result<Vec<f64>, GaitError> {
    let left = seq
        .joint_index(LEFT_ANKLE)
        .ok_or_else(|| GaitError::MissingJoint(LEFT_ANKLE.into()))?;
    let right = seq
        .joint_index(RIGHT_ANKLE)
        .ok_or_else(|| GaitError::MissingJoint(RIGHT_ANKLE.into()))?;
    if seq.frames.len() < MIN_FRAMES {
        return Err(GaitError::TooShort {
            got: seq.frames.len(),
            need: MIN_FRAMES,
        });
    }
    let raw: Vec<f64> = seq
        .frames
        .iter()
        .map(|f| {
            let a = f.positions[left];
            let b = f.positions[right];
            ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
        })
        .collect();
    let half = SMOOTH_WINDOW / 2;
    let smoothed = (0..raw.len())
        .map(|i| {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(raw.len() - 1);
            raw[lo..=hi].iter().sum::<f64>() / (hi - lo + 1) as f64
        })
        .collect();
    Ok(smoothed)
}

/// Alternating peak/trough detection with a hysteresis threshold of 10% of
/// the waveform range; labels repeat peak/trough/peak/trough as the four gait
/// events starting from the first peak.
pub fn detect_events(wave: &[f64], frame_rate: f64) -> Result<Vec<Keyframe>, GaitError> {
    debug_assert!(frame_rate > 0.0);
    if wave.len() < 4 {
        return Err(GaitError::TooFewExtrema(0));
    }
    let max = wave.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = wave.iter().copied().fold(f64::INFINITY, f64::min);
    let range = max - min;
    if !(range > 1e-12) {
        return Err(GaitError::Flat);
    }
    let thresh = PROMINENCE_FRACTION * range;

    #[derive(PartialEq, Clone, Copy)]
    enum Dir {
        Unknown,
        Up,
        Down,
    }
    let mut dir = Dir::Unknown;
    let (mut hi, mut hi_at) = (wave[0], 0usize);
    let (mut lo, mut lo_at) = (wave[0], 0usize);
    // (frame, is_peak) in detection order.
    let mut extrema: Vec<(usize, bool)> = Vec::new();
    for (i, &v) in wave.iter().enumerate() {
        if v > hi {
            hi = v;
            hi_at = i;
        }
        if v < lo {
            lo = v;
            lo_at = i;
        }
        match dir {
            Dir::Unknown => {
                if hi - v > thresh {
                    extrema.push((hi_at, true));
                    dir = Dir::Down;
                    lo = v;
                    lo_at = i;
                } else if v - lo > thresh {
                    extrema.push((lo_at, false));
                    dir = Dir::Up;
                    hi = v;
                    hi_at = i;
                }
            }
            Dir::Down => {
                if v - lo > thresh {
                    extrema.push((lo_at, false));
                    dir = Dir::Up;
                    hi = v;
                    hi_at = i;
                }
            }
            Dir::Up => {
                if hi - v > thresh {
                    extrema.push((hi_at, true));
                    dir = Dir::Down;
                    lo = v;
                    lo_at = i;
                }
            }
        }
    }

    // Label from the first peak; a leading trough has no event name.
    let start = extrema
        .iter()
        .position(|&(_, peak)| peak)
        .ok_or(GaitError::TooFewExtrema(extrema.len()))?;
    let labeled: Vec<Keyframe> = extrema[start..]
        .iter()
        .enumerate()
        .map(|(k, &(frame, _))| Keyframe {
            frame,
            event: GaitEvent::CYCLE[k % 4],
        })
        .collect();
    if labeled.len() < 4 {
        return Err(GaitError::TooFewExtrema(labeled.len()));
    }
    Ok(labeled)
}

/// Assign exact keyframe values and interpolate everything else.
pub fn assign_gait_values(
    keyframes: &[Keyframe],
    n_frames: usize,
) -> Result<GaitAnnotation, GaitError> {
    if keyframes.len() < 4 {
        return Err(GaitError::TooFewExtrema(keyframes.len()));
    }
    for (i, kf) in keyframes.iter().enumerate() {
        if kf.event != GaitEvent::CYCLE[i % 4] {
            return Err(GaitError::KeyframesOutOfOrder(i));
        }
        if i > 0 && kf.frame <= keyframes[i - 1].frame {
            return Err(GaitError::KeyframesOutOfOrder(i));
        }
        if kf.frame >= n_frames {
            return Err(GaitError::KeyframesOutOfOrder(i));
        }
    }

    let top = 1.0f64.next_down();
    let mut values = vec![0.0; n_frames];
    // Keyframes carry their anchored values bitwise.
    for kf in keyframes {
        values[kf.frame] = kf.event.value();
    }
    // Interior segments; the FeetAdjacent -> InitialContact wrap interpolates
    // toward 1.0 (== 0 of the next cycle).
    let seg_end_value = |i: usize| -> f64 {
        let next = keyframes[i + 1].event.value();
        if next == 0.0 {
            1.0
        } else {
            next
        }
    };
    for i in 0..keyframes.len() - 1 {
        let (f0, f1) = (keyframes[i].frame, keyframes[i + 1].frame);
        let v0 = keyframes[i].event.value();
        let v1 = seg_end_value(i);
        for f in (f0 + 1)..f1 {
            let t = (f - f0) as f64 / (f1 - f0) as f64;
            values[f] = (v0 + (v1 - v0) * t).min(top);
        }
    }
    // Extrapolate the open ends along the adjacent segment slope, clamped.
    let first = keyframes[0];
    let second_frame = keyframes[1].frame;
    let slope0 = (seg_end_value(0) - first.event.value()) / (second_frame - first.frame) as f64;
    for f in 0..first.frame {
        let v = first.event.value() - slope0 * (first.frame - f) as f64;
        values[f] = v.clamp(0.0, top);
    }
    let last_i = keyframes.len() - 1;
    let last = keyframes[last_i];
    let prev_frame = keyframes[last_i - 1].frame;
    let slope1 = (seg_end_value(last_i - 1) - keyframes[last_i - 1].event.value())
        / (last.frame - prev_frame) as f64;
    for f in (last.frame + 1)..n_frames {
        let v = last.event.value() + slope1 * (f - last.frame) as f64;
        values[f] = v.clamp(0.0, top);
    }
    Ok(GaitAnnotation {
        values,
        keyframes: keyframes.to_vec(),
    })
}

/// Full annotation pipeline: ankle waveform, event detection, value assignment.
pub fn annotate(seq: &MotionSequence) -> Result<GaitAnnotation, GaitError> {
    let wave = ankle_distance(seq)?;
    let keyframes = detect_events(&wave, seq.frame_rate)?;
    assign_gait_values(&keyframes, seq.frames.len())
}

/// Cyclic distance between two gait values.
pub fn cyclic_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).abs();
    d.min(1.0 - d)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MatchReport {
    /// (stylized frame, neutral frame) pairs.
    pub pairs: Vec<(usize, usize)>,
    /// Stylized frames with no neutral candidate within tolerance.
    pub unpaired: Vec<usize>,
}

/// Pair every stylized frame with the neutral frame of equal gait value
/// (within cyclic `tolerance`), tie-broken by the smallest summed absolute
/// joint-angle difference over the shared angle columns.
pub fn match_frames(
    stylized: &MotionSequence,
    stylized_ann: &GaitAnnotation,
    neutral: &MotionSequence,
    neutral_ann: &GaitAnnotation,
    tolerance: f64,
) -> MatchReport {
    // Shared angle columns by name, deterministic order.
    let shared: Vec<(usize, usize)> = {
        let neutral_index: BTreeMap<&str, usize> = neutral
            .angle_names
            .iter()
            .enumerate()
            .map(|(i, n)| (n.as_str(), i))
            .collect();
        let mut cols: Vec<(String, usize, usize)> = stylized
            .angle_names
            .iter()
            .enumerate()
            .filter_map(|(i, n)| neutral_index.get(n.as_str()).map(|&j| (n.clone(), i, j)))
            .collect();
        cols.sort();
        cols.into_iter().map(|(_, i, j)| (i, j)).collect()
    };

    let mut report = MatchReport::default();
    for (i, &vs) in stylized_ann.values.iter().enumerate() {
        let mut best: Option<(f64, usize)> = None;
        for (j, &vn) in neutral_ann.values.iter().enumerate() {
            if cyclic_distance(vs, vn) > tolerance {
                continue;
            }
            let dist: f64 = shared
                .iter()
                .map(|&(si, ni)| {
                    (stylized.frames[i].angles[si] - neutral.frames[j].angles[ni]).abs()
                })
                .sum();
            if best.map_or(true, |(bd, _)| dist < bd) {
                best = Some((dist, j));
            }
        }
        match best {
            Some((_, j)) => report.pairs.push((i, j)),
            None => report.unpaired.push(i),
        }
    }
    report
}

/// Rotate a frame's root orientation about the vertical axis, rotating all
/// joint positions rigidly around the root. Joint angles are untouched.
pub fn rotate_frame(seq: &MotionSequence, frame: &MotionFrame, rotation: f64) -> MotionFrame {
    let center = seq
        .joint_index(ROOT_JOINT)
        .map(|r| frame.positions[r])
        .unwrap_or([0.0; 3]);
    let (s, c) = rotation.sin_cos();
    let mut out = frame.clone();
    for p in out.positions.iter_mut() {
        let dx = p[0] - center[0];
        let dz = p[2] - center[2];
        p[0] = center[0] + c * dx + s * dz;
        p[2] = center[2] - s * dx + c * dz;
    }
    out.root_yaw = (frame.root_yaw + rotation).rem_euclid(TAU);
    out
}

/// Data augmentation: the identical random rotation applied to both halves
/// of a matched pair.
pub fn augment_pair(
    stylized_seq: &MotionSequence,
    stylized: &MotionFrame,
    neutral_seq: &MotionSequence,
    neutral: &MotionFrame,
    rotation: f64,
) -> (MotionFrame, MotionFrame) {
    (
        rotate_frame(stylized_seq, stylized, rotation),
        rotate_frame(neutral_seq, neutral, rotation),
    )
}

/// Synthetic walk generator used by tests and demos: ankles oscillate in
/// antiphase so their distance traces |sin|, plus slowly drifting joint
/// angles and a root joint.
pub fn synthetic_walk(
    n_frames: usize,
    frame_rate: f64,
    cycle_frames: usize,
    style_label: &str,
    phase: f64,
) -> MotionSequence {
    let amplitude = 0.3;
    let mut frames = Vec::with_capacity(n_frames);
    for f in 0..n_frames {
        let t = f as f64 / cycle_frames as f64 + phase;
        let swing = amplitude * (TAU * t).sin();
        let hip = (0.8 + 0.0005 * f as f64) * (TAU * t).sin();
        let knee = (1.1 + 0.0005 * f as f64) * (TAU * t).cos();
        frames.push(MotionFrame {
            positions: vec![
                [0.0, 0.9, 0.0],
                [swing * 0.5, 0.08, 0.05],
                [-swing * 0.5, 0.08, -0.05],
            ],
            angles: vec![hip, knee],
            root_yaw: 0.0,
        });
    }
    MotionSequence {
        frame_rate,
        style_label: style_label.to_string(),
        joint_names: vec![ROOT_JOINT.into(), LEFT_ANKLE.into(), RIGHT_ANKLE.into()],
        angle_names: vec!["hip".into(), "knee".into()],
        frames,
    }
}

/// Pairing table export for the CLI.
pub fn pairs_tsv(report: &MatchReport, stylized: &GaitAnnotation, neutral: &GaitAnnotation) -> String {
    let mut out = String::from("stylized_frame\tneutral_frame\tstylized_value\tneutral_value\n");
    for &(i, j) in &report.pairs {
        let _ = writeln!(out, "{i}\t{j}\t{}\t{}", stylized.values[i], neutral.values[j]);
    }
    for &i in &report.unpaired {
        let _ = writeln!(out, "{i}\t-\t{}\t-", stylized.values[i]);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_ankles_give_constant_distance() {
        let mut seq = synthetic_walk(40, 30.0, 20, "neutral", 0.0);
        for f in seq.frames.iter_mut() {
            f.positions[1] = [0.1, 0.0, 0.0];
            f.positions[2] = [-0.1, 0.0, 0.0];
        }
        let wave = ankle_distance(&seq).unwrap();
        assert!(wave.iter().all(|&d| (d - 0.2).abs() < 1e-12));
    }

    #[test]
    fn single_frame_is_an_error() {
        let mut seq = synthetic_walk(40, 30.0, 20, "neutral", 0.0);
        seq.frames.truncate(1);
        assert!(matches!(
            ankle_distance(&seq),
            Err(GaitError::TooShort { got: 1, .. })
        ));
    }

    #[test]
    fn missing_joint_reported() {
        let mut seq = synthetic_walk(40, 30.0, 20, "neutral", 0.0);
        seq.joint_names[1] = "left_foot".into();
        assert!(matches!(ankle_distance(&seq), Err(GaitError::MissingJoint(_))));
    }

    #[test]
    fn sinusoid_distance_halves_the_period() {
        // Ankle swing with period 40 frames: the distance waveform (a
        // rectified sine) has period 20.
        let seq = synthetic_walk(200, 60.0, 40, "neutral", 0.0);
        let wave = ankle_distance(&seq).unwrap();
        let keyframes = detect_events(&wave, seq.frame_rate).unwrap();
        let peaks: Vec<usize> = keyframes
            .iter()
            .filter(|k| k.event.is_peak())
            .map(|k| k.frame)
            .collect();
        for w in peaks.windows(2) {
            let period = w[1] - w[0];
            assert!(
                (19..=21).contains(&period),
                "rectified period {period} should be 20"
            );
        }
    }

    #[test]
    fn flat_wave_is_an_error() {
        let wave = vec![0.2; 100];
        assert!(matches!(detect_events(&wave, 30.0), Err(GaitError::Flat)));
    }

    #[test]
    fn rectified_sine_extrema_at_known_frames() {
        // |sin(pi f/20)|: peaks at f = 10, 30, 50, ...; troughs at 20, 40, ...
        let wave: Vec<f64> = (0..100)
            .map(|f| (std::f64::consts::PI * f as f64 / 20.0).sin().abs())
            .collect();
        let keyframes = detect_events(&wave, 60.0).unwrap();
        assert!(keyframes.len() >= 4);
        for kf in &keyframes {
            let expect_peak = kf.event.is_peak();
            let residue = kf.frame % 20;
            if expect_peak {
                assert!(
                    (9..=11).contains(&residue),
                    "peak at frame {} outside tolerance",
                    kf.frame
                );
            } else {
                assert!(
                    residue <= 1 || residue >= 19,
                    "trough at frame {} outside tolerance",
                    kf.frame
                );
            }
        }
        // Labels cycle through the four events in order.
        for (i, kf) in keyframes.iter().enumerate() {
            assert_eq!(kf.event, GaitEvent::CYCLE[i % 4]);
        }
    }

    #[test]
    fn subprominence_ripples_are_ignored() {
        let clean: Vec<f64> = (0..100)
            .map(|f| (std::f64::consts::PI * f as f64 / 20.0).sin().abs())
            .collect();
        let clean_kf = detect_events(&clean, 60.0).unwrap();
        // 2% deterministic ripple, well under the 10% prominence threshold.
        let noisy: Vec<f64> = clean
            .iter()
            .enumerate()
            .map(|(i, &v)| v + 0.02 * ((i * 7) as f64).sin() * 0.5)
            .collect();
        let noisy_kf = detect_events(&noisy, 60.0).unwrap();
        assert_eq!(clean_kf.len(), noisy_kf.len());
        for (a, b) in clean_kf.iter().zip(&noisy_kf) {
            assert_eq!(a.event, b.event);
            assert!(a.frame.abs_diff(b.frame) <= 1);
        }
    }

    fn kf(frame: usize, event: GaitEvent) -> Keyframe {
        Keyframe { frame, event }
    }

    #[test]
    fn keyframe_values_exact_and_interpolated() {
        let keyframes = [
            kf(0, GaitEvent::InitialContact),
            kf(10, GaitEvent::MidStance),
            kf(20, GaitEvent::OppositeInitialContact),
            kf(30, GaitEvent::FeetAdjacent),
            kf(40, GaitEvent::InitialContact),
        ];
        let ann = assign_gait_values(&keyframes, 44).unwrap();
        // Anchored values are bitwise exact.
        assert_eq!(ann.values[0], 0.0);
        assert_eq!(ann.values[10], 0.3);
        assert_eq!(ann.values[20], 0.5);
        assert_eq!(ann.values[30], 0.75);
        assert_eq!(ann.values[40], 0.0);
        // Midpoints.
        assert!((ann.values[5] - 0.15).abs() < 1e-12);
        assert!((ann.values[25] - 0.625).abs() < 1e-12);
        // Wrap segment: 0.75 -> 1.0 over frames 30..40.
        assert!((ann.values[35] - 0.875).abs() < 1e-12);
        // All values in [0,1), monotone between keyframes.
        for &v in &ann.values {
            assert!((0.0..1.0).contains(&v));
        }
        for f in 1..10 {
            assert!(ann.values[f] > ann.values[f - 1]);
            assert!(ann.values[f] > 0.0 && ann.values[f] < 0.3);
        }
    }

    #[test]
    fn out_of_order_keyframes_rejected() {
        let bad = [
            kf(0, GaitEvent::InitialContact),
            kf(10, GaitEvent::OppositeInitialContact),
            kf(20, GaitEvent::MidStance),
            kf(30, GaitEvent::FeetAdjacent),
        ];
        assert!(matches!(
            assign_gait_values(&bad, 40),
            Err(GaitError::KeyframesOutOfOrder(1))
        ));
    }

    #[test]
    fn identity_matching_is_identity() {
        let seq = synthetic_walk(120, 60.0, 40, "neutral", 0.0);
        let ann = annotate(&seq).unwrap();
        let report = match_frames(&seq, &ann, &seq, &ann, 0.0);
        assert!(report.unpaired.is_empty());
        for &(i, j) in &report.pairs {
            assert_eq!(i, j, "identical sequences must self-pair");
        }
    }

    #[test]
    fn half_cycle_shift_pairs_across_the_shift() {
        let a = synthetic_walk(160, 60.0, 40, "styled", 0.0);
        let b = synthetic_walk(160, 60.0, 40, "neutral", 0.5);
        let ann_a = annotate(&a).unwrap();
        let ann_b = annotate(&b).unwrap();
        let report = match_frames(&a, &ann_a, &b, &ann_b, MATCH_TOLERANCE);
        assert!(!report.pairs.is_empty());
        for &(i, j) in &report.pairs {
            let d = cyclic_distance(ann_a.values[i], ann_b.values[j]);
            assert!(d <= MATCH_TOLERANCE + 1e-12, "pair ({i},{j}) value distance {d}");
        }
    }

    #[test]
    fn zero_tolerance_disjoint_grids_all_unpaired() {
        let a = synthetic_walk(120, 60.0, 40, "styled", 0.0);
        let b = synthetic_walk(120, 60.0, 40, "neutral", 0.13);
        let ann_a = annotate(&a).unwrap();
        let ann_b = annotate(&b).unwrap();
        let report = match_frames(&a, &ann_a, &b, &ann_b, 0.0);
        // Offset sampling grids share (almost) no exact values; the report
        // lists every stylized frame one way or the other.
        assert_eq!(report.pairs.len() + report.unpaired.len(), 120);
        assert!(report.pairs.len() < 10);
    }

    #[test]
    fn rotation_preserves_geometry() {
        let seq = synthetic_walk(60, 60.0, 30, "styled", 0.0);
        let frame = &seq.frames[7];

        // Identity.
        let same = rotate_frame(&seq, frame, 0.0);
        assert_eq!(&same, frame);

        // Half turn flips the forward vector.
        let flipped = rotate_frame(&seq, frame, std::f64::consts::PI);
        assert!((flipped.root_yaw - std::f64::consts::PI).abs() < 1e-12);

        // Random rotations keep every intra-frame joint distance.
        let mut rng = crate::rng::SplitMix64::new(0xA0);
        for _ in 0..100 {
            let rot = rng.range_f64(0.0, TAU);
            let r = rotate_frame(&seq, frame, rot);
            for i in 0..frame.positions.len() {
                for j in (i + 1)..frame.positions.len() {
                    let d0 = dist3(frame.positions[i], frame.positions[j]);
                    let d1 = dist3(r.positions[i], r.positions[j]);
                    assert!((d0 - d1).abs() < 1e-9);
                }
            }
            assert_eq!(r.angles, frame.angles, "joint angles must not change");
        }
    }

    fn dist3(a: [f64; 3], b: [f64; 3]) -> f64 {
        ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
    }

    #[test]
    fn tsv_roundtrip() {
        let seq = synthetic_walk(30, 60.0, 15, "proud march", 0.0);
        let text = seq.to_tsv_string(None);
        let parsed = MotionSequence::from_tsv_str(&text).unwrap();
        assert_eq!(parsed.joint_names, seq.joint_names);
        assert_eq!(parsed.angle_names, seq.angle_names);
        assert_eq!(parsed.frame_rate, seq.frame_rate);
        assert_eq!(parsed.style_label, "proud march");
        assert_eq!(parsed.frames.len(), seq.frames.len());
        assert_eq!(parsed.frames[3], seq.frames[3]);
    }
}
