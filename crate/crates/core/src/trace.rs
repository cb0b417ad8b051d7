//! Run persistence: line-delimited frame records plus a run metadata file.
//!
//! A trace directory holds `meta.json` (one object) and `trace.jsonl` (one
//! frame per line, in tick order). Frames serialize deterministically, so two
//! byte-identical traces mean two identical simulations.

use crate::calib::ClassName;
use crate::forces::PartForceRecord;
use crate::geom::Vec2;
use crate::motor::AgentStatus;
use serde::{Deserialize, Serialize};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc::{sync_channel, Receiver, SyncSender};
use std::thread::JoinHandle;
use thiserror::Error;

pub const TRACE_FILE: &str = "trace.jsonl";
pub const META_FILE: &str = "meta.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub scenario: String,
    pub dt: f64,
    pub decision_every: u32,
    pub seed: u64,
    pub total_agents: usize,
    pub max_ticks: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentRecord {
    pub id: u64,
    pub class: ClassName,
    pub pos: Vec2,
    pub vel: Vec2,
    pub status: AgentStatus,
    pub gait: f64,
}

/// Aggregate of the tick's contact events.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ContactSummary {
    pub count: usize,
    pub total_impulse: f64,
    pub max_impulse: f64,
}

/// Per-agent decision force components, present with `--dump-forces`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ForceComponents {
    pub id: u64,
    pub drive: Vec2,
    pub repulsive: Vec2,
    pub evasive: Vec2,
}

/// Waypoint polyline recorded when an agent (re)plans.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedPath {
    pub id: u64,
    pub points: Vec<Vec2>,
    pub total_cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceFrame {
    pub tick: u64,
    pub agents: Vec<AgentRecord>,
    pub contacts: ContactSummary,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub forces: Option<Vec<PartForceRecord>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub force_components: Option<Vec<ForceComponents>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub planned_paths: Option<Vec<PlannedPath>>,
}

#[derive(Debug, Error)]
pub enum TraceError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("encode/decode error: {0}")]
    Serde(String),
    #[error("trace writer thread terminated early")]
    WriterGone,
}

impl From<serde_json::Error> for TraceError {
    fn from(e: serde_json::Error) -> Self {
        TraceError::Serde(e.to_string())
    }
}

/// Destination for frames produced by the engine.
pub trait TraceSink: Send {
    fn meta(&mut self, _meta: &RunMeta) -> Result<(), TraceError> {
        Ok(())
    }
    fn frame(&mut self, frame: &TraceFrame) -> Result<(), TraceError>;
    fn finish(&mut self) -> Result<(), TraceError> {
        Ok(())
    }
}

/// Discards everything; used when only metrics are wanted.
pub struct NullSink;

impl TraceSink for NullSink {
    fn frame(&mut self, _frame: &TraceFrame) -> Result<(), TraceError> {
        Ok(())
    }
}

/// Keeps frames in memory for tests and calibration measurements.
#[derive(Default)]
pub struct MemorySink {
    pub meta: Option<RunMeta>,
    pub frames: Vec<TraceFrame>,
}

impl TraceSink for MemorySink {
    fn meta(&mut self, meta: &RunMeta) -> Result<(), TraceError> {
        self.meta = Some(meta.clone());
        Ok(())
    }
    fn frame(&mut self, frame: &TraceFrame) -> Result<(), TraceError> {
        self.frames.push(frame.clone());
        Ok(())
    }
}

enum WriterMsg {
    Line(String),
    Done,
}

/// Streams frames to `<dir>/trace.jsonl` on a dedicated writer thread with a
/// bounded queue; a slow disk back-pressures the simulation loop instead of
/// dropping frames.
pub struct JsonlDirSink {
    dir: PathBuf,
    tx: Option<SyncSender<WriterMsg>>,
    handle: Option<JoinHandle<Result<(), TraceError>>>,
}

impl JsonlDirSink {
    pub fn create(dir: &Path) -> Result<JsonlDirSink, TraceError> {
        std::fs::create_dir_all(dir)?;
        let file = File::create(dir.join(TRACE_FILE))?;
        let (tx, rx): (SyncSender<WriterMsg>, Receiver<WriterMsg>) = sync_channel(256);
        let handle = std::thread::spawn(move || -> Result<(), TraceError> {
            let mut out = BufWriter::new(file);
            loop {
                match rx.recv() {
                    Ok(WriterMsg::Line(line)) => {
                        out.write_all(line.as_bytes())?;
                        out.write_all(b"\n")?;
                    }
                    Ok(WriterMsg::Done) | Err(_) => break,
                }
            }
            out.flush()?;
            Ok(())
        });
        Ok(JsonlDirSink {
            dir: dir.to_path_buf(),
            tx: Some(tx),
            handle: Some(handle),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }
}

impl TraceSink for JsonlDirSink {
    fn meta(&mut self, meta: &RunMeta) -> Result<(), TraceError> {
        let text = serde_json::to_string_pretty(meta)?;
        std::fs::write(self.dir.join(META_FILE), text)?;
        Ok(())
    }

    fn frame(&mut self, frame: &TraceFrame) -> Result<(), TraceError> {
        let line = serde_json::to_string(frame)?;
        self.tx
            .as_ref()
            .ok_or(TraceError::WriterGone)?
            .send(WriterMsg::Line(line))
            .map_err(|_| TraceError::WriterGone)
    }

    fn finish(&mut self) -> Result<(), TraceError> {
        if let Some(tx) = self.tx.take() {
            let _ = tx.send(WriterMsg::Done);
        }
        if let Some(handle) = self.handle.take() {
            handle.join().map_err(|_| TraceError::WriterGone)??;
        }
        Ok(())
    }
}

impl Drop for JsonlDirSink {
    fn drop(&mut self) {
        let _ = self.finish();
    }
}

pub fn read_meta(dir: &Path) -> Result<RunMeta, TraceError> {
    let text = std::fs::read_to_string(dir.join(META_FILE))?;
    Ok(serde_json::from_str(&text)?)
}

/// Streaming frame reader over `trace.jsonl`.
pub struct TraceReader {
    lines: std::io::Lines<BufReader<File>>,
}

impl TraceReader {
    pub fn open(dir: &Path) -> Result<TraceReader, TraceError> {
        let file = File::open(dir.join(TRACE_FILE))?;
        Ok(TraceReader {
            lines: BufReader::new(file).lines(),
        })
    }
}

impl Iterator for TraceReader {
    type Item = Result<TraceFrame, TraceError>;
    fn next(&mut self) -> Option<Self::Item> {
        loop {
            match self.lines.next()? {
                Ok(line) if line.trim().is_empty() => continue,
                Ok(line) => {
                    return Some(serde_json::from_str(&line).map_err(TraceError::from))
                }
                Err(e) => return Some(Err(TraceError::Io(e))),
            }
        }
    }
}

pub fn read_frames(dir: &Path) -> Result<Vec<TraceFrame>, TraceError> {
    TraceReader::open(dir)?.collect()
}
