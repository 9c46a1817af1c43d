//! JSON-lines playback trace.

use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::playback::Levels;

pub const TRACE_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TraceKind {
    Tick,
    MsgRx,
    AckTx,
    Stopped,
    Replaced,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEvent {
    /// Milliseconds since the simulator started, monotonic.
    pub t_ms: f64,
    pub kind: TraceKind,
    /// Channel levels; always present on TICK.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub levels: Option<Levels>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seq: Option<u32>,
    /// Message kind for MSG_RX.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub msg: Option<String>,
    /// MSG_RX of an already-applied sequence number.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub duplicate: bool,
}

impl TraceEvent {
    pub fn new(t_ms: f64, kind: TraceKind) -> Self {
        Self {
            t_ms,
            kind,
            levels: None,
            seq: None,
            msg: None,
            duplicate: false,
        }
    }
}

/// First line of every trace file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceHeader {
    pub trace: String,
    pub version: u32,
    pub device_id: String,
    pub channels: u8,
}

impl TraceHeader {
    pub fn new(device_id: &str, channels: u8) -> Self {
        Self {
            trace: "hband-sim".into(),
            version: TRACE_VERSION,
            device_id: device_id.into(),
            channels,
        }
    }
}

pub fn write_line<W: Write, T: Serialize>(out: &mut W, value: &T) -> io::Result<()> {
    serde_json::to_writer(&mut *out, value)?;
    out.write_all(b"\n")
}

/// Writes a header followed by one line per event.
pub fn dump_trace<W: Write>(out: &mut W, header: &TraceHeader, events: &[TraceEvent]) -> io::Result<()> {
    write_line(out, header)?;
    for e in events {
        write_line(out, e)?;
    }
    out.flush()
}

/// Parses a trace written by [`dump_trace`].
pub fn read_trace(text: &str) -> Result<(TraceHeader, Vec<TraceEvent>), serde_json::Error> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = serde_json::from_str(lines.next().unwrap_or_default())?;
    let events = lines.map(serde_json::from_str).collect::<Result<_, _>>()?;
    Ok((header, events))
}
