//! Stand-in for a WiFi haptic band.
//!
//! The simulator registers with the server through HELLO beacons,
//! acknowledges every PATTERN and STOP before applying it, ignores
//! retransmissions of a sequence number it already applied, and plays
//! patterns on a monotonic tick clock. In place of motors it records a trace
//! of every tick's PWM levels.

pub mod client;
pub mod playback;
pub mod trace;

pub use client::{SimConfig, SimStats, Simulator, DEFAULT_CHANNELS, DEFAULT_HELLO_INTERVAL};
pub use playback::{Interrupt, Levels, LoadedPattern, Phase, PlaybackEvent, PlaybackState};
pub use trace::{dump_trace, read_trace, TraceEvent, TraceHeader, TraceKind};
