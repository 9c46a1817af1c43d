//! Pattern rendering and wire codec shared by the designer server and the
//! band simulator.

pub mod envelope;
#[cfg(feature = "gen")]
pub mod gen;
pub mod pattern;
pub mod presets;
pub mod wire;

use thiserror::Error;

pub use envelope::{
    pct_to_pwm, render_envelope, render_segment, ticks_for, CurveType, EnvelopeSpec, RenderedEnvelope, Role,
    SegmentLabel, SegmentSpan, SegmentSpec, PWM_MAX,
};
pub use pattern::{expand_cycle, render_pattern, Assignment, PatternSpec, PlaybackCycle, RenderedPattern};
pub use presets::{builtin_presets, PresetEntry};
pub use wire::{decode, encode, Body, MessageKind, PatternPayload, WireError, WireMessage};

/// PWM outputs on the band's controller.
pub const MAX_CHANNELS: usize = 8;
/// Samples one channel may carry in a single datagram.
pub const MAX_SAMPLES_PER_CHANNEL: usize = 512;
/// One message is one UDP datagram of at most this many bytes.
pub const MAX_DATAGRAM_BYTES: usize = 8192;

/// A pattern field that violates its invariants.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{field}: {message}")]
pub struct SpecError {
    pub field: String,
    pub message: String,
}

impl SpecError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RenderError {
    #[error(transparent)]
    Invalid(#[from] SpecError),
    #[error("REJECT_TOO_LONG: channel {channel} needs {len} samples (cap {cap})")]
    TooLong { channel: u8, len: u64, cap: usize },
}

impl RenderedPattern {
    /// The PATTERN payload carrying this rendering's playback cycle.
    pub fn to_payload(&self) -> PatternPayload {
        PatternPayload {
            delta_ms: self.delta_ms,
            repeat: self.cycle.repeat,
            delay_ms: self.cycle.delay_ms,
            channels: self.cycle.channels.clone(),
        }
    }
}
