//! Attack/sustain/release envelopes rendered to 10-bit PWM samples.
//!
//! Every segment is sampled on a fixed tick grid of `delta_ms`. A segment of
//! `d` milliseconds yields `ceil(d / delta_ms)` samples, and sample `i` sits at
//! the end of its tick (phase `(i + 1) / n`), so a rising segment always lands
//! exactly on the peak and a falling one on the floor.

use serde::{Deserialize, Serialize};

use crate::SpecError;

/// Largest PWM duty value (10-bit).
pub const PWM_MAX: u16 = 1023;

/// Curve family used by the attack and release segments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum CurveType {
    Linear,
    QuadEaseIn,
    QuadEaseOut,
    Square,
}

impl CurveType {
    pub const ALL: [CurveType; 4] = [
        CurveType::Linear,
        CurveType::QuadEaseIn,
        CurveType::QuadEaseOut,
        CurveType::Square,
    ];

    /// Shape function on `[0, 1]`.
    pub fn shape(self, u: f64) -> f64 {
        match self {
            CurveType::Linear => u,
            CurveType::QuadEaseIn => u * u,
            CurveType::QuadEaseOut => 1.0 - (1.0 - u) * (1.0 - u),
            CurveType::Square => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    Attack,
    Release,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SegmentSpec {
    pub duration_ms: u32,
    pub curve: CurveType,
}

impl SegmentSpec {
    pub const fn new(duration_ms: u32, curve: CurveType) -> Self {
        Self { duration_ms, curve }
    }
}

/// Intensity envelope for one group of motors.
///
/// The tick size is not part of the envelope: every envelope in a pattern
/// shares the pattern's `delta_ms`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvelopeSpec {
    pub peak_pct: f64,
    pub min_pct: f64,
    pub attack: SegmentSpec,
    pub sustain_ms: u32,
    pub release: SegmentSpec,
}

impl EnvelopeSpec {
    pub fn validate(&self) -> Result<(), SpecError> {
        self.validate_at("envelope")
    }

    pub(crate) fn validate_at(&self, path: &str) -> Result<(), SpecError> {
        for (name, value) in [("peak_pct", self.peak_pct), ("min_pct", self.min_pct)] {
            if !value.is_finite() || !(0.0..=100.0).contains(&value) {
                return Err(SpecError::new(
                    format!("{path}.{name}"),
                    format!("must be within [0, 100], got {value}"),
                ));
            }
        }
        if self.min_pct > self.peak_pct {
            return Err(SpecError::new(
                format!("{path}.min_pct"),
                format!(
                    "must not exceed peak_pct ({} > {})",
                    self.min_pct, self.peak_pct
                ),
            ));
        }
        Ok(())
    }

    /// Number of ticks the envelope occupies at `delta_ms`.
    pub fn tick_len(&self, delta_ms: u32) -> u64 {
        ticks_for(self.attack.duration_ms, delta_ms)
            + ticks_for(self.sustain_ms, delta_ms)
            + ticks_for(self.release.duration_ms, delta_ms)
    }
}

/// Label of a span of ticks, used to colour plots.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SegmentLabel {
    Attack,
    Sustain,
    Release,
    Delay,
    Offset,
}

/// Half-open tick range `[start_tick, end_tick)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentSpan {
    pub label: SegmentLabel,
    pub start_tick: u32,
    pub end_tick: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RenderedEnvelope {
    pub samples: Vec<u16>,
    pub segments: Vec<SegmentSpan>,
}

/// `ceil(ms / delta_ms)`.
pub fn ticks_for(ms: u32, delta_ms: u32) -> u64 {
    assert!(delta_ms > 0, "delta_ms must be positive");
    u64::from(ms).div_ceil(u64::from(delta_ms))
}

/// Converts a percentage to a PWM duty value, rounding half away from zero.
pub fn pct_to_pwm(pct: f64) -> u16 {
    let raw = pct * f64::from(PWM_MAX) / 100.0;
    // Snap to a 1e-9 grid first so values that are exact ties in rational
    // arithmetic are not pushed off the tie by float error.
    let snapped = (raw * 1e9).round() / 1e9;
    snapped.round().clamp(0.0, f64::from(PWM_MAX)) as u16
}

/// Renders one attack or release segment.
pub fn render_segment(seg: SegmentSpec, role: Role, env: &EnvelopeSpec, delta_ms: u32) -> Vec<u16> {
    let n = ticks_for(seg.duration_ms, delta_ms);
    let span = env.peak_pct - env.min_pct;
    (0..n)
        .map(|i| {
            let u = (i + 1) as f64 / n as f64;
            let phase = match role {
                Role::Attack => u,
                Role::Release => 1.0 - u,
            };
            pct_to_pwm(env.min_pct + span * seg.curve.shape(phase))
        })
        .collect()
}

/// Renders attack, sustain and release back to back.
///
/// Empty segments produce no span.
pub fn render_envelope(env: &EnvelopeSpec, delta_ms: u32) -> RenderedEnvelope {
    let attack = render_segment(env.attack, Role::Attack, env, delta_ms);
    let sustain_len = ticks_for(env.sustain_ms, delta_ms) as usize;
    let sustain = vec![pct_to_pwm(env.peak_pct); sustain_len];
    let release = render_segment(env.release, Role::Release, env, delta_ms);

    let mut out = RenderedEnvelope::default();
    for (label, part) in [
        (SegmentLabel::Attack, attack),
        (SegmentLabel::Sustain, sustain),
        (SegmentLabel::Release, release),
    ] {
        push_span(&mut out.segments, &mut out.samples, label, &part);
    }
    out
}

pub(crate) fn push_span(
    segments: &mut Vec<SegmentSpan>,
    samples: &mut Vec<u16>,
    label: SegmentLabel,
    part: &[u16],
) {
    if part.is_empty() {
        return;
    }
    let start = samples.len() as u32;
    samples.extend_from_slice(part);
    segments.push(SegmentSpan {
        label,
        start_tick: start,
        end_tick: samples.len() as u32,
    });
}
