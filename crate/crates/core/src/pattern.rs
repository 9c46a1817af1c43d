//! Multi-channel patterns: envelopes assigned to motor groups, repeated with
//! an inter-repetition delay.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::envelope::{push_span, render_envelope, ticks_for, EnvelopeSpec, SegmentLabel, SegmentSpan};
use crate::{RenderError, SpecError, MAX_CHANNELS, MAX_SAMPLES_PER_CHANNEL};

/// One envelope driving every channel set in `mask`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Assignment {
    pub mask: u8,
    pub offset_ms: u32,
    pub envelope: EnvelopeSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatternSpec {
    pub delta_ms: u32,
    pub repeat: u32,
    pub delay_ms: u32,
    pub assignments: Vec<Assignment>,
}

impl PatternSpec {
    pub fn validate(&self) -> Result<(), SpecError> {
        if self.delta_ms < 1 {
            return Err(SpecError::new("delta_ms", "must be at least 1"));
        }
        if self.repeat < 1 {
            return Err(SpecError::new("repeat", "must be at least 1"));
        }
        if self.assignments.is_empty() {
            return Err(SpecError::new("assignments", "at least one assignment is required"));
        }
        let mut used = 0u8;
        for (i, a) in self.assignments.iter().enumerate() {
            let path = format!("assignments[{i}]");
            if a.mask == 0 {
                return Err(SpecError::new(format!("{path}.mask"), "must select at least one channel"));
            }
            if used & a.mask != 0 {
                return Err(SpecError::new(
                    format!("{path}.mask"),
                    format!("overlaps channels of an earlier assignment (0b{:08b})", used & a.mask),
                ));
            }
            used |= a.mask;
            if a.offset_ms % self.delta_ms != 0 {
                return Err(SpecError::new(
                    format!("{path}.offset_ms"),
                    format!("must be a multiple of delta_ms ({})", self.delta_ms),
                ));
            }
            a.envelope.validate_at(&format!("{path}.envelope"))?;
        }
        Ok(())
    }

    /// Union of all assignment masks.
    pub fn channel_mask(&self) -> u8 {
        self.assignments.iter().fold(0, |m, a| m | a.mask)
    }

    pub fn delay_ticks(&self) -> u64 {
        ticks_for(self.delay_ms, self.delta_ms)
    }

    /// Unpadded stream length of one assignment:
    /// `repeat * L + (repeat - 1) * delay_ticks + offset / delta`.
    pub fn assignment_len(&self, a: &Assignment) -> u64 {
        let repeat = u64::from(self.repeat);
        repeat * a.envelope.tick_len(self.delta_ms)
            + (repeat - 1) * self.delay_ticks()
            + u64::from(a.offset_ms / self.delta_ms)
    }

    /// Length every rendered channel is padded to.
    pub fn rendered_len(&self) -> u64 {
        self.assignments
            .iter()
            .map(|a| self.assignment_len(a))
            .max()
            .unwrap_or(0)
    }
}

/// Compact form of a rendered pattern: one cycle per channel plus the
/// repetition metadata a device needs to expand it.
///
/// Expanding the cycle with [`expand_cycle`] reproduces
/// [`RenderedPattern::channels`] exactly.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlaybackCycle {
    pub repeat: u32,
    pub delay_ms: u32,
    pub channels: BTreeMap<u8, Vec<u16>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPattern {
    pub delta_ms: u32,
    pub channels: BTreeMap<u8, Vec<u16>>,
    pub segments: BTreeMap<u8, Vec<SegmentSpan>>,
    pub cycle: PlaybackCycle,
}

impl RenderedPattern {
    pub fn len(&self) -> usize {
        self.channels.values().next().map_or(0, Vec::len)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Repeats `cycle` `repeat` times with `delay_ticks` zeros between
/// consecutive copies.
pub fn expand_cycle(cycle: &[u16], repeat: u32, delay_ticks: usize) -> Vec<u16> {
    let repeat = repeat as usize;
    let mut out = Vec::with_capacity(repeat * cycle.len() + repeat.saturating_sub(1) * delay_ticks);
    for r in 0..repeat {
        if r > 0 {
            out.resize(out.len() + delay_ticks, 0);
        }
        out.extend_from_slice(cycle);
    }
    out
}

pub fn render_pattern(spec: &PatternSpec) -> Result<RenderedPattern, RenderError> {
    spec.validate()?;

    for a in &spec.assignments {
        let len = spec.assignment_len(a);
        if len > MAX_SAMPLES_PER_CHANNEL as u64 {
            let channel = a.mask.trailing_zeros() as u8;
            return Err(RenderError::TooLong {
                channel,
                len,
                cap: MAX_SAMPLES_PER_CHANNEL,
            });
        }
    }

    let delay_ticks = spec.delay_ticks() as usize;
    let total = spec.rendered_len() as usize;
    let mut channels = BTreeMap::new();
    let mut segments = BTreeMap::new();

    for a in &spec.assignments {
        let env = render_envelope(&a.envelope, spec.delta_ms);
        let mut samples = Vec::with_capacity(total);
        let mut spans = Vec::new();

        let offset = vec![0; (a.offset_ms / spec.delta_ms) as usize];
        push_span(&mut spans, &mut samples, SegmentLabel::Offset, &offset);
        let gap = vec![0; delay_ticks];
        for r in 0..spec.repeat {
            if r > 0 {
                push_span(&mut spans, &mut samples, SegmentLabel::Delay, &gap);
            }
            let base = samples.len() as u32;
            samples.extend_from_slice(&env.samples);
            spans.extend(env.segments.iter().map(|s| SegmentSpan {
                label: s.label,
                start_tick: s.start_tick + base,
                end_tick: s.end_tick + base,
            }));
        }
        let pad = vec![0; total - samples.len()];
        push_span(&mut spans, &mut samples, SegmentLabel::Delay, &pad);

        for ch in (0..MAX_CHANNELS as u8).filter(|ch| a.mask & (1 << ch) != 0) {
            channels.insert(ch, samples.clone());
            segments.insert(ch, spans.clone());
        }
    }

    let cycle = fold_cycle(&channels, spec.repeat, spec.delay_ms, delay_ticks).unwrap_or_else(|| PlaybackCycle {
        repeat: 1,
        delay_ms: 0,
        channels: channels.clone(),
    });

    Ok(RenderedPattern {
        delta_ms: spec.delta_ms,
        channels,
        segments,
        cycle,
    })
}

/// Finds a single cycle that expands back to `channels` under
/// `repeat`/`delay`, if one exists.
fn fold_cycle(
    channels: &BTreeMap<u8, Vec<u16>>,
    repeat: u32,
    delay_ms: u32,
    delay_ticks: usize,
) -> Option<PlaybackCycle> {
    if repeat == 1 {
        return None;
    }
    let total = channels.values().next()?.len();
    let gaps = (repeat as usize - 1) * delay_ticks;
    let body = total.checked_sub(gaps)?;
    if body % repeat as usize != 0 {
        return None;
    }
    let cycle_len = body / repeat as usize;
    let mut folded = BTreeMap::new();
    for (&ch, samples) in channels {
        let cycle = &samples[..cycle_len];
        if expand_cycle(cycle, repeat, delay_ticks) != *samples {
            return None;
        }
        folded.insert(ch, cycle.to_vec());
    }
    Some(PlaybackCycle {
        repeat,
        delay_ms,
        channels: folded,
    })
}
