//! Random generators for patterns and wire messages, used by property and
//! acceptance tests.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::envelope::{CurveType, EnvelopeSpec, SegmentSpec, PWM_MAX};
use crate::pattern::{Assignment, PatternSpec};
use crate::wire::{Body, PatternPayload, WireMessage};
use crate::{MAX_CHANNELS, MAX_SAMPLES_PER_CHANNEL};

fn curve<R: Rng>(rng: &mut R) -> CurveType {
    *CurveType::ALL.choose(rng).unwrap()
}

fn pct<R: Rng>(rng: &mut R) -> f64 {
    // Mix whole percentages with arbitrary reals.
    if rng.gen_bool(0.5) {
        f64::from(rng.gen_range(0..=100u32))
    } else {
        rng.gen_range(0.0..=100.0)
    }
}

pub fn envelope<R: Rng>(rng: &mut R, delta_ms: u32) -> EnvelopeSpec {
    let (a, b) = (pct(rng), pct(rng));
    let max_ms = 12 * delta_ms;
    EnvelopeSpec {
        peak_pct: a.max(b),
        min_pct: a.min(b),
        attack: SegmentSpec::new(rng.gen_range(0..=max_ms), curve(rng)),
        sustain_ms: rng.gen_range(0..=max_ms),
        release: SegmentSpec::new(rng.gen_range(0..=max_ms), curve(rng)),
    }
}

/// A valid pattern. Most fit within the per-channel sample cap; a few do not.
pub fn pattern_spec<R: Rng>(rng: &mut R) -> PatternSpec {
    let delta_ms = *[1u32, 5, 10, 10, 10, 20, 25].choose(rng).unwrap();
    let mut channels: Vec<u8> = (0..MAX_CHANNELS as u8).collect();
    channels.shuffle(rng);
    let groups = rng.gen_range(1..=4usize);
    let mut assignments = Vec::new();
    let mut pool = channels.into_iter();
    for g in 0..groups {
        let take = if g + 1 == groups { rng.gen_range(1..=2) } else { 1 };
        let mask = pool.by_ref().take(take).fold(0u8, |m, c| m | (1 << c));
        if mask == 0 {
            break;
        }
        assignments.push(Assignment {
            mask,
            offset_ms: rng.gen_range(0..=6) * delta_ms,
            envelope: envelope(rng, delta_ms),
        });
    }
    PatternSpec {
        delta_ms,
        repeat: rng.gen_range(1..=4),
        delay_ms: rng.gen_range(0..=15 * delta_ms),
        assignments,
    }
}

fn seq<R: Rng>(rng: &mut R) -> u32 {
    if rng.gen_bool(0.1) {
        *[0, 1, u32::MAX].choose(rng).unwrap()
    } else {
        rng.gen()
    }
}

/// A valid message whose encoding fits in one datagram.
pub fn wire_message<R: Rng>(rng: &mut R) -> WireMessage {
    let seq = seq(rng);
    let body = match rng.gen_range(0..4) {
        0 => Body::Stop,
        1 => Body::Ack,
        2 => {
            const ID_CHARS: &[u8] = b"abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789-_.";
            let len = rng.gen_range(1..=24);
            Body::Hello {
                device_id: (0..len).map(|_| *ID_CHARS.choose(rng).unwrap() as char).collect(),
                channel_count: rng.gen_range(1..=MAX_CHANNELS as u8),
            }
        }
        _ => {
            let n = rng.gen_range(1..=3usize);
            let mut channels = BTreeMap::new();
            for _ in 0..n {
                let len = rng.gen_range(0..=MAX_SAMPLES_PER_CHANNEL / 2);
                channels.insert(
                    rng.gen_range(0..MAX_CHANNELS as u8),
                    (0..len).map(|_| rng.gen_range(0..=PWM_MAX)).collect(),
                );
            }
            Body::Pattern(PatternPayload {
                delta_ms: rng.gen_range(1..=u32::MAX),
                repeat: rng.gen_range(1..=u32::MAX),
                delay_ms: rng.gen(),
                channels,
            })
        }
    };
    WireMessage { seq, body }
}
