//! Built-in preset catalog.

use serde::{Deserialize, Serialize};

use crate::envelope::{CurveType, EnvelopeSpec, SegmentSpec};
use crate::pattern::{Assignment, PatternSpec};

/// Tick size used by every built-in preset.
pub const PRESET_DELTA_MS: u32 = 10;

/// The three motors of a standard band.
const ALL_MOTORS: u8 = 0b111;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PresetEntry {
    pub name: String,
    pub spec: PatternSpec,
    #[serde(default)]
    pub builtin: bool,
}

fn envelope(peak_pct: f64, attack: (u32, CurveType), sustain_ms: u32, release: (u32, CurveType)) -> EnvelopeSpec {
    EnvelopeSpec {
        peak_pct,
        min_pct: 0.0,
        attack: SegmentSpec::new(attack.0, attack.1),
        sustain_ms,
        release: SegmentSpec::new(release.0, release.1),
    }
}

fn all_motors(env: EnvelopeSpec, repeat: u32, delay_ms: u32) -> PatternSpec {
    PatternSpec {
        delta_ms: PRESET_DELTA_MS,
        repeat,
        delay_ms,
        assignments: vec![Assignment {
            mask: ALL_MOTORS,
            offset_ms: 0,
            envelope: env,
        }],
    }
}

fn builtin(name: impl Into<String>, spec: PatternSpec) -> PresetEntry {
    PresetEntry {
        name: name.into(),
        spec,
        builtin: true,
    }
}

/// Lub-dub heartbeat: a strong pulse on the outer motors and a softer one on
/// the middle motor 200 ms later. Each cycle lasts `60000 / bpm` ms.
pub fn heartbeat(bpm: u32) -> PatternSpec {
    let period_ms = 60_000 / bpm;
    let lub = envelope(100.0, (50, CurveType::QuadEaseOut), 50, (150, CurveType::QuadEaseIn));
    let dub = EnvelopeSpec { peak_pct: 70.0, ..lub };
    let len_ms = lub.tick_len(PRESET_DELTA_MS) as u32 * PRESET_DELTA_MS;
    PatternSpec {
        delta_ms: PRESET_DELTA_MS,
        repeat: 4,
        delay_ms: period_ms - len_ms,
        assignments: vec![
            Assignment { mask: 0b101, offset_ms: 0, envelope: lub },
            Assignment { mask: 0b010, offset_ms: 200, envelope: dub },
        ],
    }
}

/// Square pulse train with onsets `60000 / bpm` ms apart.
pub fn pulse_train(bpm: u32, pulse_ms: u32, repeat: u32) -> PatternSpec {
    let period_ms = 60_000 / bpm;
    all_motors(
        envelope(100.0, (pulse_ms, CurveType::Square), 0, (0, CurveType::Linear)),
        repeat,
        period_ms - pulse_ms,
    )
}

pub fn builtin_presets() -> Vec<PresetEntry> {
    let mut out = Vec::new();

    for ms in [100, 300, 600] {
        out.push(builtin(
            format!("linear-ramp-{ms}"),
            all_motors(envelope(100.0, (ms, CurveType::Linear), 100, (ms, CurveType::Linear)), 1, 0),
        ));
    }
    for ms in [200, 500] {
        out.push(builtin(
            format!("ease-in-{ms}"),
            all_motors(envelope(100.0, (ms, CurveType::QuadEaseIn), 100, (ms, CurveType::QuadEaseIn)), 1, 0),
        ));
        out.push(builtin(
            format!("ease-out-{ms}"),
            all_motors(envelope(100.0, (ms, CurveType::QuadEaseOut), 100, (ms, CurveType::QuadEaseOut)), 1, 0),
        ));
    }
    out.push(builtin(
        "square-pulse",
        all_motors(envelope(100.0, (200, CurveType::Square), 0, (0, CurveType::Linear)), 1, 0),
    ));
    out.push(builtin("heartbeat-60", heartbeat(60)));

    // Each motor fires 150 ms after the previous one; the 250 ms delay makes
    // the per-motor period 450 ms so the rotation keeps an even spacing.
    let step = envelope(100.0, (50, CurveType::Linear), 100, (50, CurveType::Linear));
    out.push(builtin(
        "rotation",
        PatternSpec {
            delta_ms: PRESET_DELTA_MS,
            repeat: 3,
            delay_ms: 250,
            assignments: (0..3)
                .map(|i| Assignment { mask: 1 << i, offset_ms: 150 * i as u32, envelope: step })
                .collect(),
        },
    ));

    let glide = envelope(90.0, (150, CurveType::QuadEaseOut), 50, (150, CurveType::QuadEaseIn));
    out.push(builtin(
        "sliding",
        PatternSpec {
            delta_ms: PRESET_DELTA_MS,
            repeat: 2,
            delay_ms: 300,
            assignments: (0..3)
                .map(|i| Assignment { mask: 1 << i, offset_ms: 100 * i as u32, envelope: glide })
                .collect(),
        },
    ));

    out.push(builtin("tapping", pulse_train(240, 30, 6)));
    for bpm in [60, 100, 120] {
        out.push(builtin(format!("beat-{bpm}"), pulse_train(bpm, 100, 4)));
    }
    out
}
