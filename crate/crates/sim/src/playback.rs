//! Tick-driven playback of one pattern on up to eight PWM channels.

use haptic_core::{ticks_for, PatternPayload, MAX_CHANNELS};
use serde::{Deserialize, Serialize};

pub type Levels = [u16; MAX_CHANNELS];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Phase {
    Idle,
    Playing,
}

/// A PATTERN payload prepared for playback.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoadedPattern {
    pub delta_ms: u32,
    pub repeat: u32,
    pub delay_ticks: u32,
    pub cycle_len: u32,
    cycle: Vec<Levels>,
}

impl LoadedPattern {
    /// Channels at or above `channel_count` have no motor and stay at 0.
    pub fn from_payload(p: &PatternPayload, channel_count: u8) -> Self {
        let cycle_len = p.channels.values().map(Vec::len).max().unwrap_or(0);
        let mut cycle = vec![[0u16; MAX_CHANNELS]; cycle_len];
        for (&ch, samples) in &p.channels {
            if ch >= channel_count {
                continue;
            }
            for (tick, &v) in samples.iter().enumerate() {
                cycle[tick][ch as usize] = v;
            }
        }
        Self {
            delta_ms: p.delta_ms,
            repeat: p.repeat,
            delay_ticks: ticks_for(p.delay_ms, p.delta_ms).min(u64::from(u32::MAX)) as u32,
            cycle_len: cycle_len as u32,
            cycle,
        }
    }

    /// Ticks in the fully expanded pattern.
    pub fn total_ticks(&self) -> u64 {
        let repeat = u64::from(self.repeat);
        repeat * u64::from(self.cycle_len) + (repeat - 1) * u64::from(self.delay_ticks)
    }

    fn period(&self) -> u64 {
        u64::from(self.cycle_len) + u64::from(self.delay_ticks)
    }

    fn levels_at(&self, tick: u64) -> Levels {
        let within = tick % self.period();
        self.cycle
            .get(within as usize)
            .copied()
            .unwrap_or([0; MAX_CHANNELS])
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Interrupt {
    Stop,
    Replace(LoadedPattern),
}

/// Something the state machine did, in the order it happened.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PlaybackEvent {
    Tick(Levels),
    Stopped,
    Replaced,
}

#[derive(Debug, Clone, Default)]
pub struct PlaybackState {
    current: Option<LoadedPattern>,
    /// Ticks emitted for the current pattern.
    elapsed: u64,
    levels: Levels,
    pending: Option<Interrupt>,
}

impl PlaybackState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn phase(&self) -> Phase {
        if self.current.is_some() {
            Phase::Playing
        } else {
            Phase::Idle
        }
    }

    pub fn levels(&self) -> Levels {
        self.levels
    }

    pub fn current(&self) -> Option<&LoadedPattern> {
        self.current.as_ref()
    }

    /// Tick length of the current pattern.
    pub fn delta_ms(&self) -> Option<u32> {
        self.current.as_ref().map(|p| p.delta_ms)
    }

    pub fn has_pending(&self) -> bool {
        self.pending.is_some()
    }

    /// `(cycle_index, tick_index)` of the next tick to play.
    pub fn position(&self) -> Option<(u64, u64)> {
        let p = self.current.as_ref()?;
        Some((self.elapsed / p.period(), self.elapsed % p.period()))
    }

    /// Handles STOP or a new PATTERN.
    ///
    /// While playing, the interrupt takes effect at the next tick boundary; a
    /// later interrupt before that boundary overrides an earlier one. While
    /// idle it takes effect at once.
    pub fn interrupt(&mut self, interrupt: Interrupt) -> Vec<PlaybackEvent> {
        match self.phase() {
            Phase::Playing => {
                self.pending = Some(interrupt);
                Vec::new()
            }
            Phase::Idle => self.apply(interrupt),
        }
    }

    fn apply(&mut self, interrupt: Interrupt) -> Vec<PlaybackEvent> {
        let was_playing = self.current.is_some();
        self.elapsed = 0;
        self.levels = [0; MAX_CHANNELS];
        match interrupt {
            Interrupt::Stop => {
                self.current = None;
                vec![PlaybackEvent::Stopped]
            }
            Interrupt::Replace(pattern) => {
                self.current = (pattern.total_ticks() > 0).then_some(pattern);
                if was_playing {
                    vec![PlaybackEvent::Replaced]
                } else {
                    Vec::new()
                }
            }
        }
    }

    /// Advances one tick. A no-op while idle.
    pub fn tick(&mut self) -> Vec<PlaybackEvent> {
        let mut events = match self.pending.take() {
            Some(interrupt) => self.apply(interrupt),
            None => Vec::new(),
        };
        let Some(pattern) = &self.current else {
            return events;
        };
        self.levels = pattern.levels_at(self.elapsed);
        events.push(PlaybackEvent::Tick(self.levels));
        self.elapsed += 1;
        if self.elapsed >= pattern.total_ticks() {
            self.current = None;
            self.elapsed = 0;
            self.levels = [0; MAX_CHANNELS];
        }
        events
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn payload(cycle: &[u16], repeat: u32, delay_ms: u32) -> PatternPayload {
        PatternPayload {
            delta_ms: 10,
            repeat,
            delay_ms,
            channels: BTreeMap::from([(0, cycle.to_vec()), (1, cycle.to_vec())]),
        }
    }

    fn load(cycle: &[u16], repeat: u32, delay_ms: u32) -> LoadedPattern {
        LoadedPattern::from_payload(&payload(cycle, repeat, delay_ms), 3)
    }

    fn run_to_idle(state: &mut PlaybackState) -> Vec<Levels> {
        let mut ticks = Vec::new();
        for _ in 0..10_000 {
            if state.phase() == Phase::Idle {
                break;
            }
            for e in state.tick() {
                if let PlaybackEvent::Tick(l) = e {
                    ticks.push(l);
                }
            }
        }
        ticks
    }

    #[test]
    fn single_cycle_plays_exactly_its_samples() {
        let cycle: Vec<u16> = (1..=13).collect();
        let mut s = PlaybackState::new();
        assert!(s.interrupt(Interrupt::Replace(load(&cycle, 1, 0))).is_empty());
        let ticks = run_to_idle(&mut s);
        assert_eq!(ticks.len(), 13);
        assert_eq!(ticks.iter().map(|l| l[0]).collect::<Vec<_>>(), cycle);
        assert_eq!(s.phase(), Phase::Idle);
        assert_eq!(s.levels(), [0; 8]);
    }

    #[test]
    fn repeats_with_delay() {
        let cycle = [5u16; 13];
        let mut s = PlaybackState::new();
        s.interrupt(Interrupt::Replace(load(&cycle, 3, 100)));
        let ticks = run_to_idle(&mut s);
        assert_eq!(ticks.len(), 3 * 13 + 2 * 10);
        let expected = haptic_core::expand_cycle(&cycle, 3, 10);
        assert_eq!(ticks.iter().map(|l| l[1]).collect::<Vec<_>>(), expected);
    }

    #[test]
    fn channels_beyond_the_band_stay_silent() {
        let mut p = payload(&[9, 9], 1, 0);
        p.channels.insert(5, vec![7, 7]);
        let mut s = PlaybackState::new();
        s.interrupt(Interrupt::Replace(LoadedPattern::from_payload(&p, 3)));
        let ticks = run_to_idle(&mut s);
        assert!(ticks.iter().all(|l| l[5] == 0 && l[0] == 9));
    }

    #[test]
    fn idle_tick_is_noop() {
        let mut s = PlaybackState::new();
        assert!(s.tick().is_empty());
        assert_eq!(s.phase(), Phase::Idle);
    }

    #[test]
    fn stop_applies_at_next_tick_boundary() {
        let mut s = PlaybackState::new();
        s.interrupt(Interrupt::Replace(load(&[100; 20], 1, 0)));
        s.tick();
        s.tick();
        assert!(s.interrupt(Interrupt::Stop).is_empty());
        assert_eq!(s.phase(), Phase::Playing);
        assert_eq!(s.tick(), vec![PlaybackEvent::Stopped]);
        assert_eq!(s.phase(), Phase::Idle);
        assert_eq!(s.levels(), [0; 8]);
        assert!(s.tick().is_empty());
    }

    #[test]
    fn stop_while_idle_is_immediate() {
        let mut s = PlaybackState::new();
        assert_eq!(s.interrupt(Interrupt::Stop), vec![PlaybackEvent::Stopped]);
        assert_eq!(s.phase(), Phase::Idle);
    }

    #[test]
    fn replacement_restarts_at_tick_zero_without_mixing() {
        let mut s = PlaybackState::new();
        s.interrupt(Interrupt::Replace(load(&[1; 10], 1, 0)));
        s.tick();
        s.tick();
        s.interrupt(Interrupt::Replace(load(&[2, 3, 4], 1, 0)));
        let events = s.tick();
        assert_eq!(events[0], PlaybackEvent::Replaced);
        assert_eq!(events[1], PlaybackEvent::Tick([2, 2, 0, 0, 0, 0, 0, 0]));
        let rest = run_to_idle(&mut s);
        assert_eq!(rest.iter().map(|l| l[0]).collect::<Vec<_>>(), vec![3, 4]);
    }

    #[test]
    fn latest_pending_interrupt_wins() {
        let mut s = PlaybackState::new();
        s.interrupt(Interrupt::Replace(load(&[1; 10], 1, 0)));
        s.tick();
        s.interrupt(Interrupt::Stop);
        s.interrupt(Interrupt::Replace(load(&[7], 1, 0)));
        assert_eq!(s.tick(), vec![PlaybackEvent::Replaced, PlaybackEvent::Tick([7, 7, 0, 0, 0, 0, 0, 0])]);
    }

    #[test]
    fn position_tracks_cycle_and_tick() {
        let mut s = PlaybackState::new();
        s.interrupt(Interrupt::Replace(load(&[1; 4], 3, 20)));
        for _ in 0..7 {
            s.tick();
        }
        // period is 4 + 2 ticks
        assert_eq!(s.position(), Some((1, 1)));
    }

    #[test]
    fn empty_pattern_never_plays() {
        let mut s = PlaybackState::new();
        s.interrupt(Interrupt::Replace(load(&[], 1, 0)));
        assert_eq!(s.phase(), Phase::Idle);
    }
}
