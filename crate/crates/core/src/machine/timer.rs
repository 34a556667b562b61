use crate::prng::Prng;

/// Periodic interrupt source.
///
/// The timer only dispatches after a control-transfer instruction, so the
/// interrupted code always resumes at a basic-block boundary.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TimerState {
    /// Interval in instructions; 0 disables the timer.
    pub period: u32,
    pub jitter_enabled: bool,
    /// Instruction index at or after which the next interrupt is due.
    pub next_fire: u64,
    pub prng: Prng,
}

impl TimerState {
    pub fn new(period: u32, jitter_enabled: bool, seed: u64) -> Self {
        let mut t = TimerState {
            period: 0,
            jitter_enabled,
            next_fire: u64::MAX,
            prng: Prng::new(seed),
        };
        t.set_period(period, 0);
        t
    }

    pub fn disabled() -> Self {
        TimerState::new(0, false, 0)
    }

    /// Re-arms relative to `now`.
    pub fn set_period(&mut self, period: u32, now: u64) {
        self.period = period;
        self.next_fire = if period == 0 {
            u64::MAX
        } else {
            now + self.interval()
        };
    }

    /// Next spacing: `period + j` with `j` uniform in `[0, period/4]` when
    /// jitter is on.
    pub(crate) fn interval(&mut self) -> u64 {
        let base = self.period as u64;
        if self.jitter_enabled {
            base + self.prng.below(base / 4 + 1)
        } else {
            base
        }
    }

    pub(crate) fn due(&self, insn_count: u64) -> bool {
        self.period != 0 && insn_count >= self.next_fire
    }

    pub(crate) fn fired(&mut self) {
        let step = self.interval();
        self.next_fire = self.next_fire.saturating_add(step);
    }
}
