//! Discrete-event engine: simulation clock, event queue and dispatch loop.
//!
//! Events are ordered by `(fire_at, seq)` where `seq` is a monotone insertion
//! counter, so events sharing a timestamp are dispatched FIFO. Handlers run in
//! zero simulated time; the clock only moves when the next event is popped.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::ops::{Add, AddAssign, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

const MICROS_PER_MILLI: u64 = 1_000;
const MICROS_PER_SEC: u64 = 1_000_000;
const MICROS_PER_HOUR: u64 = 3_600 * MICROS_PER_SEC;

/// Instant on the simulation clock, in microseconds since start.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SimTime(u64);

/// Non-negative span of simulated time, in microseconds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SimDuration(u64);

impl SimTime {
    pub const ZERO: SimTime = SimTime(0);

    pub const fn from_micros(us: u64) -> Self {
        SimTime(us)
    }

    pub const fn from_millis(ms: u64) -> Self {
        SimTime(ms * MICROS_PER_MILLI)
    }

    pub const fn from_secs(s: u64) -> Self {
        SimTime(s * MICROS_PER_SEC)
    }

    pub const fn from_hours(h: u64) -> Self {
        SimTime(h * MICROS_PER_HOUR)
    }

    pub const fn as_micros(self) -> u64 {
        self.0
    }

    pub fn as_millis_f64(self) -> f64 {
        self.0 as f64 / MICROS_PER_MILLI as f64
    }

    pub fn as_secs_f64(self) -> f64 {
        self.0 as f64 / MICROS_PER_SEC as f64
    }

    /// Hour of the (simulated) day; the run starts at 00:00.
    pub const fn hour_of_day(self) -> u32 {
        ((self.0 / MICROS_PER_HOUR) % 24) as u32
    }

    /// Elapsed time since `earlier`, or `None` if `earlier` is later than `self`.
    pub fn since(self, earlier: SimTime) -> Option<SimDuration> {
        self.0.checked_sub(earlier.0).map(SimDuration)
    }
}

impl SimDuration {
    pub const ZERO: SimDuration = SimDuration(0);

    pub const fn from_micros(us: u64) -> Self {
        SimDuration(us)
    }

    pub const fn from_millis(ms: u64) -> Self {
        SimDuration(ms * MICROS_PER_MILLI)
    }

    pub const fn from_secs(s: u64) -> Self {
        SimDuration(s * MICROS_PER_SEC)
    }

    /// Rounds a millisecond value to the engine's microsecond resolution.
    /// Negative and NaN inputs clamp to zero.
    pub fn from_millis_f64(ms: f64) -> Self {
        let us = (ms * MICROS_PER_MILLI as f64).round();
        if us.is_nan() || us <= 0.0 {
            SimDuration(0)
        } else {
            SimDuration(us as u64)
        }
    }

    pub fn from_minutes_f64(min: f64) -> Self {
        Self::from_millis_f64(min * 60_000.0)
    }

    pub const fn as_micros(self) -> u64 {
        self.0
    }

    pub fn as_millis_f64(self) -> f64 {
        self.0 as f64 / MICROS_PER_MILLI as f64
    }
}

impl Add<SimDuration> for SimTime {
    type Output = SimTime;
    fn add(self, rhs: SimDuration) -> SimTime {
        SimTime(self.0 + rhs.0)
    }
}

impl AddAssign<SimDuration> for SimTime {
    fn add_assign(&mut self, rhs: SimDuration) {
        self.0 += rhs.0;
    }
}

impl Add for SimDuration {
    type Output = SimDuration;
    fn add(self, rhs: SimDuration) -> SimDuration {
        SimDuration(self.0 + rhs.0)
    }
}

impl Sub for SimDuration {
    type Output = SimDuration;
    fn sub(self, rhs: SimDuration) -> SimDuration {
        SimDuration(self.0.saturating_sub(rhs.0))
    }
}

impl fmt::Display for SimTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{:06}s", self.0 / MICROS_PER_SEC, self.0 % MICROS_PER_SEC)
    }
}

impl fmt::Display for SimDuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.3}ms", self.as_millis_f64())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("cannot schedule event at {fire_at}: clock is already at {now}")]
    SchedulingInPast { fire_at: SimTime, now: SimTime },
}

/// Handle returned by [`Engine::schedule`]; it is the event's insertion sequence number.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EventHandle(pub u64);

/// A timestamped message awaiting dispatch.
#[derive(Debug, Clone)]
pub struct Event<M> {
    pub fire_at: SimTime,
    pub seq: u64,
    pub payload: M,
}

impl<M> PartialEq for Event<M> {
    fn eq(&self, other: &Self) -> bool {
        self.fire_at == other.fire_at && self.seq == other.seq
    }
}

impl<M> Eq for Event<M> {}

impl<M> PartialOrd for Event<M> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<M> Ord for Event<M> {
    // Reversed so that `BinaryHeap` pops the smallest (fire_at, seq) first.
    fn cmp(&self, other: &Self) -> Ordering {
        (other.fire_at, other.seq).cmp(&(self.fire_at, self.seq))
    }
}

/// Single-threaded event loop over payloads of type `M`.
#[derive(Debug)]
pub struct Engine<M> {
    now: SimTime,
    next_seq: u64,
    queue: BinaryHeap<Event<M>>,
    dispatched: u64,
}

impl<M> Default for Engine<M> {
    fn default() -> Self {
        Self::new()
    }
}

impl<M> Engine<M> {
    pub fn new() -> Self {
        Engine {
            now: SimTime::ZERO,
            next_seq: 0,
            queue: BinaryHeap::new(),
            dispatched: 0,
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    /// Total events dispatched since construction.
    pub fn dispatched(&self) -> u64 {
        self.dispatched
    }

    pub fn schedule(&mut self, fire_at: SimTime, payload: M) -> Result<EventHandle, SimError> {
        if fire_at < self.now {
            return Err(SimError::SchedulingInPast { fire_at, now: self.now });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Event { fire_at, seq, payload });
        Ok(EventHandle(seq))
    }

    /// Schedules `payload` after `delay`; never fails since the target is ≥ now.
    pub fn schedule_in(&mut self, delay: SimDuration, payload: M) -> EventHandle {
        let at = self.now + delay;
        self.schedule(at, payload).expect("relative schedule is never in the past")
    }

    /// Dispatches every event with `fire_at <= t_end`, including events the
    /// handler schedules inside the window, then leaves the clock at `t_end`.
    /// Returns the number of events dispatched by this call.
    pub fn run_until<F>(&mut self, t_end: SimTime, mut handler: F) -> u64
    where
        F: FnMut(&mut Engine<M>, Event<M>),
    {
        let mut count = 0;
        while self.queue.peek().is_some_and(|e| e.fire_at <= t_end) {
            let event = self.queue.pop().expect("peeked");
            debug_assert!(event.fire_at >= self.now);
            self.now = event.fire_at;
            self.dispatched += 1;
            count += 1;
            handler(self, event);
        }
        if t_end > self.now {
            self.now = t_end;
        }
        count
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn drain(engine: &mut Engine<&'static str>, t_end: SimTime) -> Vec<(SimTime, &'static str)> {
        let mut seen = Vec::new();
        engine.run_until(t_end, |_, e| seen.push((e.fire_at, e.payload)));
        seen
    }

    #[test]
    fn later_event_dispatched_after_earlier_ones() {
        let mut eng = Engine::new();
        eng.schedule(SimTime::from_millis(5), "late").unwrap();
        eng.schedule(SimTime::from_millis(1), "a").unwrap();
        eng.schedule(SimTime::from_millis(4), "b").unwrap();
        let order: Vec<_> = drain(&mut eng, SimTime::from_secs(1)).into_iter().map(|x| x.1).collect();
        assert_eq!(order, ["a", "b", "late"]);
    }

    #[test]
    fn equal_timestamps_are_fifo() {
        let mut eng = Engine::new();
        for name in ["first", "second", "third"] {
            eng.schedule(SimTime::from_millis(3), name).unwrap();
        }
        let order: Vec<_> = drain(&mut eng, SimTime::from_millis(3)).into_iter().map(|x| x.1).collect();
        assert_eq!(order, ["first", "second", "third"]);
    }

    #[test]
    fn scheduling_in_the_past_is_rejected() {
        let mut eng: Engine<()> = Engine::new();
        eng.run_until(SimTime::from_millis(2), |_, _| {});
        let err = eng.schedule(SimTime::from_millis(1), ()).unwrap_err();
        assert_eq!(
            err,
            SimError::SchedulingInPast { fire_at: SimTime::from_millis(1), now: SimTime::from_millis(2) }
        );
        assert!(eng.schedule(SimTime::from_millis(2), ()).is_ok());
    }

    #[test]
    fn empty_queue_advances_clock_to_end() {
        let mut eng: Engine<()> = Engine::new();
        assert_eq!(eng.run_until(SimTime::from_hours(1), |_, _| {}), 0);
        assert_eq!(eng.now(), SimTime::from_hours(1));
    }

    #[test]
    fn boundary_is_inclusive() {
        let mut eng = Engine::new();
        for ms in 1..=3 {
            eng.schedule(SimTime::from_millis(ms), "x").unwrap();
        }
        assert_eq!(eng.run_until(SimTime::from_millis(2), |_, _| {}), 2);
        assert_eq!(eng.now(), SimTime::from_millis(2));
        assert_eq!(eng.pending(), 1);
    }

    #[test]
    fn follow_ups_inside_window_are_dispatched() {
        let mut eng = Engine::new();
        eng.schedule(SimTime::ZERO, 0u32).unwrap();
        let mut seen = Vec::new();
        let n = eng.run_until(SimTime::from_millis(10), |eng, e| {
            seen.push(e.payload);
            if e.payload < 5 {
                eng.schedule_in(SimDuration::from_millis(2), e.payload + 1);
            }
        });
        // 0,2,4,6,8,10 ms are inside the window; the event at 12 ms is not scheduled.
        assert_eq!(n, 6);
        assert_eq!(seen, vec![0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn millis_rounding_to_micros() {
        assert_eq!(SimDuration::from_millis_f64(2.5).as_micros(), 2_500);
        assert_eq!(SimDuration::from_millis_f64(0.0004).as_micros(), 0);
        assert_eq!(SimDuration::from_millis_f64(-3.0), SimDuration::ZERO);
        assert_eq!(SimTime::from_hours(15).hour_of_day(), 15);
        assert_eq!(SimTime::from_hours(25).hour_of_day(), 1);
    }
}
