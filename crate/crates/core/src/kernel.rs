//! Deterministic process-oriented discrete-event kernel.
//!
//! Processes are scripted as explicit continuations: a process schedules a
//! timeout carrying a payload `E`, and when the timeout fires the owner runs
//! the next step of that process. A pending timeout can be interrupted, in
//! which case its payload is never delivered and the caller is told how much
//! of the wait had elapsed so it can run its cleanup step on the spot.
//!
//! Events at equal timestamps are delivered in insertion order.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Result, SimError};

/// Simulated minutes since scenario start.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SimClock {
    now: f64,
}

impl SimClock {
    pub fn new() -> Self {
        Self { now: 0.0 }
    }

    #[inline]
    pub fn now(&self) -> f64 {
        self.now
    }

    fn advance_to(&mut self, t: f64) {
        debug_assert!(t >= self.now, "clock moved backwards: {} -> {}", self.now, t);
        self.now = t;
    }
}

/// Identifier of one scheduled timeout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ProcessHandle(u64);

impl ProcessHandle {
    pub fn id(self) -> u64 {
        self.0
    }

    #[cfg(test)]
    pub(crate) fn default_for_tests() -> Self {
        ProcessHandle(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HandleStatus {
    Pending,
    Completed,
    Interrupted,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InterruptOutcome {
    /// The wait was cancelled. `elapsed` minutes of the `scheduled` wait had passed.
    Interrupted { elapsed: f64, scheduled: f64 },
    AlreadyCompleted,
    AlreadyInterrupted,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelStats {
    pub events_processed: u64,
    pub final_time: f64,
}

/// A timeout that reached its wake time without being interrupted.
#[derive(Debug)]
pub struct Fired<E> {
    pub handle: ProcessHandle,
    pub time: f64,
    pub payload: E,
}

#[derive(Debug, Clone, Copy)]
struct HandleSlot {
    start: f64,
    wake: f64,
    status: HandleStatus,
}

struct Entry<E> {
    wake: f64,
    seq: u64,
    handle: ProcessHandle,
    payload: E,
}

impl<E> PartialEq for Entry<E> {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl<E> Eq for Entry<E> {}

impl<E> PartialOrd for Entry<E> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<E> Ord for Entry<E> {
    // BinaryHeap is a max-heap; invert so the earliest (wake, seq) is on top.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .wake
            .total_cmp(&self.wake)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Future-event list plus clock.
pub struct Kernel<E> {
    clock: SimClock,
    queue: BinaryHeap<Entry<E>>,
    slots: Vec<HandleSlot>,
    next_seq: u64,
    processed: u64,
}

impl<E> Default for Kernel<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E> Kernel<E> {
    pub fn new() -> Self {
        Self {
            clock: SimClock::new(),
            queue: BinaryHeap::new(),
            slots: Vec::new(),
            next_seq: 0,
            processed: 0,
        }
    }

    #[inline]
    pub fn now(&self) -> f64 {
        self.clock.now()
    }

    pub fn events_processed(&self) -> u64 {
        self.processed
    }

    /// Number of pending (not yet fired, not interrupted) timeouts.
    pub fn pending(&self) -> usize {
        self.slots
            .iter()
            .filter(|s| s.status == HandleStatus::Pending)
            .count()
    }

    pub fn is_idle(&self) -> bool {
        self.queue.is_empty()
    }

    /// Schedules `payload` to fire `duration` minutes from now.
    pub fn schedule_timeout(&mut self, duration: f64, payload: E) -> Result<ProcessHandle> {
        if !duration.is_finite() || duration < 0.0 {
            return Err(SimError::Config(format!(
                "timeout duration must be finite and non-negative, got {duration}"
            )));
        }
        let now = self.now();
        let wake = now + duration;
        let handle = ProcessHandle(self.slots.len() as u64);
        self.slots.push(HandleSlot {
            start: now,
            wake,
            status: HandleStatus::Pending,
        });
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Entry {
            wake,
            seq,
            handle,
            payload,
        });
        Ok(handle)
    }

    pub fn status(&self, handle: ProcessHandle) -> Option<HandleStatus> {
        self.slots.get(handle.0 as usize).map(|s| s.status)
    }

    pub fn wake_time(&self, handle: ProcessHandle) -> Option<f64> {
        self.slots.get(handle.0 as usize).map(|s| s.wake)
    }

    /// Cancels a pending timeout. Its payload will never be delivered.
    pub fn interrupt(&mut self, handle: ProcessHandle) -> Result<InterruptOutcome> {
        let now = self.now();
        let slot = self.slots.get_mut(handle.0 as usize).ok_or_else(|| {
            SimError::consistency(now, format!("interrupt of unknown handle {}", handle.0))
        })?;
        Ok(match slot.status {
            HandleStatus::Pending => {
                slot.status = HandleStatus::Interrupted;
                InterruptOutcome::Interrupted {
                    elapsed: now - slot.start,
                    scheduled: slot.wake - slot.start,
                }
            }
            HandleStatus::Completed => InterruptOutcome::AlreadyCompleted,
            HandleStatus::Interrupted => InterruptOutcome::AlreadyInterrupted,
        })
    }

    /// Pops the next live event with wake time `<= end_time`, advancing the clock.
    /// Interrupted entries are discarded on the way.
    pub fn next_event(&mut self, end_time: f64) -> Option<Fired<E>> {
        loop {
            let top = self.queue.peek()?;
            if top.wake > end_time {
                return None;
            }
            let entry = self.queue.pop().expect("peeked");
            let slot = &mut self.slots[entry.handle.0 as usize];
            if slot.status == HandleStatus::Interrupted {
                continue;
            }
            slot.status = HandleStatus::Completed;
            self.clock.advance_to(entry.wake);
            self.processed += 1;
            return Some(Fired {
                handle: entry.handle,
                time: entry.wake,
                payload: entry.payload,
            });
        }
    }

    /// Delivers every event up to `end_time` to `step`, which may schedule or
    /// interrupt further timeouts through the kernel it is handed.
    pub fn run_until<F>(&mut self, end_time: f64, mut step: F) -> KernelStats
    where
        F: FnMut(&mut Self, Fired<E>),
    {
        let start = self.processed;
        while let Some(fired) = self.next_event(end_time) {
            step(self, fired);
        }
        KernelStats {
            events_processed: self.processed - start,
            final_time: self.now(),
        }
    }
}
