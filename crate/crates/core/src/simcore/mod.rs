//! Discrete-event engine: hardware and logical clocks, the event queue and
//! the main loop.

mod clock;
mod logical;
mod queue;

pub use clock::{ClockPolicy, HardwareClock, RateSegment};
pub use logical::{rate_multiplier, LogicalClock};
pub use queue::{Deadline, Event, EventKind, EventQueue, PulseKind, PulseMessage};

use thiserror::Error;

use crate::topology::NodeIdx;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("event scheduled at {time} but the clock already reads {now}")]
    EventInPast { time: f64, now: f64 },
    #[error("delay {delay} outside [{lo}, {hi}] for a correct sender")]
    DelayOutOfRange { delay: f64, lo: f64, hi: f64 },
    #[error("invalid hardware clock: {0}")]
    InvalidClock(String),
    #[error("adversary: {0}")]
    Adversary(String),
}

/// Protocol callback invoked for every event.
pub trait Handler {
    fn handle(&mut self, event: Event, queue: &mut EventQueue) -> Result<(), SimError>;
}

/// Processes all events with `time <= until`. Returns the number handled.
pub fn run<H: Handler>(handler: &mut H, queue: &mut EventQueue, until: f64) -> Result<u64, SimError> {
    let mut handled = 0;
    while let Some(t) = queue.peek_time() {
        if t > until {
            break;
        }
        let event = queue.pop().expect("peeked");
        handler.handle(event, queue)?;
        handled += 1;
    }
    Ok(handled)
}

/// Schedules one delivery of `kind` per recipient. `delay` is queried once
/// per recipient and must stay inside `[d - u, d]`.
#[allow(clippy::too_many_arguments)]
pub fn broadcast_pulse(
    queue: &mut EventQueue,
    sender: NodeIdx,
    sender_cluster: u32,
    kind: PulseKind,
    round_tag: u64,
    t: f64,
    recipients: &[NodeIdx],
    (d, u): (f64, f64),
    mut delay: impl FnMut(NodeIdx) -> f64,
) -> Result<usize, SimError> {
    let lo = d - u;
    for &r in recipients {
        let dl = delay(r);
        if !(dl >= lo && dl <= d) {
            return Err(SimError::DelayOutOfRange { delay: dl, lo, hi: d });
        }
        let msg = PulseMessage { sender, sender_cluster, kind, send_time: t, deliver_time: t + dl, round_tag };
        queue.push(t + dl, Some(r), EventKind::PulseDelivery(msg))?;
    }
    Ok(recipients.len())
}
