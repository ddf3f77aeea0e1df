use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use crate::topology::NodeIdx;

use super::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PulseKind {
    Sync,
    Max(u64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PulseMessage {
    pub sender: NodeIdx,
    pub sender_cluster: u32,
    pub kind: PulseKind,
    pub send_time: f64,
    pub deliver_time: f64,
    /// Sender's round number, carried for auditing only. Protocol code
    /// never reads it.
    pub round_tag: u64,
}

/// Which of a node's timers a deadline belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Deadline {
    /// Phase boundary of the node's own round.
    Protocol,
    /// Phase boundary of the silent estimator for the n-th adjacent cluster.
    Estimator(u32),
    /// Virtual self-receipt of the estimator's own pulse.
    EstimatorReceipt(u32),
    /// Next multiple of the max-estimate level step.
    MaxLevel,
}

#[derive(Debug, Clone, PartialEq)]
pub enum EventKind {
    PulseDelivery(PulseMessage),
    LogicalDeadline { slot: Deadline, generation: u64 },
    AdversaryAction,
    MetricSample,
}

impl EventKind {
    fn priority(&self) -> u8 {
        match self {
            EventKind::PulseDelivery(_) => 0,
            EventKind::LogicalDeadline { .. } => 1,
            EventKind::AdversaryAction => 2,
            EventKind::MetricSample => 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Event {
    pub time: f64,
    pub target: Option<NodeIdx>,
    pub kind: EventKind,
    pub seq: u64,
}

impl Event {
    fn key(&self) -> (f64, u8, u64) {
        (self.time, self.kind.priority(), self.seq)
    }
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    fn cmp(&self, other: &Self) -> Ordering {
        let (a, b) = (self.key(), other.key());
        a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2))
    }
}

/// Min-queue over `(time, kind priority, seq)`.
#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Reverse<Event>>,
    now: f64,
    next_seq: u64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    pub fn push(&mut self, time: f64, target: Option<NodeIdx>, kind: EventKind) -> Result<u64, SimError> {
        if !(time >= self.now) || !time.is_finite() {
            return Err(SimError::EventInPast { time, now: self.now });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Reverse(Event { time, target, kind, seq }));
        Ok(seq)
    }

    pub fn peek_time(&self) -> Option<f64> {
        self.heap.peek().map(|Reverse(e)| e.time)
    }

    pub fn pop(&mut self) -> Option<Event> {
        let Reverse(e) = self.heap.pop()?;
        self.now = e.time;
        Some(e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pops_in_time_priority_seq_order() {
        let mut q = EventQueue::new();
        q.push(2.0, None, EventKind::MetricSample).unwrap();
        q.push(1.0, Some(0), EventKind::MetricSample).unwrap();
        q.push(1.0, Some(0), EventKind::LogicalDeadline { slot: Deadline::Protocol, generation: 0 }).unwrap();
        let msg = PulseMessage {
            sender: 1,
            sender_cluster: 0,
            kind: PulseKind::Sync,
            send_time: 0.0,
            deliver_time: 1.0,
            round_tag: 1,
        };
        q.push(1.0, Some(0), EventKind::PulseDelivery(msg.clone())).unwrap();
        q.push(1.0, Some(2), EventKind::PulseDelivery(msg)).unwrap();
        let order: Vec<(f64, u8, Option<usize>)> = std::iter::from_fn(|| q.pop())
            .map(|e| (e.time, e.kind.priority(), e.target))
            .collect();
        assert_eq!(
            order,
            vec![(1.0, 0, Some(0)), (1.0, 0, Some(2)), (1.0, 1, Some(0)), (1.0, 3, Some(0)), (2.0, 3, None)]
        );
    }

    #[test]
    fn rejects_past_events() {
        let mut q = EventQueue::new();
        q.push(5.0, None, EventKind::MetricSample).unwrap();
        q.pop();
        assert!(matches!(q.push(4.0, None, EventKind::MetricSample), Err(SimError::EventInPast { .. })));
        assert!(q.push(5.0, None, EventKind::MetricSample).is_ok());
        assert!(q.push(f64::NAN, None, EventKind::MetricSample).is_err());
    }
}
