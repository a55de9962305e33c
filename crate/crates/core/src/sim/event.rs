use std::cmp::Ordering;
use std::collections::BinaryHeap;

use serde::{Deserialize, Serialize};

use crate::packet::{NodeId, Packet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EventKind {
    BeaconRound,
    RouteRequest,
    RouteReply,
    DataTx,
    DataRx,
    AckOverhear,
    RangeAdjust,
    MobilityTick,
    MetricSample,
    PacketArrival,
}

impl EventKind {
    pub const ALL: [EventKind; 10] = [
        EventKind::BeaconRound,
        EventKind::RouteRequest,
        EventKind::RouteReply,
        EventKind::DataTx,
        EventKind::DataRx,
        EventKind::AckOverhear,
        EventKind::RangeAdjust,
        EventKind::MobilityTick,
        EventKind::MetricSample,
        EventKind::PacketArrival,
    ];

    pub fn index(self) -> usize {
        self as usize
    }
}

/// Events that occupy a slot in the queue. Route discovery and acknowledgments
/// complete within the handler that triggers them and are only counted.
#[derive(Debug, Clone, PartialEq)]
pub enum Event {
    BeaconRound,
    MobilityTick,
    MetricSample,
    PacketArrival { flow: usize },
    /// `node` transmits the head of its queue. `fresh` means the candidate set was
    /// built for this very transmission and must be used even if the cache expired.
    DataTx { node: NodeId, fresh: bool },
    DataRx { node: NodeId, packet: Packet },
}

impl Event {
    pub fn kind(&self) -> EventKind {
        match self {
            Event::BeaconRound => EventKind::BeaconRound,
            Event::MobilityTick => EventKind::MobilityTick,
            Event::MetricSample => EventKind::MetricSample,
            Event::PacketArrival { .. } => EventKind::PacketArrival,
            Event::DataTx { .. } => EventKind::DataTx,
            Event::DataRx { .. } => EventKind::DataRx,
        }
    }
}

#[derive(Debug)]
struct Scheduled {
    time: f64,
    seq: u64,
    event: Event,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Scheduled {}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scheduled {
    // reversed so the max-heap pops the earliest event, ties by insertion order
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Min-queue on `(time, insertion sequence)`.
#[derive(Debug, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Scheduled>,
    seq: u64,
    now: f64,
}

impl EventQueue {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn now(&self) -> f64 {
        self.now
    }

    /// Schedules `event` at `time`, never earlier than the current clock.
    pub fn push(&mut self, time: f64, event: Event) {
        debug_assert!(time >= self.now, "event scheduled in the past: {time} < {}", self.now);
        let time = time.max(self.now);
        self.heap.push(Scheduled {
            time,
            seq: self.seq,
            event,
        });
        self.seq += 1;
    }

    pub fn pop(&mut self) -> Option<(f64, Event)> {
        let s = self.heap.pop()?;
        self.now = s.time;
        Some((s.time, s.event))
    }

    pub fn peek_time(&self) -> Option<f64> {
        self.heap.peek().map(|s| s.time)
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// Packets carried by pending `DataRx` events.
    pub fn packets_in_transit(&self) -> usize {
        self.heap
            .iter()
            .filter(|s| matches!(s.event, Event::DataRx { .. }))
            .count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn orders_by_time_then_insertion() {
        let mut q = EventQueue::new();
        q.push(2.0, Event::PacketArrival { flow: 0 });
        q.push(1.0, Event::PacketArrival { flow: 1 });
        q.push(2.0, Event::PacketArrival { flow: 2 });
        q.push(1.0, Event::PacketArrival { flow: 3 });
        let flows: Vec<usize> = std::iter::from_fn(|| q.pop())
            .map(|(_, e)| match e {
                Event::PacketArrival { flow } => flow,
                _ => unreachable!(),
            })
            .collect();
        assert_eq!(flows, vec![1, 3, 0, 2]);
        assert_eq!(q.now(), 2.0);
    }
}
