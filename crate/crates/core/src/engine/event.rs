use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;

use super::state::ConnId;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    HandshakeDone,
    TlsDone,
    RequestArrives,
    SubflowJoined {
        subflow: usize,
    },
    /// End of a slow-start round on one subflow.
    RoundEnd {
        subflow: usize,
        epoch: u64,
    },
    TransferCompletes {
        epoch: u64,
    },
    IdleTimeout {
        epoch: u64,
    },
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::HandshakeDone => "handshake_done",
            EventKind::TlsDone => "tls_done",
            EventKind::RequestArrives => "request_arrives",
            EventKind::SubflowJoined { .. } => "subflow_joined",
            EventKind::RoundEnd { .. } => "round_end",
            EventKind::TransferCompletes { .. } => "transfer_completes",
            EventKind::IdleTimeout { .. } => "idle_timeout",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Event {
    pub time: f64,
    pub seq: u64,
    pub conn: ConnId,
    pub kind: EventKind,
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
    // Reversed so that `BinaryHeap` pops the earliest (time, seq) first.
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time).then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Min-heap of pending events ordered by (time, insertion sequence).
///
/// Events are never removed early; handlers check epochs and drop stale ones.
#[derive(Debug, Clone, Default)]
pub struct EventQueue {
    heap: BinaryHeap<Event>,
    next_seq: u64,
}

impl EventQueue {
    pub fn push(&mut self, time: f64, conn: ConnId, kind: EventKind) {
        debug_assert!(time.is_finite(), "event time must be finite");
        let seq = self.next_seq;
        self.next_seq += 1;
        self.heap.push(Event { time, seq, conn, kind });
    }

    pub fn pop(&mut self) -> Option<Event> {
        self.heap.pop()
    }

    pub fn peek(&self) -> Option<&Event> {
        self.heap.peek()
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    /// Pending events in processing order. O(n log n); for inspection only.
    pub fn sorted(&self) -> Vec<Event> {
        let mut v: Vec<Event> = self.heap.iter().copied().collect();
        v.sort_by(|a, b| b.cmp(a));
        v
    }
}
