use std::cmp::Ordering;
use std::collections::BinaryHeap;

use super::{Handler, Micros, NodeId, Outbox, Topology};

#[derive(Debug)]
enum Event {
    /// Message reaches a node's input queue.
    Arrive { to: NodeId, from: NodeId, bytes: Vec<u8> },
    /// Node finishes servicing a message and reacts to it.
    Deliver { to: NodeId, from: NodeId, bytes: Vec<u8> },
    Timer { node: NodeId, token: u64 },
}

struct Scheduled {
    time: Micros,
    seq: u64,
    event: Event,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        (self.time, self.seq) == (other.time, other.seq)
    }
}

impl Eq for Scheduled {}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Scheduled {
    // Min-heap on (time, insertion order).
    fn cmp(&self, other: &Self) -> Ordering {
        (other.time, other.seq).cmp(&(self.time, self.seq))
    }
}

/// Events in nondecreasing time, ties broken by insertion order.
#[derive(Default)]
pub struct EventQueue {
    heap: BinaryHeap<Scheduled>,
    seq: u64,
}

impl EventQueue {
    fn push(&mut self, time: Micros, event: Event) {
        self.seq += 1;
        self.heap.push(Scheduled { time, seq: self.seq, event });
    }

    fn peek_time(&self) -> Option<Micros> {
        self.heap.peek().map(|s| s.time)
    }

    fn pop(&mut self) -> Option<Scheduled> {
        self.heap.pop()
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopReason {
    ReachedDuration,
    /// Nothing left to do before the requested end time.
    Starved { at: Micros },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunSummary {
    pub stop: StopReason,
    pub end: Micros,
    pub messages: u64,
    /// FNV-1a over every delivery (time, endpoints, bytes).
    pub trace_hash: u64,
}

type Tap = Box<dyn FnMut(Micros, NodeId, NodeId, &[u8])>;

/// Single-threaded discrete-event network over a [`Topology`].
///
/// Links are loss-free and FIFO; each node serves its input queue in order
/// with a fixed per-message service time.
pub struct Simulator<N> {
    topology: Topology,
    nodes: Vec<N>,
    service: Vec<Micros>,
    busy_until: Vec<Micros>,
    queue: EventQueue,
    now: Micros,
    started: bool,
    messages: u64,
    trace_hash: u64,
    tap: Option<Tap>,
    outbox: Outbox<NodeId>,
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv(mut h: u64, bytes: &[u8]) -> u64 {
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

impl<N: Handler<NodeId>> Simulator<N> {
    /// `nodes[i]` handles topology node `i`; `service[i]` is its per-message cost.
    pub fn new(topology: Topology, nodes: Vec<N>, service: Vec<Micros>) -> Self {
        assert_eq!(nodes.len(), topology.len(), "one handler per topology node");
        assert_eq!(service.len(), topology.len(), "one service time per topology node");
        let n = nodes.len();
        Simulator {
            topology,
            nodes,
            service,
            busy_until: vec![0; n],
            queue: EventQueue::default(),
            now: 0,
            started: false,
            messages: 0,
            trace_hash: FNV_OFFSET,
            tap: None,
            outbox: Outbox::default(),
        }
    }

    /// Observe every delivered message.
    pub fn set_tap(&mut self, tap: impl FnMut(Micros, NodeId, NodeId, &[u8]) + 'static) {
        self.tap = Some(Box::new(tap));
    }

    pub fn now(&self) -> Micros {
        self.now
    }

    pub fn topology(&self) -> &Topology {
        &self.topology
    }

    pub fn nodes(&self) -> &[N] {
        &self.nodes
    }

    pub fn nodes_mut(&mut self) -> &mut [N] {
        &mut self.nodes
    }

    pub fn into_nodes(self) -> Vec<N> {
        self.nodes
    }

    fn flush(&mut self, node: NodeId) {
        let now = self.now;
        let sends: Vec<_> = self.outbox.take_sends().collect();
        for (to, bytes) in sends {
            let delay = self
                .topology
                .delay(node, to)
                .unwrap_or_else(|| panic!("node {node} sent to {to} without a link"));
            self.queue.push(now + delay, Event::Arrive { to, from: node, bytes });
        }
        let timers: Vec<_> = self.outbox.take_timers().collect();
        for (delay, token) in timers {
            self.queue.push(now + delay, Event::Timer { node, token });
        }
    }

    fn start(&mut self) {
        self.started = true;
        for i in 0..self.nodes.len() {
            self.nodes[i].on_start(self.now, &mut self.outbox);
            self.flush(i);
        }
    }

    /// Advances virtual time to `until`, or stops early when no events remain.
    pub fn run(&mut self, until: Micros) -> RunSummary {
        if !self.started {
            self.start();
        }
        let stop = loop {
            match self.queue.peek_time() {
                None => break StopReason::Starved { at: self.now },
                Some(t) if t > until => break StopReason::ReachedDuration,
                Some(_) => {}
            }
            let Scheduled { time, event, .. } = self.queue.pop().expect("peeked");
            self.now = time;
            match event {
                Event::Arrive { to, from, bytes } => {
                    let start = self.busy_until[to].max(time);
                    let done = start + self.service[to];
                    self.busy_until[to] = done;
                    self.queue.push(done, Event::Deliver { to, from, bytes });
                }
                Event::Deliver { to, from, bytes } => {
                    self.messages += 1;
                    let mut h = fnv(self.trace_hash, &time.to_be_bytes());
                    h = fnv(h, &(to as u64).to_be_bytes());
                    h = fnv(h, &(from as u64).to_be_bytes());
                    self.trace_hash = fnv(h, &bytes);
                    if let Some(tap) = self.tap.as_mut() {
                        tap(time, from, to, &bytes);
                    }
                    self.nodes[to].on_datagram(time, from, &bytes, &mut self.outbox);
                    self.flush(to);
                }
                Event::Timer { node, token } => {
                    self.nodes[node].on_timer(time, token, &mut self.outbox);
                    self.flush(node);
                }
            }
        };
        if stop == StopReason::ReachedDuration {
            self.now = until;
        }
        RunSummary { stop, end: self.now, messages: self.messages, trace_hash: self.trace_hash }
    }
}
