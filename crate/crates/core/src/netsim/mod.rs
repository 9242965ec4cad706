//! Transports: a deterministic discrete-event network and a real UDP one.
//!
//! Store, switch and client logic are written once against [`Handler`]; the
//! simulator and the UDP loop both drive it.

mod sim;
mod topology;
pub mod udp;

pub use sim::{EventQueue, RunSummary, Simulator, StopReason};
pub use topology::{DeltaRatio, NodeId, NodeKind, Topology, TopologyError};

/// Microseconds, virtual in the simulator, elapsed wall time under UDP.
pub type Micros = u64;

pub fn ms_to_us(ms: f64) -> Micros {
    (ms * 1000.0).round() as Micros
}

/// Effects requested by a handler during one callback.
#[derive(Debug)]
pub struct Outbox<P> {
    sends: Vec<(P, Vec<u8>)>,
    timers: Vec<(Micros, u64)>,
}

impl<P> Default for Outbox<P> {
    fn default() -> Self {
        Outbox { sends: Vec::new(), timers: Vec::new() }
    }
}

impl<P> Outbox<P> {
    pub fn send(&mut self, to: P, bytes: Vec<u8>) {
        self.sends.push((to, bytes));
    }

    /// Fires `on_timer(token)` after `delay`.
    pub fn set_timer(&mut self, delay: Micros, token: u64) {
        self.timers.push((delay, token));
    }

    pub fn take_sends(&mut self) -> std::vec::Drain<'_, (P, Vec<u8>)> {
        self.sends.drain(..)
    }

    pub fn take_timers(&mut self) -> std::vec::Drain<'_, (Micros, u64)> {
        self.timers.drain(..)
    }

    pub fn is_empty(&self) -> bool {
        self.sends.is_empty() && self.timers.is_empty()
    }
}

/// A message-driven node, generic over the peer address type.
pub trait Handler<P> {
    fn on_start(&mut self, _now: Micros, _out: &mut Outbox<P>) {}

    fn on_datagram(&mut self, now: Micros, from: P, bytes: &[u8], out: &mut Outbox<P>);

    fn on_timer(&mut self, _now: Micros, _token: u64, _out: &mut Outbox<P>) {}

    /// False once the node has nothing further to do (e.g. a client that
    /// reached its transaction budget).
    fn is_active(&self) -> bool {
        true
    }
}
