//! The on-path switch.
//!
//! Three modes share one packet loop: plain forwarding, an idealized
//! look-through read cache, and optimistic abort. In optimistic-abort mode the
//! cache is only a decision log: it never answers reads, it can abort
//! transactions that disagree with it, and it can acknowledge transactions
//! made only of compares.

mod lru;

pub use lru::LruCache;

use std::collections::HashMap;
use std::fmt;
use std::hash::Hash;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::netsim::{Handler, Micros, Outbox};
use crate::wire::{self, Message, MsgType, OpType, Operation, Status};

pub const DEFAULT_CACHE_CAPACITY: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SwitchMode {
    Forward,
    ReadCache,
    Gotthard,
}

impl SwitchMode {
    pub const ALL: [SwitchMode; 3] = [SwitchMode::Forward, SwitchMode::ReadCache, SwitchMode::Gotthard];

    pub fn as_str(&self) -> &'static str {
        match self {
            SwitchMode::Forward => "forward",
            SwitchMode::ReadCache => "read_cache",
            SwitchMode::Gotthard => "gotthard",
        }
    }
}

impl fmt::Display for SwitchMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SwitchMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "forward" => Ok(SwitchMode::Forward),
            "read_cache" => Ok(SwitchMode::ReadCache),
            "gotthard" => Ok(SwitchMode::Gotthard),
            other => Err(format!("unknown switch mode `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SwitchAction {
    ForwardToStore(Message),
    RespondToClient(Message),
    ForwardToClient(Message),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SwitchStats {
    pub requests: u64,
    pub responses: u64,
    pub aborts: u64,
    pub oks: u64,
    /// Requests forwarded because a compare key was not cached.
    pub misses: u64,
    pub malformed: u64,
}

#[derive(Debug, Clone)]
pub struct Middlebox {
    mode: SwitchMode,
    cache: LruCache,
    stats: SwitchStats,
    fill_misses: bool,
}

impl Middlebox {
    pub fn new(mode: SwitchMode, cache_capacity: usize) -> Self {
        Middlebox { mode, cache: LruCache::new(cache_capacity), stats: SwitchStats::default(), fill_misses: true }
    }

    /// In gotthard mode, whether store OK responses populate keys missing
    /// from the cache. Off means the switch learns only from the writes it
    /// forwards and from store aborts.
    pub fn with_fill_misses(mut self, on: bool) -> Self {
        self.fill_misses = on;
        self
    }

    pub fn fill_misses(&self) -> bool {
        self.fill_misses
    }

    pub fn mode(&self) -> SwitchMode {
        self.mode
    }

    pub fn cache(&self) -> &LruCache {
        &self.cache
    }

    pub fn cache_mut(&mut self) -> &mut LruCache {
        &mut self.cache
    }

    pub fn stats(&self) -> SwitchStats {
        self.stats
    }

    pub fn note_malformed(&mut self) {
        self.stats.malformed += 1;
    }

    pub fn on_client_request(&mut self, msg: Message) -> SwitchAction {
        self.stats.requests += 1;
        let action = match self.mode {
            SwitchMode::Forward => SwitchAction::ForwardToStore(msg),
            // A fragment cannot be judged without the rest of the transaction.
            _ if msg.is_fragmented() => SwitchAction::ForwardToStore(msg),
            SwitchMode::ReadCache => self.read_cache_request(msg),
            SwitchMode::Gotthard => self.gotthard_request(msg),
        };
        if let SwitchAction::RespondToClient(m) = &action {
            match m.header.status {
                Status::Ok => self.stats.oks += 1,
                Status::Abort => self.stats.aborts += 1,
            }
        }
        action
    }

    pub fn on_store_response(&mut self, msg: Message) -> SwitchAction {
        self.stats.responses += 1;
        if msg.is_fragmented() {
            return SwitchAction::ForwardToClient(msg);
        }
        match self.mode {
            SwitchMode::Forward => {}
            SwitchMode::ReadCache => {
                for op in &msg.ops {
                    self.cache.insert(op.key, op.value);
                }
            }
            SwitchMode::Gotthard => match msg.header.status {
                Status::Abort => {
                    for op in &msg.ops {
                        self.cache.insert(op.key, op.value);
                    }
                }
                // Only keys the switch has no opinion on: a cached key may
                // already hold a newer optimistic write.
                Status::Ok if self.fill_misses => {
                    for op in &msg.ops {
                        if !self.cache.contains(op.key) {
                            self.cache.insert(op.key, op.value);
                        }
                    }
                }
                Status::Ok => {}
            },
        }
        SwitchAction::ForwardToClient(msg)
    }

    fn gotthard_request(&mut self, msg: Message) -> SwitchAction {
        let compares = || msg.ops.iter().filter(|op| op.op_type == OpType::Compare);
        if compares().any(|op| !self.cache.contains(op.key)) {
            self.stats.misses += 1;
            return SwitchAction::ForwardToStore(msg);
        }
        let mut corrections = Vec::new();
        for op in compares() {
            let cached = self.cache.get(op.key).expect("checked above");
            if cached != op.value {
                corrections.push(Operation::compare(op.key, cached));
            }
        }
        if !corrections.is_empty() {
            return SwitchAction::RespondToClient(reply(&msg, Status::Abort, corrections));
        }
        if msg.ops.iter().any(|op| op.op_type != OpType::Compare) {
            for op in msg.ops.iter().filter(|op| op.op_type == OpType::Write) {
                self.cache.insert(op.key, op.value);
            }
            return SwitchAction::ForwardToStore(msg);
        }
        SwitchAction::RespondToClient(reply(&msg, Status::Ok, Vec::new()))
    }

    fn read_cache_request(&mut self, msg: Message) -> SwitchAction {
        let pure_read = !msg.ops.is_empty() && msg.ops.iter().all(|op| op.op_type == OpType::Read);
        if !pure_read || !msg.ops.iter().all(|op| self.cache.contains(op.key)) {
            return SwitchAction::ForwardToStore(msg);
        }
        let results = msg
            .ops
            .iter()
            .map(|op| Operation::read_result(op.key, self.cache.get(op.key).expect("checked above")))
            .collect();
        SwitchAction::RespondToClient(reply(&msg, Status::Ok, results))
    }
}

fn reply(req: &Message, status: Status, ops: Vec<Operation>) -> Message {
    let mut m = Message::new(MsgType::Response, req.header.txn_id, status, ops);
    m.header.from_switch = true;
    m
}

/// Switch daemon logic: requests arrive from any downstream peer and go
/// `upstream`; responses are routed back by txn_id.
pub struct SwitchNode<P> {
    pub middlebox: Middlebox,
    upstream: P,
    routes: HashMap<u32, P>,
}

impl<P: Clone + Eq + Hash> SwitchNode<P> {
    pub fn new(middlebox: Middlebox, upstream: P) -> Self {
        SwitchNode { middlebox, upstream, routes: HashMap::new() }
    }

    pub fn routes_pending(&self) -> usize {
        self.routes.len()
    }
}

fn raw_txn_id(bytes: &[u8]) -> Option<u32> {
    bytes.get(2..6).map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
}

impl<P: Clone + Eq + Hash> Handler<P> for SwitchNode<P> {
    fn on_datagram(&mut self, _now: Micros, from: P, bytes: &[u8], out: &mut Outbox<P>) {
        let from_store = from == self.upstream;
        let decoded = wire::decode(bytes);
        let expected = if from_store { MsgType::Response } else { MsgType::Request };
        let msg = match decoded {
            Ok(m) if m.header.msg_type == expected => m,
            _ => {
                // Fail open: pass the bytes on in their direction of travel.
                self.middlebox.note_malformed();
                if from_store {
                    if let Some(to) = raw_txn_id(bytes).and_then(|id| self.routes.get(&id)) {
                        out.send(to.clone(), bytes.to_vec());
                    }
                } else {
                    if let Some(id) = raw_txn_id(bytes) {
                        self.routes.insert(id, from);
                    }
                    out.send(self.upstream.clone(), bytes.to_vec());
                }
                return;
            }
        };

        let txn_id = msg.header.txn_id;
        if from_store {
            let last = msg.header.frag_seq == msg.header.frag_count;
            match self.middlebox.on_store_response(msg) {
                SwitchAction::ForwardToClient(_) => {
                    let route = if last { self.routes.remove(&txn_id) } else { self.routes.get(&txn_id).cloned() };
                    if let Some(to) = route {
                        out.send(to, bytes.to_vec());
                    }
                }
                other => unreachable!("response produced {other:?}"),
            }
        } else {
            match self.middlebox.on_client_request(msg) {
                SwitchAction::ForwardToStore(_) => {
                    self.routes.insert(txn_id, from);
                    out.send(self.upstream.clone(), bytes.to_vec());
                }
                SwitchAction::RespondToClient(reply) => {
                    out.send(from, wire::encode(&reply).expect("reply within one fragment"));
                }
                SwitchAction::ForwardToClient(_) => unreachable!("request forwarded to client"),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wire::{TransactionSet, Value};

    fn v(n: u32) -> Value {
        Value::from_counter(n)
    }

    fn req(set: TransactionSet) -> Message {
        Message::new(MsgType::Request, 11, Status::Ok, set.ops().collect())
    }

    fn gotthard_with(entries: &[(u32, u32)]) -> Middlebox {
        let mut mb = Middlebox::new(SwitchMode::Gotthard, DEFAULT_CACHE_CAPACITY);
        for &(k, n) in entries {
            mb.cache_mut().insert(k, v(n));
        }
        mb
    }

    #[test]
    fn gotthard_aborts_on_stale_compare() {
        let mut mb = gotthard_with(&[(1, 5)]);
        let action = mb.on_client_request(req(TransactionSet::request(vec![(1, v(4))], [], vec![])));
        let SwitchAction::RespondToClient(m) = action else { panic!("expected abort") };
        assert_eq!(m.header.status, Status::Abort);
        assert!(m.header.from_switch);
        assert_eq!(m.header.txn_id, 11);
        assert_eq!(m.ops, vec![Operation::compare(1, v(5))]);
    }

    #[test]
    fn gotthard_forwards_on_miss_without_logging_writes() {
        let mut mb = gotthard_with(&[]);
        let msg = req(TransactionSet::request(vec![(1, v(4))], [], vec![(1, v(9))]));
        assert_eq!(mb.on_client_request(msg.clone()), SwitchAction::ForwardToStore(msg));
        assert!(!mb.cache().contains(1));
    }

    #[test]
    fn gotthard_logs_writes_optimistically() {
        let mut mb = gotthard_with(&[(1, 4)]);
        let msg = req(TransactionSet::request(vec![(1, v(4))], [], vec![(1, v(9))]));
        assert_eq!(mb.on_client_request(msg.clone()), SwitchAction::ForwardToStore(msg));
        assert_eq!(mb.cache().peek(1), Some(v(9)));
    }

    #[test]
    fn gotthard_acknowledges_compare_only() {
        let mut mb = gotthard_with(&[(1, 4)]);
        let SwitchAction::RespondToClient(m) =
            mb.on_client_request(req(TransactionSet::request(vec![(1, v(4))], [], vec![])))
        else {
            panic!("expected OK")
        };
        assert_eq!(m.header.status, Status::Ok);
        assert!(m.ops.is_empty());
    }

    #[test]
    fn gotthard_repairs_cache_from_store_abort() {
        let mut mb = gotthard_with(&[(1, 9)]);
        let mut resp = Message::new(MsgType::Response, 11, Status::Abort, vec![Operation::compare(1, v(7))]);
        resp.header.from_switch = false;
        assert_eq!(mb.on_store_response(resp.clone()), SwitchAction::ForwardToClient(resp));
        assert_eq!(mb.cache().peek(1), Some(v(7)));
    }

    #[test]
    fn gotthard_fills_only_absent_keys_from_ok() {
        let mut mb = gotthard_with(&[(2, 3)]);
        let resp = Message::new(
            MsgType::Response,
            11,
            Status::Ok,
            vec![Operation::write(1, v(7)), Operation::read_result(2, v(1))],
        );
        mb.on_store_response(resp);
        assert_eq!(mb.cache().peek(1), Some(v(7)));
        assert_eq!(mb.cache().peek(2), Some(v(3)));
    }

    #[test]
    fn literal_gotthard_ignores_ok_responses() {
        let mut mb = gotthard_with(&[]).with_fill_misses(false);
        let resp = Message::new(MsgType::Response, 11, Status::Ok, vec![Operation::write(1, v(7))]);
        mb.on_store_response(resp);
        assert!(!mb.cache().contains(1));
    }

    #[test]
    fn fragments_pass_through() {
        let mut mb = gotthard_with(&[(1, 5)]);
        let mut msg = req(TransactionSet::request(vec![(1, v(4))], [], vec![]));
        msg.header.frag_count = 2;
        assert_eq!(mb.on_client_request(msg.clone()), SwitchAction::ForwardToStore(msg));
    }

    #[test]
    fn read_cache_serves_cached_pure_reads() {
        let mut mb = Middlebox::new(SwitchMode::ReadCache, 8);
        mb.cache_mut().insert(1, v(4));
        let SwitchAction::RespondToClient(m) = mb.on_client_request(req(TransactionSet::request(vec![], [1], vec![])))
        else {
            panic!("expected hit")
        };
        assert_eq!(m.ops, vec![Operation::read_result(1, v(4))]);
        assert!(m.header.from_switch);
        let miss = req(TransactionSet::request(vec![], [1, 2], vec![]));
        assert_eq!(mb.on_client_request(miss.clone()), SwitchAction::ForwardToStore(miss));
        let mixed = req(TransactionSet::request(vec![], [1], vec![(1, v(5))]));
        assert_eq!(mb.on_client_request(mixed.clone()), SwitchAction::ForwardToStore(mixed));
        assert_eq!(mb.cache().peek(1), Some(v(4)));
    }

    #[test]
    fn read_cache_learns_from_responses() {
        let mut mb = Middlebox::new(SwitchMode::ReadCache, 8);
        mb.on_store_response(Message::new(MsgType::Response, 1, Status::Ok, vec![Operation::write(1, v(9))]));
        assert_eq!(mb.cache().peek(1), Some(v(9)));
    }

    #[test]
    fn forward_is_identity() {
        let mut mb = Middlebox::new(SwitchMode::Forward, 8);
        let msg = req(TransactionSet::request(vec![(1, v(1))], [2], vec![(3, v(3))]));
        assert_eq!(mb.on_client_request(msg.clone()), SwitchAction::ForwardToStore(msg.clone()));
        let resp = Message::new(MsgType::Response, 1, Status::Abort, vec![Operation::compare(1, v(2))]);
        assert_eq!(mb.on_store_response(resp.clone()), SwitchAction::ForwardToClient(resp));
        assert!(mb.cache().is_empty());
    }

    #[test]
    fn evicted_key_is_a_miss() {
        let mut mb = Middlebox::new(SwitchMode::Gotthard, 1);
        mb.cache_mut().insert(1, v(5));
        mb.cache_mut().insert(2, v(5));
        let msg = req(TransactionSet::request(vec![(1, v(4))], [], vec![]));
        assert_eq!(mb.on_client_request(msg.clone()), SwitchAction::ForwardToStore(msg));
    }

    #[test]
    fn node_routes_responses_and_fails_open() {
        let mut node = SwitchNode::new(Middlebox::new(SwitchMode::Gotthard, 8), 0u8);
        let mut out = Outbox::default();
        let msg = req(TransactionSet::request(vec![], [1], vec![]));
        let bytes = wire::encode(&msg).unwrap();
        node.on_datagram(0, 5, &bytes, &mut out);
        assert_eq!(out.take_sends().collect::<Vec<_>>(), vec![(0, bytes)]);
        let resp = wire::encode(&Message::new(MsgType::Response, 11, Status::Ok, vec![])).unwrap();
        node.on_datagram(0, 0, &resp, &mut out);
        assert_eq!(out.take_sends().collect::<Vec<_>>(), vec![(5, resp)]);
        assert_eq!(node.routes_pending(), 0);

        let junk = vec![0u8, 0, 0, 0, 0, 12, 9, 9];
        node.on_datagram(0, 6, &junk, &mut out);
        assert_eq!(out.take_sends().collect::<Vec<_>>(), vec![(0, junk)]);
        assert_eq!(node.middlebox.stats().malformed, 1);
    }
}
