//! The authoritative OCC store.
//!
//! Transactions are processed one at a time in arrival order, which is the
//! serialization order. Keys that were never written read as all-zero values.

use std::collections::{BTreeMap, HashMap};
use std::hash::Hash;
use std::io;

use thiserror::Error;

use crate::netsim::{Handler, Micros, Outbox};
use crate::wire::{self, Key, MsgType, Operation, Reassembler, Status, TransactionSet, Value};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StoreError {
    #[error("store already populated")]
    AlreadyPopulated,
    #[error("key {0} appears twice in the population")]
    DuplicateKey(Key),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommitRecord {
    pub txn_id: u32,
    pub writes: Vec<(Key, Value)>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StoreStats {
    pub commits: u64,
    pub aborts: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoreResponse {
    pub txn_id: u32,
    pub status: Status,
    /// OK: written values then read results. ABORT: one correction per failed compare.
    pub payload: Vec<Operation>,
}

impl StoreResponse {
    pub fn to_set(&self) -> TransactionSet {
        TransactionSet::from_ops(self.payload.iter().copied())
    }
}

#[derive(Debug, Default, Clone)]
pub struct StoreState {
    data: HashMap<Key, Value>,
    initial: BTreeMap<Key, Value>,
    populated: bool,
    commit_log: Vec<CommitRecord>,
    stats: StoreStats,
}

impl StoreState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn populate(&mut self, pairs: impl IntoIterator<Item = (Key, Value)>) -> Result<(), StoreError> {
        if self.populated || !self.commit_log.is_empty() {
            return Err(StoreError::AlreadyPopulated);
        }
        let mut initial = BTreeMap::new();
        for (k, v) in pairs {
            if initial.insert(k, v).is_some() {
                return Err(StoreError::DuplicateKey(k));
            }
        }
        self.data = initial.iter().map(|(&k, &v)| (k, v)).collect();
        self.initial = initial;
        self.populated = true;
        Ok(())
    }

    pub fn get(&self, key: Key) -> Value {
        self.data.get(&key).copied().unwrap_or(Value::ZERO)
    }

    pub fn process_txn(&mut self, txn_id: u32, set: &TransactionSet) -> StoreResponse {
        let corrections: Vec<Operation> = set
            .compares
            .iter()
            .filter_map(|&(key, value)| {
                let current = self.get(key);
                (current != value).then(|| Operation::compare(key, current))
            })
            .collect();
        if !corrections.is_empty() {
            self.stats.aborts += 1;
            return StoreResponse { txn_id, status: Status::Abort, payload: corrections };
        }

        for &(key, value) in &set.writes {
            self.data.insert(key, value);
        }
        let mut payload: Vec<Operation> = set.writes.iter().map(|&(k, v)| Operation::write(k, v)).collect();
        payload.extend(set.reads.iter().map(|&(k, _)| Operation::read_result(k, self.get(k))));

        self.stats.commits += 1;
        self.commit_log.push(CommitRecord { txn_id, writes: set.writes.clone() });
        StoreResponse { txn_id, status: Status::Ok, payload }
    }

    pub fn snapshot(&self) -> BTreeMap<Key, Value> {
        self.data.iter().map(|(&k, &v)| (k, v)).collect()
    }

    pub fn initial(&self) -> &BTreeMap<Key, Value> {
        &self.initial
    }

    pub fn commit_log(&self) -> &[CommitRecord] {
        &self.commit_log
    }

    pub fn stats(&self) -> StoreStats {
        self.stats
    }
}

#[derive(Debug, Error)]
pub enum PopulationError {
    #[error("population line {line}: {reason}")]
    Parse { line: u64, reason: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Writes `key,value` rows, the value as hex with trailing zero bytes trimmed.
pub fn write_population<W: io::Write>(pairs: &[(Key, Value)], out: W) -> Result<(), PopulationError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["key", "value"])?;
    for (k, v) in pairs {
        let used = v.0.iter().rposition(|&b| b != 0).map_or(0, |i| i + 1);
        w.write_record([k.to_string(), hex::encode(&v.0[..used])])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Reads rows written by [`write_population`]. Short values are zero-padded.
pub fn read_population<R: io::Read>(input: R) -> Result<Vec<(Key, Value)>, PopulationError> {
    let mut r = csv::Reader::from_reader(input);
    let mut pairs = Vec::new();
    for row in r.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line());
        let bad = |reason: String| PopulationError::Parse { line, reason };
        if row.len() != 2 {
            return Err(bad(format!("expected 2 fields, got {}", row.len())));
        }
        let key: Key = row[0].trim().parse().map_err(|e| bad(format!("key: {e}")))?;
        let bytes = hex::decode(row[1].trim()).map_err(|e| bad(format!("value: {e}")))?;
        let value = Value::from_slice(&bytes).ok_or_else(|| bad(format!("value is {} bytes", bytes.len())))?;
        pairs.push((key, value));
    }
    Ok(pairs)
}

/// Store daemon logic: reassemble requests, process, fragment responses.
pub struct StoreNode<P> {
    pub state: StoreState,
    reassembler: Reassembler<P>,
    malformed: u64,
}

impl<P: Eq + Hash + Clone> StoreNode<P> {
    pub fn new(state: StoreState) -> Self {
        StoreNode { state, reassembler: Reassembler::default(), malformed: 0 }
    }

    pub fn malformed(&self) -> u64 {
        self.malformed
    }
}

impl<P: Eq + Hash + Clone> Handler<P> for StoreNode<P> {
    fn on_datagram(&mut self, now: Micros, from: P, bytes: &[u8], out: &mut Outbox<P>) {
        let msg = match wire::decode(bytes) {
            Ok(m) if m.header.msg_type == MsgType::Request => m,
            _ => {
                self.malformed += 1;
                return;
            }
        };
        let txn = match self.reassembler.push(&from, &msg, now) {
            Ok(Some(txn)) => txn,
            Ok(None) => return,
            Err(_) => {
                self.malformed += 1;
                return;
            }
        };
        let resp = self.state.process_txn(txn.txn_id, &txn.set);
        for m in wire::fragment_ops(resp.txn_id, &resp.payload, MsgType::Response, resp.status)
            .expect("response no larger than request")
        {
            out.send(from.clone(), wire::encode(&m).expect("fragments are bounded"));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(n: u32) -> Value {
        Value::from_counter(n)
    }

    #[test]
    fn population_csv_round_trips() {
        let mut long = [0xabu8; 128];
        long[0] = 0;
        let pairs = vec![(3, v(9)), (0, Value::ZERO), (u32::MAX, Value(long))];
        let mut buf = Vec::new();
        write_population(&pairs, &mut buf).unwrap();
        assert!(buf.starts_with(b"key,value\n3,00000009\n0,\n"));
        assert_eq!(read_population(&buf[..]).unwrap(), pairs);
    }

    #[test]
    fn population_csv_rejects_bad_rows() {
        assert!(matches!(read_population(&b"key,value\nx,00\n"[..]), Err(PopulationError::Parse { line: 2, .. })));
        assert!(read_population(format!("key,value\n1,{}\n", "00".repeat(129)).as_bytes()).is_err());
    }

    #[test]
    fn matching_compare_commits_write() {
        let mut s = StoreState::new();
        s.populate([(1, v(5))]).unwrap();
        let r = s.process_txn(1, &TransactionSet::request(vec![(1, v(5))], [], vec![(1, v(6))]));
        assert_eq!(r.status, Status::Ok);
        assert_eq!(r.payload, vec![Operation::write(1, v(6))]);
        assert_eq!(s.get(1), v(6));
        assert_eq!(s.commit_log().len(), 1);
    }

    #[test]
    fn stale_compare_aborts_with_correction() {
        let mut s = StoreState::new();
        s.populate([(1, v(7))]).unwrap();
        let before = s.snapshot();
        let r = s.process_txn(1, &TransactionSet::request(vec![(1, v(5))], [], vec![(1, v(6))]));
        assert_eq!(r.status, Status::Abort);
        assert_eq!(r.payload, vec![Operation::compare(1, v(7))]);
        assert_eq!(s.snapshot(), before);
        assert!(s.commit_log().is_empty());
        assert_eq!(s.stats(), StoreStats { commits: 0, aborts: 1 });
    }

    #[test]
    fn reads_return_current_values_after_writes() {
        let mut s = StoreState::new();
        s.populate([(1, v(9)), (2, v(1))]).unwrap();
        let r = s.process_txn(3, &TransactionSet::request(vec![], [1], vec![]));
        assert_eq!(r.payload, vec![Operation::read_result(1, v(9))]);
        let r = s.process_txn(4, &TransactionSet::request(vec![], [2], vec![(2, v(3))]));
        assert_eq!(r.payload, vec![Operation::write(2, v(3)), Operation::read_result(2, v(3))]);
    }

    #[test]
    fn empty_transaction_commits_empty() {
        let mut s = StoreState::new();
        let r = s.process_txn(1, &TransactionSet::default());
        assert_eq!(r.status, Status::Ok);
        assert!(r.payload.is_empty());
    }

    #[test]
    fn absent_keys_read_as_zero() {
        let mut s = StoreState::new();
        let r = s.process_txn(1, &TransactionSet::request(vec![(4, Value::ZERO)], [5], vec![(6, v(1))]));
        assert_eq!(r.status, Status::Ok);
        assert_eq!(r.payload[1], Operation::read_result(5, Value::ZERO));
        assert_eq!(s.get(6), v(1));
    }

    #[test]
    fn populate_rules() {
        let mut s = StoreState::new();
        s.populate((0..50).map(|k| (k, v(k)))).unwrap();
        assert_eq!(s.snapshot().len(), 50);
        assert!(s.commit_log().is_empty());
        assert_eq!(s.populate([(99, v(0))]), Err(StoreError::AlreadyPopulated));
        let mut t = StoreState::new();
        assert_eq!(t.populate([(1, v(0)), (1, v(1))]), Err(StoreError::DuplicateKey(1)));
    }

    #[test]
    fn snapshot_is_a_copy() {
        let mut s = StoreState::new();
        s.populate([(1, v(1))]).unwrap();
        let snap = s.snapshot();
        s.process_txn(1, &TransactionSet::request(vec![], [], vec![(1, v(2))]));
        assert_eq!(snap[&1], v(1));
        assert_eq!(s.snapshot()[&1], v(2));
        assert_eq!(s.snapshot(), s.snapshot());
    }

    #[test]
    fn node_answers_the_sender_with_fragmented_response() {
        let mut node = StoreNode::new(StoreState::new());
        let set = TransactionSet::request(vec![], [], (0..12).map(|k| (k, v(k))).collect());
        let mut out = Outbox::default();
        for m in wire::fragment(77, &set, MsgType::Request, Status::Ok).unwrap() {
            node.on_datagram(0, 3u8, &wire::encode(&m).unwrap(), &mut out);
        }
        let sent: Vec<_> = out.take_sends().collect();
        assert_eq!(sent.len(), 2);
        assert!(sent.iter().all(|(to, _)| *to == 3));
        let first = wire::decode(&sent[0].1).unwrap();
        assert_eq!(first.header.txn_id, 77);
        assert_eq!(first.header.msg_type, MsgType::Response);
        assert!(!first.header.from_switch);
        node.on_datagram(0, 3u8, &[1, 2, 3], &mut out);
        assert_eq!(node.malformed(), 1);
    }
}
