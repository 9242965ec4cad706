//! Closed-loop transaction runtime.
//!
//! A client executes a program against its local cache, submits the buffered
//! writes together with compares for everything it read, and on abort applies
//! the returned corrections and re-executes at once. Keys missing from the
//! local cache are fetched with a pure-read transaction first.

mod program;

pub use program::{ExecContext, Increment, Missing, ReadKey, TxnProgram, Workload};

use std::collections::HashMap;
use std::hash::Hash;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::netsim::{Handler, Micros, Outbox};
use crate::wire::{self, Key, MsgType, Reassembler, Status, TransactionSet, Value};

/// Client ids occupy the top byte of every txn_id.
pub const CLIENT_ID_BITS: u32 = 8;
const SEQ_BITS: u32 = 32 - CLIENT_ID_BITS;

pub const DEFAULT_RESEND_TIMEOUT_US: Micros = 1_000_000;

pub struct ClientState {
    pub id: u32,
    pub local_cache: HashMap<Key, Value>,
    next_seq: u32,
    pub rng: ChaCha8Rng,
}

impl ClientState {
    pub fn new(id: u32, seed: u64) -> Self {
        assert!(id < 1 << CLIENT_ID_BITS, "client id {id} does not fit in txn_id");
        ClientState {
            id,
            local_cache: HashMap::new(),
            next_seq: 0,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    /// Strictly increasing per client; wraps after 2^24 transactions.
    pub fn next_txn_id(&mut self) -> u32 {
        let id = (self.id << SEQ_BITS) | (self.next_seq & ((1 << SEQ_BITS) - 1));
        self.next_seq = self.next_seq.wrapping_add(1);
        id
    }

    /// Runs `program` against the local cache.
    pub fn execute(&self, program: &mut dyn TxnProgram) -> Result<TransactionSet, Missing> {
        let mut ctx = ExecContext::new(&self.local_cache);
        program.execute(&mut ctx)?;
        Ok(ctx.into_set())
    }

    pub fn make_increment_txn(&self, key: Key) -> Result<TransactionSet, Missing> {
        self.execute(&mut Increment { key })
    }

    pub fn make_read_txn(&self, key: Key) -> TransactionSet {
        self.execute(&mut ReadKey { key }).expect("store reads need no local state")
    }

    /// Copies every (key, value) of a response into the local cache.
    pub fn apply(&mut self, payload: &TransactionSet) {
        for &(k, v) in payload.compares.iter().chain(&payload.reads).chain(&payload.writes) {
            self.local_cache.insert(k, v);
        }
    }
}

/// Result of [`run_transaction`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TxnOutcome {
    pub committed: bool,
    pub attempts: u32,
    pub fetches: u32,
}

/// Runs one logical transaction to completion over a synchronous transport.
///
/// `submit` delivers a request and returns the response status and payload.
/// Gives up after `max_attempts` commit submissions.
pub fn run_transaction<F>(state: &mut ClientState, program: &mut dyn TxnProgram, max_attempts: u32, mut submit: F) -> TxnOutcome
where
    F: FnMut(u32, &TransactionSet) -> (Status, TransactionSet),
{
    let mut outcome = TxnOutcome { committed: false, attempts: 0, fetches: 0 };
    let mut refetch: Option<Vec<Key>> = None;
    loop {
        let fetch = match refetch.take() {
            Some(keys) => keys,
            None => {
                let mut ctx = ExecContext::new(&state.local_cache);
                match program.execute(&mut ctx) {
                    Err(Missing(keys)) => keys,
                    Ok(()) => {
                        if outcome.attempts >= max_attempts {
                            return outcome;
                        }
                        let read_keys: Vec<Key> = ctx.read_set().keys().copied().collect();
                        let set = ctx.into_set();
                        outcome.attempts += 1;
                        let txn_id = state.next_txn_id();
                        let (status, payload) = submit(txn_id, &set);
                        state.apply(&payload);
                        if status == Status::Ok {
                            outcome.committed = true;
                            return outcome;
                        }
                        if program.refetch_on_abort() && !read_keys.is_empty() {
                            refetch = Some(read_keys);
                        }
                        continue;
                    }
                }
            }
        };
        outcome.fetches += 1;
        let txn_id = state.next_txn_id();
        let (_, payload) = submit(txn_id, &TransactionSet::request(vec![], fetch, vec![]));
        state.apply(&payload);
    }
}

/// One committed logical transaction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TxnRecord {
    pub label: &'static str,
    pub start: Micros,
    pub end: Micros,
    /// Commit submissions, including aborted ones.
    pub attempts: u32,
    pub fetches: u32,
    /// The final OK came from the switch.
    pub by_switch: bool,
}

impl TxnRecord {
    pub fn latency(&self) -> Micros {
        self.end - self.start
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ClientCounters {
    /// Every request sent (commits and fetches), not counting resends.
    pub submitted: u64,
    pub oks: u64,
    pub switch_aborts: u64,
    pub store_aborts: u64,
    pub resends: u64,
}

enum Phase {
    Fetching,
    Committing,
}

struct Running {
    program: Box<dyn TxnProgram>,
    start: Micros,
    attempts: u32,
    fetches: u32,
    phase: Phase,
    txn_id: u32,
    read_keys: Vec<Key>,
    sent: Vec<Vec<u8>>,
}

pub struct ClientNode<P> {
    pub state: ClientState,
    server: P,
    workload: Box<dyn Workload>,
    budget: Option<u64>,
    resend_timeout: Option<Micros>,
    running: Option<Running>,
    reassembler: Reassembler<P>,
    records: Vec<TxnRecord>,
    counters: ClientCounters,
    started: u64,
}

impl<P: Clone + Eq + Hash> ClientNode<P> {
    pub fn new(state: ClientState, server: P, workload: Box<dyn Workload>) -> Self {
        ClientNode {
            state,
            server,
            workload,
            budget: None,
            resend_timeout: None,
            running: None,
            reassembler: Reassembler::default(),
            records: Vec::new(),
            counters: ClientCounters::default(),
            started: 0,
        }
    }

    /// Stop after `n` logical transactions.
    pub fn with_budget(mut self, n: u64) -> Self {
        self.budget = Some(n);
        self
    }

    /// Resend an unanswered request with the same txn_id after `timeout`.
    pub fn with_resend_timeout(mut self, timeout: Micros) -> Self {
        self.resend_timeout = Some(timeout);
        self
    }

    pub fn records(&self) -> &[TxnRecord] {
        &self.records
    }

    pub fn counters(&self) -> ClientCounters {
        self.counters
    }

    pub fn in_flight(&self) -> bool {
        self.running.is_some()
    }

    fn begin_next(&mut self, now: Micros, out: &mut Outbox<P>) {
        if self.budget.is_some_and(|b| self.started >= b) {
            return;
        }
        self.started += 1;
        let program = self.workload.next_program(&mut self.state.rng);
        self.running = Some(Running {
            program,
            start: now,
            attempts: 0,
            fetches: 0,
            phase: Phase::Committing,
            txn_id: 0,
            read_keys: Vec::new(),
            sent: Vec::new(),
        });
        self.execute_and_send(out);
    }

    fn execute_and_send(&mut self, out: &mut Outbox<P>) {
        let mut run = self.running.take().expect("transaction running");
        let mut ctx = ExecContext::new(&self.state.local_cache);
        match run.program.execute(&mut ctx) {
            Ok(()) => {
                run.read_keys = ctx.read_set().keys().copied().collect();
                let set = ctx.into_set();
                run.attempts += 1;
                run.phase = Phase::Committing;
                self.running = Some(run);
                self.submit(set, out);
            }
            Err(Missing(keys)) => {
                self.running = Some(run);
                self.fetch(keys, out);
            }
        }
    }

    fn fetch(&mut self, keys: Vec<Key>, out: &mut Outbox<P>) {
        let run = self.running.as_mut().expect("transaction running");
        run.fetches += 1;
        run.phase = Phase::Fetching;
        self.submit(TransactionSet::request(vec![], keys, vec![]), out);
    }

    fn submit(&mut self, set: TransactionSet, out: &mut Outbox<P>) {
        let txn_id = self.state.next_txn_id();
        let frags = wire::fragment(txn_id, &set, MsgType::Request, Status::Ok).expect("transaction within 2550 operations");
        let sent: Vec<Vec<u8>> = frags.iter().map(|m| wire::encode(m).expect("bounded fragment")).collect();
        for bytes in &sent {
            out.send(self.server.clone(), bytes.clone());
        }
        if let Some(t) = self.resend_timeout {
            out.set_timer(t, txn_id as u64);
        }
        self.counters.submitted += 1;
        let run = self.running.as_mut().expect("transaction running");
        run.txn_id = txn_id;
        run.sent = sent;
    }
}

impl<P: Clone + Eq + Hash> Handler<P> for ClientNode<P> {
    fn on_start(&mut self, now: Micros, out: &mut Outbox<P>) {
        if self.running.is_none() {
            self.begin_next(now, out);
        }
    }

    fn on_datagram(&mut self, now: Micros, from: P, bytes: &[u8], out: &mut Outbox<P>) {
        let Ok(msg) = wire::decode(bytes) else { return };
        if msg.header.msg_type != MsgType::Response {
            return;
        }
        let Some(run) = self.running.as_ref() else { return };
        if msg.header.txn_id != run.txn_id {
            return;
        }
        let Ok(Some(resp)) = self.reassembler.push(&from, &msg, now) else { return };

        self.state.apply(&resp.set);
        match (resp.status, resp.from_switch) {
            (Status::Ok, _) => self.counters.oks += 1,
            (Status::Abort, true) => self.counters.switch_aborts += 1,
            (Status::Abort, false) => self.counters.store_aborts += 1,
        }

        let run = self.running.as_mut().expect("checked above");
        match (&run.phase, resp.status) {
            (Phase::Committing, Status::Ok) => {
                let run = self.running.take().expect("checked above");
                self.records.push(TxnRecord {
                    label: run.program.label(),
                    start: run.start,
                    end: now,
                    attempts: run.attempts,
                    fetches: run.fetches,
                    by_switch: resp.from_switch,
                });
                self.begin_next(now, out);
            }
            (Phase::Committing, Status::Abort) if run.program.refetch_on_abort() && !run.read_keys.is_empty() => {
                let keys = run.read_keys.clone();
                self.fetch(keys, out);
            }
            _ => self.execute_and_send(out),
        }
    }

    fn on_timer(&mut self, _now: Micros, token: u64, out: &mut Outbox<P>) {
        let Some(run) = self.running.as_ref() else { return };
        if run.txn_id as u64 != token {
            return;
        }
        for bytes in &run.sent {
            out.send(self.server.clone(), bytes.clone());
        }
        self.counters.resends += 1;
        if let Some(t) = self.resend_timeout {
            out.set_timer(t, token);
        }
    }

    fn is_active(&self) -> bool {
        self.running.is_some() || self.budget.is_none_or(|b| self.started < b)
    }
}
