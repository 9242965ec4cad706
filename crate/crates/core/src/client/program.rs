use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::wire::{Key, TransactionSet, Value};

/// Keys a program needs that are not in the local cache yet.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Missing(pub Vec<Key>);

/// Execution view over the client's local cache.
///
/// Reads are served locally and recorded so they can be validated at commit;
/// writes are buffered.
pub struct ExecContext<'a> {
    local: &'a HashMap<Key, Value>,
    read_set: BTreeMap<Key, Value>,
    write_set: BTreeMap<Key, Value>,
    store_reads: BTreeSet<Key>,
}

impl<'a> ExecContext<'a> {
    pub fn new(local: &'a HashMap<Key, Value>) -> Self {
        ExecContext {
            local,
            read_set: BTreeMap::new(),
            write_set: BTreeMap::new(),
            store_reads: BTreeSet::new(),
        }
    }

    /// Reads `key`, seeing this transaction's own buffered writes first.
    pub fn get(&mut self, key: Key) -> Result<Value, Missing> {
        if let Some(&v) = self.write_set.get(&key) {
            return Ok(v);
        }
        if let Some(&v) = self.read_set.get(&key) {
            return Ok(v);
        }
        match self.local.get(&key) {
            Some(&v) => {
                self.read_set.insert(key, v);
                Ok(v)
            }
            None => Err(Missing(vec![key])),
        }
    }

    /// Fails with every absent key at once so they can be fetched in one round trip.
    pub fn require(&self, keys: impl IntoIterator<Item = Key>) -> Result<(), Missing> {
        let mut missing: Vec<Key> = keys
            .into_iter()
            .filter(|k| !self.local.contains_key(k) && !self.write_set.contains_key(k))
            .collect();
        if missing.is_empty() {
            return Ok(());
        }
        missing.sort_unstable();
        missing.dedup();
        Err(Missing(missing))
    }

    pub fn put(&mut self, key: Key, value: Value) {
        self.write_set.insert(key, value);
    }

    /// Asks the store for the current value of `key` as part of the commit.
    pub fn read_at_store(&mut self, key: Key) {
        self.store_reads.insert(key);
    }

    pub fn read_set(&self) -> &BTreeMap<Key, Value> {
        &self.read_set
    }

    /// compares = everything read locally, writes = the buffered writes.
    pub fn into_set(self) -> TransactionSet {
        TransactionSet::request(
            self.read_set.into_iter().collect(),
            self.store_reads,
            self.write_set.into_iter().collect(),
        )
    }
}

/// Client-side transaction logic. `execute` may run several times for one
/// logical transaction (after fetches and aborts), so any random choices must
/// be made when the program is built.
pub trait TxnProgram {
    fn label(&self) -> &'static str;

    fn execute(&mut self, ctx: &mut ExecContext<'_>) -> Result<(), Missing>;

    /// Re-read the whole read set from the store after an abort instead of
    /// trusting the corrections alone.
    fn refetch_on_abort(&self) -> bool {
        false
    }
}

/// Source of transaction programs for one client.
pub trait Workload {
    fn next_program(&mut self, rng: &mut rand_chacha::ChaCha8Rng) -> Box<dyn TxnProgram>;
}

/// Atomically increments the counter at `key`. The counter wraps at 2^32.
#[derive(Debug, Clone)]
pub struct Increment {
    pub key: Key,
}

impl TxnProgram for Increment {
    fn label(&self) -> &'static str {
        "increment"
    }

    fn execute(&mut self, ctx: &mut ExecContext<'_>) -> Result<(), Missing> {
        let v = ctx.get(self.key)?;
        ctx.put(self.key, Value::from_counter(v.counter().wrapping_add(1)));
        Ok(())
    }
}

/// Reads the current value of `key` from the store.
#[derive(Debug, Clone)]
pub struct ReadKey {
    pub key: Key,
}

impl TxnProgram for ReadKey {
    fn label(&self) -> &'static str {
        "read"
    }

    fn execute(&mut self, ctx: &mut ExecContext<'_>) -> Result<(), Missing> {
        ctx.read_at_store(self.key);
        Ok(())
    }
}
