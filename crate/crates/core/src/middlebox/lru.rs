//! Bounded key-value cache with least-recently-used eviction.

use std::collections::{BTreeMap, HashMap};

use crate::wire::{Key, Value};

#[derive(Debug, Clone)]
pub struct LruCache {
    capacity: usize,
    tick: u64,
    entries: HashMap<Key, (Value, u64)>,
    order: BTreeMap<u64, Key>,
}

impl LruCache {
    pub fn new(capacity: usize) -> Self {
        LruCache { capacity, tick: 0, entries: HashMap::new(), order: BTreeMap::new() }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, key: Key) -> bool {
        self.entries.contains_key(&key)
    }

    /// Looks up without changing recency.
    pub fn peek(&self, key: Key) -> Option<Value> {
        self.entries.get(&key).map(|e| e.0)
    }

    /// Looks up and marks `key` most recently used.
    pub fn get(&mut self, key: Key) -> Option<Value> {
        let tick = self.next_tick();
        let entry = self.entries.get_mut(&key)?;
        self.order.remove(&entry.1);
        entry.1 = tick;
        self.order.insert(tick, key);
        Some(entry.0)
    }

    /// Inserts or overwrites, evicting the least recently used key when full.
    /// Returns the evicted key, if any.
    pub fn insert(&mut self, key: Key, value: Value) -> Option<Key> {
        if self.capacity == 0 {
            return None;
        }
        let tick = self.next_tick();
        if let Some(entry) = self.entries.get_mut(&key) {
            self.order.remove(&entry.1);
            *entry = (value, tick);
            self.order.insert(tick, key);
            return None;
        }
        let mut evicted = None;
        if self.entries.len() >= self.capacity {
            if let Some((_, oldest)) = self.order.pop_first() {
                self.entries.remove(&oldest);
                evicted = Some(oldest);
            }
        }
        self.entries.insert(key, (value, tick));
        self.order.insert(tick, key);
        evicted
    }

    /// Drops `key`; returns its value if it was cached.
    pub fn remove(&mut self, key: Key) -> Option<Value> {
        let (value, tick) = self.entries.remove(&key)?;
        self.order.remove(&tick);
        Some(value)
    }

    fn next_tick(&mut self) -> u64 {
        self.tick += 1;
        self.tick
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn v(n: u32) -> Value {
        Value::from_counter(n)
    }

    #[test]
    fn read_refreshes_recency() {
        let mut c = LruCache::new(2);
        c.insert(1, v(1));
        c.insert(2, v(2));
        assert_eq!(c.get(1), Some(v(1)));
        assert_eq!(c.insert(3, v(3)), Some(2));
        assert!(c.contains(1) && c.contains(3) && !c.contains(2));
    }

    #[test]
    fn capacity_one_keeps_latest() {
        let mut c = LruCache::new(1);
        c.insert(1, v(1));
        c.insert(2, v(2));
        assert_eq!(c.len(), 1);
        assert_eq!(c.peek(2), Some(v(2)));
    }

    #[test]
    fn overwrite_does_not_evict() {
        let mut c = LruCache::new(2);
        c.insert(1, v(1));
        c.insert(2, v(2));
        assert_eq!(c.insert(1, v(9)), None);
        assert_eq!(c.insert(3, v(3)), Some(2));
        assert_eq!(c.peek(1), Some(v(9)));
    }

    #[test]
    fn zero_capacity_stores_nothing() {
        let mut c = LruCache::new(0);
        c.insert(1, v(1));
        assert!(c.is_empty());
    }

    proptest! {
        #[test]
        fn never_exceeds_capacity(cap in 0usize..6, ops in proptest::collection::vec((any::<bool>(), 0u32..10), 0..200)) {
            let mut c = LruCache::new(cap);
            let mut model: Vec<u32> = Vec::new(); // most recent last
            for (is_write, k) in ops {
                if is_write {
                    c.insert(k, v(k));
                    if cap > 0 {
                        model.retain(|&x| x != k);
                        if model.len() == cap { model.remove(0); }
                        model.push(k);
                    }
                } else if c.get(k).is_some() {
                    model.retain(|&x| x != k);
                    model.push(k);
                }
                prop_assert!(c.len() <= cap);
                let mut keys: Vec<u32> = model.clone();
                keys.sort_unstable();
                let mut have: Vec<u32> = (0..10).filter(|&k| c.contains(k)).collect();
                have.sort_unstable();
                prop_assert_eq!(have, keys);
            }
        }
    }
}
