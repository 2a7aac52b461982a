//! LRU feature-cache simulator.
//!
//! Stands in for a software cache holding node-feature slots: miss on
//! absent id, insert on miss, evict the least-recently-used entry.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::NodeId;
use crate::minibatch::BatchSubgraph;

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct CacheConfig {
    /// Capacity in node-feature slots.
    pub capacity: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CacheStats {
    pub accesses: u64,
    pub misses: u64,
}

impl CacheStats {
    pub fn miss_rate(&self) -> f64 {
        if self.accesses == 0 {
            0.0
        } else {
            self.misses as f64 / self.accesses as f64
        }
    }
}

const NIL: usize = usize::MAX;

struct Slot {
    key: usize,
    prev: usize,
    next: usize,
}

/// Sequential LRU state machine over node ids.
pub struct LruSim {
    map: HashMap<usize, usize>,
    slots: Vec<Slot>,
    head: usize, // most recently used
    tail: usize, // least recently used
    capacity: usize,
    stats: CacheStats,
}

impl LruSim {
    pub fn new(capacity: usize) -> Result<LruSim> {
        if capacity == 0 {
            return Err(Error::invalid("cache capacity must be at least 1"));
        }
        Ok(LruSim {
            map: HashMap::with_capacity(capacity),
            slots: Vec::with_capacity(capacity),
            head: NIL,
            tail: NIL,
            capacity,
            stats: CacheStats::default(),
        })
    }

    pub fn stats(&self) -> CacheStats {
        self.stats
    }

    /// Touch `key`; returns true on hit.
    pub fn access(&mut self, key: usize) -> bool {
        self.stats.accesses += 1;
        if let Some(&slot) = self.map.get(&key) {
            self.detach(slot);
            self.push_front(slot);
            return true;
        }
        self.stats.misses += 1;
        let slot = if self.slots.len() < self.capacity {
            self.slots.push(Slot {
                key,
                prev: NIL,
                next: NIL,
            });
            self.slots.len() - 1
        } else {
            let victim = self.tail;
            self.detach(victim);
            self.map.remove(&self.slots[victim].key);
            self.slots[victim].key = key;
            victim
        };
        self.map.insert(key, slot);
        self.push_front(slot);
        false
    }

    fn detach(&mut self, slot: usize) {
        let (prev, next) = (self.slots[slot].prev, self.slots[slot].next);
        if prev != NIL {
            self.slots[prev].next = next;
        } else if self.head == slot {
            self.head = next;
        }
        if next != NIL {
            self.slots[next].prev = prev;
        } else if self.tail == slot {
            self.tail = prev;
        }
        self.slots[slot].prev = NIL;
        self.slots[slot].next = NIL;
    }

    fn push_front(&mut self, slot: usize) {
        self.slots[slot].next = self.head;
        self.slots[slot].prev = NIL;
        if self.head != NIL {
            self.slots[self.head].prev = slot;
        }
        self.head = slot;
        if self.tail == NIL {
            self.tail = slot;
        }
    }
}

/// Run LRU over an access stream and report miss statistics.
pub fn lru_simulate(
    stream: impl IntoIterator<Item = usize>,
    cfg: CacheConfig,
) -> Result<CacheStats> {
    let mut sim = LruSim::new(cfg.capacity)?;
    for key in stream {
        sim.access(key);
    }
    Ok(sim.stats())
}

/// Feature-access order for one batch: its unique input nodes in ascending
/// global-id order (one access per node per batch).
pub fn batch_access_order(sub: &BatchSubgraph) -> Vec<NodeId> {
    let mut ids = sub.input_nodes().to_vec();
    ids.sort_unstable();
    ids
}

/// Concatenate the per-batch access orders of a batch stream.
pub fn batch_access_stream<'a>(subs: impl IntoIterator<Item = &'a BatchSubgraph>) -> Vec<NodeId> {
    subs.into_iter().flat_map(batch_access_order).collect()
}
