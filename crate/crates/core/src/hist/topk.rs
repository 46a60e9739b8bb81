use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::serde_util::sorted_map;

/// Exact frequencies of the most frequent join-key values of one bin.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TopKContainer {
    capacity: usize,
    #[serde(with = "sorted_map")]
    entries: HashMap<i64, u64>,
}

impl TopKContainer {
    pub fn new(capacity: usize) -> Self {
        TopKContainer {
            capacity,
            entries: HashMap::with_capacity(capacity),
        }
    }

    /// Pick the `capacity` most frequent values out of `counts`. Ties at the
    /// cut-off go to the smaller key. Returns the container and the values
    /// left in the background.
    pub fn select(capacity: usize, counts: HashMap<i64, u64>) -> (Self, Vec<(i64, u64)>) {
        let mut ranked: Vec<(i64, u64)> = counts.into_iter().collect();
        ranked.sort_unstable_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
        let rest = ranked.split_off(capacity.min(ranked.len()));
        let entries = ranked.into_iter().collect();
        (TopKContainer { capacity, entries }, rest)
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

    pub fn get(&self, key: i64) -> Option<u64> {
        self.entries.get(&key).copied()
    }

    pub fn contains(&self, key: i64) -> bool {
        self.entries.contains_key(&key)
    }

    /// Bump an existing entry; returns `false` when `key` is not tracked.
    pub fn increment(&mut self, key: i64) -> bool {
        match self.entries.get_mut(&key) {
            Some(c) => {
                *c += 1;
                true
            }
            None => false,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, u64)> + '_ {
        self.entries.iter().map(|(k, v)| (*k, *v))
    }

    /// Entries sorted by key.
    pub fn sorted(&self) -> Vec<(i64, u64)> {
        let mut v: Vec<(i64, u64)> = self.iter().collect();
        v.sort_unstable();
        v
    }

    pub fn total(&self) -> u64 {
        self.entries.values().sum()
    }

    /// The most frequent tracked value (smallest key on ties).
    pub fn most_frequent(&self) -> Option<(i64, u64)> {
        self.iter()
            .max_by(|a, b| a.1.cmp(&b.1).then(b.0.cmp(&a.0)))
    }

    pub fn min_frequency(&self) -> Option<u64> {
        self.entries.values().copied().min()
    }
}
