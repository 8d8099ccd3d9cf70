use rand::Rng;

use crate::error::{contract, Result};
use crate::mdp::{ActionId, StateId};

/// One stored transition.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayEntry {
    pub obs: Vec<f64>,
    pub action: ActionId,
    pub reward: f64,
    pub next_obs: Vec<f64>,
    pub state: StateId,
    pub next_state: StateId,
    /// Training iteration that produced the transition.
    pub step: u64,
}

/// Fixed-capacity FIFO of transitions.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    entries: Vec<ReplayEntry>,
    next: usize,
    inserted: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer { capacity, entries: Vec::with_capacity(capacity.min(1 << 16)), next: 0, inserted: 0 }
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

    /// Total number of pushes since creation.
    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    /// Appends, overwriting the oldest entry once full.
    pub fn push(&mut self, entry: ReplayEntry) {
        if self.entries.len() < self.capacity {
            self.entries.push(entry);
        } else {
            self.entries[self.next] = entry;
        }
        self.next = (self.next + 1) % self.capacity;
        self.inserted += 1;
    }

    /// Slot access in storage order (not insertion order).
    pub fn get(&self, slot: usize) -> &ReplayEntry {
        &self.entries[slot]
    }

    /// Entries from oldest to newest.
    pub fn iter_oldest_first(&self) -> impl Iterator<Item = &ReplayEntry> {
        let split = if self.entries.len() < self.capacity { 0 } else { self.next };
        self.entries[split..].iter().chain(self.entries[..split].iter())
    }

    /// `n` slots drawn uniformly with replacement.
    pub fn sample_slots<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Vec<usize>> {
        if self.entries.is_empty() {
            return Err(contract("sampling from an empty replay buffer"));
        }
        Ok((0..n).map(|_| rng.gen_range(0..self.entries.len())).collect())
    }
}
