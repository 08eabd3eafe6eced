//! Bounded FIFO experience memory.

use std::collections::VecDeque;
use std::sync::Arc;

use rand::seq::index::sample;
use rand::Rng;

/// One transition (s, a, r, s').
#[derive(Debug, Clone, PartialEq)]
pub struct Experience {
    pub state: Arc<[f64]>,
    pub action: usize,
    pub reward: f64,
    pub next_state: Arc<[f64]>,
}

#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Experience>,
    pushed: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self { capacity, items: VecDeque::with_capacity(capacity.min(1 << 16)), pushed: 0 }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Total experiences ever stored, evicted ones included.
    pub fn total_pushed(&self) -> u64 {
        self.pushed
    }

    /// Stores `e`, evicting the oldest experience when full.
    pub fn push(&mut self, e: Experience) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(e);
        self.pushed += 1;
    }

    /// Oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &Experience> {
        self.items.iter()
    }

    /// `n` distinct experiences chosen uniformly at random.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<&Experience> {
        let n = n.min(self.items.len());
        sample(rng, self.items.len(), n).into_iter().map(|i| &self.items[i]).collect()
    }
}
