use std::collections::VecDeque;
use std::sync::Arc;

use rand::Rng;

/// One stored experience. States are kept as `f32` and shared between
/// consecutive transitions to bound memory.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub state: Arc<[f32]>,
    pub action: usize,
    pub reward: f64,
    pub next_state: Arc<[f32]>,
    pub terminal: bool,
    /// Multiplier on the bootstrapped next-state value.
    pub discount: f64,
    /// Actions the bootstrap maximum may range over; `None` means all.
    pub next_mask: Option<Arc<[bool]>>,
}

/// FIFO ring with uniform sampling (with replacement).
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Transition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> ReplayBuffer {
        assert!(capacity > 0, "replay capacity must be positive");
        ReplayBuffer {
            capacity,
            items: VecDeque::with_capacity(capacity.min(1 << 16)),
        }
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

    pub fn push(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    pub fn get(&self, i: usize) -> Option<&Transition> {
        self.items.get(i)
    }

    pub fn sample<R: Rng>(&self, n: usize, rng: &mut R) -> Vec<&Transition> {
        if self.items.is_empty() {
            return Vec::new();
        }
        (0..n)
            .map(|_| &self.items[rng.gen_range(0..self.items.len())])
            .collect()
    }
}
