use std::collections::VecDeque;

use rand::Rng;
use serde::{Deserialize, Serialize};

/// Fixed-capacity FIFO replay memory; the oldest item is evicted first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CircularBuffer<T> {
    capacity: usize,
    items: VecDeque<T>,
}

impl<T> CircularBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "buffer capacity must be positive");
        Self { capacity, items: VecDeque::with_capacity(capacity.min(1 << 16)) }
    }

    pub fn push(&mut self, item: T) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(item);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.items.iter()
    }

    /// `n` items drawn uniformly with replacement; empty if the buffer is.
    pub fn sample(&self, n: usize, rng: &mut impl Rng) -> Vec<&T> {
        if self.items.is_empty() {
            return Vec::new();
        }
        (0..n).map(|_| &self.items[rng.random_range(0..self.items.len())]).collect()
    }
}

/// Uniform sample of everything ever inserted (Algorithm R).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReservoirBuffer<T> {
    capacity: usize,
    items: Vec<T>,
    seen: u64,
}

impl<T> ReservoirBuffer<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "buffer capacity must be positive");
        Self { capacity, items: Vec::with_capacity(capacity.min(1 << 16)), seen: 0 }
    }

    pub fn push(&mut self, item: T, rng: &mut impl Rng) {
        self.seen += 1;
        if self.items.len() < self.capacity {
            self.items.push(item);
        } else {
            let j = rng.random_range(0..self.seen);
            if (j as usize) < self.capacity {
                self.items[j as usize] = item;
            }
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items_seen(&self) -> u64 {
        self.seen
    }

    pub fn iter(&self) -> impl Iterator<Item = &T> {
        self.items.iter()
    }

    pub fn sample(&self, n: usize, rng: &mut impl Rng) -> Vec<&T> {
        if self.items.is_empty() {
            return Vec::new();
        }
        (0..n).map(|_| &self.items[rng.random_range(0..self.items.len())]).collect()
    }
}
