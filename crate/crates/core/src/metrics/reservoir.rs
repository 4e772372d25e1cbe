use rand::Rng;

use crate::agent::Transition;

/// Where an offered item ended up.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReservoirInsert {
    Appended(usize),
    Replaced(usize),
    Discarded,
}

/// Fixed-size uniform sample of a stream (Algorithm R).
///
/// After `n >= capacity` offers every item seen so far is retained with
/// probability `capacity / n`.
#[derive(Debug, Clone)]
pub struct Reservoir<T> {
    capacity: usize,
    items: Vec<T>,
    seen: u64,
}

pub type EvalBuffer = Reservoir<Transition>;

impl<T> Reservoir<T> {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "reservoir capacity must be positive");
        Self {
            capacity,
            items: Vec::with_capacity(capacity),
            seen: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn seen(&self) -> u64 {
        self.seen
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn items(&self) -> &[T] {
        &self.items
    }

    pub fn insert<R: Rng + ?Sized>(&mut self, item: T, rng: &mut R) -> ReservoirInsert {
        self.seen += 1;
        if self.items.len() < self.capacity {
            self.items.push(item);
            return ReservoirInsert::Appended(self.items.len() - 1);
        }
        let j = rng.random_range(0..self.seen);
        if (j as usize) < self.capacity {
            self.items[j as usize] = item;
            ReservoirInsert::Replaced(j as usize)
        } else {
            ReservoirInsert::Discarded
        }
    }
}
