use crate::prob::RngStream;

/// One environment step as seen by the learner. `action` is the squashed
/// action that was executed and `raw` the Gaussian sample it came from.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub state: Vec<f32>,
    pub action: Vec<f64>,
    pub raw: Vec<f64>,
    pub reward: f64,
    pub next_state: Vec<f32>,
    pub done: bool,
}

/// Fixed-capacity ring buffer; once full, each push evicts the oldest entry.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    head: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            items: Vec::new(),
            head: 0,
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
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.head] = t;
            self.head = (self.head + 1) % self.capacity;
        }
    }

    /// Oldest first.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        let (newer, older) = self.items.split_at(self.head);
        older.iter().chain(newer)
    }

    /// `count` draws, uniformly with replacement.
    pub fn sample(&self, count: usize, rng: &mut RngStream) -> Vec<&Transition> {
        assert!(!self.items.is_empty(), "sampling from an empty buffer");
        (0..count)
            .map(|_| &self.items[rng.below(self.items.len())])
            .collect()
    }
}
