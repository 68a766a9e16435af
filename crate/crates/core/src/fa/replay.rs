//! Prioritized replay over game states backed by a sum tree.

use rand::Rng;

/// Binary sum tree over a fixed number of leaves.
#[derive(Debug, Clone)]
pub struct SumTree {
    size: usize,
    nodes: Vec<f64>,
}

impl SumTree {
    pub fn new(capacity: usize) -> Self {
        let size = capacity.max(1).next_power_of_two();
        SumTree {
            size,
            nodes: vec![0.0; 2 * size],
        }
    }

    pub fn set(&mut self, i: usize, w: f64) {
        let mut k = i + self.size;
        self.nodes[k] = w;
        while k > 1 {
            k /= 2;
            self.nodes[k] = self.nodes[2 * k] + self.nodes[2 * k + 1];
        }
    }

    pub fn get(&self, i: usize) -> f64 {
        self.nodes[i + self.size]
    }

    pub fn total(&self) -> f64 {
        self.nodes[1]
    }

    /// Leaf whose cumulative weight interval contains `u` in `[0, total)`.
    pub fn find(&self, mut u: f64) -> usize {
        let mut k = 1;
        while k < self.size {
            let left = self.nodes[2 * k];
            if u < left || self.nodes[2 * k + 1] <= 0.0 {
                k *= 2;
            } else {
                u -= left;
                k = 2 * k + 1;
            }
        }
        k - self.size
    }
}

/// Ring buffer of states sampled with probability proportional to
/// `priority^alpha`. New states enter with the largest priority seen so far.
#[derive(Debug, Clone)]
pub struct ReplayBuffer<S> {
    items: Vec<S>,
    priorities: Vec<f64>,
    tree: SumTree,
    capacity: usize,
    next: usize,
    alpha: f64,
    max_priority: f64,
}

/// Floor keeping zero-loss states sampleable.
const MIN_PRIORITY: f64 = 1e-8;

impl<S: Clone> ReplayBuffer<S> {
    pub fn new(capacity: usize, alpha: f64) -> Self {
        let capacity = capacity.max(1);
        ReplayBuffer {
            items: Vec::new(),
            priorities: Vec::new(),
            tree: SumTree::new(capacity),
            capacity,
            next: 0,
            alpha: alpha.clamp(0.0, 1.0),
            max_priority: 1.0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn get(&self, i: usize) -> &S {
        &self.items[i]
    }

    pub fn priority(&self, i: usize) -> f64 {
        self.priorities[i]
    }

    fn weight(&self, p: f64) -> f64 {
        p.max(MIN_PRIORITY).powf(self.alpha)
    }

    pub fn push(&mut self, s: S) {
        let p = self.max_priority;
        let slot = if self.items.len() < self.capacity {
            self.items.push(s);
            self.priorities.push(p);
            self.items.len() - 1
        } else {
            let slot = self.next;
            self.items[slot] = s;
            self.priorities[slot] = p;
            self.next = (self.next + 1) % self.capacity;
            slot
        };
        self.tree.set(slot, self.weight(p));
    }

    pub fn update(&mut self, i: usize, priority: f64) {
        let p = if priority.is_finite() { priority.max(0.0) } else { self.max_priority };
        self.priorities[i] = p;
        self.max_priority = self.max_priority.max(p);
        self.tree.set(i, self.weight(p));
    }

    /// Sampling probability of slot `i`.
    pub fn probability(&self, i: usize) -> f64 {
        self.tree.get(i) / self.tree.total()
    }

    /// `n` slots drawn with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<usize> {
        let total = self.tree.total();
        (0..n)
            .map(|_| {
                let u = rng.random::<f64>() * total;
                self.tree.find(u).min(self.items.len() - 1)
            })
            .collect()
    }
}
