use rand::Rng;

/// One step of experience. `next_legal` restricts the bootstrap max to
/// actions feasible in `s_next`; `None` means every action is feasible.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub s: Vec<f64>,
    pub a: usize,
    pub r: f64,
    pub s_next: Vec<f64>,
    pub terminal: bool,
    pub next_legal: Option<Vec<bool>>,
}

/// Fixed-capacity ring buffer with FIFO eviction and uniform sampling.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    next: usize,
    inserted: u64,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "replay capacity must be positive");
        Self {
            capacity,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            next: 0,
            inserted: 0,
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

    pub fn inserted(&self) -> u64 {
        self.inserted
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
        self.inserted += 1;
    }

    /// Oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        let split = if self.items.len() < self.capacity { 0 } else { self.next };
        self.items[split..].iter().chain(&self.items[..split])
    }

    /// Uniform indices into the storage, with replacement.
    pub fn sample_indices(&self, n: usize, rng: &mut impl Rng) -> Vec<usize> {
        (0..n).map(|_| rng.random_range(0..self.items.len())).collect()
    }

    pub fn get(&self, index: usize) -> &Transition {
        &self.items[index]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn t(r: f64) -> Transition {
        Transition {
            s: vec![r],
            a: 0,
            r,
            s_next: vec![r],
            terminal: false,
            next_legal: None,
        }
    }

    #[test]
    fn fifo_eviction_keeps_last_capacity_items() {
        let mut buf = ReplayBuffer::new(5);
        for i in 0..8 {
            buf.push(t(i as f64));
        }
        assert_eq!(buf.len(), 5);
        let held: Vec<f64> = buf.iter().map(|x| x.r).collect();
        assert_eq!(held, vec![3.0, 4.0, 5.0, 6.0, 7.0]);
        assert_eq!(buf.inserted(), 8);
    }

    #[test]
    fn partial_fill_iterates_in_order() {
        let mut buf = ReplayBuffer::new(5);
        for i in 0..3 {
            buf.push(t(i as f64));
        }
        let held: Vec<f64> = buf.iter().map(|x| x.r).collect();
        assert_eq!(held, vec![0.0, 1.0, 2.0]);
    }

    #[test]
    fn sampling_stays_in_range() {
        let mut buf = ReplayBuffer::new(4);
        buf.push(t(1.0));
        buf.push(t(2.0));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(buf.sample_indices(100, &mut rng).iter().all(|&i| i < 2));
    }
}
