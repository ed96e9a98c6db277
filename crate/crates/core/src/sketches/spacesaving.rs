use std::collections::HashMap;

use crate::point::AttrId;

#[derive(Debug, Clone, Copy, PartialEq)]
struct Slot {
    item: AttrId,
    count: f64,
    error: f64,
}

/// SpaceSaving over an indexed binary min-heap: every update is
/// `O(log m)`, eviction replaces the minimum-count entry.
#[derive(Debug, Clone)]
pub struct SpaceSaving {
    capacity: usize,
    heap: Vec<Slot>,
    pos: HashMap<AttrId, usize>,
    total: f64,
}

impl SpaceSaving {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0);
        Self {
            capacity,
            heap: Vec::with_capacity(capacity),
            pos: HashMap::with_capacity(capacity),
            total: 0.0,
        }
    }

    pub fn observe(&mut self, item: AttrId, c: f64) {
        self.total += c;
        if let Some(&i) = self.pos.get(&item) {
            self.heap[i].count += c;
            self.sift_down(i);
        } else if self.heap.len() < self.capacity {
            self.heap.push(Slot {
                item,
                count: c,
                error: 0.0,
            });
            let i = self.heap.len() - 1;
            self.pos.insert(item, i);
            self.sift_up(i);
        } else {
            let min = self.heap[0];
            self.pos.remove(&min.item);
            self.heap[0] = Slot {
                item,
                count: min.count + c,
                error: min.count,
            };
            self.pos.insert(item, 0);
            self.sift_down(0);
        }
    }

    /// Stored count; the minimum count bounds unstored items once full.
    pub fn estimate(&self, item: AttrId) -> f64 {
        match self.pos.get(&item) {
            Some(&i) => self.heap[i].count,
            None if self.heap.len() == self.capacity => self.heap[0].count,
            None => 0.0,
        }
    }

    pub fn error(&self, item: AttrId) -> Option<f64> {
        self.pos.get(&item).map(|&i| self.heap[i].error)
    }

    pub fn frequent(&self, min_fraction: f64) -> Vec<(AttrId, f64)> {
        let threshold = min_fraction * self.total;
        let mut out: Vec<_> = self
            .heap
            .iter()
            .filter(|s| s.count >= threshold)
            .map(|s| (s.item, s.count))
            .collect();
        out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        out
    }

    pub fn total_weight(&self) -> f64 {
        self.total
    }

    pub fn len(&self) -> usize {
        self.heap.len()
    }

    pub fn is_empty(&self) -> bool {
        self.heap.is_empty()
    }

    fn swap(&mut self, a: usize, b: usize) {
        self.heap.swap(a, b);
        self.pos.insert(self.heap[a].item, a);
        self.pos.insert(self.heap[b].item, b);
    }

    fn sift_up(&mut self, mut i: usize) {
        while i > 0 {
            let parent = (i - 1) / 2;
            if self.heap[i].count < self.heap[parent].count {
                self.swap(i, parent);
                i = parent;
            } else {
                break;
            }
        }
    }

    fn sift_down(&mut self, mut i: usize) {
        let n = self.heap.len();
        loop {
            let (l, r) = (2 * i + 1, 2 * i + 2);
            let mut smallest = i;
            if l < n && self.heap[l].count < self.heap[smallest].count {
                smallest = l;
            }
            if r < n && self.heap[r].count < self.heap[smallest].count {
                smallest = r;
            }
            if smallest == i {
                break;
            }
            self.swap(i, smallest);
            i = smallest;
        }
    }
}
