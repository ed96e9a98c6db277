use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Fixed-size sample whose running weight decays on demand, independent of
/// how many items arrive between decays.
#[derive(Debug, Clone)]
pub struct AdaptableDampedReservoir<T> {
    capacity: usize,
    items: Vec<T>,
    weight: f64,
    retention: f64,
    rng: ChaCha8Rng,
}

impl<T> AdaptableDampedReservoir<T> {
    /// `retention` is the multiplier applied by [`decay`](Self::decay), i.e. `1 - α`.
    pub fn new(capacity: usize, retention: f64, seed: u64) -> Self {
        assert!(capacity > 0, "reservoir capacity must be positive");
        assert!(
            retention > 0.0 && retention <= 1.0,
            "retention must be in (0, 1], got {retention}"
        );
        Self {
            capacity,
            items: Vec::with_capacity(capacity.min(1 << 16)),
            weight: 0.0,
            retention,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }

    pub fn observe(&mut self, x: T, w: f64) -> Result<()> {
        if !(w >= 0.0 && w.is_finite()) {
            return Err(Error::InvalidArgument(format!("reservoir weight must be finite and >= 0, got {w}")));
        }
        self.weight += w;
        if self.items.len() < self.capacity {
            self.items.push(x);
        } else if self.rng.random::<f64>() < self.insert_probability() {
            let slot = self.rng.random_range(0..self.capacity);
            self.items[slot] = x;
        }
        Ok(())
    }

    /// Probability that the next arrival replaces a stored item once full.
    pub fn insert_probability(&self) -> f64 {
        if self.weight <= 0.0 {
            1.0
        } else {
            (self.capacity as f64 / self.weight).min(1.0)
        }
    }

    pub fn decay(&mut self) {
        self.weight *= self.retention;
    }

    pub fn items(&self) -> &[T] {
        &self.items
    }

    pub fn weight(&self) -> f64 {
        self.weight
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn retention(&self) -> f64 {
        self.retention
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

impl AdaptableDampedReservoir<f64> {
    pub fn quantile(&self, q: f64) -> Result<f64> {
        quantile(&self.items, q)
    }
}

/// Nearest-rank quantile: the value at sorted position `ceil(q * n) - 1`.
pub fn quantile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::Empty("quantile of an empty sample"));
    }
    if !(q > 0.0 && q < 1.0) && q != 1.0 {
        return Err(Error::InvalidArgument(format!("quantile level must be in (0, 1], got {q}")));
    }
    let mut v = values.to_vec();
    let idx = nearest_rank_index(v.len(), q);
    let (_, x, _) = v.select_nth_unstable_by(idx, f64::total_cmp);
    Ok(*x)
}

pub fn nearest_rank_index(n: usize, q: f64) -> usize {
    // The epsilon absorbs products like 0.99 * 100 landing just above 99.
    let rank = (q * n as f64 - 1e-9).ceil() as usize;
    rank.clamp(1, n) - 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fills_to_capacity() {
        let mut adr = AdaptableDampedReservoir::new(5, 1.0, 1);
        for i in 0..5 {
            adr.observe(i, 1.0).unwrap();
        }
        assert_eq!(adr.items(), &[0, 1, 2, 3, 4]);
        assert_eq!(adr.weight(), 5.0);
    }

    #[test]
    fn overweight_after_decay_always_inserts() {
        let mut adr = AdaptableDampedReservoir::new(5, 0.4, 1);
        for i in 0..5 {
            adr.observe(i, 1.0).unwrap();
        }
        adr.decay();
        assert_eq!(adr.weight(), 2.0);
        for i in 10..40 {
            let before: Vec<_> = adr.items().to_vec();
            adr.observe(i, 1.0).unwrap();
            if adr.weight() <= 5.0 {
                assert!(adr.items().contains(&i));
                assert_ne!(before, adr.items());
            }
        }
    }

    #[test]
    fn zero_weight_leaves_weight() {
        let mut adr = AdaptableDampedReservoir::new(2, 1.0, 1);
        adr.observe(1, 1.0).unwrap();
        adr.observe(2, 1.0).unwrap();
        adr.observe(3, 1.0).unwrap();
        let p = adr.insert_probability();
        adr.observe(4, 0.0).unwrap();
        assert_eq!(adr.weight(), 3.0);
        assert_eq!(adr.insert_probability(), p);
        assert!(adr.observe(5, -1.0).is_err());
    }

    #[test]
    fn decay_scales_weight_only() {
        let mut adr = AdaptableDampedReservoir::new(200, 0.5, 1);
        for i in 0..100 {
            adr.observe(i, 1.0).unwrap();
        }
        let items = adr.items().to_vec();
        adr.decay();
        assert_eq!(adr.weight(), 50.0);
        assert_eq!(adr.items(), &items[..]);

        let mut adr = AdaptableDampedReservoir::<u8>::new(1, 0.9, 1);
        adr.observe(0, 100.0).unwrap();
        adr.decay();
        adr.decay();
        assert!((adr.weight() - 81.0).abs() < 1e-12);

        let mut adr = AdaptableDampedReservoir::<u8>::new(1, 1.0, 1);
        adr.observe(0, 100.0).unwrap();
        adr.decay();
        assert_eq!(adr.weight(), 100.0);
    }

    #[test]
    fn nearest_rank_quantiles() {
        let v: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(quantile(&v, 0.99).unwrap(), 99.0);
        assert_eq!(quantile(&[7.0], 0.3).unwrap(), 7.0);
        let v: Vec<f64> = (1..=1000).map(f64::from).collect();
        assert_eq!(quantile(&v, 0.99).unwrap(), 990.0);
        assert!(quantile(&[], 0.5).is_err());
        let adr = AdaptableDampedReservoir::<f64>::new(3, 1.0, 0);
        assert!(adr.quantile(0.5).is_err());
    }

    proptest! {
        #[test]
        fn size_never_exceeds_capacity(
            k in 1usize..20,
            ops in prop::collection::vec((0.0f64..3.0, any::<bool>()), 0..300),
            seed in any::<u64>(),
        ) {
            let mut adr = AdaptableDampedReservoir::new(k, 0.7, seed);
            for (i, (w, decay)) in ops.into_iter().enumerate() {
                if decay {
                    adr.decay();
                } else {
                    adr.observe(i, w).unwrap();
                }
                prop_assert!(adr.len() <= k);
                prop_assert!(adr.weight() >= 0.0);
            }
        }

        #[test]
        fn nearest_rank_matches_sort(mut v in prop::collection::vec(-1e6f64..1e6, 1..200), q in 0.001f64..0.999) {
            let got = quantile(&v, q).unwrap();
            v.sort_by(f64::total_cmp);
            let rank = (q * v.len() as f64).ceil() as usize;
            let expected = v[rank.max(1) - 1];
            prop_assert_eq!(got, expected);
        }
    }
}
