use std::cmp::Ordering;
use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::point::AttrId;

/// When [`AmortizedMaintenanceCounter::observe`] triggers maintenance on its own.
/// Decay always maintains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum MaintenancePolicy {
    EveryNObservations(u64),
    SizeBound(usize),
    OnDecay,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Entry {
    count: f64,
    seq: u64,
}

/// Heavy-hitters counter with constant-time updates; pruning happens only
/// in [`maintain`](Self::maintain).
#[derive(Debug, Clone, PartialEq)]
pub struct AmortizedMaintenanceCounter {
    stable_size: usize,
    policy: MaintenancePolicy,
    counts: HashMap<AttrId, Entry>,
    carry: f64,
    max_carry: f64,
    total: f64,
    since_maintain: u64,
    seq: u64,
}

impl AmortizedMaintenanceCounter {
    /// Default policy: maintain once the map holds twice the stable size.
    pub fn new(stable_size: usize) -> Self {
        Self::with_policy(stable_size, MaintenancePolicy::SizeBound(2 * stable_size))
    }

    pub fn with_policy(stable_size: usize, policy: MaintenancePolicy) -> Self {
        assert!(stable_size > 0, "stable size must be positive");
        Self {
            stable_size,
            policy,
            counts: HashMap::with_capacity(stable_size.min(1 << 20)),
            carry: 0.0,
            max_carry: 0.0,
            total: 0.0,
            since_maintain: 0,
            seq: 0,
        }
    }

    pub fn observe(&mut self, item: AttrId, c: f64) {
        debug_assert!(c >= 0.0);
        self.total += c;
        match self.counts.get_mut(&item) {
            Some(e) => e.count += c,
            None => {
                self.counts.insert(
                    item,
                    Entry {
                        count: self.carry + c,
                        seq: self.seq,
                    },
                );
                self.seq += 1;
            }
        }
        self.since_maintain += 1;
        let due = match self.policy {
            MaintenancePolicy::EveryNObservations(n) => self.since_maintain >= n,
            MaintenancePolicy::SizeBound(m) => self.counts.len() > m,
            MaintenancePolicy::OnDecay => false,
        };
        if due {
            self.maintain();
        }
    }

    /// Keeps the `stable_size` largest counts (earlier insertions win ties)
    /// and sets the carry to the largest count removed, or 0.
    pub fn maintain(&mut self) {
        self.since_maintain = 0;
        if self.counts.len() <= self.stable_size {
            self.carry = 0.0;
            return;
        }
        let mut entries: Vec<(AttrId, Entry)> = self.counts.drain().collect();
        let keep = self.stable_size;
        entries.select_nth_unstable_by(keep, rank_order);
        let removed = entries.split_off(keep);
        self.carry = removed
            .iter()
            .map(|(_, e)| e.count)
            .fold(0.0, f64::max);
        self.max_carry = self.max_carry.max(self.carry);
        self.counts.extend(entries);
    }

    /// Multiplies every count and the running total by `retention`, then maintains.
    pub fn decay(&mut self, retention: f64) {
        for e in self.counts.values_mut() {
            e.count *= retention;
        }
        self.total *= retention;
        self.maintain();
    }

    /// Stored count, or the carry (an upper bound) for unstored items.
    pub fn estimate(&self, item: AttrId) -> f64 {
        self.counts.get(&item).map_or(self.carry, |e| e.count)
    }

    /// Stored count only; `None` when the item is not tracked.
    pub fn stored(&self, item: AttrId) -> Option<f64> {
        self.counts.get(&item).map(|e| e.count)
    }

    /// Stored items with estimate >= `min_fraction * total`, largest first.
    pub fn frequent(&self, min_fraction: f64) -> Vec<(AttrId, f64)> {
        self.frequent_above(min_fraction * self.total)
    }

    pub fn frequent_above(&self, min_count: f64) -> Vec<(AttrId, f64)> {
        let mut out: Vec<(AttrId, f64)> = self
            .counts
            .iter()
            .filter(|(_, e)| e.count >= min_count)
            .map(|(&i, e)| (i, e.count))
            .collect();
        out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = (AttrId, f64)> + '_ {
        self.counts.iter().map(|(&i, e)| (i, e.count))
    }

    pub fn carry(&self) -> f64 {
        self.carry
    }

    pub fn max_carry(&self) -> f64 {
        self.max_carry
    }

    /// Decayed sum of every observed count.
    pub fn total_weight(&self) -> f64 {
        self.total
    }

    pub fn stable_size(&self) -> usize {
        self.stable_size
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

fn rank_order(a: &(AttrId, Entry), b: &(AttrId, Entry)) -> Ordering {
    b.1.count
        .total_cmp(&a.1.count)
        .then(a.1.seq.cmp(&b.1.seq))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn amc_with(stable: usize, counts: &[(AttrId, f64)]) -> AmortizedMaintenanceCounter {
        let mut amc = AmortizedMaintenanceCounter::with_policy(stable, MaintenancePolicy::OnDecay);
        for &(i, c) in counts {
            amc.observe(i, c);
        }
        amc
    }

    #[test]
    fn observe_rules() {
        let mut amc = amc_with(10, &[(1, 1.0)]);
        assert_eq!(amc.estimate(1), 1.0);
        amc.carry = 3.0;
        amc.observe(2, 1.0);
        assert_eq!(amc.estimate(2), 4.0);
        amc.observe(2, 2.0);
        assert_eq!(amc.estimate(2), 6.0);
        assert_eq!(amc.estimate(99), 3.0);
    }

    #[test]
    fn maintain_keeps_largest() {
        let mut amc = amc_with(2, &[(0, 3.0), (1, 2.0), (2, 1.0)]);
        amc.maintain();
        assert_eq!(amc.stored(0), Some(3.0));
        assert_eq!(amc.stored(1), Some(2.0));
        assert_eq!(amc.stored(2), None);
        assert_eq!(amc.carry(), 1.0);
        let snapshot = amc.counts.clone();
        amc.maintain();
        assert_eq!(amc.counts, snapshot);
        assert_eq!(amc.carry(), 0.0);
    }

    #[test]
    fn maintain_under_stable_size_is_identity() {
        let mut amc = amc_with(5, &[(0, 3.0), (1, 2.0)]);
        amc.maintain();
        assert_eq!(amc.len(), 2);
        assert_eq!(amc.carry(), 0.0);
    }

    #[test]
    fn ties_keep_earliest() {
        let mut amc = amc_with(2, &[(7, 1.0), (3, 1.0), (5, 1.0)]);
        amc.maintain();
        assert!(amc.stored(7).is_some() && amc.stored(3).is_some());
        assert!(amc.stored(5).is_none());
    }

    #[test]
    fn decay_scales_then_prunes() {
        let mut amc = amc_with(10, &[(0, 10.0)]);
        amc.decay(0.99);
        assert!((amc.estimate(0) - 9.9).abs() < 1e-12);
        let mut amc = amc_with(10, &[(0, 10.0)]);
        amc.decay(1.0);
        assert_eq!(amc.estimate(0), 10.0);

        // {a:5, b:4} stable 2, then c arrives with 6 → decay prunes b at 0.5 * 4.
        let mut amc = amc_with(2, &[(0, 5.0), (1, 4.0), (2, 6.0)]);
        amc.decay(0.5);
        assert_eq!(amc.len(), 2);
        assert_eq!(amc.stored(1), None);
        assert_eq!(amc.carry(), 2.0);
        assert_eq!(amc.estimate(2), 3.0);
    }

    #[test]
    fn frequent_pigeonhole() {
        let amc = amc_with(10, &[(0, 3.0), (1, 2.0), (2, 2.0)]);
        assert!(amc.frequent(1.0).len() <= 1);
        assert_eq!(amc.frequent(0.2).iter().map(|x| x.0).collect::<Vec<_>>(), vec![0, 1, 2]);
    }

    #[test]
    fn size_bound_policy_caps_growth() {
        let mut amc = AmortizedMaintenanceCounter::new(4);
        for i in 0..1000 {
            amc.observe(i, 1.0);
            assert!(amc.len() <= 8);
        }
        let mut amc = AmortizedMaintenanceCounter::with_policy(4, MaintenancePolicy::EveryNObservations(10));
        for i in 0..25 {
            amc.observe(i, 1.0);
        }
        assert_eq!(amc.len(), 9);
    }

    proptest! {
        #[test]
        fn never_underestimates_while_pruning(
            stream in prop::collection::vec(0u32..40, 1..400),
            stable in 2usize..6,
        ) {
            let mut amc = AmortizedMaintenanceCounter::with_policy(stable, MaintenancePolicy::SizeBound(2 * stable));
            let mut exact: HashMap<AttrId, f64> = HashMap::new();
            let mut pruned_ever = false;
            let mut reset_after_prune = false;
            for &i in &stream {
                let before = amc.max_carry();
                amc.observe(i, 1.0);
                *exact.entry(i).or_default() += 1.0;
                pruned_ever |= amc.max_carry() > before || amc.carry() > 0.0;
                if pruned_ever && amc.carry() == 0.0 && amc.since_maintain == 0 {
                    reset_after_prune = true;
                }
                for (&k, &t) in &exact {
                    let est = amc.estimate(k);
                    prop_assert!(est <= t + amc.max_carry() + 1e-9);
                    if !reset_after_prune {
                        prop_assert!(est >= t - 1e-9);
                    }
                }
            }
        }
    }
}
