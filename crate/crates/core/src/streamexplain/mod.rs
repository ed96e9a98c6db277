//! Streaming explanation: paired heavy-hitter sketches for single
//! attributes and decayed prefix trees for combinations.

mod tree;

use std::collections::{hash_map::DefaultHasher, HashMap, HashSet};
use std::hash::Hasher;

use crate::error::Result;
use crate::explain::{
    count_candidates, filter_combinations, mine_combinations, rank_explanations, ExplainOutput, ExplainParams,
    ExplainStats, ExplanationRecord, RecordFlag,
};
use crate::operator::Explainer;
use crate::point::{AttrId, Class, LabeledPoint};
use crate::sketches::AmortizedMaintenanceCounter;

pub use tree::MCpsTree;

/// Single-writer summary of a labeled stream.
///
/// During the first window every attribute is tree-eligible; afterwards only
/// attributes the outlier sketch found frequent in the previous window are.
#[derive(Debug, Clone)]
pub struct StreamingSummarizer {
    params: ExplainParams,
    significance: f64,
    outlier_amc: AmortizedMaintenanceCounter,
    inlier_amc: AmortizedMaintenanceCounter,
    outlier_tree: MCpsTree,
    inlier_tree: MCpsTree,
    outlier_weight: f64,
    inlier_weight: f64,
    rank: HashMap<AttrId, u32>,
    /// Items tree-eligible in every window so far; their tree counts are exact.
    always_eligible: Option<HashSet<AttrId>>,
    windows: u64,
    scratch: Vec<AttrId>,
}

impl StreamingSummarizer {
    pub fn new(params: ExplainParams, amc_stable_size: usize, significance: f64) -> Self {
        Self {
            params,
            significance,
            outlier_amc: AmortizedMaintenanceCounter::new(amc_stable_size),
            inlier_amc: AmortizedMaintenanceCounter::new(amc_stable_size),
            outlier_tree: MCpsTree::new(),
            inlier_tree: MCpsTree::new(),
            outlier_weight: 0.0,
            inlier_weight: 0.0,
            rank: HashMap::new(),
            always_eligible: None,
            windows: 0,
            scratch: Vec::new(),
        }
    }

    pub fn params(&self) -> &ExplainParams {
        &self.params
    }

    fn cold(&self) -> bool {
        self.windows == 0
    }

    /// `items` must be sorted and free of NULL ids.
    pub fn observe(&mut self, class: Class, items: &[AttrId]) {
        let (amc, tree, total) = match class {
            Class::Outlier => (&mut self.outlier_amc, &mut self.outlier_tree, &mut self.outlier_weight),
            Class::Inlier => (&mut self.inlier_amc, &mut self.inlier_tree, &mut self.inlier_weight),
        };
        *total += 1.0;
        for &i in items {
            amc.observe(i, 1.0);
        }
        self.scratch.clear();
        if self.windows == 0 {
            self.scratch.extend_from_slice(items);
        } else {
            self.scratch.extend(items.iter().copied().filter(|i| self.rank.contains_key(i)));
            let rank = &self.rank;
            self.scratch.sort_by_key(|i| rank[i]);
        }
        tree.insert(&self.scratch, 1.0);
    }

    pub fn observe_point(&mut self, lp: &LabeledPoint) {
        self.observe(lp.label.class, &lp.point.items());
    }

    /// Decays everything by `retention`, refreshes the eligible set from the
    /// outlier sketch and rebuilds both trees in the new frequency order.
    pub fn advance_window(&mut self, retention: f64) {
        self.outlier_amc.decay(retention);
        self.inlier_amc.decay(retention);
        self.outlier_tree.decay(retention);
        self.inlier_tree.decay(retention);
        self.outlier_weight *= retention;
        self.inlier_weight *= retention;

        let frequent = self.outlier_amc.frequent_above(self.min_count());
        let rank: HashMap<AttrId, u32> = frequent
            .iter()
            .filter(|(_, c)| *c > 0.0)
            .enumerate()
            .map(|(r, &(i, _))| (i, r as u32))
            .collect();
        let newly: Vec<AttrId> = if self.cold() {
            Vec::new()
        } else {
            let mut v: Vec<AttrId> = rank.keys().copied().filter(|i| !self.rank.contains_key(i)).collect();
            v.sort_unstable();
            v
        };
        self.outlier_tree.restructure(&rank);
        self.inlier_tree.restructure(&rank);
        // A newly eligible item enters with its sketch count as a singleton
        // path, so its tree support is not under-reported.
        for &i in &newly {
            self.outlier_tree.insert(&[i], self.outlier_amc.stored(i).unwrap_or(0.0));
            let w = self.inlier_amc.stored(i).unwrap_or(0.0);
            if w > 0.0 {
                self.inlier_tree.insert(&[i], w);
            }
        }
        self.always_eligible = Some(match self.always_eligible.take() {
            None => rank.keys().copied().collect(),
            Some(prev) => prev.into_iter().filter(|i| rank.contains_key(i)).collect(),
        });
        self.rank = rank;
        self.windows += 1;
    }

    fn min_count(&self) -> f64 {
        self.params.min_support * self.outlier_weight
    }

    /// Outlier and inlier counts for one attribute, and whether the inlier
    /// count is only a lower bound.
    fn single_counts(&self, item: AttrId) -> (f64, f64, bool) {
        let ao = self.outlier_amc.stored(item).unwrap_or(0.0);
        match self.inlier_amc.stored(item) {
            Some(ai) => (ao, ai, false),
            None => (ao, 0.0, self.inlier_amc.max_carry() > 0.0),
        }
    }

    /// Risk ratio of one attribute from the sketch pair, regardless of the
    /// reporting thresholds.
    pub fn single_risk_ratio(&self, item: AttrId) -> f64 {
        let (ao, ai, _) = self.single_counts(item);
        ExplanationRecord::from_counts(vec![item], ao, ai, self.outlier_weight, self.inlier_weight).risk_ratio
    }

    /// Current explanations with the batch thresholds and ranking. Read-only.
    pub fn emit(&self) -> ExplainOutput {
        let mut stats = ExplainStats::default();
        let mut num_tests = 0u64;
        let (n_o, n_i) = (self.outlier_weight, self.inlier_weight);
        if n_o <= 0.0 {
            return ExplainOutput {
                records: Vec::new(),
                num_tests,
                stats,
            };
        }
        let r = self.params.min_risk_ratio;
        let mut records = Vec::new();
        let mut keep: Vec<bool> = Vec::new();
        for (item, ao) in self.outlier_amc.frequent_above(self.min_count()) {
            stats.distinct_outlier_items += 1;
            if ao <= 0.0 {
                continue;
            }
            num_tests += 1;
            let (_, ai, lower) = self.single_counts(item);
            let mut rec = ExplanationRecord::from_counts(vec![item], ao, ai, n_o, n_i);
            if rec.risk_ratio >= r {
                if lower {
                    rec.flag(RecordFlag::LowerConfidenceCount);
                }
                if keep.len() <= item as usize {
                    keep.resize(item as usize + 1, false);
                }
                keep[item as usize] = true;
                records.push(rec);
            }
        }
        stats.single_survivors = records.len() as u64;

        if records.len() >= 2 {
            let outlier_paths = self.outlier_tree.sorted_paths();
            let combos = mine_combinations(
                outlier_paths.iter().map(|(p, w)| (p.as_slice(), *w)),
                &keep,
                self.min_count(),
            );
            stats.combination_candidates = combos.len() as u64;
            num_tests += combos.len() as u64;
            let sets: Vec<Vec<AttrId>> = combos.iter().map(|(s, _)| s.clone()).collect();
            let inlier_paths = self.inlier_tree.sorted_paths();
            let counts = count_candidates(
                &sets,
                inlier_paths.iter().map(|(p, w)| (p.as_slice(), *w)),
                &keep,
                &mut stats,
            );
            let mut combos_out = filter_combinations(combos, counts, n_o, n_i, &self.params);
            for rec in &mut combos_out {
                if rec.ai == 0.0 && n_i > 0.0 && !self.exact_inlier_counts(&rec.items) {
                    rec.flag(RecordFlag::LowerConfidenceCount);
                }
            }
            records.extend(combos_out);
        }
        ExplainOutput {
            records: rank_explanations(records),
            num_tests,
            stats,
        }
        .with_confidence(self.significance)
    }

    fn exact_inlier_counts(&self, items: &[AttrId]) -> bool {
        match &self.always_eligible {
            None => true,
            Some(set) => items.iter().all(|i| set.contains(i)),
        }
    }

    pub fn outlier_weight(&self) -> f64 {
        self.outlier_weight
    }

    pub fn inlier_weight(&self) -> f64 {
        self.inlier_weight
    }

    pub fn windows(&self) -> u64 {
        self.windows
    }

    pub fn outlier_amc(&self) -> &AmortizedMaintenanceCounter {
        &self.outlier_amc
    }

    pub fn inlier_amc(&self) -> &AmortizedMaintenanceCounter {
        &self.inlier_amc
    }

    pub fn outlier_tree(&self) -> &MCpsTree {
        &self.outlier_tree
    }

    pub fn inlier_tree(&self) -> &MCpsTree {
        &self.inlier_tree
    }

    /// Current rank map; empty before the first window closes.
    pub fn rank(&self) -> &HashMap<AttrId, u32> {
        &self.rank
    }

    pub fn is_eligible(&self, item: AttrId) -> bool {
        self.cold() || self.rank.contains_key(&item)
    }

    /// Digest of the full state, for checking that emission is read-only.
    pub fn state_digest(&self) -> u64 {
        let mut h = DefaultHasher::new();
        let amc_entries = |amc: &AmortizedMaintenanceCounter, h: &mut DefaultHasher| {
            let mut v: Vec<(AttrId, f64)> = amc.iter().collect();
            v.sort_by_key(|e| e.0);
            for (i, c) in v {
                h.write_u32(i);
                h.write_u64(c.to_bits());
            }
            h.write_u64(amc.total_weight().to_bits());
            h.write_u64(amc.carry().to_bits());
        };
        amc_entries(&self.outlier_amc, &mut h);
        amc_entries(&self.inlier_amc, &mut h);
        self.outlier_tree.hash_into(&mut h);
        self.inlier_tree.hash_into(&mut h);
        h.write_u64(self.outlier_weight.to_bits());
        h.write_u64(self.inlier_weight.to_bits());
        let mut rank: Vec<_> = self.rank.iter().collect();
        rank.sort();
        for (i, r) in rank {
            h.write_u32(*i);
            h.write_u32(*r);
        }
        h.write_u64(self.windows);
        h.finish()
    }
}

/// [`Explainer`] over a summarizer; windows advance only when the caller
/// says so.
pub struct StreamingExplainer {
    pub summarizer: StreamingSummarizer,
}

impl Explainer for StreamingExplainer {
    fn consume(&mut self, batch: &[LabeledPoint]) -> Result<()> {
        for lp in batch {
            self.summarizer.observe_point(lp);
        }
        Ok(())
    }

    fn explain(&mut self) -> Result<Vec<ExplanationRecord>> {
        Ok(self.summarizer.emit().records)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn summarizer(s: f64, r: f64) -> StreamingSummarizer {
        StreamingSummarizer::new(ExplainParams::new(s, r), 1000, 0.05)
    }

    #[test]
    fn cold_start_fills_trees() {
        let mut s = summarizer(0.1, 3.0);
        s.observe(Class::Outlier, &[1, 2]);
        assert_eq!(s.outlier_tree().item_count(1), 1.0);
        assert!(s.inlier_tree().is_empty());
        assert_eq!(s.outlier_amc().stored(2), Some(1.0));
        assert_eq!(s.inlier_amc().stored(2), None);
    }

    #[test]
    fn rank_ordered_insertion() {
        let mut s = summarizer(0.1, 3.0);
        for _ in 0..3 {
            s.observe(Class::Outlier, &[5]);
        }
        s.observe(Class::Outlier, &[2]);
        s.advance_window(1.0);
        // 5 outranks 2, so the path runs root -> 5 -> 2.
        s.observe(Class::Outlier, &[2, 5]);
        let paths = s.outlier_tree().paths();
        assert!(paths.contains(&(vec![5, 2], 1.0)), "{paths:?}");
        s.outlier_tree().audit(s.rank()).unwrap();
    }

    #[test]
    fn infrequent_items_leave_the_trees() {
        let mut s = summarizer(0.5, 1.0);
        for _ in 0..9 {
            s.observe(Class::Outlier, &[1]);
        }
        s.observe(Class::Outlier, &[1, 7]);
        s.observe(Class::Inlier, &[7]);
        s.advance_window(1.0);
        assert!(!s.outlier_tree().contains(7));
        assert!(!s.inlier_tree().contains(7));
        assert!(!s.is_eligible(7));
        s.observe(Class::Outlier, &[7]);
        assert!(!s.outlier_tree().contains(7));
        assert_eq!(s.outlier_amc().stored(7), Some(2.0));
    }

    #[test]
    fn decay_scales_counts() {
        let mut s = summarizer(0.01, 1.0);
        for _ in 0..100 {
            s.observe(Class::Outlier, &[1, 2]);
            s.observe(Class::Inlier, &[3]);
        }
        let before = s.outlier_tree().total_mass();
        s.advance_window(0.99);
        assert!((s.outlier_tree().total_mass() - 0.99 * before).abs() < 1e-12);
        assert!((s.outlier_amc().stored(1).unwrap() - 99.0).abs() < 1e-12);
        assert!((s.outlier_weight() - 99.0).abs() < 1e-12);
    }

    #[test]
    fn no_outliers_no_explanations() {
        let mut s = summarizer(0.01, 1.0);
        s.observe(Class::Inlier, &[3]);
        assert!(s.emit().records.is_empty());
    }

    #[test]
    fn emission_is_read_only() {
        let mut s = summarizer(0.1, 2.0);
        for k in 0..50u32 {
            s.observe(Class::Outlier, &[1, 2, 10 + k % 3]);
            s.observe(Class::Inlier, &[k % 5 + 1, 20]);
        }
        s.advance_window(0.9);
        let digest = s.state_digest();
        let a = s.emit();
        let b = s.emit();
        assert_eq!(digest, s.state_digest());
        assert_eq!(a, b);
        assert!(!a.records.is_empty());
    }

    #[test]
    fn newly_eligible_item_starts_at_sketch_count() {
        let mut s = summarizer(0.3, 1.0);
        for _ in 0..10 {
            s.observe(Class::Outlier, &[1]);
        }
        s.observe(Class::Outlier, &[2]);
        s.advance_window(1.0);
        assert!(!s.is_eligible(2));
        for _ in 0..10 {
            s.observe(Class::Outlier, &[2]);
        }
        s.advance_window(1.0);
        assert!(s.is_eligible(2));
        assert_eq!(s.outlier_tree().item_count(2), 11.0);
    }

    #[test]
    fn missing_inlier_combination_is_flagged() {
        let mut s = summarizer(0.2, 0.1);
        for _ in 0..10 {
            s.observe(Class::Outlier, &[1]);
        }
        for _ in 0..100 {
            s.observe(Class::Inlier, &[2, 3]);
        }
        s.advance_window(1.0);
        // 2 and 3 become eligible only now; their inlier pairing was never stored.
        for _ in 0..20 {
            s.observe(Class::Outlier, &[2, 3]);
        }
        s.advance_window(1.0);
        for _ in 0..10 {
            s.observe(Class::Outlier, &[2, 3]);
        }
        let out = s.emit();
        let pair = out.records.iter().find(|r| r.items == vec![2, 3]).expect("pair reported");
        assert_eq!(pair.ai, 0.0);
        assert!(pair.flags.contains(&RecordFlag::LowerConfidenceCount));
    }
}
