use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use super::risk::{confidence_interval, risk_ratio_unchecked};
use crate::point::AttrId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub enum RecordFlag {
    /// A count is zero, so the interval is undefined.
    CiUndefined,
    /// The inlier count was not tracked and is reported as 0; the true
    /// value may be as large as the inlier sketch's carry weight.
    LowerConfidenceCount,
}

/// One attribute combination with its contingency counts.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplanationRecord {
    /// Sorted attribute ids.
    pub items: Vec<AttrId>,
    pub ao: f64,
    pub ai: f64,
    pub bo: f64,
    pub bi: f64,
    pub outlier_support: f64,
    pub risk_ratio: f64,
    pub ci: Option<(f64, f64)>,
    pub num_tests: u64,
    pub flags: Vec<RecordFlag>,
}

impl ExplanationRecord {
    /// Builds a record from the itemset counts and class totals.
    pub fn from_counts(items: Vec<AttrId>, ao: f64, ai: f64, outliers: f64, inliers: f64) -> Self {
        let bo = (outliers - ao).max(0.0);
        let bi = (inliers - ai).max(0.0);
        Self {
            items,
            ao,
            ai,
            bo,
            bi,
            outlier_support: if outliers > 0.0 { ao / outliers } else { 0.0 },
            risk_ratio: risk_ratio_unchecked(ao, ai, bo, bi),
            ci: None,
            num_tests: 0,
            flags: Vec::new(),
        }
    }

    pub fn flag(&mut self, f: RecordFlag) {
        if !self.flags.contains(&f) {
            self.flags.push(f);
            self.flags.sort();
        }
    }

    /// Sets the interval at significance `p` with Bonferroni over `k` tests.
    pub fn attach_confidence(&mut self, p: f64, k: u64) {
        self.num_tests = k.max(1);
        self.ci = confidence_interval(self.ao, self.ai, self.bo, self.bi, p, self.num_tests);
        if self.ci.is_none() {
            self.flag(RecordFlag::CiUndefined);
        }
    }
}

/// Support descending, then risk ratio descending (+∞ first), then item ids.
pub fn rank_order(a: &ExplanationRecord, b: &ExplanationRecord) -> Ordering {
    b.outlier_support
        .total_cmp(&a.outlier_support)
        .then(b.risk_ratio.total_cmp(&a.risk_ratio))
        .then_with(|| a.items.cmp(&b.items))
}

pub fn rank_explanations(mut records: Vec<ExplanationRecord>) -> Vec<ExplanationRecord> {
    records.sort_by(rank_order);
    records
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(items: Vec<AttrId>, support: f64, rr: f64) -> ExplanationRecord {
        ExplanationRecord {
            items,
            outlier_support: support,
            risk_ratio: rr,
            ..ExplanationRecord::from_counts(vec![], 0.0, 0.0, 1.0, 1.0)
        }
    }

    #[test]
    fn support_then_ratio() {
        let r = rank_explanations(vec![rec(vec![1], 0.5, 3.0), rec(vec![2], 0.9, 3.0)]);
        assert_eq!(r[0].items, vec![2]);
        let r = rank_explanations(vec![rec(vec![1], 0.5, 3.0), rec(vec![2], 0.5, 10.0)]);
        assert_eq!(r[0].risk_ratio, 10.0);
        let r = rank_explanations(vec![rec(vec![1], 0.5, 30.0), rec(vec![2], 0.5, f64::INFINITY)]);
        assert!(r[0].risk_ratio.is_infinite());
        let r = rank_explanations(vec![rec(vec![2], 0.5, 3.0), rec(vec![1, 5], 0.5, 3.0)]);
        assert_eq!(r[0].items, vec![1, 5]);
    }

    #[test]
    fn ci_flags() {
        let mut r = ExplanationRecord::from_counts(vec![1], 5.0, 0.0, 10.0, 100.0);
        r.attach_confidence(0.05, 3);
        assert!(r.ci.is_none());
        assert_eq!(r.flags, vec![RecordFlag::CiUndefined]);
        assert_eq!(r.num_tests, 3);
    }

    proptest! {
        #[test]
        fn ranking_is_permutation_invariant(
            v in prop::collection::vec((prop::collection::vec(0u32..5, 1..3), 0u8..4, 0u8..4), 1..20),
            seed in any::<u64>(),
        ) {
            let records: Vec<_> = v.into_iter().map(|(mut items, s, r)| {
                items.sort_unstable();
                items.dedup();
                rec(items, s as f64 / 4.0, if r == 3 { f64::INFINITY } else { r as f64 })
            }).collect();
            let mut shuffled = records.clone();
            use rand::{seq::SliceRandom, SeedableRng};
            shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
            prop_assert_eq!(rank_explanations(records), rank_explanations(shuffled));
        }
    }
}
