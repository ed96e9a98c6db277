//! One-shot explanation over labeled point sets.

use std::collections::{BTreeSet, HashMap};

use log::warn;
use serde::{Deserialize, Serialize};

use super::fpgrowth::{fpgrowth_weighted, MiningStats, Transactions};
use super::record::{rank_explanations, ExplanationRecord};
use super::risk::risk_ratio_unchecked;
use crate::error::{Error, Result};
use crate::operator::Explainer;
use crate::point::{AttrId, LabeledPoint};

/// Candidate cap for [`brute_force_explain`].
pub const BRUTE_FORCE_LIMIT: u64 = 1 << 20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ExplainParams {
    pub min_support: f64,
    pub min_risk_ratio: f64,
    /// Also require every sub-combination to meet the ratio threshold.
    pub strict_subsets: bool,
}

impl ExplainParams {
    pub fn new(min_support: f64, min_risk_ratio: f64) -> Self {
        Self {
            min_support,
            min_risk_ratio,
            strict_subsets: false,
        }
    }
}

/// Work counters; the inlier-side fields show how much of the larger class
/// each strategy touched.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ExplainStats {
    pub distinct_outlier_items: u64,
    pub single_survivors: u64,
    pub combination_candidates: u64,
    /// Itemset count updates or expansions performed over inliers.
    pub inlier_itemsets_examined: u64,
    pub inlier_trees_built: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExplainOutput {
    /// Ranked, without intervals.
    pub records: Vec<ExplanationRecord>,
    /// Number of risk ratios computed.
    pub num_tests: u64,
    pub stats: ExplainStats,
}

impl ExplainOutput {
    fn empty() -> Self {
        Self {
            records: Vec::new(),
            num_tests: 0,
            stats: ExplainStats::default(),
        }
    }

    /// Attaches Bonferroni-corrected intervals over `num_tests`.
    pub fn with_confidence(mut self, significance: f64) -> Self {
        let k = self.num_tests.max(1);
        for r in &mut self.records {
            r.attach_confidence(significance, k);
        }
        self
    }
}

fn dense_len(a: &Transactions, b: &Transactions) -> usize {
    a.max_item().max(b.max_item()).map_or(0, |m| m as usize + 1)
}

/// Single-item outlier and inlier counts, one pass over each class.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeCounts {
    pub ao: Vec<f64>,
    pub ai: Vec<f64>,
    pub outlier_total: f64,
    pub inlier_total: f64,
}

impl AttributeCounts {
    pub fn get(&self, item: AttrId) -> (f64, f64) {
        let i = item as usize;
        (
            self.ao.get(i).copied().unwrap_or(0.0),
            self.ai.get(i).copied().unwrap_or(0.0),
        )
    }
}

pub fn count_single_attributes(outliers: &Transactions, inliers: &Transactions) -> AttributeCounts {
    let n = dense_len(outliers, inliers);
    let mut ao = vec![0.0; n];
    let mut ai = vec![0.0; n];
    for t in outliers.iter() {
        for &i in t {
            ao[i as usize] += 1.0;
        }
    }
    for t in inliers.iter() {
        for &i in t {
            ai[i as usize] += 1.0;
        }
    }
    AttributeCounts {
        ao,
        ai,
        outlier_total: outliers.len() as f64,
        inlier_total: inliers.len() as f64,
    }
}

/// Prefix trie of candidate itemsets (ids ascending) for one counting pass.
struct CandidateTrie {
    children: Vec<Vec<(AttrId, u32)>>,
    counts: Vec<f64>,
}

impl CandidateTrie {
    fn new() -> Self {
        Self {
            children: vec![Vec::new()],
            counts: vec![0.0],
        }
    }

    fn insert(&mut self, items: &[AttrId]) -> u32 {
        let mut node = 0usize;
        for &i in items {
            let kids = &self.children[node];
            node = match kids.binary_search_by_key(&i, |&(k, _)| k) {
                Ok(pos) => kids[pos].1 as usize,
                Err(pos) => {
                    let id = self.children.len() as u32;
                    self.children[node].insert(pos, (i, id));
                    self.children.push(Vec::new());
                    self.counts.push(0.0);
                    id as usize
                }
            };
        }
        node as u32
    }

    /// Adds `w` to every stored prefix that is a subset of `t`.
    fn count(&mut self, t: &[AttrId], w: f64) -> u64 {
        let mut visits = 0;
        self.walk(0, t, w, &mut visits);
        visits
    }

    fn walk(&mut self, node: usize, t: &[AttrId], w: f64, visits: &mut u64) {
        for (j, &item) in t.iter().enumerate() {
            if let Ok(pos) = self.children[node].binary_search_by_key(&item, |&(k, _)| k) {
                let child = self.children[node][pos].1 as usize;
                self.counts[child] += w;
                *visits += 1;
                self.walk(child, &t[j + 1..], w, visits);
            }
        }
    }
}

/// Counts each candidate in one pass over weighted transactions, looking
/// only at items flagged in `keep`. Transactions must be sorted by id.
pub(crate) fn count_candidates<'a>(
    candidates: &[Vec<AttrId>],
    transactions: impl IntoIterator<Item = (&'a [AttrId], f64)>,
    keep: &[bool],
    stats: &mut ExplainStats,
) -> Vec<f64> {
    if candidates.is_empty() {
        return Vec::new();
    }
    let mut trie = CandidateTrie::new();
    let nodes: Vec<u32> = candidates.iter().map(|c| trie.insert(c)).collect();
    let mut filtered = Vec::new();
    for (t, w) in transactions {
        filtered.clear();
        filtered.extend(t.iter().copied().filter(|&i| keep.get(i as usize).copied().unwrap_or(false)));
        if filtered.len() >= 2 {
            stats.inlier_itemsets_examined += trie.count(&filtered, w);
        }
    }
    nodes.iter().map(|&n| trie.counts[n as usize]).collect()
}

/// Frequent combinations (size >= 2) of the `keep` items among weighted
/// outlier transactions.
pub(crate) fn mine_combinations<'a>(
    outliers: impl IntoIterator<Item = (&'a [AttrId], f64)>,
    keep: &[bool],
    min_count: f64,
) -> Vec<(Vec<AttrId>, f64)> {
    let mut restricted = Vec::new();
    let mut owned = Transactions::new();
    let mut weights = Vec::new();
    for (t, w) in outliers {
        restricted.clear();
        restricted.extend(t.iter().copied().filter(|&i| keep.get(i as usize).copied().unwrap_or(false)));
        if restricted.len() >= 2 {
            owned.push_sorted(&restricted);
            weights.push(w);
        }
    }
    let (mined, _) = fpgrowth_weighted(owned.iter().zip(weights.iter().copied()), min_count);
    mined.into_iter().filter(|(s, _)| s.len() >= 2).collect()
}

/// Applies the ratio filter (and the strict subset rule) to mined
/// combinations with their inlier counts.
pub(crate) fn filter_combinations(
    combos: Vec<(Vec<AttrId>, f64)>,
    inlier_counts: Vec<f64>,
    n_o: f64,
    n_i: f64,
    params: &ExplainParams,
) -> Vec<ExplanationRecord> {
    let r = params.min_risk_ratio;
    let mut ratios = HashMap::new();
    let mut passing = Vec::new();
    for ((items, ao), ai) in combos.into_iter().zip(inlier_counts) {
        let rec = ExplanationRecord::from_counts(items, ao, ai, n_o, n_i);
        if params.strict_subsets {
            ratios.insert(rec.items.clone(), rec.risk_ratio);
        }
        if rec.risk_ratio >= r {
            passing.push(rec);
        }
    }
    if params.strict_subsets {
        passing.retain(|rec| proper_subsets_pass(&rec.items, &ratios, r));
    }
    passing
}

fn proper_subsets_pass(
    items: &[AttrId],
    ratios: &HashMap<Vec<AttrId>, f64>,
    r: f64,
) -> bool {
    let n = items.len();
    if n <= 2 {
        return true;
    }
    (1u64..(1 << n) - 1).all(|mask| {
        if mask.count_ones() < 2 {
            return true;
        }
        let sub: Vec<AttrId> = (0..n).filter(|b| mask & (1 << b) != 0).map(|b| items[b]).collect();
        ratios.get(&sub).is_some_and(|&rr| rr >= r)
    })
}

/// Three stages: single attributes by support and ratio; FPGrowth over the
/// outliers restricted to the survivors; one inlier pass counting the
/// mined combinations, filtered by ratio.
pub fn explain_batch(outliers: &Transactions, inliers: &Transactions, params: &ExplainParams) -> ExplainOutput {
    if outliers.is_empty() {
        warn!("no outliers to explain");
        return ExplainOutput::empty();
    }
    let mut stats = ExplainStats::default();
    let mut num_tests = 0u64;
    let n_o = outliers.len() as f64;
    let n_i = inliers.len() as f64;
    let min_count = params.min_support * n_o;
    let r = params.min_risk_ratio;

    let counts = count_single_attributes(outliers, inliers);
    let mut keep = vec![false; counts.ao.len()];
    let mut records = Vec::new();
    for (item, &ao) in counts.ao.iter().enumerate() {
        if ao > 0.0 {
            stats.distinct_outlier_items += 1;
        }
        if ao > 0.0 && ao >= min_count {
            num_tests += 1;
            let ai = counts.ai[item];
            if risk_ratio_unchecked(ao, ai, n_o - ao, n_i - ai) >= r {
                keep[item] = true;
                records.push(ExplanationRecord::from_counts(vec![item as AttrId], ao, ai, n_o, n_i));
            }
        }
    }
    stats.single_survivors = records.len() as u64;

    if records.len() >= 2 {
        let combos = mine_combinations(outliers.iter().map(|t| (t, 1.0)), &keep, min_count);
        stats.combination_candidates = combos.len() as u64;
        num_tests += combos.len() as u64;
        let sets: Vec<Vec<AttrId>> = combos.iter().map(|(s, _)| s.clone()).collect();
        let inlier_counts = count_candidates(&sets, inliers.iter().map(|t| (t, 1.0)), &keep, &mut stats);
        records.extend(filter_combinations(combos, inlier_counts, n_o, n_i, params));
    }

    ExplainOutput {
        records: rank_explanations(records),
        num_tests,
        stats,
    }
}

fn is_subset(small: &[AttrId], big: &[AttrId]) -> bool {
    let mut it = big.iter();
    small.iter().all(|s| it.by_ref().any(|b| b == s))
}

/// Enumerates every combination occurring in at least one outlier and
/// applies the same semantics as [`explain_batch`]. Refuses instances with
/// more than 2^20 candidate combinations.
pub fn brute_force_explain(
    outliers: &Transactions,
    inliers: &Transactions,
    params: &ExplainParams,
) -> Result<Vec<ExplanationRecord>> {
    let mut budget = 0u64;
    for t in outliers.iter() {
        budget = budget.saturating_add(1u64.checked_shl(t.len() as u32).unwrap_or(u64::MAX));
        if budget > BRUTE_FORCE_LIMIT {
            return Err(Error::GuardExceeded {
                candidates: budget,
                limit: BRUTE_FORCE_LIMIT,
            });
        }
    }
    let mut candidates = BTreeSet::new();
    for t in outliers.iter() {
        let n = t.len();
        for mask in 1u64..(1 << n) {
            candidates.insert((0..n).filter(|b| mask & (1 << b) != 0).map(|b| t[b]).collect::<Vec<_>>());
        }
    }
    let n_o = outliers.len() as f64;
    let n_i = inliers.len() as f64;
    let count = |set: &Transactions, c: &[AttrId]| set.iter().filter(|t| is_subset(c, t)).count() as f64;
    let mut all: HashMap<Vec<AttrId>, ExplanationRecord> = HashMap::new();
    for c in candidates {
        let rec = ExplanationRecord::from_counts(c.clone(), count(outliers, &c), count(inliers, &c), n_o, n_i);
        all.insert(c, rec);
    }
    let s_count = params.min_support * n_o;
    let r = params.min_risk_ratio;
    let passes = |rec: &ExplanationRecord| rec.ao >= s_count && rec.risk_ratio >= r;
    let mut out = Vec::new();
    for rec in all.values() {
        if !passes(rec) {
            continue;
        }
        let singles_ok = rec.items.iter().all(|&i| passes(&all[&vec![i]]));
        let subsets_ok = !params.strict_subsets || {
            let n = rec.items.len();
            (1u64..(1 << n)).all(|mask| {
                let sub: Vec<AttrId> = (0..n).filter(|b| mask & (1 << b) != 0).map(|b| rec.items[b]).collect();
                all[&sub].risk_ratio >= r
            })
        };
        if singles_ok && subsets_ok {
            out.push(rec.clone());
        }
    }
    Ok(rank_explanations(out))
}

/// Unoptimized baseline: mine outliers and inliers separately, each at
/// minimum support within its own class, then join. Inlier counts for
/// combinations the inlier mining did not produce come from a fallback scan.
pub fn two_pass_explain(outliers: &Transactions, inliers: &Transactions, params: &ExplainParams) -> ExplainOutput {
    if outliers.is_empty() {
        return ExplainOutput::empty();
    }
    let mut stats = ExplainStats::default();
    let n_o = outliers.len() as f64;
    let n_i = inliers.len() as f64;
    let r = params.min_risk_ratio;

    let (outlier_sets, _) = fpgrowth_weighted(outliers.iter().map(|t| (t, 1.0)), params.min_support * n_o);
    let (inlier_sets, inlier_mining): (_, MiningStats) =
        fpgrowth_weighted(inliers.iter().map(|t| (t, 1.0)), params.min_support * n_i);
    stats.inlier_itemsets_examined = inlier_mining.itemsets_emitted + inlier_mining.nodes_created;
    stats.inlier_trees_built = inlier_mining.trees_built;
    let inlier_index: HashMap<Vec<AttrId>, f64> = inlier_sets.into_iter().collect();

    let missing: Vec<Vec<AttrId>> = outlier_sets
        .iter()
        .filter(|(s, _)| !inlier_index.contains_key(s))
        .map(|(s, _)| s.clone())
        .collect();
    let mut fallback = HashMap::new();
    if !missing.is_empty() {
        let keep_len = dense_len(outliers, inliers);
        let mut keep = vec![false; keep_len];
        for s in &missing {
            for &i in s {
                keep[i as usize] = true;
            }
        }
        let (singles, multi): (Vec<_>, Vec<_>) = missing.into_iter().partition(|s| s.len() == 1);
        let counts = count_single_attributes(&Transactions::new(), inliers);
        for s in singles {
            let c = counts.get(s[0]).1;
            fallback.insert(s, c);
        }
        let found = count_candidates(&multi, inliers.iter().map(|t| (t, 1.0)), &keep, &mut stats);
        fallback.extend(multi.into_iter().zip(found));
    }

    let mut num_tests = 0;
    let mut all: HashMap<Vec<AttrId>, ExplanationRecord> = HashMap::new();
    for (items, ao) in outlier_sets {
        let ai = inlier_index.get(&items).or_else(|| fallback.get(&items)).copied().unwrap_or(0.0);
        num_tests += 1;
        all.insert(items.clone(), ExplanationRecord::from_counts(items, ao, ai, n_o, n_i));
    }
    let ratios: HashMap<Vec<AttrId>, f64> = all.iter().map(|(k, v)| (k.clone(), v.risk_ratio)).collect();
    let records = all
        .values()
        .filter(|rec| rec.risk_ratio >= r)
        .filter(|rec| rec.items.iter().all(|&i| ratios[&vec![i]] >= r))
        .filter(|rec| !params.strict_subsets || proper_subsets_pass(&rec.items, &ratios, r))
        .cloned()
        .collect();
    stats.single_survivors = all.keys().filter(|k| k.len() == 1 && ratios[*k] >= r).count() as u64;
    ExplainOutput {
        records: rank_explanations(records),
        num_tests,
        stats,
    }
}

/// Buffers labeled points and explains them at the end of the stream.
pub struct BatchExplainer {
    params: ExplainParams,
    significance: f64,
    outliers: Transactions,
    inliers: Transactions,
    last: Option<ExplainOutput>,
}

impl BatchExplainer {
    pub fn new(params: ExplainParams, significance: f64) -> Self {
        Self {
            params,
            significance,
            outliers: Transactions::new(),
            inliers: Transactions::new(),
            last: None,
        }
    }

    pub fn outlier_count(&self) -> usize {
        self.outliers.len()
    }

    pub fn inlier_count(&self) -> usize {
        self.inliers.len()
    }

    /// Output of the most recent [`Explainer::explain`] call.
    pub fn last_output(&self) -> Option<&ExplainOutput> {
        self.last.as_ref()
    }
}

impl Explainer for BatchExplainer {
    fn consume(&mut self, batch: &[LabeledPoint]) -> Result<()> {
        for lp in batch {
            let items = lp.point.items();
            if lp.label.is_outlier() {
                self.outliers.push_sorted(&items);
            } else {
                self.inliers.push_sorted(&items);
            }
        }
        Ok(())
    }

    fn explain(&mut self) -> Result<Vec<ExplanationRecord>> {
        let out = explain_batch(&self.outliers, &self.inliers, &self.params).with_confidence(self.significance);
        let records = out.records.clone();
        self.last = Some(out);
        Ok(records)
    }
}
