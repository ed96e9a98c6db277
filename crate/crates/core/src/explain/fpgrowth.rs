//! Weighted FPGrowth over a first-child / next-sibling prefix tree.

use std::collections::HashMap;

use crate::point::AttrId;

const NONE: u32 = u32::MAX;

/// Flat storage for item sets: sorted, deduplicated ids per transaction.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Transactions {
    items: Vec<AttrId>,
    ends: Vec<usize>,
}

impl Transactions {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a transaction; `items` must already be sorted and deduplicated.
    pub fn push_sorted(&mut self, items: &[AttrId]) {
        debug_assert!(items.windows(2).all(|w| w[0] < w[1]));
        self.items.extend_from_slice(items);
        self.ends.push(self.items.len());
    }

    pub fn push(&mut self, items: &[AttrId]) {
        let start = self.items.len();
        self.items.extend_from_slice(items);
        let tail = &mut self.items[start..];
        tail.sort_unstable();
        let mut w = 0;
        for r in 0..tail.len() {
            if r == 0 || tail[r] != tail[w - 1] {
                tail[w] = tail[r];
                w += 1;
            }
        }
        self.items.truncate(start + w);
        self.ends.push(self.items.len());
    }

    pub fn len(&self) -> usize {
        self.ends.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ends.is_empty()
    }

    pub fn get(&self, i: usize) -> &[AttrId] {
        let start = if i == 0 { 0 } else { self.ends[i - 1] };
        &self.items[start..self.ends[i]]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[AttrId]> + Clone + '_ {
        (0..self.len()).map(move |i| self.get(i))
    }

    /// Largest item id present, if any.
    pub fn max_item(&self) -> Option<AttrId> {
        self.items.iter().copied().max()
    }
}

impl<'a> FromIterator<&'a [AttrId]> for Transactions {
    fn from_iter<I: IntoIterator<Item = &'a [AttrId]>>(iter: I) -> Self {
        let mut t = Transactions::new();
        for items in iter {
            t.push(items);
        }
        t
    }
}

/// Work counters for comparing mining strategies.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MiningStats {
    pub trees_built: u64,
    pub nodes_created: u64,
    pub itemsets_emitted: u64,
}

#[derive(Debug, Clone, Copy)]
struct Node {
    rank: u32,
    count: f64,
    parent: u32,
    first_child: u32,
    next_sibling: u32,
    next_same: u32,
}

/// Prefix tree over item ranks (0 = most frequent).
struct FpTree {
    nodes: Vec<Node>,
    /// Per rank: first node in the header chain and the rank's total count.
    heads: Vec<u32>,
    totals: Vec<f64>,
    root_children: Vec<u32>,
}

impl FpTree {
    fn new(n_ranks: usize) -> Self {
        Self {
            nodes: vec![Node {
                rank: NONE,
                count: 0.0,
                parent: NONE,
                first_child: NONE,
                next_sibling: NONE,
                next_same: NONE,
            }],
            heads: vec![NONE; n_ranks],
            totals: vec![0.0; n_ranks],
            root_children: vec![NONE; n_ranks],
        }
    }

    /// Inserts a path of strictly increasing ranks.
    fn insert(&mut self, ranks: &[u32], weight: f64, stats: &mut MiningStats) {
        let mut cur = 0u32;
        for (depth, &rank) in ranks.iter().enumerate() {
            self.totals[rank as usize] += weight;
            let found = if depth == 0 {
                self.root_children[rank as usize]
            } else {
                let mut c = self.nodes[cur as usize].first_child;
                while c != NONE && self.nodes[c as usize].rank != rank {
                    c = self.nodes[c as usize].next_sibling;
                }
                c
            };
            cur = if found != NONE {
                self.nodes[found as usize].count += weight;
                found
            } else {
                let id = self.nodes.len() as u32;
                let parent = &mut self.nodes[cur as usize];
                let sibling = parent.first_child;
                parent.first_child = id;
                self.nodes.push(Node {
                    rank,
                    count: weight,
                    parent: cur,
                    first_child: NONE,
                    next_sibling: sibling,
                    next_same: self.heads[rank as usize],
                });
                self.heads[rank as usize] = id;
                if depth == 0 {
                    self.root_children[rank as usize] = id;
                }
                stats.nodes_created += 1;
                id
            };
        }
    }
}

/// Frequent itemsets of weighted transactions: every itemset whose total
/// weight is at least `min_count`, with its exact weight. Itemsets come
/// back sorted by id.
pub fn fpgrowth_weighted<'a, I>(transactions: I, min_count: f64) -> (Vec<(Vec<AttrId>, f64)>, MiningStats)
where
    I: IntoIterator<Item = (&'a [AttrId], f64)> + Clone,
{
    let mut stats = MiningStats::default();
    let mut freq: HashMap<AttrId, f64> = HashMap::new();
    for (items, w) in transactions.clone() {
        for &i in items {
            *freq.entry(i).or_default() += w;
        }
    }
    let mut frequent: Vec<(AttrId, f64)> = freq.into_iter().filter(|&(_, c)| c >= min_count).collect();
    if frequent.is_empty() {
        return (Vec::new(), stats);
    }
    frequent.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let rank_of: HashMap<AttrId, u32> = frequent.iter().enumerate().map(|(r, &(i, _))| (i, r as u32)).collect();
    let items_by_rank: Vec<AttrId> = frequent.iter().map(|&(i, _)| i).collect();

    let mut tree = FpTree::new(frequent.len());
    stats.trees_built += 1;
    let mut path = Vec::new();
    for (items, w) in transactions {
        path.clear();
        path.extend(items.iter().filter_map(|i| rank_of.get(i).copied()));
        if path.is_empty() {
            continue;
        }
        path.sort_unstable();
        tree.insert(&path, w, &mut stats);
    }

    let mut out = Vec::new();
    let mut suffix = Vec::new();
    mine(&tree, min_count, &mut suffix, &mut out, &mut stats);
    let result = out
        .into_iter()
        .map(|(ranks, c)| {
            let mut ids: Vec<AttrId> = ranks.iter().map(|&r| items_by_rank[r as usize]).collect();
            ids.sort_unstable();
            (ids, c)
        })
        .collect();
    (result, stats)
}

/// Unit-weight convenience wrapper.
pub fn fpgrowth(transactions: &Transactions, min_count: f64) -> Vec<(Vec<AttrId>, f64)> {
    fpgrowth_with_stats(transactions, min_count).0
}

pub fn fpgrowth_with_stats(transactions: &Transactions, min_count: f64) -> (Vec<(Vec<AttrId>, f64)>, MiningStats) {
    fpgrowth_weighted(transactions.iter().map(|t| (t, 1.0)), min_count)
}

fn mine(
    tree: &FpTree,
    min_count: f64,
    suffix: &mut Vec<u32>,
    out: &mut Vec<(Vec<u32>, f64)>,
    stats: &mut MiningStats,
) {
    for rank in (0..tree.heads.len()).rev() {
        let total = tree.totals[rank];
        if total < min_count || tree.heads[rank] == NONE {
            continue;
        }
        suffix.push(rank as u32);
        out.push((suffix.clone(), total));
        stats.itemsets_emitted += 1;

        // Conditional pattern base: prefix paths ending above each node of `rank`.
        let mut base: Vec<(Vec<u32>, f64)> = Vec::new();
        let mut cond_totals: HashMap<u32, f64> = HashMap::new();
        let mut node = tree.heads[rank];
        while node != NONE {
            let n = &tree.nodes[node as usize];
            let mut prefix = Vec::new();
            let mut p = n.parent;
            while p != 0 {
                let pn = &tree.nodes[p as usize];
                prefix.push(pn.rank);
                *cond_totals.entry(pn.rank).or_default() += n.count;
                p = pn.parent;
            }
            if !prefix.is_empty() {
                base.push((prefix, n.count));
            }
            node = n.next_same;
        }
        let mut keep: Vec<u32> = cond_totals
            .iter()
            .filter(|&(_, &c)| c >= min_count)
            .map(|(&r, _)| r)
            .collect();
        if !keep.is_empty() {
            keep.sort_unstable();
            // Ranks in the conditional tree are positions in `keep`, which
            // preserves the parent ordering.
            let remap: HashMap<u32, u32> = keep.iter().enumerate().map(|(i, &r)| (r, i as u32)).collect();
            let mut cond = FpTree::new(keep.len());
            stats.trees_built += 1;
            let mut path = Vec::new();
            for (prefix, w) in &base {
                path.clear();
                path.extend(prefix.iter().filter_map(|r| remap.get(r).copied()));
                if path.is_empty() {
                    continue;
                }
                path.sort_unstable();
                cond.insert(&path, *w, stats);
            }
            let start = out.len();
            let mut inner = Vec::new();
            mine(&cond, min_count, &mut inner, out, stats);
            // Translate conditional ranks back and attach the suffix.
            for (ranks, _) in &mut out[start..] {
                for r in ranks.iter_mut() {
                    *r = keep[*r as usize];
                }
                ranks.extend_from_slice(suffix);
            }
        }
        suffix.pop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::BTreeMap;

    fn tx(sets: &[&[AttrId]]) -> Transactions {
        sets.iter().copied().collect()
    }

    fn as_map(v: Vec<(Vec<AttrId>, f64)>) -> BTreeMap<Vec<AttrId>, f64> {
        v.into_iter().collect()
    }

    fn brute(t: &Transactions, min_count: f64) -> BTreeMap<Vec<AttrId>, f64> {
        let mut all: BTreeMap<Vec<AttrId>, f64> = BTreeMap::new();
        for items in t.iter() {
            let n = items.len();
            for mask in 1u32..(1 << n) {
                let subset: Vec<AttrId> = (0..n).filter(|b| mask & (1 << b) != 0).map(|b| items[b]).collect();
                *all.entry(subset).or_default() += 1.0;
            }
        }
        all.retain(|_, c| *c >= min_count);
        all
    }

    #[test]
    fn small_example() {
        let t = tx(&[&[0, 1], &[0, 1], &[0, 2]]);
        let got = as_map(fpgrowth(&t, 2.0));
        let expected: BTreeMap<Vec<AttrId>, f64> =
            [(vec![0], 3.0), (vec![1], 2.0), (vec![0, 1], 2.0)].into_iter().collect();
        assert_eq!(got, expected);
        assert!(fpgrowth(&t, 4.0).is_empty());
        assert_eq!(fpgrowth(&tx(&[&[5]]), 1.0), vec![(vec![5], 1.0)]);
    }

    #[test]
    fn transactions_sort_and_dedup() {
        let mut t = Transactions::new();
        t.push(&[3, 1, 3, 2]);
        t.push(&[]);
        t.push(&[9]);
        assert_eq!(t.get(0), &[1, 2, 3]);
        assert_eq!(t.get(1), &[] as &[AttrId]);
        assert_eq!(t.get(2), &[9]);
        assert_eq!(t.max_item(), Some(9));
    }

    #[test]
    fn weighted_counts() {
        let a: &[AttrId] = &[1, 2];
        let b: &[AttrId] = &[1];
        let (got, _) = fpgrowth_weighted(vec![(a, 0.5), (b, 2.25)], 0.5);
        let got = as_map(got);
        assert_eq!(got[&vec![1]], 2.75);
        assert_eq!(got[&vec![1, 2]], 0.5);
    }

    proptest! {
        #[test]
        fn matches_brute_force(
            sets in prop::collection::vec(prop::collection::btree_set(0u32..8, 0..6), 1..200),
            min in 1u32..20,
        ) {
            let t: Transactions = sets.iter().map(|s| s.iter().copied().collect::<Vec<_>>()).collect::<Vec<_>>().iter().map(|v| v.as_slice()).collect();
            let got = as_map(fpgrowth(&t, min as f64));
            prop_assert_eq!(got, brute(&t, min as f64));
        }
    }
}
