use std::collections::HashMap;

use crate::point::AttrId;

const ROOT: u32 = 0;

#[derive(Debug, Clone, PartialEq)]
struct Node {
    item: AttrId,
    /// Weight of every path through this node.
    count: f64,
    /// Weight of paths ending here.
    terminal: f64,
    parent: u32,
    children: Vec<u32>,
}

/// Decayed prefix tree over the currently frequent attributes. Paths are
/// ordered by a rank map (0 = most frequent) that is rebuilt each window.
#[derive(Debug, Clone, PartialEq)]
pub struct MCpsTree {
    nodes: Vec<Node>,
}

impl Default for MCpsTree {
    fn default() -> Self {
        Self::new()
    }
}

impl MCpsTree {
    pub fn new() -> Self {
        Self {
            nodes: vec![Node {
                item: AttrId::MAX,
                count: 0.0,
                terminal: 0.0,
                parent: ROOT,
                children: Vec::new(),
            }],
        }
    }

    /// Adds one weighted path. `items` must already be in rank order.
    pub fn insert(&mut self, items: &[AttrId], w: f64) {
        if items.is_empty() {
            return;
        }
        let mut cur = ROOT;
        for &item in items {
            let found = self.nodes[cur as usize]
                .children
                .iter()
                .copied()
                .find(|&c| self.nodes[c as usize].item == item);
            cur = match found {
                Some(c) => c,
                None => {
                    let id = self.nodes.len() as u32;
                    self.nodes.push(Node {
                        item,
                        count: 0.0,
                        terminal: 0.0,
                        parent: cur,
                        children: Vec::new(),
                    });
                    self.nodes[cur as usize].children.push(id);
                    id
                }
            };
            self.nodes[cur as usize].count += w;
        }
        self.nodes[cur as usize].terminal += w;
    }

    pub fn decay(&mut self, retention: f64) {
        for n in &mut self.nodes[1..] {
            n.count *= retention;
            n.terminal *= retention;
        }
    }

    /// Stored paths with their terminal weights, items in tree order.
    pub fn paths(&self) -> Vec<(Vec<AttrId>, f64)> {
        let mut out = Vec::new();
        for (id, n) in self.nodes.iter().enumerate().skip(1) {
            if n.terminal > 0.0 {
                out.push((self.path_to(id as u32), n.terminal));
            }
        }
        out
    }

    /// Paths with items sorted by id, as the miners expect.
    pub fn sorted_paths(&self) -> Vec<(Vec<AttrId>, f64)> {
        let mut p = self.paths();
        for (items, _) in &mut p {
            items.sort_unstable();
        }
        p
    }

    fn path_to(&self, mut id: u32) -> Vec<AttrId> {
        let mut items = Vec::new();
        while id != ROOT {
            let n = &self.nodes[id as usize];
            items.push(n.item);
            id = n.parent;
        }
        items.reverse();
        items
    }

    /// Rebuilds the tree in the order of `rank`, dropping every item it does
    /// not contain. Paths are read leaf to root and re-inserted.
    pub fn restructure(&mut self, rank: &HashMap<AttrId, u32>) {
        let paths = self.paths();
        *self = Self::new();
        let mut buf = Vec::new();
        for (items, w) in paths {
            buf.clear();
            buf.extend(items.into_iter().filter(|i| rank.contains_key(i)));
            buf.sort_by_key(|i| rank[i]);
            self.insert(&buf, w);
        }
    }

    /// Sum of all path weights.
    pub fn total_mass(&self) -> f64 {
        self.nodes[1..].iter().map(|n| n.terminal).sum()
    }

    /// Total weight of paths containing `item`.
    pub fn item_count(&self, item: AttrId) -> f64 {
        self.nodes[1..].iter().filter(|n| n.item == item).map(|n| n.count).sum()
    }

    pub fn contains(&self, item: AttrId) -> bool {
        self.nodes[1..].iter().any(|n| n.item == item)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.len() == 1
    }

    /// Checks that every path follows `rank` strictly and that each node's
    /// count covers its children plus its own terminal weight.
    pub fn audit(&self, rank: &HashMap<AttrId, u32>) -> Result<(), String> {
        for (id, n) in self.nodes.iter().enumerate().skip(1) {
            let Some(&r) = rank.get(&n.item) else {
                return Err(format!("node {id} holds unranked item {}", n.item));
            };
            if n.parent != ROOT {
                let p = &self.nodes[n.parent as usize];
                if rank.get(&p.item).is_none_or(|&pr| pr >= r) {
                    return Err(format!("node {id} (item {}) is out of rank order under {}", n.item, p.item));
                }
            }
            let below: f64 = n.children.iter().map(|&c| self.nodes[c as usize].count).sum();
            let expected = below + n.terminal;
            if n.count + 1e-9 * n.count.abs().max(1.0) < below || (n.count - expected).abs() > 1e-9 * n.count.abs().max(1.0) {
                return Err(format!("node {id} count {} disagrees with children {below} + terminal {}", n.count, n.terminal));
            }
        }
        Ok(())
    }

    pub(crate) fn hash_into(&self, h: &mut impl std::hash::Hasher) {
        for n in &self.nodes {
            h.write_u32(n.item);
            h.write_u64(n.count.to_bits());
            h.write_u64(n.terminal.to_bits());
            h.write_u32(n.parent);
            for &c in &n.children {
                h.write_u32(c);
            }
        }
    }
}
