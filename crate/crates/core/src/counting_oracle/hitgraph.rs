//! Trie cache of target-reaching paths and their latest count estimates.

use crate::error::{Error, Result};
use crate::mc_execution::PathDirectives;
use crate::target_model::Edge;

pub type PathId = usize;

/// Cached estimate for one path.
#[derive(Debug, Clone, PartialEq)]
pub struct PathEntry {
    pub path: PathDirectives,
    /// Estimated fraction of the counted region that reaches the target
    /// along this path.
    pub density: f64,
    /// Times the path has been selected, starting at 1 on insertion.
    pub selections: u64,
    pub log2_count: f64,
}

#[derive(Debug, Clone, Default)]
struct TrieNode {
    children: Vec<(Edge, usize)>,
    path: Option<PathId>,
}

/// Paths sharing a prefix share trie nodes. Payloads are indexed by
/// [`PathId`] in insertion order.
#[derive(Debug, Clone)]
pub struct HitGraph {
    target: Edge,
    nodes: Vec<TrieNode>,
    entries: Vec<PathEntry>,
}

impl HitGraph {
    pub fn new(target: Edge) -> Self {
        HitGraph { target, nodes: vec![TrieNode::default()], entries: Vec::new() }
    }

    /// Trie nodes excluding the root.
    pub fn node_count(&self) -> usize {
        self.nodes.len() - 1
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[PathEntry] {
        &self.entries
    }

    pub fn entry(&self, id: PathId) -> &PathEntry {
        &self.entries[id]
    }

    fn walk(&self, edges: &[Edge]) -> Option<usize> {
        let mut node = 0;
        for e in edges {
            node = self.nodes[node].children.iter().find(|(ce, _)| ce == e)?.1;
        }
        Some(node)
    }

    pub fn lookup(&self, path: &PathDirectives) -> Option<PathId> {
        self.walk(path.edges()).and_then(|n| self.nodes[n].path)
    }

    /// Inserts a path with its initial estimate and a selection count of 1.
    /// Re-inserting a known path returns its existing id unchanged.
    pub fn insert(&mut self, path: &PathDirectives, density: f64, log2_count: f64) -> Result<PathId> {
        if !path.contains(self.target) {
            return Err(Error::InvalidParameter("hit graph paths must contain the target edge".into()));
        }
        let mut node = 0;
        for &e in path.edges() {
            node = match self.nodes[node].children.iter().find(|(ce, _)| *ce == e) {
                Some(&(_, child)) => child,
                None => {
                    let child = self.nodes.len();
                    self.nodes.push(TrieNode::default());
                    self.nodes[node].children.push((e, child));
                    child
                }
            };
        }
        if let Some(id) = self.nodes[node].path {
            return Ok(id);
        }
        let id = self.entries.len();
        self.nodes[node].path = Some(id);
        self.entries.push(PathEntry { path: path.clone(), density, selections: 1, log2_count });
        Ok(id)
    }

    /// Records a fresh estimate and one more selection.
    pub fn update(&mut self, id: PathId, density: f64, log2_count: f64) {
        let e = &mut self.entries[id];
        e.density = density;
        e.log2_count = log2_count;
        e.selections += 1;
    }

    /// UCB score `density + sqrt(ln t / selections)`.
    pub fn score(&self, id: PathId, t: u64) -> f64 {
        let e = &self.entries[id];
        e.density + ((t.max(1) as f64).ln() / e.selections as f64).sqrt()
    }
}

/// Path with the largest UCB score at query index `t`; ties go to the path
/// inserted first.
pub fn select_path(hitgraph: &HitGraph, t: u64) -> Result<PathId> {
    let mut best: Option<(PathId, f64)> = None;
    for id in 0..hitgraph.len() {
        let s = hitgraph.score(id, t);
        if best.is_none_or(|(_, b)| s > b) {
            best = Some((id, s));
        }
    }
    best.map(|(id, _)| id).ok_or(Error::NoPaths)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(edges: &[(usize, bool)]) -> PathDirectives {
        PathDirectives::from_edges_unchecked(edges.iter().map(|&(b, d)| Edge::new(b, d)).collect())
    }

    const T: Edge = Edge { block: 9, dir: true };

    #[test]
    fn shared_prefix_shares_nodes() {
        let mut g = HitGraph::new(T);
        let a = path(&[(0, true), (1, false), (2, true), (9, true)]);
        let b = path(&[(0, true), (1, false), (3, true), (9, true)]);
        g.insert(&a, 0.1, 0.0).unwrap();
        assert_eq!(g.node_count(), 4);
        g.insert(&b, 0.1, 0.0).unwrap();
        // Common prefix of length 2 is shared; each path adds its 2-edge tail.
        assert_eq!(g.node_count(), 4 + 2);
        assert_eq!(g.lookup(&a), Some(0));
        assert_eq!(g.lookup(&b), Some(1));
        assert_eq!(g.lookup(&path(&[(0, true)])), None);
    }

    #[test]
    fn reinsert_returns_existing() {
        let mut g = HitGraph::new(T);
        let a = path(&[(0, true), (9, true)]);
        assert_eq!(g.insert(&a, 0.5, 0.0).unwrap(), 0);
        assert_eq!(g.insert(&a, 0.9, 1.0).unwrap(), 0);
        assert_eq!(g.entry(0).density, 0.5);
        assert_eq!(g.len(), 1);
    }

    #[test]
    fn rejects_paths_missing_target() {
        let mut g = HitGraph::new(T);
        assert!(g.insert(&path(&[(0, true)]), 0.5, 0.0).is_err());
    }

    #[test]
    fn select_examples() {
        let mut g = HitGraph::new(T);
        assert!(matches!(select_path(&g, 1), Err(Error::NoPaths)));
        g.insert(&path(&[(0, true), (9, true)]), 0.9, 0.0).unwrap();
        assert_eq!(select_path(&g, 1).unwrap(), 0);
        assert_eq!(select_path(&g, 1000).unwrap(), 0);

        g.insert(&path(&[(0, false), (9, true)]), 0.1, 0.0).unwrap();
        g.entries[0].selections = 10;
        g.entries[1].selections = 10;
        assert_eq!(select_path(&g, 20).unwrap(), 0);

        g.entries[0].density = 0.5;
        g.entries[0].selections = 100;
        g.entries[1].density = 0.4;
        g.entries[1].selections = 1;
        // 0.5 + sqrt(ln 101 / 100) ~= 0.715 < 0.4 + sqrt(ln 101) ~= 2.548
        assert_eq!(select_path(&g, 101).unwrap(), 1);
    }

    #[test]
    fn ties_break_by_insertion_order() {
        let mut g = HitGraph::new(T);
        g.insert(&path(&[(1, true), (9, true)]), 0.3, 0.0).unwrap();
        g.insert(&path(&[(2, true), (9, true)]), 0.3, 0.0).unwrap();
        assert_eq!(select_path(&g, 7).unwrap(), 0);
    }
}
