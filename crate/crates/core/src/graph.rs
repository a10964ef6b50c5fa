//! Directed graphs over `n` nodes, topology predicates and random
//! ground-truth generators.
//!
//! Nodes are `0..n` in memory. The text formats in [`crate::io`] are
//! 1-indexed. Self loops are never stored: autoregressive self terms live
//! on the diagonal of a [`crate::var::VarModel`].

use std::collections::{BTreeSet, VecDeque};

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct DirectedGraph {
    n: usize,
    edges: BTreeSet<(usize, usize)>,
}

impl DirectedGraph {
    /// Edgeless graph on `n` nodes.
    pub fn new(n: usize) -> Self {
        Self {
            n,
            edges: BTreeSet::new(),
        }
    }

    /// Builds a graph from 0-based `(from, to)` pairs. Duplicates collapse.
    pub fn from_edges<I>(n: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut g = Self::new(n);
        for (from, to) in edges {
            g.add_edge(from, to)?;
        }
        Ok(g)
    }

    /// Same as [`from_edges`](Self::from_edges) with 1-based node labels.
    pub fn from_one_based<I>(n: usize, edges: I) -> Result<Self>
    where
        I: IntoIterator<Item = (usize, usize)>,
    {
        let mut g = Self::new(n);
        for (from, to) in edges {
            if from == 0 || to == 0 {
                return Err(Error::NodeOutOfRange { node: 0, n });
            }
            g.add_edge(from - 1, to - 1)?;
        }
        Ok(g)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Edges in lexicographic `(from, to)` order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edges.iter().copied()
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.edges.contains(&(from, to))
    }

    /// Inserts `from -> to`; returns whether the edge was new.
    pub fn add_edge(&mut self, from: usize, to: usize) -> Result<bool> {
        self.check_node(from)?;
        self.check_node(to)?;
        if from == to {
            return Err(Error::SelfLoop(from));
        }
        Ok(self.edges.insert((from, to)))
    }

    pub fn remove_edge(&mut self, from: usize, to: usize) -> bool {
        self.edges.remove(&(from, to))
    }

    pub fn check_node(&self, i: usize) -> Result<()> {
        if i < self.n {
            Ok(())
        } else {
            Err(Error::NodeOutOfRange { node: i, n: self.n })
        }
    }

    pub fn parents(&self, i: usize) -> Vec<usize> {
        self.edges
            .iter()
            .filter(|&&(_, to)| to == i)
            .map(|&(from, _)| from)
            .collect()
    }

    pub fn children(&self, i: usize) -> Vec<usize> {
        self.edges
            .range((i, 0)..(i + 1, 0))
            .map(|&(_, to)| to)
            .collect()
    }

    /// Out-neighbour and in-neighbour lists.
    pub fn adjacency(&self) -> (Vec<Vec<usize>>, Vec<Vec<usize>>) {
        let mut out = vec![Vec::new(); self.n];
        let mut inc = vec![Vec::new(); self.n];
        for &(from, to) in &self.edges {
            out[from].push(to);
            inc[to].push(from);
        }
        (out, inc)
    }

    /// All `j` with a directed path `j -> ... -> i`. `i` itself is included
    /// only when it lies on a cycle.
    pub fn ancestors(&self, i: usize) -> Result<BTreeSet<usize>> {
        self.check_node(i)?;
        let (_, inc) = self.adjacency();
        Ok(reach_from(&inc, i, None))
    }

    /// All `j` with a directed path `i -> ... -> j`.
    pub fn descendants(&self, i: usize) -> Result<BTreeSet<usize>> {
        self.check_node(i)?;
        let (out, _) = self.adjacency();
        Ok(reach_from(&out, i, None))
    }

    /// Kahn's algorithm, smallest ready node first. `None` on a cycle.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let (out, inc) = self.adjacency();
        let mut indeg: Vec<usize> = inc.iter().map(Vec::len).collect();
        let mut ready: BTreeSet<usize> = (0..self.n).filter(|&v| indeg[v] == 0).collect();
        let mut order = Vec::with_capacity(self.n);
        while let Some(v) = ready.pop_first() {
            order.push(v);
            for &w in &out[v] {
                indeg[w] -= 1;
                if indeg[w] == 0 {
                    ready.insert(w);
                }
            }
        }
        (order.len() == self.n).then_some(order)
    }

    pub fn is_dag(&self) -> bool {
        self.topological_order().is_some()
    }

    /// At most one directed path between every ordered pair of nodes.
    ///
    /// Counts paths from every source by dynamic programming over a
    /// topological order, saturating at 2. A cyclic graph always fails.
    pub fn is_strongly_causal(&self) -> bool {
        let Some(order) = self.topological_order() else {
            return false;
        };
        let (out, _) = self.adjacency();
        let mut count = vec![0u8; self.n];
        for (pos, &src) in order.iter().enumerate() {
            count.iter_mut().for_each(|c| *c = 0);
            count[src] = 1;
            for &v in &order[pos..] {
                let c = count[v];
                if c == 0 {
                    continue;
                }
                for &w in &out[v] {
                    count[w] = (count[w] + c).min(2);
                    if count[w] > 1 {
                        return false;
                    }
                }
            }
        }
        true
    }

    /// Nodes `k` (distinct from `i`, `j`) with a path to `i` avoiding `j`
    /// and a path to `j` avoiding `i`.
    pub fn confounders(&self, i: usize, j: usize) -> Result<BTreeSet<usize>> {
        self.check_node(i)?;
        self.check_node(j)?;
        if i == j {
            return Err(Error::SameNode(i));
        }
        let (_, inc) = self.adjacency();
        let to_i = reach_from(&inc, i, Some(j));
        let to_j = reach_from(&inc, j, Some(i));
        Ok(to_i
            .intersection(&to_j)
            .copied()
            .filter(|&k| k != i && k != j)
            .collect())
    }
}

/// Nodes reachable from `start` along `adj` in at least one step, never
/// passing through `blocked`.
fn reach_from(adj: &[Vec<usize>], start: usize, blocked: Option<usize>) -> BTreeSet<usize> {
    let mut seen = vec![false; adj.len()];
    let mut found = BTreeSet::new();
    let mut queue: VecDeque<usize> = adj[start]
        .iter()
        .copied()
        .filter(|&w| Some(w) != blocked)
        .collect();
    while let Some(v) = queue.pop_front() {
        if std::mem::replace(&mut seen[v], true) {
            continue;
        }
        found.insert(v);
        for &w in &adj[v] {
            if !seen[w] && Some(w) != blocked {
                queue.push_back(w);
            }
        }
    }
    found
}

/// Uniformly random labelled tree on `n` nodes (Prüfer decoding), every
/// edge directed from the lower to the higher index.
pub fn random_scg<R: Rng + ?Sized>(n: usize, rng: &mut R) -> DirectedGraph {
    let mut g = DirectedGraph::new(n);
    if n < 2 {
        return g;
    }
    let seq: Vec<usize> = (0..n - 2).map(|_| rng.random_range(0..n)).collect();
    let mut degree = vec![1usize; n];
    for &s in &seq {
        degree[s] += 1;
    }
    let mut leaves: BTreeSet<usize> = (0..n).filter(|&v| degree[v] == 1).collect();
    let link = |a: usize, b: usize, g: &mut DirectedGraph| {
        g.add_edge(a.min(b), a.max(b)).expect("tree edge in range");
    };
    for &s in &seq {
        let leaf = leaves.pop_first().expect("Prüfer decoding always has a leaf");
        link(leaf, s, &mut g);
        degree[s] -= 1;
        if degree[s] == 1 {
            leaves.insert(s);
        }
    }
    let a = leaves.pop_first().expect("two leaves remain");
    let b = leaves.pop_first().expect("two leaves remain");
    link(a, b, &mut g);
    g
}

/// Erdős–Rényi graph with each pair `i < j` joined `i -> j` with
/// probability `q`.
pub fn random_dag<R: Rng + ?Sized>(n: usize, q: f64, rng: &mut R) -> Result<DirectedGraph> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidParameter(format!(
            "edge probability {q} outside [0, 1]"
        )));
    }
    let mut g = DirectedGraph::new(n);
    for i in 0..n {
        for j in i + 1..n {
            if rng.random_bool(q) {
                g.add_edge(i, j)?;
            }
        }
    }
    Ok(g)
}

/// Fixed-capacity bit set over node indices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) struct NodeSet {
    words: Vec<u64>,
}

impl NodeSet {
    pub(crate) fn new(n: usize) -> Self {
        Self {
            words: vec![0; n.div_ceil(64)],
        }
    }

    pub(crate) fn insert(&mut self, i: usize) {
        self.words[i / 64] |= 1 << (i % 64);
    }

    #[cfg(test)]
    pub(crate) fn contains(&self, i: usize) -> bool {
        self.words[i / 64] & (1 << (i % 64)) != 0
    }

    pub(crate) fn union_with(&mut self, other: &NodeSet) {
        for (a, b) in self.words.iter_mut().zip(&other.words) {
            *a |= b;
        }
    }

    pub(crate) fn intersects(&self, other: &NodeSet) -> bool {
        self.words.iter().zip(&other.words).any(|(a, b)| a & b != 0)
    }

    pub(crate) fn iter(&self) -> impl Iterator<Item = usize> + '_ {
        self.words.iter().enumerate().flat_map(|(w, &bits)| {
            (0..64)
                .filter(move |b| bits & (1u64 << b) != 0)
                .map(move |b| w * 64 + b)
        })
    }
}

/// Grows an edge set one edge at a time while keeping it a strongly
/// causal DAG.
///
/// Keeps reflexive ancestor and descendant sets per node. Adding `i -> j`
/// creates exactly one new path `a -> ... -> i -> j -> ... -> b` for every
/// `a` in anc*(i) and `b` in desc*(j); the edge is legal iff none of those
/// pairs is already connected (which also covers `a == b`, a cycle).
#[derive(Clone, Debug)]
pub struct StrongCausalityTracker {
    graph: DirectedGraph,
    anc: Vec<NodeSet>,
    desc: Vec<NodeSet>,
}

impl StrongCausalityTracker {
    pub fn new(n: usize) -> Self {
        let singleton = |i| {
            let mut s = NodeSet::new(n);
            s.insert(i);
            s
        };
        Self {
            graph: DirectedGraph::new(n),
            anc: (0..n).map(singleton).collect(),
            desc: (0..n).map(singleton).collect(),
        }
    }

    /// Whether adding `from -> to` keeps the graph strongly causal.
    pub fn can_add(&self, from: usize, to: usize) -> bool {
        if from == to || self.graph.has_edge(from, to) {
            return false;
        }
        let targets = &self.desc[to];
        !self.anc[from].iter().any(|a| self.desc[a].intersects(targets))
    }

    /// Adds the edge if legal; returns whether it was added.
    pub fn try_add(&mut self, from: usize, to: usize) -> bool {
        if !self.can_add(from, to) {
            return false;
        }
        self.graph
            .add_edge(from, to)
            .expect("tracker nodes are in range");
        let up = self.anc[from].clone();
        let down = self.desc[to].clone();
        for a in up.iter() {
            self.desc[a].union_with(&down);
        }
        for b in down.iter() {
            self.anc[b].union_with(&up);
        }
        true
    }

    pub fn graph(&self) -> &DirectedGraph {
        &self.graph
    }

    pub fn into_graph(self) -> DirectedGraph {
        self.graph
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fig3() -> DirectedGraph {
        DirectedGraph::from_one_based(6, [(1, 3), (3, 4), (2, 4), (3, 5), (4, 6)]).unwrap()
    }

    fn set(v: &[usize]) -> BTreeSet<usize> {
        v.iter().copied().collect()
    }

    #[test]
    fn ancestors_examples() {
        let chain = DirectedGraph::from_edges(3, [(0, 1), (1, 2)]).unwrap();
        assert_eq!(chain.ancestors(2).unwrap(), set(&[0, 1]));
        assert_eq!(fig3().ancestors(5).unwrap(), set(&[0, 1, 2, 3]));
        assert!(DirectedGraph::new(4).ancestors(3).unwrap().is_empty());
        assert!(matches!(
            chain.ancestors(3),
            Err(Error::NodeOutOfRange { node: 3, n: 3 })
        ));
    }

    #[test]
    fn ancestors_include_self_only_on_cycle() {
        let cyc = DirectedGraph::from_edges(3, [(0, 1), (1, 0), (1, 2)]).unwrap();
        assert_eq!(cyc.ancestors(0).unwrap(), set(&[0, 1]));
        assert_eq!(cyc.ancestors(2).unwrap(), set(&[0, 1]));
    }

    #[test]
    fn rejects_self_loops_and_bad_nodes() {
        let mut g = DirectedGraph::new(2);
        assert!(matches!(g.add_edge(1, 1), Err(Error::SelfLoop(1))));
        assert!(g.add_edge(0, 2).is_err());
        assert!(g.add_edge(0, 1).unwrap());
        assert!(!g.add_edge(0, 1).unwrap());
        assert_eq!(g.edge_count(), 1);
    }

    #[test]
    fn dag_examples() {
        assert!(DirectedGraph::from_edges(3, [(0, 1), (1, 2)]).unwrap().is_dag());
        assert!(!DirectedGraph::from_edges(2, [(0, 1), (1, 0)]).unwrap().is_dag());
        assert!(fig3().is_dag());
    }

    #[test]
    fn strong_causality_examples() {
        let diamond = DirectedGraph::from_one_based(4, [(1, 2), (1, 3), (2, 4), (3, 4)]).unwrap();
        assert!(!diamond.is_strongly_causal());
        assert!(fig3().is_strongly_causal());
        // complete bipartite, all edges left -> right
        let n = 4;
        let bip = DirectedGraph::from_edges(
            2 * n,
            (0..n).flat_map(|a| (n..2 * n).map(move |b| (a, b))),
        )
        .unwrap();
        assert!(bip.is_strongly_causal());
        let cyc = DirectedGraph::from_edges(2, [(0, 1), (1, 0)]).unwrap();
        assert!(!cyc.is_strongly_causal());
        // shortcut over a chain
        let tri = DirectedGraph::from_edges(3, [(0, 1), (1, 2), (0, 2)]).unwrap();
        assert!(!tri.is_strongly_causal());
    }

    #[test]
    fn confounder_examples() {
        let fork = DirectedGraph::from_edges(3, [(0, 1), (0, 2)]).unwrap();
        assert_eq!(fork.confounders(1, 2).unwrap(), set(&[0]));
        let chain = DirectedGraph::from_edges(3, [(0, 1), (1, 2)]).unwrap();
        assert!(chain.confounders(1, 2).unwrap().is_empty());
        assert_eq!(fig3().confounders(3, 4).unwrap(), set(&[0, 2]));
        assert!(matches!(fork.confounders(1, 1), Err(Error::SameNode(1))));
    }

    #[test]
    fn random_scg_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(random_scg(1, &mut rng).edge_count(), 0);
        let g = random_scg(50, &mut rng);
        assert_eq!(g.edge_count(), 49);
        assert!(g.is_dag() && g.is_strongly_causal());
        assert!(g.edges().all(|(a, b)| a < b));
        let a = random_scg(30, &mut ChaCha8Rng::seed_from_u64(9));
        let b = random_scg(30, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(a, b);
    }

    #[test]
    fn random_scg_is_uniform_on_small_trees() {
        // Cayley: 3^(3-2) = 3 labelled trees on 3 nodes, each ~1/3.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut counts = std::collections::BTreeMap::new();
        for _ in 0..3000 {
            let g = random_scg(3, &mut rng);
            *counts.entry(g.edges().collect::<Vec<_>>()).or_insert(0) += 1;
        }
        assert_eq!(counts.len(), 3);
        for &c in counts.values() {
            assert!((900..1100).contains(&c), "{counts:?}");
        }
    }

    #[test]
    fn random_dag_edges() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert_eq!(random_dag(10, 0.0, &mut rng).unwrap().edge_count(), 0);
        let full = random_dag(3, 1.0, &mut rng).unwrap();
        assert_eq!(full.edges().collect::<Vec<_>>(), vec![(0, 1), (0, 2), (1, 2)]);
        assert!(random_dag(3, 1.5, &mut rng).is_err());
    }

    #[test]
    fn tracker_matches_fig3_growth() {
        let mut t = StrongCausalityTracker::new(6);
        for (a, b) in fig3().edges() {
            assert!(t.try_add(a, b));
        }
        assert!(!t.can_add(0, 3)); // 1 -> 4 duplicates 1 -> 3 -> 4
        assert!(!t.can_add(5, 0)); // closes a cycle
        assert!(!t.can_add(4, 5)); // 5 -> 6 alongside 3 -> 4 -> 6
        assert!(t.can_add(1, 4)); // 2 -> 5 is new
        assert_eq!(t.graph(), &fig3());
    }

    #[test]
    fn node_set_ops() {
        let mut a = NodeSet::new(130);
        a.insert(3);
        a.insert(129);
        let mut b = NodeSet::new(130);
        b.insert(64);
        assert!(!a.intersects(&b));
        b.union_with(&a);
        assert!(b.contains(129) && b.contains(64) && a.intersects(&b));
        assert_eq!(b.iter().collect::<Vec<_>>(), vec![3, 64, 129]);
    }
}
