//! Finite (di)graphs with optional node labels, edge labels and exact
//! rational edge weights.

mod edge_level;
mod enumerate;
mod families;
mod iso;
mod json;

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::error::{Error, Result};
use crate::linalg::Rational;

pub use edge_level::{edge_level_transform, EdgeLevelGraph, TokenOrigin};
pub use enumerate::{
    canonical_form, enumerate_connected_graphs, enumerate_connected_graphs_with_cap,
    for_each_connected_graph, tree_canonical_string, CanonicalForm, GraphClass,
    DEFAULT_ENUMERATION_CAP,
};
pub use families::{csl_graph, er_stitched, er_stitched_with_mode, CslGraph, StitchMode};
pub use iso::{are_isomorphic, are_isomorphic_with_cap, DEFAULT_ISOMORPHISM_CAP};
pub use json::{format_rational, parse_rational, GraphJson};

/// An edge key. Undirected graphs always store `(min, max)`.
pub type Edge = (usize, usize);

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    directed: bool,
    edges: BTreeSet<Edge>,
    out_adj: Vec<Vec<usize>>,
    in_adj: Vec<Vec<usize>>,
    node_labels: Option<Vec<u32>>,
    edge_weights: Option<BTreeMap<Edge, Rational>>,
    edge_labels: Option<BTreeMap<Edge, u32>>,
}

impl Graph {
    /// An undirected graph on `n` nodes without edges.
    pub fn new(n: usize) -> Self {
        Self::with_direction(n, false)
    }

    pub fn new_directed(n: usize) -> Self {
        Self::with_direction(n, true)
    }

    fn with_direction(n: usize, directed: bool) -> Self {
        Graph {
            n,
            directed,
            edges: BTreeSet::new(),
            out_adj: vec![Vec::new(); n],
            in_adj: vec![Vec::new(); n],
            node_labels: None,
            edge_weights: None,
            edge_labels: None,
        }
    }

    pub fn from_edges(n: usize, edges: &[Edge]) -> Result<Self> {
        let mut g = Graph::new(n);
        for &(u, v) in edges {
            g.add_edge(u, v)?;
        }
        Ok(g)
    }

    pub fn path(n: usize) -> Self {
        let edges: Vec<Edge> = (1..n).map(|i| (i - 1, i)).collect();
        Graph::from_edges(n, &edges).expect("path edges are valid")
    }

    pub fn cycle(n: usize) -> Self {
        assert!(n >= 3, "a simple cycle needs at least 3 nodes");
        let mut g = Graph::path(n);
        g.add_edge(n - 1, 0).expect("cycle edge is valid");
        g
    }

    pub fn complete(n: usize) -> Self {
        let mut g = Graph::new(n);
        for u in 0..n {
            for v in u + 1..n {
                g.add_edge(u, v).expect("complete graph edge is valid");
            }
        }
        g
    }

    /// Star with one center (node 0) and `leaves` leaves.
    pub fn star(leaves: usize) -> Self {
        let edges: Vec<Edge> = (1..=leaves).map(|i| (0, i)).collect();
        Graph::from_edges(leaves + 1, &edges).expect("star edges are valid")
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn is_directed(&self) -> bool {
        self.directed
    }

    /// Key under which `(u, v)` is stored.
    pub fn edge_key(&self, u: usize, v: usize) -> Edge {
        if self.directed || u <= v {
            (u, v)
        } else {
            (v, u)
        }
    }

    fn check_node(&self, v: usize) -> Result<()> {
        if v < self.n {
            Ok(())
        } else {
            Err(Error::NodeOutOfRange { node: v, n: self.n })
        }
    }

    /// Inserts an edge. Returns `false` when the edge was already present.
    pub fn add_edge(&mut self, u: usize, v: usize) -> Result<bool> {
        self.check_node(u)?;
        self.check_node(v)?;
        if u == v {
            return Err(Error::SelfLoop(u));
        }
        let key = self.edge_key(u, v);
        if !self.edges.insert(key) {
            return Ok(false);
        }
        insert_sorted(&mut self.out_adj[u], v);
        if self.directed {
            insert_sorted(&mut self.in_adj[v], u);
        } else {
            insert_sorted(&mut self.out_adj[v], u);
        }
        Ok(true)
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        u < self.n && v < self.n && self.edges.contains(&self.edge_key(u, v))
    }

    /// Edges in canonical (sorted key) order.
    pub fn edges(&self) -> impl Iterator<Item = Edge> + '_ {
        self.edges.iter().copied()
    }

    pub fn edge_list(&self) -> Vec<Edge> {
        self.edges.iter().copied().collect()
    }

    /// Map from edge key to its position in [`Graph::edge_list`].
    pub fn edge_index(&self) -> BTreeMap<Edge, usize> {
        self.edges.iter().enumerate().map(|(i, &e)| (e, i)).collect()
    }

    /// Neighbors (out-neighbors for directed graphs), sorted ascending.
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.out_adj[v]
    }

    /// In-neighbors; equal to [`Graph::neighbors`] for undirected graphs.
    pub fn in_neighbors(&self, v: usize) -> &[usize] {
        if self.directed {
            &self.in_adj[v]
        } else {
            &self.out_adj[v]
        }
    }

    pub fn degree(&self, v: usize) -> usize {
        self.out_adj[v].len()
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.n).map(|v| self.degree(v)).collect()
    }

    /// Node label, `0` when the graph is unlabeled.
    pub fn node_label(&self, v: usize) -> u32 {
        self.node_labels.as_ref().map_or(0, |l| l[v])
    }

    pub fn node_labels(&self) -> Option<&[u32]> {
        self.node_labels.as_deref()
    }

    pub fn set_node_labels(&mut self, labels: Vec<u32>) -> Result<()> {
        if labels.len() != self.n {
            return Err(Error::Shape(format!(
                "{} node labels for {} nodes",
                labels.len(),
                self.n
            )));
        }
        self.node_labels = Some(labels);
        Ok(())
    }

    pub fn edge_weight(&self, u: usize, v: usize) -> Option<&Rational> {
        self.edge_weights.as_ref()?.get(&self.edge_key(u, v))
    }

    pub fn edge_weights(&self) -> Option<&BTreeMap<Edge, Rational>> {
        self.edge_weights.as_ref()
    }

    pub fn set_edge_weight(&mut self, u: usize, v: usize, w: Rational) -> Result<()> {
        let key = self.edge_key(u, v);
        if !self.edges.contains(&key) {
            return Err(Error::UnknownEdge(u, v));
        }
        self.edge_weights
            .get_or_insert_with(BTreeMap::new)
            .insert(key, w);
        Ok(())
    }

    pub fn edge_label(&self, u: usize, v: usize) -> Option<u32> {
        self.edge_labels
            .as_ref()?
            .get(&self.edge_key(u, v))
            .copied()
    }

    pub fn edge_labels(&self) -> Option<&BTreeMap<Edge, u32>> {
        self.edge_labels.as_ref()
    }

    pub fn set_edge_label(&mut self, u: usize, v: usize, label: u32) -> Result<()> {
        let key = self.edge_key(u, v);
        if !self.edges.contains(&key) {
            return Err(Error::UnknownEdge(u, v));
        }
        self.edge_labels
            .get_or_insert_with(BTreeMap::new)
            .insert(key, label);
        Ok(())
    }

    /// Weakly connected components, each sorted, ordered by smallest node.
    pub fn connected_components(&self) -> Vec<Vec<usize>> {
        let mut seen = vec![false; self.n];
        let mut comps = Vec::new();
        for start in 0..self.n {
            if seen[start] {
                continue;
            }
            seen[start] = true;
            let mut comp = vec![start];
            let mut queue = VecDeque::from([start]);
            while let Some(u) = queue.pop_front() {
                let nbrs = self.out_adj[u].iter().chain(self.in_neighbors(u));
                for &w in nbrs {
                    if !seen[w] {
                        seen[w] = true;
                        comp.push(w);
                        queue.push_back(w);
                    }
                }
            }
            comp.sort_unstable();
            comps.push(comp);
        }
        comps
    }

    pub fn is_connected(&self) -> bool {
        self.n <= 1 || self.connected_components().len() == 1
    }

    /// Hop distances from `src` following edge direction; `None` when unreachable.
    pub fn bfs_shortest_paths(&self, src: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.n];
        dist[src] = Some(0);
        let mut queue = VecDeque::from([src]);
        while let Some(u) = queue.pop_front() {
            let du = dist[u].expect("queued nodes are reached");
            for &w in &self.out_adj[u] {
                if dist[w].is_none() {
                    dist[w] = Some(du + 1);
                    queue.push_back(w);
                }
            }
        }
        dist
    }

    /// Relabels node `v` as `perm[v]`, carrying labels and weights along.
    pub fn permuted(&self, perm: &[usize]) -> Result<Graph> {
        if perm.len() != self.n || !is_permutation(perm) {
            return Err(Error::InvalidParameter(
                "relabeling must be a permutation of the nodes".into(),
            ));
        }
        let mut g = Graph::with_direction(self.n, self.directed);
        for &(u, v) in &self.edges {
            g.add_edge(perm[u], perm[v])?;
        }
        if let Some(labels) = &self.node_labels {
            let mut out = vec![0; self.n];
            for v in 0..self.n {
                out[perm[v]] = labels[v];
            }
            g.node_labels = Some(out);
        }
        if let Some(ws) = &self.edge_weights {
            for (&(u, v), w) in ws {
                g.set_edge_weight(perm[u], perm[v], w.clone())?;
            }
        }
        if let Some(ls) = &self.edge_labels {
            for (&(u, v), &l) in ls {
                g.set_edge_label(perm[u], perm[v], l)?;
            }
        }
        Ok(g)
    }

    /// Copy of the graph with one edge removed (labels and weights of the
    /// remaining edges are kept).
    pub fn without_edge(&self, u: usize, v: usize) -> Result<Graph> {
        let key = self.edge_key(u, v);
        if !self.edges.contains(&key) {
            return Err(Error::UnknownEdge(u, v));
        }
        let mut g = self.clone();
        g.edges.remove(&key);
        remove_sorted(&mut g.out_adj[key.0], key.1);
        if self.directed {
            remove_sorted(&mut g.in_adj[key.1], key.0);
        } else {
            remove_sorted(&mut g.out_adj[key.1], key.0);
        }
        if let Some(ws) = g.edge_weights.as_mut() {
            ws.remove(&key);
        }
        if let Some(ls) = g.edge_labels.as_mut() {
            ls.remove(&key);
        }
        Ok(g)
    }

    pub(crate) fn require_undirected(&self) -> Result<()> {
        if self.directed {
            Err(Error::DirectedInput)
        } else {
            Ok(())
        }
    }
}

fn insert_sorted(list: &mut Vec<usize>, x: usize) {
    if let Err(pos) = list.binary_search(&x) {
        list.insert(pos, x);
    }
}

fn remove_sorted(list: &mut Vec<usize>, x: usize) {
    if let Ok(pos) = list.binary_search(&x) {
        list.remove(pos);
    }
}

pub(crate) fn is_permutation(perm: &[usize]) -> bool {
    let mut seen = vec![false; perm.len()];
    for &p in perm {
        if p >= perm.len() || seen[p] {
            return false;
        }
        seen[p] = true;
    }
    true
}
