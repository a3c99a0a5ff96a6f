use std::collections::HashSet;

use super::Graph;
use crate::error::{Error, Result};

pub const DEFAULT_ENUMERATION_CAP: usize = 9;

/// Largest graph the bitmask canonizer accepts.
const MAX_CANON_NODES: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GraphClass {
    Connected,
    Trees,
}

/// Canonical form of an undirected node-labeled graph: node labels and the
/// upper-triangle adjacency bits (column order `(0,1), (0,2), (1,2), (0,3), ...`)
/// under the lexicographically smallest labeling found by the search.
/// Edge labels and weights are ignored.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CanonicalForm {
    pub n: usize,
    pub labels: Vec<u32>,
    bits: Vec<u64>,
}

impl CanonicalForm {
    /// Rebuilds the canonically labeled graph.
    pub fn to_graph(&self) -> Graph {
        let mut g = Graph::new(self.n);
        let mut idx = 0;
        for j in 1..self.n {
            for i in 0..j {
                if self.bits[idx / 64] >> (63 - idx % 64) & 1 == 1 {
                    g.add_edge(i, j).expect("canonical bits index valid pairs");
                }
                idx += 1;
            }
        }
        if self.labels.iter().any(|&l| l != 0) {
            g.set_node_labels(self.labels.clone())
                .expect("one label per node");
        }
        g
    }
}

/// Canonical form by individualization and refinement: every leaf of the
/// search tree (a discrete, refinement-stable ordering) is scored by its
/// adjacency string and the lexicographic minimum is kept. Because cell order
/// is derived from refinement signatures only, the result is invariant under
/// relabeling.
pub fn canonical_form(g: &Graph) -> Result<CanonicalForm> {
    g.require_undirected()?;
    if g.n() > MAX_CANON_NODES {
        return Err(Error::SizeCap {
            n: g.n(),
            cap: MAX_CANON_NODES,
        });
    }
    let adj: Vec<u64> = (0..g.n())
        .map(|v| g.neighbors(v).iter().fold(0u64, |m, &w| m | 1 << w))
        .collect();
    let labels: Vec<u32> = (0..g.n()).map(|v| g.node_label(v)).collect();
    Ok(canon_masks(&adj, &labels))
}

fn canon_masks(adj: &[u64], labels: &[u32]) -> CanonicalForm {
    let n = adj.len();
    let mut distinct: Vec<u32> = labels.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    let colors: Vec<usize> = labels
        .iter()
        .map(|l| distinct.binary_search(l).expect("label present"))
        .collect();
    let colors = refine(adj, colors);
    let mut best: Option<(Vec<u64>, Vec<usize>)> = None;
    search(adj, colors, &mut best);
    let (bits, order) = best.unwrap_or_default();
    let mut sorted_labels = Vec::with_capacity(n);
    for &v in &order {
        sorted_labels.push(labels[v]);
    }
    CanonicalForm {
        n,
        labels: sorted_labels,
        bits,
    }
}

/// Equitable refinement of an ordered partition. Colors are ranks of
/// sorted signatures, so they never depend on node numbering.
fn refine(adj: &[u64], mut colors: Vec<usize>) -> Vec<usize> {
    let n = adj.len();
    let mut classes = count_classes(&colors);
    loop {
        let sigs: Vec<(usize, Vec<usize>)> = (0..n)
            .map(|v| {
                let mut nb: Vec<usize> = (0..n)
                    .filter(|&w| adj[v] >> w & 1 == 1)
                    .map(|w| colors[w])
                    .collect();
                nb.sort_unstable();
                (colors[v], nb)
            })
            .collect();
        let mut keys: Vec<&(usize, Vec<usize>)> = sigs.iter().collect();
        keys.sort();
        keys.dedup();
        let next: Vec<usize> = sigs
            .iter()
            .map(|s| keys.binary_search(&s).expect("signature present"))
            .collect();
        let count = keys.len();
        colors = next;
        if count == classes {
            return colors;
        }
        classes = count;
    }
}

fn count_classes(colors: &[usize]) -> usize {
    let mut c = colors.to_vec();
    c.sort_unstable();
    c.dedup();
    c.len()
}

fn search(adj: &[u64], colors: Vec<usize>, best: &mut Option<(Vec<u64>, Vec<usize>)>) {
    let n = adj.len();
    // The first non-singleton cell (lowest color) is the target cell.
    let mut size = vec![0usize; n];
    for &c in &colors {
        size[c] += 1;
    }
    let target = (0..n).find(|&c| size[c] > 1);
    let Some(target) = target else {
        let mut order = vec![0usize; n];
        for v in 0..n {
            order[colors[v]] = v;
        }
        let bits = leaf_bits(adj, &order);
        if best.as_ref().map_or(true, |(b, _)| bits < *b) {
            *best = Some((bits, order));
        }
        return;
    };
    for v in 0..n {
        if colors[v] != target {
            continue;
        }
        // Individualize v: it sorts before the rest of its cell.
        let split: Vec<usize> = (0..n)
            .map(|u| 2 * colors[u] + usize::from(colors[u] == target && u != v))
            .collect();
        let split = rank(&split);
        search(adj, refine(adj, split), best);
    }
}

fn rank(keys: &[usize]) -> Vec<usize> {
    let mut distinct = keys.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    keys.iter()
        .map(|k| distinct.binary_search(k).expect("key present"))
        .collect()
}

fn leaf_bits(adj: &[u64], order: &[usize]) -> Vec<u64> {
    let n = order.len();
    let total = n * n.saturating_sub(1) / 2;
    let mut bits = vec![0u64; total.div_ceil(64)];
    let mut idx = 0;
    for j in 1..n {
        for i in 0..j {
            if adj[order[i]] >> order[j] & 1 == 1 {
                bits[idx / 64] |= 1 << (idx % 64);
            }
            idx += 1;
        }
    }
    // Compare as a bit string: most significant position first.
    bits.iter_mut().for_each(|w| *w = w.reverse_bits());
    bits
}

/// AHU encoding of a tree rooted at its center (the smaller encoding of the
/// two rootings when the tree is bicentral).
pub fn tree_canonical_string(g: &Graph) -> Result<String> {
    g.require_undirected()?;
    let n = g.n();
    if n == 0 {
        return Ok(String::new());
    }
    if !g.is_connected() || g.num_edges() + 1 != n {
        return Err(Error::Precondition("input is not a tree".into()));
    }
    let mut deg = g.degrees();
    let mut layer: Vec<usize> = (0..n).filter(|&v| deg[v] <= 1).collect();
    let mut remaining = n;
    while remaining > 2 {
        remaining -= layer.len();
        let mut next = Vec::new();
        for &leaf in &layer {
            for &w in g.neighbors(leaf) {
                deg[w] -= 1;
                if deg[w] == 1 {
                    next.push(w);
                }
            }
        }
        layer = next;
    }
    Ok(layer
        .iter()
        .map(|&c| ahu(g, c, usize::MAX))
        .min()
        .expect("a tree has a center"))
}

fn ahu(g: &Graph, v: usize, parent: usize) -> String {
    let mut kids: Vec<String> = g
        .neighbors(v)
        .iter()
        .filter(|&&w| w != parent)
        .map(|&w| ahu(g, w, v))
        .collect();
    kids.sort();
    format!("({})", kids.concat())
}

/// One representative per isomorphism class of connected graphs (or trees)
/// on `n` nodes, in generation order.
pub fn enumerate_connected_graphs(n: usize, class: GraphClass) -> Result<Vec<Graph>> {
    enumerate_connected_graphs_with_cap(n, class, DEFAULT_ENUMERATION_CAP)
}

pub fn enumerate_connected_graphs_with_cap(
    n: usize,
    class: GraphClass,
    cap: usize,
) -> Result<Vec<Graph>> {
    let mut out = Vec::new();
    for_each_connected_graph(n, class, cap, |g| {
        out.push(g);
        true
    })?;
    Ok(out)
}

/// Streams representatives to `visit` without keeping the last level in
/// memory. Returning `false` from `visit` stops the enumeration.
pub fn for_each_connected_graph<F>(n: usize, class: GraphClass, cap: usize, mut visit: F) -> Result<()>
where
    F: FnMut(Graph) -> bool,
{
    if n > cap || n > MAX_CANON_NODES {
        return Err(Error::SizeCap { n, cap });
    }
    if n == 0 {
        return Ok(());
    }
    // Every connected graph on m nodes arises from a connected graph on
    // m - 1 nodes by adding a node with a nonempty neighborhood: delete a
    // non-cut vertex (e.g. a leaf of a spanning tree).
    let mut level: Vec<Vec<u64>> = vec![vec![0]];
    for m in 2..=n {
        let last = m == n;
        let mut seen: HashSet<CanonicalForm> = HashSet::new();
        let mut next: Vec<Vec<u64>> = Vec::new();
        let zero = vec![0u32; m];
        for base in &level {
            let subsets: Box<dyn Iterator<Item = u64>> = match class {
                GraphClass::Connected => Box::new(1..(1u64 << (m - 1))),
                GraphClass::Trees => Box::new((0..m - 1).map(|i| 1u64 << i)),
            };
            for s in subsets {
                let mut adj = base.clone();
                adj.push(s);
                for (i, row) in adj.iter_mut().enumerate().take(m - 1) {
                    if s >> i & 1 == 1 {
                        *row |= 1 << (m - 1);
                    }
                }
                let cf = canon_masks(&adj, &zero);
                if seen.contains(&cf) {
                    continue;
                }
                if last {
                    let g = cf.to_graph();
                    seen.insert(cf);
                    if !visit(g) {
                        return Ok(());
                    }
                } else {
                    seen.insert(cf);
                    next.push(adj);
                }
            }
        }
        level = next;
    }
    if n == 1 {
        visit(Graph::new(1));
    }
    Ok(())
}
