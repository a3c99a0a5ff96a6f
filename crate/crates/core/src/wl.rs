//! 1-WL and generalized-distance WL color refinement.
//!
//! Colors are produced by an interning dictionary that hands out fresh ids
//! in order of first appearance. When two graphs are compared, they are
//! refined jointly with one shared dictionary per round, which is what makes
//! color ids comparable across the pair.

use std::collections::HashMap;
use std::sync::Arc;

use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::graph::{
    are_isomorphic, for_each_connected_graph, Graph, GraphClass, DEFAULT_ENUMERATION_CAP,
};
use crate::linalg::{random_walk_matrix, Rational};

/// Which refinement rule produced a partition.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    OneWl,
    GdWl,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::OneWl => "1-wl",
            Algorithm::GdWl => "gd-wl",
        }
    }
}

/// A total map from ordered token pairs to rational vectors.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DistanceMatrix {
    n: usize,
    entries: Vec<Vec<Rational>>,
}

impl DistanceMatrix {
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> Vec<Rational>) -> Self {
        let mut entries = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                entries.push(f(i, j));
            }
        }
        DistanceMatrix { n, entries }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> &[Rational] {
        &self.entries[i * self.n + j]
    }

    /// Appends a `[cls]` token whose distance to every token (itself
    /// included) is one more than the largest entry, coordinate-wise.
    pub fn with_cls_token(&self) -> DistanceMatrix {
        let width = self.entries.iter().map(Vec::len).max().unwrap_or(1).max(1);
        let mut top = vec![Rational::zero(); width];
        for e in &self.entries {
            for (t, x) in top.iter_mut().zip(e) {
                if x > t {
                    *t = x.clone();
                }
            }
        }
        let cls: Vec<Rational> = top.into_iter().map(|x| x + Rational::one()).collect();
        let n = self.n;
        DistanceMatrix::from_fn(n + 1, |i, j| {
            if i == n || j == n {
                cls.clone()
            } else {
                self.get(i, j).to_vec()
            }
        })
    }
}

fn int(x: usize) -> Rational {
    Rational::from_integer(x.into())
}

/// 2 on the diagonal, 1 on edges, 0 elsewhere.
pub fn distance_adjacency(g: &Graph) -> DistanceMatrix {
    DistanceMatrix::from_fn(g.n(), |i, j| {
        vec![int(if i == j {
            2
        } else if g.has_edge(i, j) {
            1
        } else {
            0
        })]
    })
}

/// Hop counts; unreachable pairs get the sentinel `n + 1`.
pub fn distance_spd(g: &Graph) -> DistanceMatrix {
    let n = g.n();
    let rows: Vec<Vec<Option<usize>>> = (0..n).map(|s| g.bfs_shortest_paths(s)).collect();
    DistanceMatrix::from_fn(n, |i, j| vec![int(rows[i][j].unwrap_or(n + 1))])
}

/// What a refinement ran on; kept so partitions can be replayed jointly.
#[derive(Clone, Debug)]
pub enum RefinementInput {
    OneWl { graph: Graph },
    GdWl { labels: Vec<u32>, distance: DistanceMatrix },
}

impl RefinementInput {
    pub fn algorithm(&self) -> Algorithm {
        match self {
            RefinementInput::OneWl { .. } => Algorithm::OneWl,
            RefinementInput::GdWl { .. } => Algorithm::GdWl,
        }
    }

    fn len(&self) -> usize {
        match self {
            RefinementInput::OneWl { graph } => graph.n(),
            RefinementInput::GdWl { labels, .. } => labels.len(),
        }
    }

    fn labels(&self) -> Vec<u32> {
        match self {
            RefinementInput::OneWl { graph } => (0..graph.n()).map(|v| graph.node_label(v)).collect(),
            RefinementInput::GdWl { labels, .. } => labels.clone(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct ColorPartition {
    /// Stable color of every token, ids contiguous from 0.
    pub colors: Vec<usize>,
    pub num_colors: usize,
    /// Colors before the first round and after every round that changed
    /// the partition; the last entry equals `colors`.
    pub history: Vec<Vec<usize>>,
    input: Arc<RefinementInput>,
}

impl ColorPartition {
    pub fn algorithm(&self) -> Algorithm {
        self.input.algorithm()
    }

    pub fn input(&self) -> &RefinementInput {
        &self.input
    }

    /// Number of rounds that changed the partition.
    pub fn iterations(&self) -> usize {
        self.history.len() - 1
    }

    /// Class sizes, largest first.
    pub fn class_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.num_colors];
        for &c in &self.colors {
            sizes[c] += 1;
        }
        sizes.sort_unstable_by(|a, b| b.cmp(a));
        sizes
    }
}

pub fn one_wl(g: &Graph, max_iters: usize) -> ColorPartition {
    run_single(RefinementInput::OneWl { graph: g.clone() }, max_iters)
}

pub fn gd_wl(g: &Graph, d: &DistanceMatrix, max_iters: usize) -> Result<ColorPartition> {
    let labels = (0..g.n()).map(|v| g.node_label(v)).collect();
    gd_wl_tokens(labels, d, max_iters)
}

/// GD-WL on bare tokens, e.g. a graph plus a `[cls]` token.
pub fn gd_wl_tokens(labels: Vec<u32>, d: &DistanceMatrix, max_iters: usize) -> Result<ColorPartition> {
    if labels.len() != d.n() {
        return Err(Error::Shape(format!(
            "{} token labels for a {}-token distance matrix",
            labels.len(),
            d.n()
        )));
    }
    Ok(run_single(
        RefinementInput::GdWl {
            labels,
            distance: d.clone(),
        },
        max_iters,
    ))
}

fn run_single(input: RefinementInput, max_iters: usize) -> ColorPartition {
    let input = Arc::new(input);
    let mut histories = refine_jointly(&[input.as_ref()], max_iters);
    let history = histories.pop().expect("one input");
    partition_from(history, input)
}

fn partition_from(history: Vec<Vec<usize>>, input: Arc<RefinementInput>) -> ColorPartition {
    // Renumber so the final colors of this graph alone are contiguous.
    let last = history.last().expect("history starts with the initial colors");
    let mut ids = HashMap::new();
    let colors: Vec<usize> = last
        .iter()
        .map(|c| {
            let len = ids.len();
            *ids.entry(*c).or_insert(len)
        })
        .collect();
    let num_colors = ids.len();
    ColorPartition {
        colors,
        num_colors,
        history,
        input,
    }
}

/// Interns keys to fresh ids in order of first appearance.
struct Interner<K> {
    ids: HashMap<K, usize>,
}

impl<K: std::hash::Hash + Eq> Interner<K> {
    fn new() -> Self {
        Interner { ids: HashMap::new() }
    }

    fn id(&mut self, key: K) -> usize {
        let len = self.ids.len();
        *self.ids.entry(key).or_insert(len)
    }

    fn len(&self) -> usize {
        self.ids.len()
    }
}

/// Refines all inputs with shared per-round dictionaries until the joint
/// partition stops changing (or `max_iters` rounds ran). Returns one color
/// history per input; ids are comparable across inputs round by round.
pub fn refine_jointly(inputs: &[&RefinementInput], max_iters: usize) -> Vec<Vec<Vec<usize>>> {
    let mut label_ids = Interner::new();
    let mut current: Vec<Vec<usize>> = inputs
        .iter()
        .map(|inp| inp.labels().into_iter().map(|l| label_ids.id(l)).collect())
        .collect();

    // Distance vectors become small integers, shared across inputs.
    let mut dist_ids: Interner<Vec<Rational>> = Interner::new();
    let dist: Vec<Option<Vec<usize>>> = inputs
        .iter()
        .map(|inp| match inp {
            RefinementInput::GdWl { distance, .. } => Some(
                distance
                    .entries
                    .iter()
                    .map(|e| dist_ids.id(e.clone()))
                    .collect(),
            ),
            RefinementInput::OneWl { .. } => None,
        })
        .collect();

    let mut histories: Vec<Vec<Vec<usize>>> = current.iter().map(|c| vec![c.clone()]).collect();
    for _ in 0..max_iters {
        let mut sigs: Interner<Signature> = Interner::new();
        let next: Vec<Vec<usize>> = inputs
            .iter()
            .zip(&current)
            .zip(&dist)
            .map(|((inp, colors), d)| {
                (0..inp.len())
                    .map(|v| sigs.id(signature(inp, colors, d.as_deref(), v)))
                    .collect()
            })
            .collect();
        if same_partition(&current, &next, sigs.len()) {
            break;
        }
        for (h, c) in histories.iter_mut().zip(&next) {
            h.push(c.clone());
        }
        current = next;
    }
    histories
}

#[derive(Hash, PartialEq, Eq)]
enum Signature {
    OneWl(usize, Vec<usize>, Vec<usize>),
    GdWl(Vec<(usize, usize)>),
}

fn signature(inp: &RefinementInput, colors: &[usize], dist: Option<&[usize]>, v: usize) -> Signature {
    match inp {
        RefinementInput::OneWl { graph } => {
            let mut outs: Vec<usize> = graph.neighbors(v).iter().map(|&w| colors[w]).collect();
            outs.sort_unstable();
            let mut ins: Vec<usize> = if graph.is_directed() {
                graph.in_neighbors(v).iter().map(|&w| colors[w]).collect()
            } else {
                Vec::new()
            };
            ins.sort_unstable();
            Signature::OneWl(colors[v], outs, ins)
        }
        RefinementInput::GdWl { .. } => {
            let n = colors.len();
            let d = dist.expect("GD-WL inputs carry distance ids");
            let mut pairs: Vec<(usize, usize)> =
                (0..n).map(|w| (d[v * n + w], colors[w])).collect();
            pairs.sort_unstable();
            Signature::GdWl(pairs)
        }
    }
}

/// True when `a` and `b` induce the same equivalence on the union of tokens.
fn same_partition(a: &[Vec<usize>], b: &[Vec<usize>], b_classes: usize) -> bool {
    let mut pairs = HashMap::new();
    let mut a_classes = HashMap::new();
    for (ca, cb) in a.iter().zip(b) {
        for (&x, &y) in ca.iter().zip(cb) {
            pairs.insert((x, y), ());
            a_classes.insert(x, ());
        }
    }
    pairs.len() == a_classes.len() && pairs.len() == b_classes
}

/// Whether the stable color histograms of two partitions differ, after
/// replaying both refinements jointly so their colors are comparable.
pub fn partitions_distinguish(p: &ColorPartition, q: &ColorPartition) -> Result<bool> {
    if p.algorithm() != q.algorithm() {
        return Err(Error::ProvenanceMismatch(p.algorithm().name(), q.algorithm().name()));
    }
    let max_iters = p.input.len() + q.input.len() + 1;
    Ok(histograms_differ(&refine_jointly(&[&p.input, &q.input], max_iters)))
}

fn histograms_differ(histories: &[Vec<Vec<usize>>]) -> bool {
    let mut a = histories[0].last().expect("nonempty history").clone();
    let mut b = histories[1].last().expect("nonempty history").clone();
    a.sort_unstable();
    b.sort_unstable();
    a != b
}

/// 1-WL verdict for a pair of graphs.
pub fn one_wl_distinguishes(g: &Graph, h: &Graph) -> bool {
    let a = RefinementInput::OneWl { graph: g.clone() };
    let b = RefinementInput::OneWl { graph: h.clone() };
    histograms_differ(&refine_jointly(&[&a, &b], g.n() + h.n() + 1))
}

/// GD-WL verdict for a pair of graphs under the given distances.
pub fn gd_wl_distinguishes(
    g: &Graph,
    dg: &DistanceMatrix,
    h: &Graph,
    dh: &DistanceMatrix,
) -> Result<bool> {
    let p = gd_wl(g, dg, g.n() + 1)?;
    let q = gd_wl(h, dh, h.n() + 1)?;
    partitions_distinguish(&p, &q)
}

/// Two connected graphs (or trees) with identical exact RWSE multisets for
/// every walk length up to the cap that 1-WL nevertheless tells apart.
#[derive(Clone, Debug)]
pub struct BlindspotPair {
    pub first: Graph,
    pub second: Graph,
    pub n: usize,
    pub walk_cap: usize,
    /// Graphs examined before the pair was found (or in total).
    pub examined: usize,
}

#[derive(Clone, Debug)]
pub struct BlindspotReport {
    pub found: Option<BlindspotPair>,
    pub examined: usize,
}

/// Exhaustive search over connected graphs (or trees) with 2..=max_n nodes
/// in enumeration order. Candidate pairs are bucketed by a modular
/// fingerprint of the RWSE multiset and then checked exactly.
pub fn search_rwse_blindspot(max_n: usize, walk_cap: usize, trees_only: bool) -> Result<BlindspotReport> {
    search_rwse_blindspot_with_cap(max_n, walk_cap, trees_only, DEFAULT_ENUMERATION_CAP)
}

pub fn search_rwse_blindspot_with_cap(
    max_n: usize,
    walk_cap: usize,
    trees_only: bool,
    cap: usize,
) -> Result<BlindspotReport> {
    if max_n > cap {
        return Err(Error::SizeCap { n: max_n, cap });
    }
    let class = if trees_only {
        GraphClass::Trees
    } else {
        GraphClass::Connected
    };
    let mut examined = 0usize;
    for n in 2..=max_n {
        let mut buckets: HashMap<Vec<Vec<u64>>, Vec<Graph>> = HashMap::new();
        let mut found: Option<(Graph, Graph)> = None;
        let mut failure: Option<Error> = None;
        for_each_connected_graph(n, class, cap, |g| {
            examined += 1;
            let key = modular_rwse_multiset(&g, walk_cap);
            let bucket = buckets.entry(key).or_default();
            for other in bucket.iter() {
                match exact_rwse_equal(other, &g, walk_cap) {
                    Ok(true) => {}
                    Ok(false) => continue,
                    Err(e) => {
                        failure = Some(e);
                        return false;
                    }
                }
                if one_wl_distinguishes(other, &g) {
                    found = Some((other.clone(), g.clone()));
                    return false;
                }
            }
            bucket.push(g);
            true
        })?;
        if let Some(e) = failure {
            return Err(e);
        }
        if let Some((first, second)) = found {
            return Ok(BlindspotReport {
                found: Some(BlindspotPair {
                    first,
                    second,
                    n,
                    walk_cap,
                    examined,
                }),
                examined,
            });
        }
    }
    Ok(BlindspotReport {
        found: None,
        examined,
    })
}

/// Sorted per-node RWSE vectors with entries reduced modulo a large prime
/// (walk probabilities have denominators coprime to it for small graphs).
fn modular_rwse_multiset(g: &Graph, walk_cap: usize) -> Vec<Vec<u64>> {
    const P: u64 = (1 << 61) - 1;
    let mul = |a: u64, b: u64| ((a as u128 * b as u128) % P as u128) as u64;
    let inv = |a: u64| {
        // Fermat inverse.
        let (mut base, mut e, mut acc) = (a % P, P - 2, 1u64);
        while e > 0 {
            if e & 1 == 1 {
                acc = mul(acc, base);
            }
            base = mul(base, base);
            e >>= 1;
        }
        acc
    };
    let n = g.n();
    let mut r = vec![0u64; n * n];
    for v in 0..n {
        let d = g.degree(v) as u64;
        if d == 0 {
            r[v * n + v] = 1;
        }
        for &w in g.neighbors(v) {
            r[v * n + w] = inv(d);
        }
    }
    let mut cur = r.clone();
    let mut rows = vec![Vec::with_capacity(walk_cap); n];
    for t in 1..=walk_cap {
        if t > 1 {
            let mut next = vec![0u64; n * n];
            for i in 0..n {
                for k in 0..n {
                    let a = cur[i * n + k];
                    if a == 0 {
                        continue;
                    }
                    for j in 0..n {
                        let b = r[k * n + j];
                        if b != 0 {
                            next[i * n + j] = (next[i * n + j] + mul(a, b)) % P;
                        }
                    }
                }
            }
            cur = next;
        }
        for (v, row) in rows.iter_mut().enumerate() {
            row.push(cur[v * n + v]);
        }
    }
    rows.sort_unstable();
    rows
}

/// Exact comparison of the RWSE node-vector multisets.
pub fn exact_rwse_equal(g: &Graph, h: &Graph, walk_cap: usize) -> Result<bool> {
    if g.n() != h.n() {
        return Ok(false);
    }
    let vectors = |x: &Graph| -> Result<Vec<Vec<Rational>>> {
        let powers = random_walk_matrix(x)?.powers(walk_cap + 1)?;
        let mut rows: Vec<Vec<Rational>> = (0..x.n())
            .map(|v| (1..=walk_cap).map(|t| powers[t].get(v, v).clone()).collect())
            .collect();
        rows.sort();
        Ok(rows)
    };
    Ok(vectors(g)? == vectors(h)?)
}

/// Sanity check used by the search report: the returned pair must not be
/// isomorphic (1-WL separating them already implies it).
pub fn certify_blindspot(pair: &BlindspotPair) -> Result<bool> {
    Ok(exact_rwse_equal(&pair.first, &pair.second, pair.walk_cap)?
        && one_wl_distinguishes(&pair.first, &pair.second)
        && !are_isomorphic(&pair.first, &pair.second)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::csl_graph;

    #[test]
    fn triangle_vs_path() {
        assert!(one_wl_distinguishes(&Graph::complete(3), &Graph::path(3)));
        let p = one_wl(&Graph::complete(3), 10);
        let q = one_wl(&Graph::path(3), 10);
        assert!(partitions_distinguish(&p, &q).unwrap());
    }

    #[test]
    fn identical_graphs_are_not_distinguished() {
        let g = crate::graph::er_stitched(12, 0.2, 1, 3).unwrap();
        let p = one_wl(&g, 20);
        assert!(!partitions_distinguish(&p, &p).unwrap());
    }

    #[test]
    fn csl_8_pair_defeats_one_wl() {
        let a = csl_graph(8, 2).unwrap().graph;
        let b = csl_graph(8, 3).unwrap().graph;
        assert!(!one_wl_distinguishes(&a, &b));
    }

    #[test]
    fn colors_are_contiguous_and_history_bounded() {
        let g = Graph::path(7);
        let p = one_wl(&g, 100);
        assert_eq!(p.num_colors, 4);
        let mut c = p.colors.clone();
        c.sort_unstable();
        c.dedup();
        assert_eq!(c, (0..4).collect::<Vec<_>>());
        assert!(p.history.len() <= g.n() + 1);
        assert_eq!(p.history.len(), 4);
    }

    #[test]
    fn max_iters_truncates() {
        let p = one_wl(&Graph::path(7), 1);
        assert_eq!(p.iterations(), 1);
        assert_eq!(p.num_colors, 2);
    }

    #[test]
    fn zero_distance_on_complete_graph() {
        let g = Graph::complete(5);
        let d = DistanceMatrix::from_fn(5, |_, _| vec![Rational::zero()]);
        let p = gd_wl(&g, &d, 10).unwrap();
        assert_eq!(p.num_colors, 1);
        assert_eq!(p.iterations(), 0);
    }

    #[test]
    fn distance_conventions() {
        let spd = distance_spd(&Graph::path(3));
        assert_eq!(
            (0..3).map(|j| spd.get(0, j)[0].clone()).collect::<Vec<_>>(),
            vec![int(0), int(1), int(2)]
        );
        let two = distance_spd(&Graph::new(2));
        assert_eq!(two.get(0, 1), &[int(3)]);
        let adj = distance_adjacency(&Graph::path(2));
        assert_eq!(adj.get(0, 0), &[int(2)]);
        assert_eq!(adj.get(0, 1), &[int(1)]);
    }

    #[test]
    fn gd_wl_adjacency_matches_one_wl_per_round() {
        let g = crate::graph::er_stitched(14, 0.15, 1, 11).unwrap();
        let a = one_wl(&g, 100);
        let b = gd_wl(&g, &distance_adjacency(&g), 100).unwrap();
        assert_eq!(a.history.len(), b.history.len());
    }

    #[test]
    fn provenance_is_checked() {
        let g = Graph::path(3);
        let p = one_wl(&g, 5);
        let q = gd_wl(&g, &distance_spd(&g), 5).unwrap();
        assert!(matches!(
            partitions_distinguish(&p, &q),
            Err(Error::ProvenanceMismatch(..))
        ));
    }

    #[test]
    fn cls_token_distance() {
        let d = distance_spd(&Graph::path(3)).with_cls_token();
        assert_eq!(d.n(), 4);
        assert_eq!(d.get(3, 0), &[int(3)]);
        assert_eq!(d.get(1, 3), &[int(3)]);
    }

    #[test]
    fn small_tree_search_finds_nothing() {
        let r = search_rwse_blindspot(5, 5, true).unwrap();
        assert!(r.found.is_none());
        // 1 + 1 + 2 + 3 trees on 2..=5 nodes
        assert_eq!(r.examined, 7);
    }
}
