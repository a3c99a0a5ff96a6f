//! Classical algorithms producing task targets, each paired with an
//! independent second derivation used for cross-checking.

use std::collections::{BTreeMap, VecDeque};

use num_traits::{Signed, Zero};

use crate::error::{Error, Result};
use crate::graph::{Edge, Graph};
use crate::linalg::Rational;

/// Kruskal over exact weights. Returns one flag per edge of
/// [`Graph::edge_list`]; on a disconnected graph this is a spanning forest.
pub fn kruskal_mst(g: &Graph) -> Result<Vec<bool>> {
    g.require_undirected()?;
    let edges = g.edge_list();
    let mut order: Vec<usize> = (0..edges.len()).collect();
    let weight = |i: usize| -> Result<&Rational> {
        let (u, v) = edges[i];
        g.edge_weight(u, v)
            .ok_or_else(|| Error::Precondition(format!("edge ({u}, {v}) has no weight")))
    };
    for &i in &order {
        weight(i)?;
    }
    order.sort_by(|&a, &b| {
        weight(a)
            .expect("checked")
            .cmp(weight(b).expect("checked"))
            .then(a.cmp(&b))
    });
    let mut dsu = Dsu::new(g.n());
    let mut in_tree = vec![false; edges.len()];
    for i in order {
        let (u, v) = edges[i];
        if dsu.union(u, v) {
            in_tree[i] = true;
        }
    }
    Ok(in_tree)
}

struct Dsu {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl Dsu {
    fn new(n: usize) -> Self {
        Dsu {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, x: usize) -> usize {
        let mut root = x;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut cur = x;
        while self.parent[cur] != root {
            let next = self.parent[cur];
            self.parent[cur] = root;
            cur = next;
        }
        root
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        true
    }
}

/// The selected edges form a spanning forest: acyclic, and they connect
/// exactly the node pairs the graph connects.
pub fn is_spanning_forest(g: &Graph, selected: &[bool]) -> bool {
    let edges = g.edge_list();
    let mut dsu = Dsu::new(g.n());
    for (i, &(u, v)) in edges.iter().enumerate() {
        if selected[i] && !dsu.union(u, v) {
            return false;
        }
    }
    let comps = g.connected_components();
    comps.iter().all(|c| {
        let r = dsu.find(c[0]);
        c.iter().all(|&v| dsu.find(v) == r)
    })
}

/// Bridges by DFS lowlink (iterative). One flag per edge of
/// [`Graph::edge_list`].
pub fn bridges_lowlink(g: &Graph) -> Result<Vec<bool>> {
    g.require_undirected()?;
    let n = g.n();
    let index = g.edge_index();
    let mut is_bridge = vec![false; index.len()];
    let mut disc = vec![usize::MAX; n];
    let mut low = vec![0usize; n];
    let mut timer = 0;
    for root in 0..n {
        if disc[root] != usize::MAX {
            continue;
        }
        // (node, parent, next neighbor position)
        let mut stack: Vec<(usize, usize, usize)> = vec![(root, usize::MAX, 0)];
        disc[root] = timer;
        low[root] = timer;
        timer += 1;
        while let Some(&mut (v, parent, ref mut pos)) = stack.last_mut() {
            if let Some(&w) = g.neighbors(v).get(*pos) {
                *pos += 1;
                if w == parent {
                    continue;
                }
                if disc[w] == usize::MAX {
                    disc[w] = timer;
                    low[w] = timer;
                    timer += 1;
                    stack.push((w, v, 0));
                } else {
                    low[v] = low[v].min(disc[w]);
                }
            } else {
                stack.pop();
                if parent != usize::MAX {
                    low[parent] = low[parent].min(low[v]);
                    if low[v] > disc[parent] {
                        is_bridge[index[&g.edge_key(parent, v)]] = true;
                    }
                }
            }
        }
    }
    Ok(is_bridge)
}

/// Bridges by definition: removing the edge disconnects its endpoints.
pub fn bridges_brute_force(g: &Graph) -> Result<Vec<bool>> {
    g.require_undirected()?;
    g.edge_list()
        .into_iter()
        .map(|(u, v)| {
            let h = g.without_edge(u, v)?;
            Ok(h.bfs_shortest_paths(u)[v].is_none())
        })
        .collect()
}

/// Node lies on a cycle iff one of its incident edges is not a bridge.
pub fn cycle_nodes_from_bridges(g: &Graph) -> Result<Vec<bool>> {
    let bridges = bridges_lowlink(g)?;
    let mut on_cycle = vec![false; g.n()];
    for (i, (u, v)) in g.edge_list().into_iter().enumerate() {
        if !bridges[i] {
            on_cycle[u] = true;
            on_cycle[v] = true;
        }
    }
    Ok(on_cycle)
}

/// Node lies on a cycle iff it lies on the fundamental cycle of some DFS
/// back edge: each back edge marks the tree path it closes.
pub fn cycle_nodes_from_back_edges(g: &Graph) -> Result<Vec<bool>> {
    g.require_undirected()?;
    let n = g.n();
    let mut parent = vec![usize::MAX; n];
    let mut depth = vec![usize::MAX; n];
    let mut on_cycle = vec![false; n];
    let mut back_edges: Vec<Edge> = Vec::new();
    for root in 0..n {
        if depth[root] != usize::MAX {
            continue;
        }
        depth[root] = 0;
        let mut stack: Vec<(usize, usize)> = vec![(root, 0)];
        while let Some(&mut (v, ref mut pos)) = stack.last_mut() {
            if let Some(&w) = g.neighbors(v).get(*pos) {
                *pos += 1;
                if depth[w] == usize::MAX {
                    depth[w] = depth[v] + 1;
                    parent[w] = v;
                    stack.push((w, 0));
                } else if w != parent[v] && depth[w] < depth[v] {
                    back_edges.push((v, w));
                }
            } else {
                stack.pop();
            }
        }
    }
    for (mut v, ancestor) in back_edges {
        on_cycle[ancestor] = true;
        while v != ancestor {
            on_cycle[v] = true;
            v = parent[v];
        }
    }
    Ok(on_cycle)
}

/// Maximum flow value and a flow achieving it.
#[derive(Clone, Debug)]
pub struct MaxFlow {
    pub value: Rational,
    /// Net flow on each arc `(u, v)` with positive capacity.
    pub flow: BTreeMap<Edge, Rational>,
    /// Source side of the minimum cut (reachable in the final residual graph).
    pub source_side: Vec<bool>,
}

/// Arc capacities: directed edges carry their weight one way; undirected
/// edges carry it both ways.
pub fn capacities(g: &Graph) -> Result<BTreeMap<Edge, Rational>> {
    let mut cap: BTreeMap<Edge, Rational> = BTreeMap::new();
    for (u, v) in g.edges() {
        let c = g
            .edge_weight(u, v)
            .ok_or_else(|| Error::Precondition(format!("edge ({u}, {v}) has no capacity")))?
            .clone();
        if c.is_negative() {
            return Err(Error::Precondition(format!("edge ({u}, {v}) has negative capacity")));
        }
        *cap.entry((u, v)).or_insert_with(Rational::zero) += &c;
        if !g.is_directed() {
            *cap.entry((v, u)).or_insert_with(Rational::zero) += &c;
        }
    }
    Ok(cap)
}

/// Edmonds-Karp with exact rational capacities.
pub fn edmonds_karp(g: &Graph, s: usize, t: usize) -> Result<MaxFlow> {
    let n = g.n();
    if s >= n || t >= n || s == t {
        return Err(Error::InvalidParameter(format!(
            "need distinct source and sink inside 0..{n}, got {s} and {t}"
        )));
    }
    let cap = capacities(g)?;
    let mut residual: Vec<BTreeMap<usize, Rational>> = vec![BTreeMap::new(); n];
    for (&(u, v), c) in &cap {
        *residual[u].entry(v).or_insert_with(Rational::zero) += c;
        residual[v].entry(u).or_insert_with(Rational::zero);
    }
    let mut value = Rational::zero();
    loop {
        let mut prev = vec![usize::MAX; n];
        prev[s] = s;
        let mut queue = VecDeque::from([s]);
        while let Some(u) = queue.pop_front() {
            if u == t {
                break;
            }
            for (&w, c) in &residual[u] {
                if prev[w] == usize::MAX && c.is_positive() {
                    prev[w] = u;
                    queue.push_back(w);
                }
            }
        }
        if prev[t] == usize::MAX {
            break;
        }
        let mut bottleneck: Option<Rational> = None;
        let mut v = t;
        while v != s {
            let u = prev[v];
            let c = &residual[u][&v];
            if bottleneck.as_ref().map_or(true, |b| c < b) {
                bottleneck = Some(c.clone());
            }
            v = u;
        }
        let b = bottleneck.expect("augmenting path has an arc");
        let mut v = t;
        while v != s {
            let u = prev[v];
            *residual[u].get_mut(&v).expect("arc exists") -= &b;
            *residual[v].get_mut(&u).expect("reverse arc exists") += &b;
            v = u;
        }
        value += b;
    }
    let mut source_side = vec![false; n];
    source_side[s] = true;
    let mut queue = VecDeque::from([s]);
    while let Some(u) = queue.pop_front() {
        for (&w, c) in &residual[u] {
            if !source_side[w] && c.is_positive() {
                source_side[w] = true;
                queue.push_back(w);
            }
        }
    }
    // Residual capacity u -> v is cap(u, v) minus the net flow u -> v.
    let mut flow = BTreeMap::new();
    for (&(u, v), c) in &cap {
        let net = c - &residual[u][&v];
        flow.insert((u, v), if net.is_positive() { net } else { Rational::zero() });
    }
    Ok(MaxFlow {
        value,
        flow,
        source_side,
    })
}

/// Certificate check: the flow is feasible and conserved, its value equals
/// the capacity of the cut around `source_side`, and the cut separates
/// source from sink. Together these prove optimality.
pub fn verify_max_flow(g: &Graph, s: usize, t: usize, mf: &MaxFlow) -> Result<bool> {
    let cap = capacities(g)?;
    let n = g.n();
    let mut balance = vec![Rational::zero(); n];
    for (&(u, v), f) in &mf.flow {
        let c = cap.get(&(u, v)).cloned().unwrap_or_else(Rational::zero);
        if f.is_negative() || *f > c {
            return Ok(false);
        }
        balance[u] -= f;
        balance[v] += f;
    }
    let conserved = (0..n).all(|v| v == s || v == t || balance[v].is_zero());
    let value_ok = balance[t] == mf.value && -balance[s].clone() == mf.value;
    let cut: Rational = cap
        .iter()
        .filter(|(&(u, v), _)| mf.source_side[u] && !mf.source_side[v])
        .fold(Rational::zero(), |acc, (_, c)| acc + c);
    Ok(conserved
        && value_ok
        && mf.source_side[s]
        && !mf.source_side[t]
        && cut == mf.value)
}
