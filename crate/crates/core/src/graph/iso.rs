use std::collections::{BTreeMap, HashMap, VecDeque};

use super::Graph;
use crate::error::{Error, Result};
use crate::linalg::Rational;

pub const DEFAULT_ISOMORPHISM_CAP: usize = 12;

/// Exact isomorphism test respecting node labels, edge labels and edge
/// weights, by backtracking over bijections.
pub fn are_isomorphic(g: &Graph, h: &Graph) -> Result<bool> {
    are_isomorphic_with_cap(g, h, DEFAULT_ISOMORPHISM_CAP)
}

pub fn are_isomorphic_with_cap(g: &Graph, h: &Graph, cap: usize) -> Result<bool> {
    for x in [g, h] {
        if x.n() > cap {
            return Err(Error::SizeCap { n: x.n(), cap });
        }
    }
    if g.n() != h.n() || g.is_directed() != h.is_directed() || g.num_edges() != h.num_edges() {
        return Ok(false);
    }
    let (cg, ch) = joint_colors(g, h);
    let hist = |c: &[usize]| {
        let mut m = BTreeMap::new();
        for &x in c {
            *m.entry(x).or_insert(0usize) += 1;
        }
        m
    };
    if hist(&cg) != hist(&ch) {
        return Ok(false);
    }
    let order = search_order(g, &cg);
    let mut state = Search {
        g,
        h,
        cg: &cg,
        ch: &ch,
        order: &order,
        map: vec![usize::MAX; g.n()],
        used: vec![false; h.n()],
    };
    Ok(state.extend(0))
}

type EdgeAttr = (Option<u32>, Option<Rational>);

fn edge_attr(g: &Graph, u: usize, v: usize) -> EdgeAttr {
    (g.edge_label(u, v), g.edge_weight(u, v).cloned())
}

/// Color refinement run on both graphs with a shared dictionary so that
/// colors are comparable across them.
fn joint_colors(g: &Graph, h: &Graph) -> (Vec<usize>, Vec<usize>) {
    let graphs = [g, h];
    let mut attr_ids: HashMap<EdgeAttr, usize> = HashMap::new();
    let mut colors: Vec<Vec<usize>> = graphs
        .iter()
        .map(|x| (0..x.n()).map(|v| x.node_label(v) as usize).collect())
        .collect();
    let mut classes = usize::MAX;
    loop {
        let mut dict: HashMap<(usize, Vec<(usize, usize)>, Vec<(usize, usize)>), usize> =
            HashMap::new();
        let mut next = Vec::with_capacity(2);
        for (gi, x) in graphs.iter().enumerate() {
            let c = &colors[gi];
            let mut out = Vec::with_capacity(x.n());
            for v in 0..x.n() {
                let mut outs: Vec<(usize, usize)> = x
                    .neighbors(v)
                    .iter()
                    .map(|&w| {
                        let len = attr_ids.len();
                        let a = *attr_ids.entry(edge_attr(x, v, w)).or_insert(len);
                        (a, c[w])
                    })
                    .collect();
                outs.sort_unstable();
                let mut ins: Vec<(usize, usize)> = if x.is_directed() {
                    x.in_neighbors(v)
                        .iter()
                        .map(|&w| {
                            let len = attr_ids.len();
                            let a = *attr_ids.entry(edge_attr(x, w, v)).or_insert(len);
                            (a, c[w])
                        })
                        .collect()
                } else {
                    Vec::new()
                };
                ins.sort_unstable();
                let len = dict.len();
                out.push(*dict.entry((c[v], outs, ins)).or_insert(len));
            }
            next.push(out);
        }
        let count = dict.len();
        colors = next;
        if count == classes {
            break;
        }
        classes = count;
    }
    let ch = colors.pop().expect("two colorings");
    let cg = colors.pop().expect("two colorings");
    (cg, ch)
}

/// Visit order: BFS per component, each component started at a node of
/// the rarest color, so that most nodes have an already-mapped neighbor.
fn search_order(g: &Graph, colors: &[usize]) -> Vec<(usize, Option<usize>)> {
    let mut freq: HashMap<usize, usize> = HashMap::new();
    for &c in colors {
        *freq.entry(c).or_insert(0) += 1;
    }
    let mut seen = vec![false; g.n()];
    let mut order = Vec::with_capacity(g.n());
    while order.len() < g.n() {
        let start = (0..g.n())
            .filter(|&v| !seen[v])
            .min_by_key(|&v| (freq[&colors[v]], v))
            .expect("some node is unvisited");
        seen[start] = true;
        order.push((start, None));
        let mut queue = VecDeque::from([start]);
        while let Some(u) = queue.pop_front() {
            for &w in g.neighbors(u).iter().chain(g.in_neighbors(u)) {
                if !seen[w] {
                    seen[w] = true;
                    order.push((w, Some(u)));
                    queue.push_back(w);
                }
            }
        }
    }
    order
}

struct Search<'a> {
    g: &'a Graph,
    h: &'a Graph,
    cg: &'a [usize],
    ch: &'a [usize],
    order: &'a [(usize, Option<usize>)],
    map: Vec<usize>,
    used: Vec<bool>,
}

impl Search<'_> {
    fn extend(&mut self, pos: usize) -> bool {
        if pos == self.order.len() {
            return true;
        }
        let (v, parent) = self.order[pos];
        let candidates: Vec<usize> = match parent {
            Some(p) => {
                let img = self.map[p];
                let mut c: Vec<usize> = self
                    .h
                    .neighbors(img)
                    .iter()
                    .chain(self.h.in_neighbors(img))
                    .copied()
                    .collect();
                c.sort_unstable();
                c.dedup();
                c
            }
            None => (0..self.h.n()).collect(),
        };
        for x in candidates {
            if self.used[x] || self.ch[x] != self.cg[v] || !self.consistent(pos, v, x) {
                continue;
            }
            self.map[v] = x;
            self.used[x] = true;
            if self.extend(pos + 1) {
                return true;
            }
            self.used[x] = false;
            self.map[v] = usize::MAX;
        }
        false
    }

    fn consistent(&self, pos: usize, v: usize, x: usize) -> bool {
        if self.g.node_label(v) != self.h.node_label(x) {
            return false;
        }
        self.order[..pos].iter().all(|&(u, _)| {
            let y = self.map[u];
            let fwd = self.g.has_edge(v, u);
            if fwd != self.h.has_edge(x, y) {
                return false;
            }
            if fwd && edge_attr(self.g, v, u) != edge_attr(self.h, x, y) {
                return false;
            }
            if self.g.is_directed() {
                let back = self.g.has_edge(u, v);
                if back != self.h.has_edge(y, x) {
                    return false;
                }
                if back && edge_attr(self.g, u, v) != edge_attr(self.h, y, x) {
                    return false;
                }
            }
            true
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::csl_graph;

    #[test]
    fn relabeled_cycle_is_isomorphic() {
        let g = Graph::cycle(4);
        let h = g.permuted(&[2, 0, 3, 1]).unwrap();
        assert!(are_isomorphic(&g, &h).unwrap());
    }

    #[test]
    fn path_and_triangle_differ() {
        assert!(!are_isomorphic(&Graph::path(3), &Graph::complete(3)).unwrap());
    }

    #[test]
    fn csl_11_3_and_11_4_are_isomorphic() {
        // x -> 4x (mod 11) maps the jump set {1, 3} onto {4, 1}.
        let a = csl_graph(11, 3).unwrap().graph;
        let b = csl_graph(11, 4).unwrap().graph;
        assert!(are_isomorphic(&a, &b).unwrap());
        let perm: Vec<usize> = (0..11).map(|x| 4 * x % 11).collect();
        assert_eq!(a.permuted(&perm).unwrap(), b);
    }

    #[test]
    fn csl_11_2_and_11_3_are_not() {
        let a = csl_graph(11, 2).unwrap().graph;
        let b = csl_graph(11, 3).unwrap().graph;
        assert!(!are_isomorphic(&a, &b).unwrap());
    }

    #[test]
    fn regular_same_degree_pair() {
        // Two 2-regular graphs on 6 nodes: C6 and two triangles.
        let c6 = Graph::cycle(6);
        let two_triangles =
            Graph::from_edges(6, &[(0, 1), (1, 2), (2, 0), (3, 4), (4, 5), (5, 3)]).unwrap();
        assert!(!are_isomorphic(&c6, &two_triangles).unwrap());
    }

    #[test]
    fn labels_and_weights_are_respected() {
        let mut a = Graph::path(3);
        let mut b = Graph::path(3);
        a.set_node_labels(vec![1, 0, 0]).unwrap();
        b.set_node_labels(vec![0, 1, 0]).unwrap();
        assert!(!are_isomorphic(&a, &b).unwrap());
        let mut c = Graph::path(3);
        let mut d = Graph::path(3);
        c.set_edge_weight(0, 1, Rational::from_integer(2.into())).unwrap();
        d.set_edge_weight(2, 1, Rational::from_integer(2.into())).unwrap();
        assert!(are_isomorphic(&c, &d).unwrap());
        d.set_edge_weight(2, 1, Rational::from_integer(3.into())).unwrap();
        assert!(!are_isomorphic(&c, &d).unwrap());
    }

    #[test]
    fn directed_orientation_matters() {
        let mut a = Graph::new_directed(3);
        a.add_edge(0, 1).unwrap();
        a.add_edge(1, 2).unwrap();
        let mut b = Graph::new_directed(3);
        b.add_edge(0, 1).unwrap();
        b.add_edge(2, 1).unwrap();
        assert!(!are_isomorphic(&a, &b).unwrap());
    }

    #[test]
    fn size_cap() {
        let g = Graph::cycle(13);
        assert_eq!(
            are_isomorphic(&g, &g),
            Err(Error::SizeCap { n: 13, cap: 12 })
        );
        assert!(are_isomorphic_with_cap(&g, &g, 13).unwrap());
    }
}
