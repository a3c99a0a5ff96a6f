use super::{Edge, Graph};
use crate::error::Result;
use crate::linalg::Rational;

/// Where a token of the edge-level graph comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TokenOrigin {
    /// The node token `(v, v)`.
    Node(usize),
    /// The edge token `(u, v)` with `u < v`.
    Edge(usize, usize),
}

/// Node-level view of edge-level tokenization: one token per node and per
/// edge, two tokens adjacent iff they share an endpoint.
#[derive(Clone, Debug)]
pub struct EdgeLevelGraph {
    pub base: Graph,
    /// The transformed graph. Token labels are `2 * l_V(v)` for node tokens
    /// and `2 * l_E(e) + 1` for edge tokens, so the two kinds never collide.
    pub graph: Graph,
    pub token_origin: Vec<TokenOrigin>,
    /// Weight carried by each token (edge weights; `None` for node tokens).
    pub token_weights: Vec<Option<Rational>>,
}

impl EdgeLevelGraph {
    pub fn num_tokens(&self) -> usize {
        self.token_origin.len()
    }

    /// Token index of the node token for `v`.
    pub fn node_token(&self, v: usize) -> usize {
        v
    }

    /// Token indices of the edge tokens, in canonical edge order.
    pub fn edge_tokens(&self) -> std::ops::Range<usize> {
        self.base.n()..self.num_tokens()
    }
}

pub fn edge_level_transform(g: &Graph) -> Result<EdgeLevelGraph> {
    g.require_undirected()?;
    let n = g.n();
    let edges: Vec<Edge> = g.edge_list();
    let mut origin: Vec<TokenOrigin> = (0..n).map(TokenOrigin::Node).collect();
    origin.extend(edges.iter().map(|&(u, v)| TokenOrigin::Edge(u, v)));
    let mut tg = Graph::new(origin.len());

    // node token <-> incident edge tokens
    for (i, &(u, v)) in edges.iter().enumerate() {
        tg.add_edge(u, n + i)?;
        tg.add_edge(v, n + i)?;
    }
    // edge tokens sharing an endpoint
    for v in 0..n {
        let incident: Vec<usize> = g
            .neighbors(v)
            .iter()
            .map(|&w| n + edges.binary_search(&g.edge_key(v, w)).expect("edge listed"))
            .collect();
        for a in 0..incident.len() {
            for b in a + 1..incident.len() {
                tg.add_edge(incident[a], incident[b])?;
            }
        }
    }

    let mut labels: Vec<u32> = (0..n).map(|v| 2 * g.node_label(v)).collect();
    labels.extend(
        edges
            .iter()
            .map(|&(u, v)| 2 * g.edge_label(u, v).unwrap_or(0) + 1),
    );
    tg.set_node_labels(labels)?;

    let mut token_weights: Vec<Option<Rational>> = vec![None; n];
    token_weights.extend(edges.iter().map(|&(u, v)| g.edge_weight(u, v).cloned()));

    Ok(EdgeLevelGraph {
        base: g.clone(),
        graph: tg,
        token_origin: origin,
        token_weights,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shares_endpoint(a: TokenOrigin, b: TokenOrigin) -> bool {
        let ends = |t: TokenOrigin| match t {
            TokenOrigin::Node(v) => (v, v),
            TokenOrigin::Edge(u, v) => (u, v),
        };
        let (u, v) = ends(a);
        let (w, z) = ends(b);
        u == w || u == z || v == w || v == z
    }

    #[test]
    fn single_edge() {
        // The two node tokens (0,0) and (1,1) share no endpoint; each meets
        // the edge token (0,1).
        let t = edge_level_transform(&Graph::path(2)).unwrap();
        assert_eq!(t.num_tokens(), 3);
        assert_eq!(t.graph.edge_list(), vec![(0, 2), (1, 2)]);
    }

    #[test]
    fn triangle_expansion() {
        let t = edge_level_transform(&Graph::cycle(3)).unwrap();
        assert_eq!(t.num_tokens(), 6);
        for v in 0..3 {
            assert_eq!(t.graph.degree(v), 2);
            assert!(t.graph.neighbors(v).iter().all(|&x| x >= 3));
        }
        for a in 3..6 {
            for b in a + 1..6 {
                assert!(t.graph.has_edge(a, b));
            }
        }
    }

    #[test]
    fn star_center_sees_all_edges() {
        let t = edge_level_transform(&Graph::star(3)).unwrap();
        assert_eq!(t.graph.neighbors(0), &[4, 5, 6]);
    }

    #[test]
    fn adjacency_follows_shared_endpoint_rule() {
        let g = crate::graph::er_stitched(9, 0.3, 1, 5).unwrap();
        let t = edge_level_transform(&g).unwrap();
        assert_eq!(t.num_tokens(), g.n() + g.num_edges());
        for a in 0..t.num_tokens() {
            for b in 0..t.num_tokens() {
                if a == b {
                    continue;
                }
                let (oa, ob) = (t.token_origin[a], t.token_origin[b]);
                let both_nodes =
                    matches!((oa, ob), (TokenOrigin::Node(_), TokenOrigin::Node(_)));
                // two distinct node tokens never share an endpoint
                let expected = !both_nodes && shares_endpoint(oa, ob);
                assert_eq!(t.graph.has_edge(a, b), expected, "{oa:?} {ob:?}");
            }
        }
    }

    #[test]
    fn rejects_directed() {
        assert!(edge_level_transform(&Graph::new_directed(2)).is_err());
    }
}
