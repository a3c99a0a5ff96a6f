//! Turns a graph into model-ready token data: labels, scalar features, the
//! deduplicated pair features behind the attention bias, and positional
//! embeddings computed on the token graph.

use std::collections::HashMap;

use gdt_core::graph::{edge_level_transform, TokenOrigin};
use gdt_core::linalg::rational_to_f64;
use gdt_core::pe::{absolute_features, rrwp_f64, AbsolutePEFeatures, PeKind, RelativePEFeatures};
use gdt_core::Graph;

use crate::config::{GdtConfig, Tokenization};
use crate::error::{NnError, Result};
use crate::tape::Tensor;

/// Pair feature layout: `[self, non-edge, arc i->j, arc j->i, w(i,j), w(j,i)]`.
pub const PAIR_FEATURES: usize = 6;

/// Additive value standing in for `-inf` in trainable paths.
pub const MASK_SENTINEL: f64 = -1e9;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TokenTag {
    Node(usize),
    Edge(usize, usize),
    Cls,
}

#[derive(Clone, Debug)]
pub struct PreparedGraph {
    /// Tokens without `[cls]`.
    pub num_tokens: usize,
    /// Length `num_tokens + 1`; the last entry is `[cls]`.
    pub origin: Vec<TokenTag>,
    pub labels: Vec<usize>,
    /// Per-token scalar (scaled weight for edge tokens, else 0).
    pub scalars: Vec<f64>,
    /// Distinct pair-feature rows, `C x PAIR_FEATURES`.
    pub pair_rows: Tensor,
    /// Row of `pair_rows` for each ordered token pair, `num_tokens^2`.
    pub pair_index: Vec<usize>,
    /// `num_tokens x width`.
    pub abs_pe: Option<Tensor>,
    /// `(num_tokens + 1)^2 x k`, zero on pairs involving `[cls]`.
    pub rel_pe: Option<Tensor>,
    /// Optional additive mask over `(num_tokens + 1)^2` pairs.
    pub mask: Option<Vec<f64>>,
}

impl PreparedGraph {
    /// Sequence length including `[cls]`.
    pub fn len(&self) -> usize {
        self.num_tokens + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn cls_index(&self) -> usize {
        self.num_tokens
    }

    pub fn node_tokens(&self) -> Vec<usize> {
        let mut v: Vec<(usize, usize)> = self
            .origin
            .iter()
            .enumerate()
            .filter_map(|(i, t)| match t {
                TokenTag::Node(v) => Some((*v, i)),
                _ => None,
            })
            .collect();
        v.sort_unstable();
        v.into_iter().map(|(_, i)| i).collect()
    }

    /// Edge tokens in canonical edge order.
    pub fn edge_tokens(&self) -> Vec<usize> {
        let mut v: Vec<((usize, usize), usize)> = self
            .origin
            .iter()
            .enumerate()
            .filter_map(|(i, t)| match t {
                TokenTag::Edge(a, b) => Some(((*a, *b), i)),
                _ => None,
            })
            .collect();
        v.sort_unstable();
        v.into_iter().map(|(_, i)| i).collect()
    }

    /// Restricts attention to token-graph neighbors and self; `[cls]` sees
    /// and is seen by everything. `hard` uses `-inf`, otherwise the sentinel.
    pub fn set_local_mask(&mut self, hard: bool) {
        let l = self.len();
        let n = self.num_tokens;
        let blocked = if hard { f64::NEG_INFINITY } else { MASK_SENTINEL };
        let mut m = vec![0.0; l * l];
        for i in 0..n {
            for j in 0..n {
                let row = &self.pair_rows.row(self.pair_index[i * n + j]);
                if row[1] == 1.0 {
                    m[i * l + j] = blocked;
                }
            }
        }
        self.mask = Some(m);
    }

    /// Token `i` attends to `j <= i` only.
    pub fn set_causal_mask(&mut self, hard: bool) {
        self.mask = Some(causal_mask(self.len(), hard));
    }
}

pub fn causal_mask(l: usize, hard: bool) -> Vec<f64> {
    let blocked = if hard { f64::NEG_INFINITY } else { MASK_SENTINEL };
    let mut m = vec![0.0; l * l];
    for i in 0..l {
        for j in i + 1..l {
            m[i * l + j] = blocked;
        }
    }
    m
}

/// Symmetric closure used for positional embeddings of directed graphs.
fn structure_graph(g: &Graph) -> Result<Graph> {
    if !g.is_directed() {
        return Ok(g.clone());
    }
    let mut s = Graph::new(g.n());
    for (u, v) in g.edges() {
        s.add_edge(u, v)?;
    }
    Ok(s)
}

struct Tokens {
    origin: Vec<TokenTag>,
    labels: Vec<usize>,
    scalars: Vec<f64>,
    /// Graph whose adjacency defines pair features and PEs.
    structure: Graph,
    /// Directed/weighted source of arc features (node tokenization only).
    arcs: Option<Graph>,
}

fn tokens(g: &Graph, cfg: &GdtConfig) -> Result<Tokens> {
    let scale = cfg.input.weight_scale;
    match cfg.tokenization {
        Tokenization::Node => Ok(Tokens {
            origin: (0..g.n()).map(TokenTag::Node).collect(),
            labels: (0..g.n()).map(|v| g.node_label(v) as usize).collect(),
            scalars: vec![0.0; g.n()],
            structure: structure_graph(g)?,
            arcs: Some(g.clone()),
        }),
        Tokenization::Edge => {
            let el = edge_level_transform(g)?;
            let origin = el
                .token_origin
                .iter()
                .map(|o| match *o {
                    TokenOrigin::Node(v) => TokenTag::Node(v),
                    TokenOrigin::Edge(u, v) => TokenTag::Edge(u, v),
                })
                .collect();
            let labels = (0..el.num_tokens()).map(|t| el.graph.node_label(t) as usize).collect();
            let scalars = el
                .token_weights
                .iter()
                .map(|w| w.as_ref().map_or(0.0, |w| rational_to_f64(w) / scale))
                .collect();
            Ok(Tokens { origin, labels, scalars, structure: el.graph, arcs: None })
        }
    }
}

fn weight(g: &Graph, u: usize, v: usize, scale: f64) -> f64 {
    g.edge_weight(u, v).map_or(0.0, |w| rational_to_f64(w) / scale)
}

/// Prepares `g`, computing the configured PEs on the token graph.
pub fn prepare(g: &Graph, cfg: &GdtConfig) -> Result<PreparedGraph> {
    prepare_inner(g, cfg, None, None)
}

/// Like [`prepare`] with caller-supplied features, which must match `cfg`.
pub fn prepare_with_pe(
    g: &Graph,
    cfg: &GdtConfig,
    abs: Option<&AbsolutePEFeatures>,
    rel: Option<&RelativePEFeatures>,
) -> Result<PreparedGraph> {
    prepare_inner(g, cfg, Some(abs), Some(rel))
}

#[allow(clippy::option_option)]
fn prepare_inner(
    g: &Graph,
    cfg: &GdtConfig,
    abs: Option<Option<&AbsolutePEFeatures>>,
    rel: Option<Option<&RelativePEFeatures>>,
) -> Result<PreparedGraph> {
    cfg.validate()?;
    let tk = tokens(g, cfg)?;
    let n = tk.origin.len();
    if let Some(&bad) = tk.labels.iter().find(|&&l| l >= cfg.input.label_vocab) {
        return Err(NnError::Config(format!(
            "token label {bad} outside the vocabulary of {}",
            cfg.input.label_vocab
        )));
    }

    let scale = cfg.input.weight_scale;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut seen: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut pair_index = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            let row = if i == j {
                [1.0, 0.0, 0.0, 0.0, 0.0, 0.0]
            } else {
                let (fwd, rev, wf, wr) = match &tk.arcs {
                    Some(a) => (
                        a.has_edge(i, j),
                        a.has_edge(j, i),
                        if a.has_edge(i, j) { weight(a, i, j, scale) } else { 0.0 },
                        if a.has_edge(j, i) { weight(a, j, i, scale) } else { 0.0 },
                    ),
                    None => {
                        let e = tk.structure.has_edge(i, j);
                        (e, e, 0.0, 0.0)
                    }
                };
                let non_edge = !(fwd || rev);
                [0.0, non_edge as u8 as f64, fwd as u8 as f64, rev as u8 as f64, wf, wr]
            };
            let key: Vec<u64> = row.iter().map(|x| x.to_bits()).collect();
            let next = rows.len();
            let id = *seen.entry(key).or_insert_with(|| {
                rows.push(row.to_vec());
                next
            });
            pair_index.push(id);
        }
    }
    let pair_rows = Tensor::from_rows(&rows)?;

    let abs_pe = match cfg.absolute_pe {
        PeKind::NoPe => {
            if let Some(Some(f)) = abs {
                if f.kind != PeKind::NoPe {
                    return Err(NnError::PeMismatch(format!("got {} features for a NoPE config", f.kind)));
                }
            }
            None
        }
        kind => {
            let computed;
            let f = match abs {
                None => {
                    computed = absolute_features(&tk.structure, kind, cfg.pe_k)?;
                    &computed
                }
                Some(Some(f)) => f,
                Some(None) => return Err(NnError::PeMismatch(format!("{kind} features missing"))),
            };
            if f.kind != kind || f.k != cfg.pe_k || f.num_nodes() != n || f.width() != cfg.abs_pe_width() {
                return Err(NnError::PeMismatch(format!(
                    "expected {kind} with k = {} on {n} tokens, got {} with k = {} on {} tokens",
                    cfg.pe_k,
                    f.kind,
                    f.k,
                    f.num_nodes()
                )));
            }
            Some(Tensor::from_rows(&f.to_f64())?)
        }
    };

    let rel_pe = match cfg.relative_pe {
        PeKind::Rrwp => {
            let k = cfg.pe_k;
            let flat = match rel {
                None => rrwp_f64(&tk.structure, k)?,
                Some(Some(r)) => {
                    if r.k != k || r.num_nodes() != n {
                        return Err(NnError::PeMismatch(format!(
                            "expected RRWP with k = {k} on {n} tokens, got k = {} on {}",
                            r.k,
                            r.num_nodes()
                        )));
                    }
                    r.to_f64()
                }
                Some(None) => return Err(NnError::PeMismatch("RRWP features missing".into())),
            };
            let l = n + 1;
            let mut data = vec![0.0; l * l * k];
            for i in 0..n {
                for j in 0..n {
                    let src = (i * n + j) * k;
                    let dst = (i * l + j) * k;
                    data[dst..dst + k].copy_from_slice(&flat[src..src + k]);
                }
            }
            Some(Tensor::matrix(l * l, k, data)?)
        }
        _ => {
            if let Some(Some(_)) = rel {
                return Err(NnError::PeMismatch("relative features given to a config without RRWP".into()));
            }
            None
        }
    };

    let mut origin = tk.origin;
    origin.push(TokenTag::Cls);
    Ok(PreparedGraph {
        num_tokens: n,
        origin,
        labels: tk.labels,
        scalars: tk.scalars,
        pair_rows,
        pair_index,
        abs_pe,
        rel_pe,
        mask: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use gdt_core::pe::{rrwp, rwse};

    fn cfg(tok: Tokenization) -> GdtConfig {
        let mut c = GdtConfig::small(8, 1, 2, 0);
        c.tokenization = tok;
        c.input.label_vocab = 4;
        c
    }

    #[test]
    fn node_level_length() {
        let p = prepare(&Graph::path(5), &cfg(Tokenization::Node)).unwrap();
        assert_eq!(p.len(), 6);
        assert_eq!(p.origin[5], TokenTag::Cls);
    }

    #[test]
    fn edge_level_triangle_has_seven_tokens() {
        let p = prepare(&Graph::cycle(3), &cfg(Tokenization::Edge)).unwrap();
        assert_eq!(p.len(), 7);
        assert_eq!(p.node_tokens(), vec![0, 1, 2]);
        assert_eq!(p.edge_tokens().len(), 3);
    }

    #[test]
    fn undirected_pairs_use_three_rows() {
        let p = prepare(&Graph::path(4), &cfg(Tokenization::Node)).unwrap();
        // self, edge, non-edge
        assert_eq!(p.pair_rows.rows(), 3);
    }

    #[test]
    fn mismatched_pe_is_rejected() {
        let g = Graph::cycle(4);
        let mut c = cfg(Tokenization::Node);
        c.absolute_pe = PeKind::Rwse;
        c.pe_k = 3;
        let wrong = rwse(&g, 2).unwrap();
        assert!(matches!(prepare_with_pe(&g, &c, Some(&wrong), None), Err(NnError::PeMismatch(_))));
        let right = rwse(&g, 3).unwrap();
        prepare_with_pe(&g, &c, Some(&right), None).unwrap();
        assert!(prepare_with_pe(&g, &c, None, Some(&rrwp(&g, 3).unwrap())).is_err());
    }

    #[test]
    fn causal_mask_blocks_the_future() {
        let m = causal_mask(3, true);
        assert_eq!(m[1], f64::NEG_INFINITY);
        assert_eq!(m[3], 0.0);
    }
}
