use std::collections::BTreeMap;

use num_bigint::BigInt;
use serde::{Deserialize, Serialize};

use super::Graph;
use crate::error::{Error, Result};
use crate::linalg::Rational;

/// Serialized graph. Edge-keyed maps use `"u,v"` keys and weights are exact
/// `"p/q"` strings.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphJson {
    pub n: usize,
    pub directed: bool,
    pub edges: Vec<[usize; 2]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub node_labels: Option<Vec<u32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edge_weights: Option<BTreeMap<String, String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edge_labels: Option<BTreeMap<String, u32>>,
}

/// Always `p/q`, including integers (`3/1`).
pub fn format_rational(r: &Rational) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

/// Accepts `p/q` or a bare integer `p`.
pub fn parse_rational(s: &str) -> Result<Rational> {
    let bad = || Error::Parse(format!("not a fraction: {s:?}"));
    let int = |t: &str| t.trim().parse::<BigInt>().map_err(|_| bad());
    match s.split_once('/') {
        Some((p, q)) => {
            let q = int(q)?;
            if q == BigInt::from(0) {
                return Err(bad());
            }
            Ok(Rational::new(int(p)?, q))
        }
        None => Ok(Rational::from_integer(int(s)?)),
    }
}

fn edge_key_string(u: usize, v: usize) -> String {
    format!("{u},{v}")
}

fn parse_edge_key(s: &str) -> Result<(usize, usize)> {
    let bad = || Error::Parse(format!("bad edge key {s:?}"));
    let (a, b) = s.split_once(',').ok_or_else(bad)?;
    Ok((
        a.trim().parse().map_err(|_| bad())?,
        b.trim().parse().map_err(|_| bad())?,
    ))
}

impl From<&Graph> for GraphJson {
    fn from(g: &Graph) -> Self {
        GraphJson {
            n: g.n(),
            directed: g.is_directed(),
            edges: g.edges().map(|(u, v)| [u, v]).collect(),
            node_labels: g.node_labels().map(<[u32]>::to_vec),
            edge_weights: g.edge_weights().map(|ws| {
                ws.iter()
                    .map(|(&(u, v), w)| (edge_key_string(u, v), format_rational(w)))
                    .collect()
            }),
            edge_labels: g.edge_labels().map(|ls| {
                ls.iter()
                    .map(|(&(u, v), &l)| (edge_key_string(u, v), l))
                    .collect()
            }),
        }
    }
}

impl TryFrom<&GraphJson> for Graph {
    type Error = Error;

    fn try_from(j: &GraphJson) -> Result<Graph> {
        let mut g = if j.directed {
            Graph::new_directed(j.n)
        } else {
            Graph::new(j.n)
        };
        for &[u, v] in &j.edges {
            g.add_edge(u, v)?;
        }
        if let Some(labels) = &j.node_labels {
            g.set_node_labels(labels.clone())?;
        }
        if let Some(ws) = &j.edge_weights {
            for (k, w) in ws {
                let (u, v) = parse_edge_key(k)?;
                g.set_edge_weight(u, v, parse_rational(w)?)?;
            }
        }
        if let Some(ls) = &j.edge_labels {
            for (k, &l) in ls {
                let (u, v) = parse_edge_key(k)?;
                g.set_edge_label(u, v, l)?;
            }
        }
        Ok(g)
    }
}

impl Graph {
    pub fn to_json(&self) -> String {
        serde_json::to_string(&GraphJson::from(self)).expect("graph JSON is serializable")
    }

    pub fn from_json(s: &str) -> Result<Graph> {
        let j: GraphJson = serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))?;
        Graph::try_from(&j)
    }
}
