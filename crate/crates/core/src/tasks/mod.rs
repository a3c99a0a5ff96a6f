//! Synthetic algorithmic-reasoning datasets (MST, Bridges, Flow, Cycles)
//! over stitched Erdos-Renyi graphs, with exact oracles for the targets.

mod knn;
mod metrics;
pub mod oracles;

use num_traits::ToPrimitive;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{er_stitched_with_mode, format_rational, parse_rational, Graph, GraphJson, StitchMode};
use crate::linalg::Rational;

pub use knn::{knn_few_shot, majority_label};
pub use metrics::{accuracy, f1, mae, to_csv, Metric, MetricRecord, MetricReport, Split, CSV_HEADER};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskKind {
    Mst,
    Bridges,
    Flow,
    Cycles,
}

impl TaskKind {
    pub const ALL: [TaskKind; 4] = [TaskKind::Mst, TaskKind::Bridges, TaskKind::Flow, TaskKind::Cycles];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::Mst => "mst",
            TaskKind::Bridges => "bridges",
            TaskKind::Flow => "flow",
            TaskKind::Cycles => "cycles",
        }
    }

    pub fn level(self) -> TaskLevel {
        match self {
            TaskKind::Mst | TaskKind::Bridges => TaskLevel::Edge,
            TaskKind::Flow => TaskLevel::Graph,
            TaskKind::Cycles => TaskLevel::Node,
        }
    }
}

impl std::str::FromStr for TaskKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TaskKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Parse(format!("unknown task {s:?}")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TaskLevel {
    Node,
    Edge,
    Graph,
}

/// Node labels used by the Flow task.
pub const LABEL_PLAIN: u32 = 0;
pub const LABEL_SOURCE: u32 = 1;
pub const LABEL_SINK: u32 = 2;

/// Generator settings. Exactly one of `p` and `expected_degree` should be
/// set; the latter scales the edge probability as `degree / (n - 1)`, which
/// keeps larger extrapolation graphs at the same sparsity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GenParams {
    #[serde(default)]
    pub p: Option<f64>,
    #[serde(default)]
    pub expected_degree: Option<f64>,
    /// Stitching repeat count.
    pub repeats: usize,
    #[serde(default)]
    pub stitch: StitchMode,
    /// Integer grid `1..=weight_grid` for weights and capacities.
    #[serde(default = "default_grid")]
    pub weight_grid: u32,
    /// Flow only: undirected capacities (an antiparallel pair per edge)
    /// instead of randomly oriented arcs.
    #[serde(default)]
    pub undirected_flow: bool,
}

fn default_grid() -> u32 {
    10
}

impl GenParams {
    pub fn with_p(p: f64, repeats: usize) -> Self {
        GenParams {
            p: Some(p),
            expected_degree: None,
            repeats,
            stitch: StitchMode::Passes,
            weight_grid: default_grid(),
            undirected_flow: false,
        }
    }

    pub fn with_expected_degree(degree: f64, repeats: usize) -> Self {
        GenParams {
            p: None,
            expected_degree: Some(degree),
            ..GenParams::with_p(0.0, repeats)
        }
    }

    pub fn edge_probability(&self, n: usize) -> Result<f64> {
        match (self.p, self.expected_degree) {
            (Some(p), None) => Ok(p),
            (None, Some(d)) => Ok(if n <= 1 { 0.0 } else { (d / (n - 1) as f64).min(1.0) }),
            _ => Err(Error::InvalidParameter(
                "set exactly one of p and expected_degree".into(),
            )),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Target {
    Scalar(Rational),
    Nodes(Vec<bool>),
    /// One flag per edge of [`Graph::edge_list`].
    Edges(Vec<bool>),
}

impl Target {
    pub fn flags(&self) -> Option<&[bool]> {
        match self {
            Target::Nodes(v) | Target::Edges(v) => Some(v),
            Target::Scalar(_) => None,
        }
    }

    pub fn scalar_f64(&self) -> Option<f64> {
        match self {
            Target::Scalar(x) => x.to_f64(),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskInstance {
    pub kind: TaskKind,
    pub seed: u64,
    /// Edge weights carry MST weights or Flow capacities; Flow marks its
    /// source and sink through node labels.
    pub graph: Graph,
    pub source: Option<usize>,
    pub sink: Option<usize>,
    pub target: Target,
}

fn sample_graph(n: usize, seed: u64, params: &GenParams) -> Result<Graph> {
    er_stitched_with_mode(n, params.edge_probability(n)?, params.repeats, seed, params.stitch)
}

/// Separate stream for weights so they do not shift the graph sample.
fn weight_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15)
}

/// Integer grid value plus a distinct fractional offset `rank / (m + 1)`.
fn distinct_weights(m: usize, grid: u32, rng: &mut ChaCha8Rng) -> Vec<Rational> {
    let mut ranks: Vec<usize> = (0..m).collect();
    ranks.shuffle(rng);
    ranks
        .into_iter()
        .map(|r| {
            let base = Rational::from_integer(rng.gen_range(1..=grid).into());
            base + Rational::new(r.into(), (m + 1).into())
        })
        .collect()
}

pub fn gen_mst(n: usize, seed: u64, params: &GenParams) -> Result<TaskInstance> {
    let mut g = sample_graph(n, seed, params)?;
    let edges = g.edge_list();
    let mut rng = weight_rng(seed);
    for ((u, v), w) in edges.iter().zip(distinct_weights(edges.len(), params.weight_grid, &mut rng)) {
        g.set_edge_weight(*u, *v, w)?;
    }
    let target = Target::Edges(oracles::kruskal_mst(&g)?);
    Ok(TaskInstance {
        kind: TaskKind::Mst,
        seed,
        graph: g,
        source: None,
        sink: None,
        target,
    })
}

pub fn gen_bridges(n: usize, seed: u64, params: &GenParams) -> Result<TaskInstance> {
    let g = sample_graph(n, seed, params)?;
    let target = Target::Edges(oracles::bridges_lowlink(&g)?);
    Ok(TaskInstance {
        kind: TaskKind::Bridges,
        seed,
        graph: g,
        source: None,
        sink: None,
        target,
    })
}

pub fn gen_cycles(n: usize, seed: u64, params: &GenParams) -> Result<TaskInstance> {
    let g = sample_graph(n, seed, params)?;
    let target = Target::Nodes(oracles::cycle_nodes_from_bridges(&g)?);
    Ok(TaskInstance {
        kind: TaskKind::Cycles,
        seed,
        graph: g,
        source: None,
        sink: None,
        target,
    })
}

pub fn gen_flow(n: usize, seed: u64, params: &GenParams) -> Result<TaskInstance> {
    if n < 2 {
        return Err(Error::InvalidParameter("Flow needs at least two nodes".into()));
    }
    let base = sample_graph(n, seed, params)?;
    let mut rng = weight_rng(seed);
    let mut g = if params.undirected_flow {
        Graph::new(n)
    } else {
        Graph::new_directed(n)
    };
    for (u, v) in base.edges() {
        let (a, b) = if !params.undirected_flow && rng.gen_bool(0.5) {
            (v, u)
        } else {
            (u, v)
        };
        g.add_edge(a, b)?;
        let c = Rational::from_integer(rng.gen_range(1..=params.weight_grid).into());
        g.set_edge_weight(a, b, c)?;
    }
    let s = rng.gen_range(0..n);
    let mut t = rng.gen_range(0..n - 1);
    if t >= s {
        t += 1;
    }
    let mut labels = vec![LABEL_PLAIN; n];
    labels[s] = LABEL_SOURCE;
    labels[t] = LABEL_SINK;
    g.set_node_labels(labels)?;
    let value = oracles::edmonds_karp(&g, s, t)?.value;
    Ok(TaskInstance {
        kind: TaskKind::Flow,
        seed,
        graph: g,
        source: Some(s),
        sink: Some(t),
        target: Target::Scalar(value),
    })
}

pub fn generate(kind: TaskKind, n: usize, seed: u64, params: &GenParams) -> Result<TaskInstance> {
    match kind {
        TaskKind::Mst => gen_mst(n, seed, params),
        TaskKind::Bridges => gen_bridges(n, seed, params),
        TaskKind::Flow => gen_flow(n, seed, params),
        TaskKind::Cycles => gen_cycles(n, seed, params),
    }
}

/// Seeds of different splits never overlap: the split picks the high bits.
pub fn split_seed(split: Split, index: u64) -> u64 {
    let tag = match split {
        Split::InDistribution => 0u64,
        Split::Extrapolation => 1,
        Split::FewShot => 2,
    };
    (tag << 48) | (index & ((1 << 48) - 1))
}

pub fn dataset(
    kind: TaskKind,
    n: usize,
    count: usize,
    split: Split,
    first_index: u64,
    params: &GenParams,
) -> Result<Vec<TaskInstance>> {
    (0..count as u64)
        .map(|i| generate(kind, n, split_seed(split, first_index + i), params))
        .collect()
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum TargetJson {
    Scalar { value: String },
    Nodes { labels: Vec<bool> },
    Edges { labels: Vec<bool> },
}

#[derive(Serialize, Deserialize)]
struct TaskJson {
    task: TaskKind,
    seed: u64,
    graph: GraphJson,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    source: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sink: Option<usize>,
    target: TargetJson,
}

impl TaskInstance {
    /// One JSON line.
    pub fn to_json_line(&self) -> String {
        let target = match &self.target {
            Target::Scalar(x) => TargetJson::Scalar {
                value: format_rational(x),
            },
            Target::Nodes(v) => TargetJson::Nodes { labels: v.clone() },
            Target::Edges(v) => TargetJson::Edges { labels: v.clone() },
        };
        serde_json::to_string(&TaskJson {
            task: self.kind,
            seed: self.seed,
            graph: GraphJson::from(&self.graph),
            source: self.source,
            sink: self.sink,
            target,
        })
        .expect("task JSON is serializable")
    }

    pub fn from_json_line(line: &str) -> Result<Self> {
        let j: TaskJson = serde_json::from_str(line).map_err(|e| Error::Parse(e.to_string()))?;
        let target = match j.target {
            TargetJson::Scalar { value } => Target::Scalar(parse_rational(&value)?),
            TargetJson::Nodes { labels } => Target::Nodes(labels),
            TargetJson::Edges { labels } => Target::Edges(labels),
        };
        Ok(TaskInstance {
            kind: j.task,
            seed: j.seed,
            graph: Graph::try_from(&j.graph)?,
            source: j.source,
            sink: j.sink,
            target,
        })
    }

    /// Fraction of positive labels (node- and edge-level tasks).
    pub fn positive_rate(&self) -> Option<f64> {
        let f = self.target.flags()?;
        if f.is_empty() {
            return Some(0.0);
        }
        Some(f.iter().filter(|&&x| x).count() as f64 / f.len() as f64)
    }
}
