use num_integer::Integer;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::Graph;
use crate::error::{Error, Result};

/// A circulant skip-link graph together with the skip-cycle count.
#[derive(Clone, Debug)]
pub struct CslGraph {
    pub graph: Graph,
    pub n: usize,
    pub skip: usize,
    /// `gcd(n, skip)`; more than one skip cycle when greater than one.
    pub skip_cycles: usize,
}

impl CslGraph {
    pub fn multiple_skip_cycles(&self) -> bool {
        self.skip_cycles > 1
    }
}

/// Circulant skip-link graph: the cycle `0-1-...-(n-1)-0` plus the skip
/// links `{s, s + k mod n}` traced by the sequence `s <- s + k` from every
/// residue class of `gcd(n, k)`.
pub fn csl_graph(n: usize, k: usize) -> Result<CslGraph> {
    if !(1 < k && k + 1 < n) {
        return Err(Error::InvalidParameter(format!(
            "CSL needs 1 < k < n - 1, got n = {n}, k = {k}"
        )));
    }
    let mut g = Graph::cycle(n);
    let skip_cycles = n.gcd(&k);
    for start in 0..skip_cycles {
        let mut s = start;
        loop {
            let next = (s + k) % n;
            g.add_edge(s, next)?;
            s = next;
            if s == start {
                break;
            }
        }
    }
    Ok(CslGraph {
        graph: g,
        n,
        skip: k,
        skip_cycles,
    })
}

/// How the component-stitching repeat count is interpreted.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StitchMode {
    /// `K` full passes; each pass links every current component to a random other one.
    #[default]
    Passes,
    /// `K` single edges, each between two random distinct components.
    SingleEdges,
}

/// Erdos-Renyi sample with components stitched together by random edges.
pub fn er_stitched(n: usize, p: f64, repeats: usize, seed: u64) -> Result<Graph> {
    er_stitched_with_mode(n, p, repeats, seed, StitchMode::Passes)
}

pub fn er_stitched_with_mode(
    n: usize,
    p: f64,
    repeats: usize,
    seed: u64,
    mode: StitchMode,
) -> Result<Graph> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidParameter(format!(
            "edge probability {p} outside [0, 1]"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = Graph::new(n);
    for u in 0..n {
        for v in u + 1..n {
            if rng.gen_bool(p) {
                g.add_edge(u, v)?;
            }
        }
    }
    for _ in 0..repeats {
        let comps = g.connected_components();
        if comps.len() <= 1 {
            break;
        }
        match mode {
            StitchMode::Passes => {
                for (i, ci) in comps.iter().enumerate() {
                    let j = other_index(&mut rng, comps.len(), i);
                    let v = *ci.choose(&mut rng).expect("components are nonempty");
                    let w = *comps[j].choose(&mut rng).expect("components are nonempty");
                    g.add_edge(v, w)?;
                }
            }
            StitchMode::SingleEdges => {
                let i = rng.gen_range(0..comps.len());
                let j = other_index(&mut rng, comps.len(), i);
                let v = *comps[i].choose(&mut rng).expect("components are nonempty");
                let w = *comps[j].choose(&mut rng).expect("components are nonempty");
                g.add_edge(v, w)?;
            }
        }
    }
    Ok(g)
}

fn other_index(rng: &mut ChaCha8Rng, len: usize, i: usize) -> usize {
    let j = rng.gen_range(0..len - 1);
    if j >= i {
        j + 1
    } else {
        j
    }
}
