#![allow(dead_code)]

use gdt_core::Graph;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// G(n, p) without stitching; may be disconnected.
pub fn random_graph(n: usize, p: f64, seed: u64) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = Graph::new(n);
    for v in 1..n {
        for u in 0..v {
            if rng.gen_bool(p) {
                g.add_edge(u, v).unwrap();
            }
        }
    }
    g
}

pub fn random_perm(n: usize, seed: u64) -> Vec<usize> {
    use rand::seq::SliceRandom;
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    p
}

pub fn graph_from_bits(n: usize, bits: &[bool]) -> Graph {
    let mut g = Graph::new(n);
    let mut i = 0;
    for v in 1..n {
        for u in 0..v {
            if bits[i] {
                g.add_edge(u, v).unwrap();
            }
            i += 1;
        }
    }
    g
}

pub fn arb_graph(min_n: usize, max_n: usize) -> impl Strategy<Value = Graph> {
    (min_n..=max_n)
        .prop_flat_map(|n| prop::collection::vec(any::<bool>(), n * n.saturating_sub(1) / 2).prop_map(move |b| graph_from_bits(n, &b)))
}

pub fn arb_graph_and_perm(min_n: usize, max_n: usize) -> impl Strategy<Value = (Graph, Vec<usize>)> {
    arb_graph(min_n, max_n).prop_flat_map(|g| {
        let n = g.n();
        (Just(g), Just((0..n).collect::<Vec<usize>>()).prop_shuffle())
    })
}

/// Connected graphs from the stitched generator, across a spread of sizes
/// and densities.
pub fn connected_corpus(count: usize, max_n: usize, seed: u64) -> Vec<Graph> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let n = rng.gen_range(2..=max_n);
            let p = rng.gen_range(0.05..0.6);
            gdt_core::graph::er_stitched(n, p, 2, rng.gen()).unwrap()
        })
        .collect()
}
