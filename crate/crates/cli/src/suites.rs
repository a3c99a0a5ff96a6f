//! The invariant suites behind `gdt verify`.

use std::collections::HashMap;

use gdt_core::graph::{enumerate_connected_graphs, GraphClass};
use gdt_core::pe::{rwse, spectral_return_probabilities, PeKind};
use gdt_core::tasks::{generate, GenParams, TaskKind};
use gdt_core::wl::{distance_adjacency, gd_wl, one_wl};
use gdt_core::Graph;
use gdt_nn::gradcheck::{check_gradients, GradCheckOptions};
use gdt_nn::probe::{exhaustive_sweep, half_step_alphabet, probe_unchecked, single_class_counterexample, SweepReport};
use gdt_nn::{softmax_multiset_probe, GdtConfig, GradFault, OutputLevel, OutputSpec, Tokenization};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::error::Result;
use crate::report::Check;

/// `(d, T, h)` of the gradient-check models.
pub const GRADIENT_CONFIGS: [(usize, usize, usize); 3] = [(8, 1, 1), (8, 2, 2), (16, 2, 2)];

/// Factor applied to layer-norm input gradients by `--corrupt-gradient`.
pub const CORRUPTION_FACTOR: f64 = 1.5;

/// Small model that touches every parameter kind: both PE encoders, and
/// edge tokens with a scalar feature for the middle config.
pub fn gradient_config(index: usize, seed: u64) -> GdtConfig {
    let (d, layers, heads) = GRADIENT_CONFIGS[index];
    let mut cfg = GdtConfig::small(d, layers, heads, seed);
    cfg.d_f = 2 * d;
    cfg.absolute_pe = PeKind::Rwse;
    cfg.relative_pe = PeKind::Rrwp;
    cfg.pe_k = 4;
    cfg.rel_width = 4;
    match index {
        0 => cfg.output = OutputSpec { level: OutputLevel::Graph, dim: 1 },
        1 => {
            cfg.tokenization = Tokenization::Edge;
            cfg.input.label_vocab = 2;
            cfg.input.token_scalar = true;
            cfg.output = OutputSpec { level: OutputLevel::Edge, dim: 2 };
        }
        _ => cfg.output = OutputSpec { level: OutputLevel::Node, dim: 3 },
    }
    cfg
}

/// Finite-difference check of every parameter on the three configs.
pub fn gradient_checks(seed: u64, corrupt: bool) -> Result<Vec<Check>> {
    let graph = generate(TaskKind::Mst, 5, seed, &GenParams::with_expected_degree(2.5, 1))?.graph;
    let mut out = Vec::new();
    for i in 0..GRADIENT_CONFIGS.len() {
        let cfg = gradient_config(i, seed.wrapping_add(i as u64));
        let model = gdt_nn::Gdt::new(cfg.clone())?;
        let g = gdt_nn::prepare(&graph, &cfg)?;
        let opts = GradCheckOptions {
            fault: corrupt.then_some(GradFault { layer_norm_factor: CORRUPTION_FACTOR }),
            seed,
            ..Default::default()
        };
        let report = check_gradients(&model, &g, &[], opts)?;
        let worst = report.params.iter().map(|p| p.max_error).fold(0.0, f64::max);
        let failing: Vec<&str> = report.failures().map(|p| p.name.as_str()).collect();
        let (d, t, h) = GRADIENT_CONFIGS[i];
        let summary = if failing.is_empty() {
            format!("{} parameters, worst relative error {worst:.2e}", report.params.len())
        } else {
            format!("{} of {} parameters off: {}", failing.len(), report.params.len(), failing.join(" "))
        };
        out.push(
            Check::new(format!("gradient d={d} T={t} h={h}"), report.passed(), summary)
                .with_detail(serde_json::to_value(&report.params).expect("serializable")),
        );
    }
    Ok(out)
}

pub fn sweep_detail(r: &SweepReport) -> serde_json::Value {
    serde_json::to_value(r).expect("serializable")
}

/// The probe must agree with the exact exponent-multiset criterion on every
/// re-derived pair, and equal multisets must always give equal averages.
pub fn probe_agreement(r: &SweepReport) -> Check {
    let ok = r.cases > 0 && r.exact_mismatches == 0 && r.backward_violations == 0;
    Check::new(
        "softmax-probe",
        ok,
        format!(
            "{} cases, {} exact re-derivations, {} mismatches, {} backward violations",
            r.cases, r.exact_checked, r.exact_mismatches, r.backward_violations
        ),
    )
    .with_detail(sweep_detail(r))
}

/// Equal averages imply equal multisets, for every swept case.
pub fn lemma_forward(r: &SweepReport) -> Check {
    let summary = match &r.example {
        Some(e) if r.forward_violations > 0 => {
            format!("{} of {} cases have equal averages but different multisets, e.g. {e}", r.forward_violations, r.cases)
        }
        _ => format!("{} cases, no forward violations", r.cases),
    };
    Check::new("softmax-lemma-forward", r.forward_violations == 0 && r.cases > 0, summary).with_detail(sweep_detail(r))
}

/// One colour class: equal averages with different multisets, and the
/// checked probe refuses the input.
pub fn single_colour_check() -> Result<Check> {
    let (v, w, x) = single_class_counterexample();
    let verdict = probe_unchecked(&v, &w, &x)?;
    let refused = softmax_multiset_probe(&v, &w, &x).is_err();
    Ok(Check::new(
        "softmax-single-colour",
        verdict.lhs_equal && !verdict.multisets_equal && refused,
        format!(
            "lhs_equal={} multisets_equal={} precondition enforced={refused}",
            verdict.lhs_equal, verdict.multisets_equal
        ),
    ))
}

pub fn probe_sweep(seed: u64) -> Result<SweepReport> {
    Ok(exhaustive_sweep(&half_step_alphabet(), 2, 5, 10_000, seed)?)
}

/// Relabels colors by first appearance.
fn normalize(colors: &[usize]) -> Vec<usize> {
    let mut map = HashMap::new();
    colors
        .iter()
        .map(|c| {
            let next = map.len();
            *map.entry(*c).or_insert(next)
        })
        .collect()
}

pub fn random_graph(n: usize, p: f64, rng: &mut impl Rng) -> Graph {
    let mut g = Graph::new(n);
    for v in 1..n {
        for u in 0..v {
            if rng.gen_bool(p) {
                g.add_edge(u, v).expect("fresh simple edge");
            }
        }
    }
    g
}

/// GD-WL with the adjacency distance against 1-WL, partition by partition.
pub fn gd_wl_matches_one_wl(count: usize, max_n: usize, seed: u64) -> Result<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mismatched = Vec::new();
    let mut rounds = 0;
    for i in 0..count {
        let n = rng.gen_range(1..=max_n);
        let p = [0.05, 0.1, 0.2, 0.35, 0.6][rng.gen_range(0..5)];
        let g = random_graph(n, p, &mut rng);
        let a = one_wl(&g, n + 1);
        let b = gd_wl(&g, &distance_adjacency(&g), n + 1)?;
        rounds += a.history.len();
        let same = a.history.len() == b.history.len()
            && a.history.iter().zip(&b.history).all(|(x, y)| normalize(x) == normalize(y));
        if !same {
            mismatched.push(i);
        }
    }
    Ok(Check::new(
        "gd-wl-adjacency-is-1-wl",
        mismatched.is_empty(),
        format!("{count} graphs with n <= {max_n}, {rounds} partitions compared, {} mismatches", mismatched.len()),
    )
    .with_detail(json!({ "mismatched_graphs": mismatched })))
}

/// Exact RWSE against the eigen-decomposition on every connected graph.
pub fn spectral_identity(max_n: usize, walks: usize, tol: f64) -> Result<Check> {
    let mut worst: f64 = 0.0;
    let mut graphs = 0;
    for n in 2..=max_n {
        for g in enumerate_connected_graphs(n, GraphClass::Connected)? {
            let exact = rwse(&g, walks)?.to_f64();
            let spectral = spectral_return_probabilities(&g, walks)?;
            for (a, b) in exact.iter().zip(&spectral) {
                for (x, y) in a.iter().zip(b) {
                    worst = worst.max((x - y).abs());
                }
            }
            graphs += 1;
        }
    }
    Ok(Check::new(
        "spectral-return-probabilities",
        worst <= tol,
        format!("{graphs} connected graphs with 2 <= n <= {max_n}, t <= {walks}: max deviation {worst:.3e}"),
    )
    .with_detail(json!({ "graphs": graphs, "max_abs_deviation": worst, "tolerance": tol })))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_gradient_config_validates() {
        for i in 0..GRADIENT_CONFIGS.len() {
            gradient_config(i, 0).validate().unwrap();
        }
    }

    #[test]
    fn spectral_identity_on_tiny_graphs() {
        let c = spectral_identity(4, 6, 1e-9).unwrap();
        assert!(c.passed, "{}", c.summary);
    }

    #[test]
    fn gd_wl_check_runs_on_a_small_corpus() {
        assert!(gd_wl_matches_one_wl(20, 10, 1).unwrap().passed);
    }

    #[test]
    fn single_colour_example_holds() {
        assert!(single_colour_check().unwrap().passed);
    }
}
