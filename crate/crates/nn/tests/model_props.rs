mod common;

use std::rc::Rc;

use common::{max_abs_diff, norm, random_graph, random_perm};
use gdt_core::graph::csl_graph;
use gdt_core::pe::PeKind;
use gdt_core::wl::one_wl;
use gdt_core::Graph;
use gdt_nn::gradcheck::{check_gradients, GradCheckOptions};
use gdt_nn::params::ParamGroup;
use gdt_nn::tape::GradFault;
use gdt_nn::{
    prepare, tokenize, ForwardOptions, Gdt, GdtConfig, NnError, OutputLevel, ParamStore, Tape, Tokenization,
};

fn config(abs: PeKind, rel: PeKind, seed: u64) -> GdtConfig {
    let mut c = GdtConfig::small(8, 2, 2, seed);
    c.absolute_pe = abs;
    c.relative_pe = rel;
    c.pe_k = 4;
    c.output.level = OutputLevel::Node;
    c.output.dim = 3;
    c
}

#[test]
fn token_batch_shapes() {
    let cfg = GdtConfig::small(8, 1, 2, 0);
    let model = Gdt::new(cfg.clone()).unwrap();
    let g = prepare(&Graph::path(5), &cfg).unwrap();
    let mut tape = Tape::new();
    let p = model.params().register(&mut tape).unwrap();
    let b = tokenize(&mut tape, &p, &cfg, &g).unwrap();
    assert_eq!(tape.value(b.x).shape(), &[6, 8]);
    assert_eq!(tape.value(b.bias).shape(), &[36, 2]);

    let mut ecfg = cfg.clone();
    ecfg.tokenization = Tokenization::Edge;
    ecfg.input.label_vocab = 2;
    let eg = prepare(&Graph::cycle(3), &ecfg).unwrap();
    let mut tape = Tape::new();
    let p = Gdt::new(ecfg.clone()).unwrap().params().register(&mut tape).unwrap();
    let b = tokenize(&mut tape, &p, &ecfg, &eg).unwrap();
    assert_eq!(tape.value(b.x).rows(), 7);
    assert_eq!(b.token_origin.len(), 7);
}

#[test]
fn zero_projection_leaves_raw_embeddings() {
    let cfg = config(PeKind::Rwse, PeKind::NoPe, 3);
    let mut model = Gdt::new(cfg.clone()).unwrap();
    model.params_mut().get_mut("W_P").unwrap().data_mut().fill(0.0);
    let g = prepare(&Graph::star(4), &cfg).unwrap();
    let mut tape = Tape::new();
    let p = model.params().register(&mut tape).unwrap();
    let b = tokenize(&mut tape, &p, &cfg, &g).unwrap();
    let x = tape.value(b.x);
    let label = model.params().get("embed.label").unwrap();
    let bias = model.params().get("embed.bias").unwrap();
    for i in 0..5 {
        let want: Vec<f64> = label.row(0).iter().zip(bias.data()).map(|(a, b)| a + b).collect();
        assert_eq!(x.row(i), want.as_slice());
    }
    assert_eq!(x.row(5), model.params().get("cls.token").unwrap().data());
}

#[test]
fn graph_head_matches_output_dim() {
    let mut cfg = GdtConfig::small(8, 1, 1, 0);
    cfg.output.dim = 5;
    let model = Gdt::new(cfg.clone()).unwrap();
    let fwd = model.forward(&prepare(&Graph::cycle(6), &cfg).unwrap(), ForwardOptions::default()).unwrap();
    assert_eq!(fwd.outputs().shape(), &[1, 5]);
}

#[test]
fn edge_outputs_need_edge_tokens() {
    let cfg = GdtConfig::small(8, 1, 1, 0);
    let model = Gdt::new(cfg.clone()).unwrap();
    let g = prepare(&Graph::cycle(4), &cfg).unwrap();
    assert!(matches!(
        model.forward_level(&g, OutputLevel::Edge, ForwardOptions::default()),
        Err(NnError::Config(_))
    ));
    let fwd = model.forward(&g, ForwardOptions::default()).unwrap();
    assert!(fwd.edge_embeddings().is_err());
    assert_eq!(fwd.node_embeddings().len(), 4);
}

#[test]
fn nope_embeddings_respect_one_wl_classes() {
    let mut worst: f64 = 0.0;
    for s in 0..20u64 {
        let g = random_graph(10, 0.25, s);
        let colors = one_wl(&g, 100).colors;
        for draw in 0..5u64 {
            let cfg = config(PeKind::NoPe, PeKind::NoPe, 100 * s + draw);
            let model = Gdt::new(cfg.clone()).unwrap();
            let fwd = model.forward(&prepare(&g, &cfg).unwrap(), ForwardOptions::default()).unwrap();
            let emb = fwd.node_embeddings();
            for u in 0..10 {
                for v in u + 1..10 {
                    if colors[u] == colors[v] {
                        worst = worst.max(max_abs_diff(emb[u], emb[v]));
                    }
                }
            }
        }
    }
    assert!(worst <= 1e-9, "{worst}");
}

#[test]
fn isomorphic_inputs_give_equal_cls_embeddings() {
    let g = random_graph(9, 0.35, 7);
    let h = g.permuted(&random_perm(9, 8)).unwrap();
    for (abs, rel) in [
        (PeKind::NoPe, PeKind::NoPe),
        (PeKind::Rwse, PeKind::NoPe),
        (PeKind::Spe, PeKind::NoPe),
        (PeKind::NoPe, PeKind::Rrwp),
    ] {
        let cfg = config(abs, rel, 5);
        let model = Gdt::new(cfg.clone()).unwrap();
        let a = model.forward(&prepare(&g, &cfg).unwrap(), ForwardOptions::default()).unwrap();
        let b = model.forward(&prepare(&h, &cfg).unwrap(), ForwardOptions::default()).unwrap();
        assert!(max_abs_diff(a.cls_embedding(), b.cls_embedding()) < 1e-9, "{abs} {rel}");
    }
}

#[test]
fn node_embeddings_are_permutation_equivariant() {
    let g = random_graph(8, 0.4, 11);
    let perm = random_perm(8, 12);
    let h = g.permuted(&perm).unwrap();
    for (abs, rel) in [(PeKind::Rwse, PeKind::NoPe), (PeKind::Spe, PeKind::Rrwp)] {
        let cfg = config(abs, rel, 9);
        let model = Gdt::new(cfg.clone()).unwrap();
        let a = model.forward(&prepare(&g, &cfg).unwrap(), ForwardOptions::default()).unwrap();
        let b = model.forward(&prepare(&h, &cfg).unwrap(), ForwardOptions::default()).unwrap();
        let (ea, eb) = (a.node_embeddings(), b.node_embeddings());
        for v in 0..8 {
            assert!(max_abs_diff(ea[v], eb[perm[v]]) < 1e-9);
        }
    }
}

#[test]
fn nope_cannot_split_csl_pairs_but_rrwp_can() {
    let a = csl_graph(11, 2).unwrap().graph;
    let b = csl_graph(11, 3).unwrap().graph;
    let cls = |cfg: &GdtConfig, g: &Graph| {
        let m = Gdt::new(cfg.clone()).unwrap();
        m.forward(&prepare(g, cfg).unwrap(), ForwardOptions::default()).unwrap().cls_embedding().to_vec()
    };
    let nope = GdtConfig::small(8, 2, 2, 1);
    let (x, y) = (cls(&nope, &a), cls(&nope, &b));
    assert!(max_abs_diff(&x, &y) <= 1e-9 * norm(&x).max(1.0));
    let mut rrwp = nope.clone();
    rrwp.relative_pe = PeKind::Rrwp;
    rrwp.pe_k = 4;
    assert!(max_abs_diff(&cls(&rrwp, &a), &cls(&rrwp, &b)) > 1e-6);
}

fn loss_grads(model: &Gdt, g: &gdt_nn::PreparedGraph, factor: f64) -> Vec<Vec<f64>> {
    let mut fwd = model.forward(g, ForwardOptions::default()).unwrap();
    let n = fwd.outputs().len();
    let w = Rc::new((0..n).map(|i| factor * (i as f64 + 1.0).sin()).collect::<Vec<_>>());
    let loss = fwd.tape.dot(fwd.output, w).unwrap();
    let grads = fwd.tape.backward(loss).unwrap();
    fwd.params
        .vars()
        .iter()
        .zip(model.params().iter())
        .map(|(&v, p)| grads.get(v).map_or_else(|| vec![0.0; p.value.len()], <[f64]>::to_vec))
        .collect()
}

#[test]
fn unused_relative_projection_gets_zero_gradient() {
    let cfg = config(PeKind::Rwse, PeKind::NoPe, 2);
    let model = Gdt::new(cfg.clone()).unwrap();
    let g = prepare(&random_graph(7, 0.4, 1), &cfg).unwrap();
    let grads = loss_grads(&model, &g, 1.0);
    let at = model.params().position("W_U").unwrap();
    assert!(grads[at].iter().all(|&x| x == 0.0));
    let wp = model.params().position("W_P").unwrap();
    assert!(grads[wp].iter().any(|&x| x != 0.0));
}

#[test]
fn doubling_the_loss_doubles_every_gradient() {
    let cfg = config(PeKind::Rwse, PeKind::Rrwp, 4);
    let model = Gdt::new(cfg.clone()).unwrap();
    let g = prepare(&random_graph(6, 0.5, 3), &cfg).unwrap();
    let one = loss_grads(&model, &g, 1.0);
    let two = loss_grads(&model, &g, 2.0);
    for (a, b) in one.iter().zip(&two) {
        for (x, y) in a.iter().zip(b) {
            assert!((2.0 * x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }
}

#[test]
fn finite_differences_agree_on_every_parameter() {
    let cfg = config(PeKind::Rwse, PeKind::Rrwp, 6);
    let model = Gdt::new(cfg.clone()).unwrap();
    let g = prepare(&random_graph(5, 0.5, 5), &cfg).unwrap();
    let report = check_gradients(&model, &g, &[], GradCheckOptions::default()).unwrap();
    let bad: Vec<_> = report.failures().collect();
    assert!(bad.is_empty(), "{bad:?}");
    assert_eq!(report.params.len(), model.params().len());
}

#[test]
fn corrupted_gradients_are_caught() {
    let cfg = config(PeKind::Rwse, PeKind::NoPe, 6);
    let model = Gdt::new(cfg.clone()).unwrap();
    let g = prepare(&random_graph(5, 0.5, 5), &cfg).unwrap();
    let opts = GradCheckOptions { fault: Some(GradFault { layer_norm_factor: 1.5 }), ..Default::default() };
    let report = check_gradients(&model, &g, &[ParamGroup::Ledger], opts).unwrap();
    assert!(!report.passed());
    assert!(report.failures().any(|p| p.name.starts_with("layer0.")));
}

#[test]
fn parameters_survive_a_checkpoint_file() {
    let cfg = config(PeKind::Lpe, PeKind::NoPe, 8);
    let model = Gdt::new(cfg.clone()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    model.params().save(&cfg, &path).unwrap();
    let (cfg2, params) = ParamStore::load(&path).unwrap();
    assert_eq!(cfg2, cfg);
    assert_eq!(&params, model.params());
}
