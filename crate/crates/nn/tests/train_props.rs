use gdt_core::pe::PeKind;
use gdt_core::tasks::{generate, GenParams, TaskKind};
use gdt_nn::{
    evaluate, prepare_examples, task_config, train, Activation, Gdt, ModelShape, NnError, OptimConfig,
    TrainOptions,
};

fn shape(pe: PeKind) -> ModelShape {
    ModelShape { d: 16, d_f: 32, layers: 2, heads: 2, pe, pe_k: 4, activation: Activation::Gelu, dropout: 0.0 }
}

fn data(task: TaskKind, count: u64, n: usize, pe: PeKind) -> (Gdt, Vec<gdt_nn::Example>) {
    let cfg = task_config(task, &shape(pe), 1);
    let params = GenParams::with_expected_degree(3.0, 2);
    let inst: Vec<_> = (0..count).map(|s| generate(task, n, 500 + s, &params).unwrap()).collect();
    let ex = prepare_examples(&inst, &cfg).unwrap();
    (Gdt::new(cfg).unwrap(), ex)
}

#[test]
fn a_single_graph_is_memorised() {
    let (mut model, ex) = data(TaskKind::Bridges, 1, 8, PeKind::Rwse);
    let mut opt = OptimConfig::new(3e-3, 1, 800, 0);
    opt.weight_decay = 0.0;
    let report = train(&mut model, &ex, &opt, TrainOptions::default()).unwrap();
    let last = *report.step_losses.last().unwrap();
    assert!(last < 1e-3, "final loss {last}");
    assert_eq!(evaluate(&model, &ex, 1).unwrap().value, 1.0);
}

#[test]
fn zero_learning_rate_leaves_parameters_alone() {
    let (mut model, ex) = data(TaskKind::Cycles, 4, 7, PeKind::Lpe);
    let before = model.params().clone();
    train(&mut model, &ex, &OptimConfig::new(0.0, 2, 5, 0), TrainOptions::default()).unwrap();
    assert_eq!(model.params(), &before);
}

#[test]
fn same_seed_replays_exactly_across_thread_counts() {
    let (model, ex) = data(TaskKind::Flow, 6, 7, PeKind::Rrwp);
    let opt = OptimConfig::new(1e-3, 3, 8, 4);
    let run = |jobs| {
        let mut m = model.clone();
        let r = train(&mut m, &ex, &opt, TrainOptions { jobs, fault: None }).unwrap();
        (m, r.step_losses)
    };
    let (a, la) = run(1);
    let (b, lb) = run(1);
    let (c, lc) = run(2);
    assert_eq!(la, lb);
    assert_eq!(la, lc);
    assert_eq!(a.params(), b.params());
    assert_eq!(a.params(), c.params());
}

#[test]
fn different_seeds_visit_batches_differently() {
    let (model, ex) = data(TaskKind::Mst, 6, 7, PeKind::NoPe);
    let losses = |seed| {
        let mut m = model.clone();
        train(&mut m, &ex, &OptimConfig::new(1e-3, 2, 3, seed), TrainOptions::default()).unwrap().step_losses
    };
    assert_ne!(losses(0), losses(1));
}

#[test]
fn blown_up_weights_report_divergence() {
    let (mut model, ex) = data(TaskKind::Flow, 2, 6, PeKind::NoPe);
    for name in ["dec.2", "layer0.W_V", "layer1.W_V", "layer0.W_2", "layer1.W_2"] {
        model.params_mut().get_mut(name).unwrap().data_mut().iter_mut().for_each(|x| *x *= 1e300);
    }
    let err = train(&mut model, &ex, &OptimConfig::new(1e-3, 1, 3, 0), TrainOptions::default()).unwrap_err();
    match err {
        NnError::Diverged { step, trace, .. } => {
            assert!(step < 3);
            assert_eq!(trace.len(), step);
        }
        e => panic!("{e:?}"),
    }
}

#[test]
fn epoch_metrics_are_recorded() {
    let (mut model, ex) = data(TaskKind::Cycles, 4, 7, PeKind::Rwse);
    let report = train(&mut model, &ex, &OptimConfig::new(1e-3, 2, 5, 0), TrainOptions::default()).unwrap();
    // epochs end after steps 1 and 3, plus the final partial one
    let steps: Vec<usize> = report.epochs.iter().map(|e| e.step).collect();
    assert_eq!(steps, vec![1, 3, 4]);
    assert!(report.epochs.iter().all(|e| (0.0..=1.0).contains(&e.value)));
}
