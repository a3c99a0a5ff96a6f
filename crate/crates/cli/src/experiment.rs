//! Dataset layout, training runs and few-shot transfer.

use std::time::Instant;

use gdt_core::pe::PeKind;
use gdt_core::tasks::{dataset, knn_few_shot, majority_label, GenParams, Split, TaskInstance, TaskKind, Target};
use gdt_nn::train::Predictions;
use gdt_nn::{
    evaluate, prepare, prepare_examples, task_config, train_with, ForwardOptions, Gdt, ModelShape, OptimConfig,
    TrainOptions, TrainReport,
};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Data seeds select disjoint blocks of `2^24` instance indices.
pub const DATA_SEED_BITS: u32 = 24;

/// In-distribution evaluation graphs start this far into a block, so they
/// never overlap the training graphs of the same data seed.
pub const EVAL_OFFSET: u64 = 1 << 23;

pub fn index_base(data_seed: u64) -> Result<u64> {
    if data_seed >= 1 << DATA_SEED_BITS {
        return Err(CliError::Usage(format!("data seed must be below 2^{DATA_SEED_BITS}")));
    }
    Ok(data_seed << DATA_SEED_BITS)
}

/// Graphs `first..first + count` of a split within the block of `data_seed`.
pub fn split_data(
    task: TaskKind,
    n: usize,
    count: usize,
    split: Split,
    data_seed: u64,
    first: u64,
    gen: &GenParams,
) -> Result<Vec<TaskInstance>> {
    if first + count as u64 > 1 << DATA_SEED_BITS {
        return Err(CliError::Usage("instance range exceeds the data seed block".into()));
    }
    Ok(dataset(task, n, count, split, index_base(data_seed)? + first, gen)?)
}

pub fn train_set(task: TaskKind, n: usize, count: usize, data_seed: u64, gen: &GenParams) -> Result<Vec<TaskInstance>> {
    if count as u64 > EVAL_OFFSET {
        return Err(CliError::Usage(format!("at most {EVAL_OFFSET} training graphs")));
    }
    split_data(task, n, count, Split::InDistribution, data_seed, 0, gen)
}

/// Held-out graphs: in-distribution ones come after the training block,
/// the other splits use their own seed space.
pub fn eval_set(
    task: TaskKind,
    n: usize,
    count: usize,
    split: Split,
    data_seed: u64,
    gen: &GenParams,
) -> Result<Vec<TaskInstance>> {
    let first = if split == Split::InDistribution { EVAL_OFFSET } else { 0 };
    split_data(task, n, count, split, data_seed, first, gen)
}

#[derive(Clone, Debug)]
pub struct RunPlan {
    pub task: TaskKind,
    pub shape: ModelShape,
    /// Model initialization and batch order.
    pub seed: u64,
    pub data_seed: u64,
    pub n: usize,
    pub train_graphs: usize,
    pub eval_graphs: usize,
    pub optim: OptimConfig,
    pub jobs: usize,
}

pub struct RunResult {
    pub model: Gdt,
    pub report: TrainReport,
    pub eval: Predictions,
    pub seconds: f64,
}

/// Trains on the training block and scores the in-distribution hold-out.
pub fn train_run(plan: &RunPlan, gen: &GenParams, on_step: impl FnMut(usize, f64)) -> Result<RunResult> {
    let start = Instant::now();
    let cfg = task_config(plan.task, &plan.shape, plan.seed);
    let train = prepare_examples(&train_set(plan.task, plan.n, plan.train_graphs, plan.data_seed, gen)?, &cfg)?;
    let held_out = eval_set(plan.task, plan.n, plan.eval_graphs, Split::InDistribution, plan.data_seed, gen)?;
    let held_out = prepare_examples(&held_out, &cfg)?;
    let mut model = Gdt::new(cfg)?;
    let mut optim = plan.optim.clone();
    optim.seed = plan.seed;
    let report = train_with(&mut model, &train, &optim, TrainOptions { jobs: plan.jobs, fault: None }, on_step)?;
    let eval = evaluate(&model, &held_out, plan.jobs)?;
    Ok(RunResult { model, report, eval, seconds: start.elapsed().as_secs_f64() })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FewShotResult {
    pub shots: usize,
    pub k: usize,
    pub queries: usize,
    pub accuracy: f64,
    /// Accuracy of predicting the majority label of the support set.
    pub baseline: f64,
    pub baseline_label: u32,
}

impl FewShotResult {
    pub fn margin(&self) -> f64 {
        self.accuracy - self.baseline
    }
}

/// Final-layer node-token embeddings with their node labels, pooled over
/// `graphs` in input order.
pub fn node_embeddings(model: &Gdt, graphs: &[TaskInstance]) -> Result<(Vec<Vec<f64>>, Vec<u32>)> {
    let mut emb = Vec::new();
    let mut labels = Vec::new();
    for inst in graphs {
        let Target::Nodes(flags) = &inst.target else {
            return Err(CliError::Usage(format!("few-shot targets must be node labels, got {}", inst.kind.name())));
        };
        let g = prepare(&inst.graph, model.config())?;
        let fwd = model.forward(&g, ForwardOptions::default())?;
        emb.extend(fwd.node_embeddings().into_iter().map(<[f64]>::to_vec));
        labels.extend(flags.iter().map(|&b| u32::from(b)));
    }
    Ok((emb, labels))
}

/// k-NN on frozen embeddings: `shots` random nodes form the support, the
/// remaining nodes are queries.
pub fn few_shot(model: &Gdt, graphs: &[TaskInstance], shots: usize, k: usize, seed: u64) -> Result<FewShotResult> {
    let (emb, labels) = node_embeddings(model, graphs)?;
    if shots == 0 || shots >= emb.len() {
        return Err(CliError::Usage(format!("{shots} shots from a pool of {} nodes", emb.len())));
    }
    let mut order: Vec<usize> = (0..emb.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (support, queries) = order.split_at(shots);
    let s_emb: Vec<Vec<f64>> = support.iter().map(|&i| emb[i].clone()).collect();
    let s_lab: Vec<u32> = support.iter().map(|&i| labels[i]).collect();
    let q_emb: Vec<Vec<f64>> = queries.iter().map(|&i| emb[i].clone()).collect();
    let truth: Vec<u32> = queries.iter().map(|&i| labels[i]).collect();
    let pred = knn_few_shot(&s_emb, &s_lab, &q_emb, k)?;
    let majority = majority_label(&s_lab).expect("support is nonempty");
    let hits = pred.iter().zip(&truth).filter(|(p, t)| p == t).count();
    let base = truth.iter().filter(|&&t| t == majority).count();
    Ok(FewShotResult {
        shots,
        k,
        queries: truth.len(),
        accuracy: hits as f64 / truth.len() as f64,
        baseline: base as f64 / truth.len() as f64,
        baseline_label: majority,
    })
}

/// Kinds a model config can carry, for reports.
pub fn model_pe(model: &Gdt) -> PeKind {
    let c = model.config();
    if c.relative_pe != PeKind::NoPe {
        c.relative_pe
    } else {
        c.absolute_pe
    }
}
