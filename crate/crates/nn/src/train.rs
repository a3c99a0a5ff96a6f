//! Task plumbing and the training loop.

use std::rc::Rc;

use gdt_core::pe::PeKind;
use gdt_core::tasks::{f1, mae, Metric, TaskInstance, TaskKind, Target};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::{Activation, GdtConfig, InputSpec, OutputLevel, OutputSpec, Tokenization};
use crate::error::{NnError, Result};
use crate::model::{ForwardOptions, Gdt};
use crate::optim::{clip_global_norm, AdamW, OptimConfig};
use crate::prepare::{prepare, PreparedGraph};
use crate::tape::{GradFault, Tensor};

/// Architecture knobs shared by every task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelShape {
    pub d: usize,
    pub d_f: usize,
    #[serde(rename = "T")]
    pub layers: usize,
    #[serde(rename = "h")]
    pub heads: usize,
    pub pe: PeKind,
    pub pe_k: usize,
    pub activation: Activation,
    #[serde(default)]
    pub dropout: f64,
}

/// Model configuration for `task`: Bridges and MST read edge tokens, Cycles
/// node tokens, Flow the `[cls]` token.
pub fn task_config(task: TaskKind, shape: &ModelShape, seed: u64) -> GdtConfig {
    let (tokenization, vocab, scalar, level, dim) = match task {
        TaskKind::Bridges => (Tokenization::Edge, 2, false, OutputLevel::Edge, 2),
        TaskKind::Mst => (Tokenization::Edge, 2, true, OutputLevel::Edge, 2),
        TaskKind::Cycles => (Tokenization::Node, 1, false, OutputLevel::Node, 2),
        TaskKind::Flow => (Tokenization::Node, 3, false, OutputLevel::Graph, 1),
    };
    let (absolute_pe, relative_pe) = if shape.pe.is_relative() {
        (PeKind::NoPe, shape.pe)
    } else {
        (shape.pe, PeKind::NoPe)
    };
    GdtConfig {
        d: shape.d,
        d_f: shape.d_f,
        layers: shape.layers,
        heads: shape.heads,
        tokenization,
        absolute_pe,
        relative_pe,
        pe_k: shape.pe_k,
        rel_width: 16,
        activation: shape.activation,
        dropout: shape.dropout,
        seed,
        input: InputSpec { label_vocab: vocab, token_scalar: scalar, weight_scale: 10.0 },
        output: OutputSpec { level, dim },
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Labels {
    /// Class per decoded token.
    Classes(Vec<usize>),
    /// Regression targets, already divided by the weight scale.
    Values(Vec<f64>),
}

#[derive(Clone, Debug)]
pub struct Example {
    pub graph: PreparedGraph,
    pub labels: Labels,
}

impl Example {
    pub fn from_task(inst: &TaskInstance, cfg: &GdtConfig) -> Result<Self> {
        let graph = prepare(&inst.graph, cfg)?;
        let labels = match (&inst.target, cfg.output.level) {
            (Target::Edges(f), OutputLevel::Edge) | (Target::Nodes(f), OutputLevel::Node) => {
                Labels::Classes(f.iter().map(|&b| b as usize).collect())
            }
            (Target::Scalar(_), OutputLevel::Graph) => {
                let v = inst.target.scalar_f64().ok_or_else(|| NnError::Precondition("target not finite".into()))?;
                Labels::Values(vec![v / cfg.input.weight_scale])
            }
            _ => {
                return Err(NnError::Config(format!(
                    "{} targets do not fit {:?} outputs",
                    inst.kind.name(),
                    cfg.output.level
                )))
            }
        };
        Ok(Example { graph, labels })
    }
}

pub fn prepare_examples(data: &[TaskInstance], cfg: &GdtConfig) -> Result<Vec<Example>> {
    data.iter().map(|i| Example::from_task(i, cfg)).collect()
}

/// Loss and parameter gradients (store order) of one example.
pub fn example_gradients(model: &Gdt, ex: &Example, opts: ForwardOptions) -> Result<(f64, Vec<Vec<f64>>)> {
    example_step(model, ex, opts).map(|(l, g, _)| (l, g))
}

fn example_step(model: &Gdt, ex: &Example, opts: ForwardOptions) -> Result<(f64, Vec<Vec<f64>>, Tensor)> {
    let mut fwd = model.forward(&ex.graph, opts)?;
    let loss = match &ex.labels {
        Labels::Classes(c) => fwd.tape.cross_entropy(fwd.output, Rc::new(c.clone()))?,
        Labels::Values(v) => fwd.tape.l1(fwd.output, Rc::new(v.clone()))?,
    };
    let value = fwd.tape.value(loss).data()[0];
    let grads = fwd.tape.backward(loss)?;
    let out = fwd
        .params
        .vars()
        .iter()
        .zip(model.params().iter())
        .map(|(&v, p)| grads.get(v).map_or_else(|| vec![0.0; p.value.len()], <[f64]>::to_vec))
        .collect();
    Ok((value, out, fwd.outputs().clone()))
}

/// Per-example results, computed on up to `jobs` threads and returned in
/// input order.
fn map_examples<T: Send>(
    items: &[usize],
    jobs: usize,
    f: impl Fn(usize) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    let jobs = jobs.max(1).min(items.len().max(1));
    if jobs == 1 {
        return items.iter().map(|&i| f(i)).collect();
    }
    let chunk = items.len().div_ceil(jobs);
    let f = &f;
    let parts: Vec<Result<Vec<T>>> = std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|c| s.spawn(move || c.iter().map(|&i| f(i)).collect::<Result<Vec<T>>>()))
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
    });
    let mut out = Vec::with_capacity(items.len());
    for p in parts {
        out.extend(p?);
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetric {
    pub epoch: usize,
    pub step: usize,
    pub metric: Metric,
    pub value: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub step_losses: Vec<f64>,
    /// Metric over the training predictions made during each epoch.
    pub epochs: Vec<EpochMetric>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Predictions {
    pub metric: Metric,
    pub value: f64,
    /// Flattened per-token predictions (classes as 0/1, or rescaled values).
    pub classes: Vec<usize>,
    pub values: Vec<f64>,
}

fn score(preds: &[(Labels, Labels)]) -> Result<(Metric, f64)> {
    let mut pc = Vec::new();
    let mut tc = Vec::new();
    let mut pv = Vec::new();
    let mut tv = Vec::new();
    for (p, t) in preds {
        match (p, t) {
            (Labels::Classes(p), Labels::Classes(t)) => {
                pc.extend(p.iter().map(|&c| c == 1));
                tc.extend(t.iter().map(|&c| c == 1));
            }
            (Labels::Values(p), Labels::Values(t)) => {
                pv.extend_from_slice(p);
                tv.extend_from_slice(t);
            }
            _ => return Err(NnError::Precondition("mixed label kinds".into())),
        }
    }
    if !pc.is_empty() {
        Ok((Metric::F1, f1(&pc, &tc)?))
    } else {
        Ok((Metric::Mae, mae(&pv, &tv)?))
    }
}

fn decode(model: &Gdt, out: &Tensor, like: &Labels) -> Labels {
    match like {
        Labels::Classes(_) => Labels::Classes(
            (0..out.rows())
                .map(|r| {
                    let row = out.row(r);
                    // ties go to class 0
                    (1..row.len()).fold(0, |best, c| if row[c] > row[best] { c } else { best })
                })
                .collect(),
        ),
        Labels::Values(_) => {
            let s = model.config().input.weight_scale;
            Labels::Values(out.data().iter().map(|v| v * s).collect())
        }
    }
}

fn rescale(model: &Gdt, l: &Labels) -> Labels {
    match l {
        Labels::Values(v) => {
            let s = model.config().input.weight_scale;
            Labels::Values(v.iter().map(|x| x * s).collect())
        }
        other => other.clone(),
    }
}

/// Evaluation-mode predictions and the task metric (F1 on the positive
/// class, pooled over all tokens; MAE in target units).
pub fn evaluate(model: &Gdt, data: &[Example], jobs: usize) -> Result<Predictions> {
    if data.is_empty() {
        return Err(NnError::Precondition("empty evaluation set".into()));
    }
    let idx: Vec<usize> = (0..data.len()).collect();
    let pairs = map_examples(&idx, jobs, |i| {
        let fwd = model.forward(&data[i].graph, ForwardOptions::default())?;
        Ok((decode(model, fwd.outputs(), &data[i].labels), rescale(model, &data[i].labels)))
    })?;
    let (metric, value) = score(&pairs)?;
    let mut classes = Vec::new();
    let mut values = Vec::new();
    for (p, _) in &pairs {
        match p {
            Labels::Classes(c) => classes.extend_from_slice(c),
            Labels::Values(v) => values.extend_from_slice(v),
        }
    }
    Ok(Predictions { metric, value, classes, values })
}

#[derive(Clone, Copy, Debug, Default)]
pub struct TrainOptions {
    pub jobs: usize,
    pub fault: Option<GradFault>,
}

/// Minibatch training. Batches walk a seeded shuffle of the data, one
/// reshuffle per epoch; gradients are averaged over the batch in input order.
pub fn train(model: &mut Gdt, data: &[Example], opt: &OptimConfig, opts: TrainOptions) -> Result<TrainReport> {
    train_with(model, data, opt, opts, |_, _| {})
}

/// [`train`] with a callback after every step (`step`, `loss`).
pub fn train_with(
    model: &mut Gdt,
    data: &[Example],
    opt: &OptimConfig,
    opts: TrainOptions,
    mut on_step: impl FnMut(usize, f64),
) -> Result<TrainReport> {
    opt.validate()?;
    if data.is_empty() {
        return Err(NnError::Precondition("empty training set".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opt.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng);
    let mut cursor = 0;
    let mut epoch = 0;
    let mut epoch_preds: Vec<(Labels, Labels)> = Vec::new();
    let mut adam = AdamW::new(model.params());
    let mut report = TrainReport { step_losses: Vec::with_capacity(opt.steps), epochs: Vec::new() };
    let dropout_base = opt.seed.wrapping_mul(0x9e37_79b9_7f4a_7c15);

    for step in 0..opt.steps {
        let mut batch = Vec::with_capacity(opt.batch_size);
        let mut epoch_done = false;
        for _ in 0..opt.batch_size {
            batch.push(order[cursor]);
            cursor += 1;
            if cursor == order.len() {
                cursor = 0;
                order.shuffle(&mut rng);
                epoch_done = true;
            }
        }
        let m: &Gdt = model;
        let results = map_examples(&batch, opts.jobs, |i| {
            let fo = ForwardOptions {
                fault: opts.fault,
                dropout_seed: Some(dropout_base ^ ((step as u64) << 20) ^ i as u64),
            };
            let (loss, grads, out) = example_step(m, &data[i], fo)?;
            let pred = decode(m, &out, &data[i].labels);
            Ok((loss, grads, pred))
        });
        let results = match results {
            Ok(r) => r,
            Err(NnError::NonFinite(_)) => {
                return Err(NnError::Diverged { step, loss: f64::NAN, trace: report.step_losses })
            }
            Err(e) => return Err(e),
        };
        let scale = 1.0 / batch.len() as f64;
        let mut loss = 0.0;
        let mut grads: Vec<Vec<f64>> = model.params().iter().map(|p| vec![0.0; p.value.len()]).collect();
        for ((l, g, pred), &i) in results.into_iter().zip(&batch) {
            loss += l * scale;
            for (acc, gi) in grads.iter_mut().zip(g) {
                acc.iter_mut().zip(gi).for_each(|(a, b)| *a += b * scale);
            }
            epoch_preds.push((pred, rescale(model, &data[i].labels)));
        }
        if !loss.is_finite() {
            return Err(NnError::Diverged { step, loss, trace: report.step_losses });
        }
        clip_global_norm(&mut grads, opt.grad_clip_norm);
        adam.step(model.params_mut(), &grads, opt.lr_at(step), opt);
        report.step_losses.push(loss);
        on_step(step, loss);

        if epoch_done || step + 1 == opt.steps {
            let (metric, value) = score(&epoch_preds)?;
            report.epochs.push(EpochMetric { epoch, step, metric, value });
            epoch_preds.clear();
            epoch += 1;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use gdt_core::tasks::{generate, GenParams};

    fn shape(pe: PeKind) -> ModelShape {
        ModelShape { d: 8, d_f: 16, layers: 1, heads: 2, pe, pe_k: 3, activation: Activation::Gelu, dropout: 0.0 }
    }

    #[test]
    fn configs_validate_for_every_task() {
        for task in TaskKind::ALL {
            for pe in PeKind::ALL {
                task_config(task, &shape(pe), 0).validate().unwrap();
            }
        }
    }

    #[test]
    fn examples_line_up_with_outputs() {
        let params = GenParams::with_expected_degree(3.0, 2);
        for task in TaskKind::ALL {
            let cfg = task_config(task, &shape(PeKind::Rwse), 0);
            let inst = generate(task, 10, 1, &params).unwrap();
            let ex = Example::from_task(&inst, &cfg).unwrap();
            let model = Gdt::new(cfg).unwrap();
            let fwd = model.forward(&ex.graph, ForwardOptions::default()).unwrap();
            let rows = match &ex.labels {
                Labels::Classes(c) => c.len(),
                Labels::Values(v) => v.len(),
            };
            assert_eq!(fwd.outputs().rows(), rows, "{task:?}");
        }
    }
}
