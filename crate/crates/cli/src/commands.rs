//! Argument parsing and the subcommands of `gdt`.
//!
//! Exit codes: 0 when every requested check passes, 1 when one fails (or
//! training diverges), 2 for usage errors. A report is written in every
//! case once the arguments parse.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use gdt_core::graph::csl_graph;
use gdt_core::pe::{absolute_features, rrwp, PeDump, PeKind};
use gdt_core::tasks::{Metric, MetricRecord, Split, TaskInstance, TaskKind};
use gdt_core::wl::{distance_adjacency, distance_spd, gd_wl, one_wl, partitions_distinguish, DistanceMatrix};
use gdt_core::graph::GraphJson;
use gdt_core::Graph;
use gdt_nn::{evaluate, prepare_examples, Gdt, NnError, ParamStore};
use serde::Deserialize;
use serde_json::json;

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};
use crate::experiment::{eval_set, few_shot, model_pe, split_data, train_run, RunPlan};
use crate::hierarchy::{self, HierarchyParams};
use crate::report::{Check, Format, Report};
use crate::suites;

#[derive(Debug, Parser)]
#[command(name = "gdt", version, about = "Graph transformer lab: WL tests, positional encodings, training and checks")]
pub struct Cli {
    /// Seed for every random choice the command makes.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Report (or dataset) destination; stdout when absent.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    /// Worker threads for per-example work.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
    /// Experiment config (TOML); the shipped defaults when absent.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a task dataset as JSON lines.
    Gen(GenArgs),
    /// Compute positional encodings of a graph.
    Pe(PeArgs),
    /// Run 1-WL or GD-WL on a pair of graphs.
    Wl(WlArgs),
    /// PE expressivity checks on CSL graphs.
    Hierarchy(HierarchyArgs),
    /// Train a model on a task.
    Train(TrainArgs),
    /// Evaluate a checkpoint.
    Eval(EvalArgs),
    /// k-NN transfer from a trained model's node embeddings.
    Fewshot(FewShotArgs),
    /// Run the invariant suites.
    Verify(VerifyArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    InDistribution,
    Extrapolation,
    FewShot,
}

impl From<SplitArg> for Split {
    fn from(s: SplitArg) -> Split {
        match s {
            SplitArg::InDistribution => Split::InDistribution,
            SplitArg::Extrapolation => Split::Extrapolation,
            SplitArg::FewShot => Split::FewShot,
        }
    }
}

#[derive(Debug, Args)]
pub struct GenArgs {
    #[arg(long, value_parser = parse_task)]
    pub task: TaskKind,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub count: usize,
    #[arg(long, value_enum, default_value_t = SplitArg::InDistribution)]
    pub split: SplitArg,
    /// First instance index within the seed's block.
    #[arg(long, default_value_t = 0)]
    pub first: u64,
}

#[derive(Debug, Args)]
pub struct PeArgs {
    /// Graph JSON file.
    #[arg(long, conflicts_with = "csl", required_unless_present = "csl")]
    pub graph: Option<PathBuf>,
    /// CSL graph `n,k` instead of a file.
    #[arg(long, value_parser = parse_pair)]
    pub csl: Option<(usize, usize)>,
    #[arg(long, value_parser = parse_pe)]
    pub kind: PeKind,
    #[arg(long, default_value_t = 8)]
    pub k: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum AlgorithmArg {
    #[value(name = "1-wl")]
    OneWl,
    #[value(name = "gd-wl")]
    GdWl,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DistanceArg {
    Adjacency,
    Spd,
    Rrwp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Expectation {
    Distinguishable,
    Indistinguishable,
}

#[derive(Debug, Args)]
pub struct WlArgs {
    /// JSON file `{"first": graph, "second": graph}`.
    #[arg(long, conflicts_with = "csl", required_unless_present = "csl")]
    pub pair: Option<PathBuf>,
    /// CSL pair `n,a,b`: CSL(n,a) against CSL(n,b).
    #[arg(long, value_parser = parse_triple)]
    pub csl: Option<(usize, usize, usize)>,
    #[arg(long, value_enum, default_value_t = AlgorithmArg::OneWl)]
    pub algorithm: AlgorithmArg,
    #[arg(long, value_enum, default_value_t = DistanceArg::Spd)]
    pub distance: DistanceArg,
    /// Walk count for the RRWP distance.
    #[arg(long, default_value_t = 8)]
    pub k: usize,
    /// Turn the verdict into a check.
    #[arg(long, value_enum)]
    pub expect: Option<Expectation>,
}

#[derive(Debug, Args)]
pub struct HierarchyArgs {
    #[arg(long, default_value = "csl")]
    pub family: String,
    #[arg(long, default_value_t = HierarchyParams::default().max_n)]
    pub max_n: usize,
    #[arg(long, default_value_t = HierarchyParams::default().k)]
    pub k: usize,
    #[arg(long, default_value_t = HierarchyParams::default().threshold_max_n)]
    pub threshold_max_n: usize,
    #[arg(long, default_value_t = HierarchyParams::default().blind_walks)]
    pub blind_walks: usize,
}

/// Overrides of the `[model]` and `[training]` config sections.
#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub d_f: Option<usize>,
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub pe_k: Option<usize>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub train_graphs: Option<usize>,
    #[arg(long)]
    pub eval_graphs: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, value_parser = parse_task)]
    pub task: TaskKind,
    #[arg(long, value_parser = parse_pe)]
    pub pe: PeKind,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Dataset block; defaults to 0 so model seeds share their data.
    #[arg(long, default_value_t = 0)]
    pub data_seed: u64,
    /// Write the trained parameters here.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Check: F1/accuracy at least, or MAE at most, this value.
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Mean training loss is logged every this many steps.
    #[arg(long, default_value_t = 100)]
    pub log_every: usize,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long, value_parser = parse_task)]
    pub task: TaskKind,
    #[arg(long, value_enum, default_value_t = SplitArg::InDistribution)]
    pub split: SplitArg,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub count: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub data_seed: u64,
    #[arg(long)]
    pub threshold: Option<f64>,
}

#[derive(Debug, Args)]
pub struct FewShotArgs {
    /// Model trained on the source task.
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Node-level target task.
    #[arg(long, value_parser = parse_task, default_value = "cycles")]
    pub task: TaskKind,
    #[arg(long)]
    pub shots: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub graphs: Option<usize>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub data_seed: u64,
    /// Check: accuracy beats the majority baseline by at least this much.
    #[arg(long)]
    pub min_margin: Option<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    Gradients,
    Probe,
    GdWl,
    Spectral,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// Scale layer-norm gradients to show the gradient check fails.
    #[arg(long)]
    pub corrupt_gradient: bool,
    /// Run only these suites (comma separated).
    #[arg(long, value_enum, value_delimiter = ',')]
    pub only: Vec<Suite>,
    /// Also require the forward direction of the softmax multiset lemma.
    #[arg(long)]
    pub strict_lemma: bool,
    #[arg(long, default_value_t = 500)]
    pub wl_graphs: usize,
    #[arg(long, default_value_t = 32)]
    pub wl_max_n: usize,
    #[arg(long, default_value_t = 8)]
    pub spectral_max_n: usize,
    #[arg(long, default_value_t = 16)]
    pub walks: usize,
}

fn parse_task(s: &str) -> std::result::Result<TaskKind, String> {
    s.parse().map_err(|e: gdt_core::Error| e.to_string())
}

fn parse_pe(s: &str) -> std::result::Result<PeKind, String> {
    s.parse().map_err(|e: gdt_core::Error| e.to_string())
}

fn parse_numbers(s: &str, len: usize) -> std::result::Result<Vec<usize>, String> {
    let v: Vec<usize> = s
        .split(',')
        .map(|x| x.trim().parse().map_err(|_| format!("{s:?} is not a list of integers")))
        .collect::<std::result::Result<_, _>>()?;
    if v.len() != len {
        return Err(format!("expected {len} comma-separated integers"));
    }
    Ok(v)
}

fn parse_pair(s: &str) -> std::result::Result<(usize, usize), String> {
    parse_numbers(s, 2).map(|v| (v[0], v[1]))
}

fn parse_triple(s: &str) -> std::result::Result<(usize, usize, usize), String> {
    parse_numbers(s, 3).map(|v| (v[0], v[1], v[2]))
}

/// What a command produced.
pub enum Output {
    Report(Report),
    /// Already formatted payload (datasets, PE dumps).
    Text(String),
}

/// Parses `args`, runs the command, writes its output and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let (output, code) = match execute(&cli) {
        Ok(Output::Report(r)) => {
            let code = i32::from(!r.passed);
            (r.render(cli.format), code)
        }
        Ok(Output::Text(t)) => (t, 0),
        Err(e) => {
            let code = exit_code(&e);
            let mut r = Report::new(command_name(&cli.command), cli.seed);
            r.fail(e.to_string());
            eprintln!("gdt: {e}");
            (r.render(cli.format), code)
        }
    };
    if let Err(e) = emit(cli.out.as_deref(), &output) {
        eprintln!("gdt: cannot write output: {e}");
        return 2;
    }
    code
}

fn emit(out: Option<&Path>, text: &str) -> std::io::Result<()> {
    match out {
        Some(p) => std::fs::write(p, text),
        None => std::io::stdout().lock().write_all(text.as_bytes()),
    }
}

pub fn exit_code(e: &CliError) -> i32 {
    match e {
        CliError::Nn(NnError::Diverged { .. } | NnError::NonFinite(_) | NnError::FullyMaskedRow(_)) => 1,
        _ => 2,
    }
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Gen(_) => "gen",
        Command::Pe(_) => "pe",
        Command::Wl(_) => "wl",
        Command::Hierarchy(_) => "hierarchy",
        Command::Train(_) => "train",
        Command::Eval(_) => "eval",
        Command::Fewshot(_) => "fewshot",
        Command::Verify(_) => "verify",
    }
}

pub fn execute(cli: &Cli) -> Result<Output> {
    if cli.jobs == 0 {
        return Err(CliError::Usage("--jobs must be at least 1".into()));
    }
    let cfg = ExperimentConfig::load(cli.config.as_deref())?;
    match &cli.command {
        Command::Gen(a) => cmd_gen(cli, &cfg, a),
        Command::Pe(a) => cmd_pe(cli, a),
        Command::Wl(a) => cmd_wl(cli, a).map(Output::Report),
        Command::Hierarchy(a) => cmd_hierarchy(cli, a).map(Output::Report),
        Command::Train(a) => cmd_train(cli, &cfg, a).map(Output::Report),
        Command::Eval(a) => cmd_eval(cli, &cfg, a).map(Output::Report),
        Command::Fewshot(a) => cmd_fewshot(cli, &cfg, a).map(Output::Report),
        Command::Verify(a) => cmd_verify(cli, a).map(Output::Report),
    }
}

fn cmd_gen(cli: &Cli, cfg: &ExperimentConfig, a: &GenArgs) -> Result<Output> {
    let data = split_data(a.task, a.n, a.count, a.split.into(), cli.seed, a.first, cfg.generator(a.task)?)?;
    let mut out = String::new();
    match cli.format {
        Format::Json => {
            for inst in &data {
                out.push_str(&inst.to_json_line());
                out.push('\n');
            }
        }
        Format::Csv => {
            out.push_str("task,seed,n,edges,target\n");
            for inst in &data {
                let target = match (inst.positive_rate(), inst.target.scalar_f64()) {
                    (Some(r), _) => r.to_string(),
                    (None, Some(v)) => v.to_string(),
                    _ => String::new(),
                };
                let _ = writeln!(out, "{},{},{},{},{target}", inst.kind.name(), inst.seed, inst.graph.n(), inst.graph.num_edges());
            }
        }
    }
    Ok(Output::Text(out))
}

fn read_graph(path: &Path) -> Result<Graph> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    Ok(Graph::from_json(&text)?)
}

fn cmd_pe(cli: &Cli, a: &PeArgs) -> Result<Output> {
    let g = match (&a.graph, a.csl) {
        (Some(p), _) => read_graph(p)?,
        (None, Some((n, k))) => csl_graph(n, k)?.graph,
        (None, None) => return Err(CliError::Usage("give --graph or --csl".into())),
    };
    let mut out = String::new();
    if a.kind.is_relative() {
        let f = rrwp(&g, a.k)?;
        match cli.format {
            Format::Json => out = serde_json::to_string_pretty(&PeDump::from(&f)).expect("serializable") + "\n",
            Format::Csv => {
                let n = f.num_nodes();
                let cols: Vec<String> = (0..f.k).map(|t| format!("t{t}")).collect();
                let _ = writeln!(out, "i,j,{}", cols.join(","));
                let flat = f.to_f64();
                for (idx, row) in flat.chunks(f.k).enumerate() {
                    let vals: Vec<String> = row.iter().map(f64::to_string).collect();
                    let _ = writeln!(out, "{},{},{}", idx / n, idx % n, vals.join(","));
                }
            }
        }
    } else {
        let f = absolute_features(&g, a.kind, a.k)?;
        match cli.format {
            Format::Json => out = serde_json::to_string_pretty(&PeDump::from(&f)).expect("serializable") + "\n",
            Format::Csv => {
                let cols: Vec<String> = (0..f.width()).map(|c| format!("f{c}")).collect();
                let _ = writeln!(out, "node{}{}", if cols.is_empty() { "" } else { "," }, cols.join(","));
                for (v, row) in f.to_f64().iter().enumerate() {
                    let vals: Vec<String> = row.iter().map(f64::to_string).collect();
                    let _ = writeln!(out, "{v}{}{}", if vals.is_empty() { "" } else { "," }, vals.join(","));
                }
            }
        }
    }
    Ok(Output::Text(out))
}

#[derive(Deserialize)]
struct PairFile {
    first: GraphJson,
    second: GraphJson,
}

fn cmd_wl(cli: &Cli, a: &WlArgs) -> Result<Report> {
    let (g, h, label) = match (&a.pair, a.csl) {
        (Some(p), _) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
            let pf: PairFile = serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", p.display())))?;
            (Graph::try_from(&pf.first)?, Graph::try_from(&pf.second)?, p.display().to_string())
        }
        (None, Some((n, x, y))) => (csl_graph(n, x)?.graph, csl_graph(n, y)?.graph, format!("CSL({n},{x})/CSL({n},{y})")),
        (None, None) => return Err(CliError::Usage("give --pair or --csl".into())),
    };
    let (algorithm, distance, distinguishable, iterations) = match a.algorithm {
        AlgorithmArg::OneWl => {
            let (p, q) = (one_wl(&g, g.n() + 1), one_wl(&h, h.n() + 1));
            ("1-wl", None, partitions_distinguish(&p, &q)?, p.iterations().max(q.iterations()))
        }
        AlgorithmArg::GdWl => {
            let dist = |x: &Graph| -> Result<DistanceMatrix> {
                Ok(match a.distance {
                    DistanceArg::Adjacency => distance_adjacency(x),
                    DistanceArg::Spd => distance_spd(x),
                    DistanceArg::Rrwp => rrwp(x, a.k)?.as_distance(),
                })
            };
            let p = gd_wl(&g, &dist(&g)?, g.n() + 1)?;
            let q = gd_wl(&h, &dist(&h)?, h.n() + 1)?;
            let name = match a.distance {
                DistanceArg::Adjacency => "adjacency".to_string(),
                DistanceArg::Spd => "spd".to_string(),
                DistanceArg::Rrwp => format!("rrwp:{}", a.k),
            };
            ("gd-wl", Some(name), partitions_distinguish(&p, &q)?, p.iterations().max(q.iterations()))
        }
    };
    let mut r = Report::new("wl", cli.seed);
    r.data = json!({
        "pair": label,
        "algorithm": algorithm,
        "distance": distance,
        "distinguishable": distinguishable,
        "iterations": iterations,
    });
    if let Some(e) = a.expect {
        let want = e == Expectation::Distinguishable;
        r.push(Check::new(
            "expected-verdict",
            distinguishable == want,
            format!("{} ({algorithm})", if distinguishable { "distinguishable" } else { "indistinguishable" }),
        ));
    }
    Ok(r)
}

fn cmd_hierarchy(cli: &Cli, a: &HierarchyArgs) -> Result<Report> {
    if a.family != "csl" {
        return Err(CliError::Usage(format!("unknown family {:?} (only csl)", a.family)));
    }
    let params = HierarchyParams { max_n: a.max_n, k: a.k, threshold_max_n: a.threshold_max_n, blind_walks: a.blind_walks };
    let (checks, data) = hierarchy::run(&params)?;
    let mut r = Report::new("hierarchy", cli.seed);
    for c in checks {
        r.push(c);
    }
    r.data = data;
    Ok(r)
}

fn apply_overrides(cfg: &ExperimentConfig, m: &ModelArgs) -> ExperimentConfig {
    let mut c = cfg.clone();
    let md = &mut c.model;
    md.d = m.d.unwrap_or(md.d);
    md.d_f = m.d_f.unwrap_or(md.d_f);
    md.layers = m.layers.unwrap_or(md.layers);
    md.heads = m.heads.unwrap_or(md.heads);
    md.pe_k = m.pe_k.unwrap_or(md.pe_k);
    let t = &mut c.training;
    t.steps = m.steps.unwrap_or(t.steps);
    t.batch_size = m.batch_size.unwrap_or(t.batch_size);
    t.learning_rate = m.lr.unwrap_or(t.learning_rate);
    t.train_graphs = m.train_graphs.unwrap_or(t.train_graphs);
    t.eval_graphs = m.eval_graphs.unwrap_or(t.eval_graphs);
    t.n = m.n.unwrap_or(t.n);
    c
}

fn threshold_check(metric: Metric, value: f64, threshold: f64) -> Check {
    let (ok, op) = match metric {
        Metric::Mae => (value <= threshold, "<="),
        _ => (value >= threshold, ">="),
    };
    Check::new("threshold", ok, format!("{} {value:.4} {op} {threshold}", metric.name()))
}

fn cmd_train(cli: &Cli, cfg: &ExperimentConfig, a: &TrainArgs) -> Result<Report> {
    let cfg = apply_overrides(cfg, &a.model);
    let plan = RunPlan {
        task: a.task,
        shape: cfg.model.shape(a.pe),
        seed: cli.seed,
        data_seed: a.data_seed,
        n: cfg.training.n,
        train_graphs: cfg.training.train_graphs,
        eval_graphs: cfg.training.eval_graphs,
        optim: cfg.training.optim(cli.seed),
        jobs: cli.jobs,
    };
    let mut report = Report::new("train", cli.seed);
    let every = a.log_every.max(1);
    let mut curve = Vec::new();
    let mut acc = 0.0;
    let run = train_run(&plan, cfg.generator(a.task)?, |step, loss| {
        acc += loss;
        if (step + 1) % every == 0 {
            curve.push(json!({ "step": step + 1, "mean_loss": acc / every as f64 }));
            acc = 0.0;
        }
    });
    let run = match run {
        Ok(r) => r,
        Err(CliError::Nn(NnError::Diverged { step, loss, trace })) => {
            report.fail(format!("training diverged at step {step} (loss {loss})"));
            report.data = json!({ "diverged_at": step, "loss_trace": trace, "curve": curve });
            return Ok(report);
        }
        Err(e) => return Err(e),
    };
    if let Some(path) = &a.checkpoint {
        run.model.params().save(run.model.config(), path)?;
    }
    report.metrics.push(MetricRecord {
        task: a.task.name().into(),
        pe: a.pe.name().into(),
        seed: cli.seed,
        split: Split::InDistribution,
        metric: run.eval.metric,
        value: run.eval.value,
    });
    if let Some(t) = a.threshold {
        report.push(threshold_check(run.eval.metric, run.eval.value, t));
    }
    report.data = json!({
        "task": a.task.name(),
        "pe": a.pe.name(),
        "model": run.model.config(),
        "training": cfg.training,
        "data_seed": a.data_seed,
        "parameters": run.model.params().total(),
        "seconds": run.seconds,
        "curve": curve,
        "epochs": run.report.epochs,
        "checkpoint": a.checkpoint,
    });
    Ok(report)
}

fn load_model(path: &Path) -> Result<Gdt> {
    let (cfg, params) = ParamStore::load(path)?;
    Ok(Gdt::from_parts(cfg, params)?)
}

fn cmd_eval(cli: &Cli, cfg: &ExperimentConfig, a: &EvalArgs) -> Result<Report> {
    let model = load_model(&a.checkpoint)?;
    let n = a.n.unwrap_or(cfg.training.n);
    let count = a.count.unwrap_or(cfg.training.eval_graphs);
    let data: Vec<TaskInstance> = eval_set(a.task, n, count, a.split.into(), a.data_seed, cfg.generator(a.task)?)?;
    let examples = prepare_examples(&data, model.config())?;
    let pred = evaluate(&model, &examples, cli.jobs)?;
    let mut r = Report::new("eval", cli.seed);
    r.metrics.push(MetricRecord {
        task: a.task.name().into(),
        pe: model_pe(&model).name().into(),
        seed: model.config().seed,
        split: a.split.into(),
        metric: pred.metric,
        value: pred.value,
    });
    if let Some(t) = a.threshold {
        r.push(threshold_check(pred.metric, pred.value, t));
    }
    r.data = json!({ "n": n, "count": count, "data_seed": a.data_seed });
    Ok(r)
}

fn cmd_fewshot(cli: &Cli, cfg: &ExperimentConfig, a: &FewShotArgs) -> Result<Report> {
    let model = load_model(&a.checkpoint)?;
    let fs = &cfg.fewshot;
    let n = a.n.unwrap_or(fs.n);
    let graphs = a.graphs.unwrap_or(fs.graphs);
    let data = eval_set(a.task, n, graphs, Split::FewShot, a.data_seed, cfg.generator(a.task)?)?;
    let res = few_shot(&model, &data, a.shots.unwrap_or(fs.shots), a.k.unwrap_or(fs.k), cli.seed)?;
    let mut r = Report::new("fewshot", cli.seed);
    r.metrics.push(MetricRecord {
        task: a.task.name().into(),
        pe: model_pe(&model).name().into(),
        seed: cli.seed,
        split: Split::FewShot,
        metric: Metric::Accuracy,
        value: res.accuracy,
    });
    if let Some(m) = a.min_margin {
        r.push(Check::new(
            "beats-majority",
            res.margin() >= m,
            format!("accuracy {:.4} vs majority {:.4} (margin {:.4}, need {m})", res.accuracy, res.baseline, res.margin()),
        ));
    }
    r.data = json!({ "result": res, "n": n, "graphs": graphs });
    Ok(r)
}

fn cmd_verify(cli: &Cli, a: &VerifyArgs) -> Result<Report> {
    let wants = |s: Suite| a.only.is_empty() || a.only.contains(&s);
    let mut r = Report::new("verify", cli.seed);
    if wants(Suite::Gradients) {
        for c in suites::gradient_checks(cli.seed, a.corrupt_gradient)? {
            r.push(c);
        }
    }
    if wants(Suite::Probe) {
        let sweep = suites::probe_sweep(cli.seed)?;
        r.push(suites::probe_agreement(&sweep));
        r.push(suites::single_colour_check()?);
        let lemma = suites::lemma_forward(&sweep);
        if a.strict_lemma {
            r.push(lemma);
        } else {
            r.data = json!({ "softmax_lemma_forward": { "holds": lemma.passed, "summary": lemma.summary } });
        }
    }
    if wants(Suite::GdWl) {
        r.push(suites::gd_wl_matches_one_wl(a.wl_graphs, a.wl_max_n, cli.seed)?);
    }
    if wants(Suite::Spectral) {
        r.push(suites::spectral_identity(a.spectral_max_n, a.walks, 1e-7)?);
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_common_flags_anywhere() {
        let cli = Cli::try_parse_from(["gdt", "wl", "--csl", "8,2,3", "--seed", "4", "--format", "csv"]).unwrap();
        assert_eq!(cli.seed, 4);
        assert_eq!(cli.format, Format::Csv);
        assert!(matches!(cli.command, Command::Wl(WlArgs { csl: Some((8, 2, 3)), .. })));
    }

    #[test]
    fn bad_arguments_are_usage_errors() {
        assert_eq!(run(["gdt", "wl", "--csl", "8,2"]), 2);
        assert_eq!(run(["gdt", "train", "--task", "sorting", "--pe", "rwse"]), 2);
        assert_eq!(run(["gdt", "--jobs", "0", "wl", "--csl", "8,2,3", "--out", "/dev/null"]), 2);
    }

    #[test]
    fn thresholds_respect_metric_direction() {
        assert!(threshold_check(Metric::F1, 0.9, 0.85).passed);
        assert!(!threshold_check(Metric::Mae, 0.9, 0.85).passed);
    }
}
