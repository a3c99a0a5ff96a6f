//! Token embedding, attention-bias construction, the layer stack and heads.

use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{Activation, GdtConfig, OutputLevel, Tokenization};
use crate::error::{NnError, Result};
use crate::params::{BoundParams, ParamStore};
use crate::prepare::{PreparedGraph, TokenTag};
use crate::tape::{GradFault, Tape, Tensor, Var};

/// `X` is `L x d`, `B` is `L^2 x h` (pair-major, heads inner).
#[derive(Clone, Debug)]
pub struct TokenBatch {
    pub x: Var,
    pub bias: Var,
    pub token_origin: Vec<TokenTag>,
}

#[derive(Clone, Copy, Debug)]
pub struct LayerVars {
    pub w_q: Var,
    pub w_k: Var,
    pub w_v: Var,
    pub w_o: Var,
    pub w_1: Var,
    pub w_2: Var,
}

impl LayerVars {
    pub fn bind(p: &BoundParams, layer: usize) -> Result<Self> {
        let v = |w: &str| p.var(&format!("layer{layer}.{w}"));
        Ok(LayerVars { w_q: v("W_Q")?, w_k: v("W_K")?, w_v: v("W_V")?, w_o: v("W_O")?, w_1: v("W_1")?, w_2: v("W_2")? })
    }
}

fn activate(tape: &mut Tape, x: Var, act: Activation) -> Result<Var> {
    match act {
        Activation::Gelu => tape.gelu(x),
        Activation::Relu => tape.relu(x),
    }
}

/// Inverted dropout on a residual branch.
fn dropout(tape: &mut Tape, x: Var, drop: &mut Option<(ChaCha8Rng, f64)>) -> Result<Var> {
    match drop {
        Some((rng, p)) if *p > 0.0 => {
            let keep = 1.0 / (1.0 - *p);
            let len = tape.value(x).len();
            let m: Vec<f64> = (0..len).map(|_| if rng.gen::<f64>() < *p { 0.0 } else { keep }).collect();
            tape.mul_const(x, Rc::new(m))
        }
        _ => Ok(x),
    }
}

/// `X' = X + MHA(LN(X), B)`, then `X'' = X' + MLP(LN(X'))`.
pub fn gdt_layer(
    tape: &mut Tape,
    x: Var,
    bias: Var,
    w: &LayerVars,
    heads: usize,
    act: Activation,
    mask: Option<&[f64]>,
) -> Result<Var> {
    gdt_layer_with_dropout(tape, x, bias, w, heads, act, mask, &mut None)
}

#[allow(clippy::too_many_arguments)]
fn gdt_layer_with_dropout(
    tape: &mut Tape,
    x: Var,
    bias: Var,
    w: &LayerVars,
    heads: usize,
    act: Activation,
    mask: Option<&[f64]>,
    drop: &mut Option<(ChaCha8Rng, f64)>,
) -> Result<Var> {
    let xn = tape.layer_norm(x)?;
    let q = tape.matmul(xn, w.w_q)?;
    let k = tape.matmul(xn, w.w_k)?;
    let v = tape.matmul(xn, w.w_v)?;
    let a = tape.attention(q, k, v, bias, heads, mask)?;
    let a = tape.matmul(a, w.w_o)?;
    let a = dropout(tape, a, drop)?;
    let x1 = tape.add(x, a)?;

    let xn = tape.layer_norm(x1)?;
    let f = tape.matmul(xn, w.w_1)?;
    let f = activate(tape, f, act)?;
    let f = tape.matmul(f, w.w_2)?;
    let f = dropout(tape, f, drop)?;
    tape.add(x1, f)
}

/// `X_i = l_V(i) + P_i W_P` with `[cls]` appended, and
/// `B_ij = rho(l_E(i,j)) + U_ij W_U`.
pub fn tokenize(tape: &mut Tape, p: &BoundParams, cfg: &GdtConfig, g: &PreparedGraph) -> Result<TokenBatch> {
    let n = g.num_tokens;
    let l = g.len();
    let act = cfg.activation;

    let mut x = tape.gather_rows(p.var("embed.label")?, Rc::new(g.labels.clone()))?;
    if cfg.input.token_scalar {
        let s = tape.constant(Tensor::matrix(n, 1, g.scalars.clone())?)?;
        let s = tape.matmul(s, p.var("embed.scalar")?)?;
        x = tape.add(x, s)?;
    }
    x = tape.add_row(x, p.var("embed.bias")?)?;
    match (&g.abs_pe, cfg.abs_pe_width()) {
        (None, 0) => {}
        (Some(pe), w) if pe.cols() == w && pe.rows() == n => {
            let pe = tape.constant(pe.clone())?;
            let h = tape.matmul(pe, p.var("pe.enc1")?)?;
            let h = tape.add_row(h, p.var("pe.enc1_b")?)?;
            let h = activate(tape, h, act)?;
            let h = tape.matmul(h, p.var("pe.enc2")?)?;
            let h = tape.add_row(h, p.var("pe.enc2_b")?)?;
            let h = tape.matmul(h, p.var("W_P")?)?;
            x = tape.add(x, h)?;
        }
        _ => return Err(NnError::PeMismatch("absolute PE does not match the configuration".into())),
    }
    let x = tape.concat_rows(x, p.var("cls.token")?)?;

    // Pair embeddings: distinct rows, then the two [cls] directions.
    let c = g.pair_rows.rows();
    let rows = tape.constant(g.pair_rows.clone())?;
    let e = tape.matmul(rows, p.var("edge.embed")?)?;
    let e = tape.concat_rows(e, p.var("cls.out")?)?;
    let e = tape.concat_rows(e, p.var("cls.in")?)?;
    let r = tape.matmul(e, p.var("rho.1")?)?;
    let r = activate(tape, r, act)?;
    let r = tape.matmul(r, p.var("rho.2")?)?;
    let mut idx = Vec::with_capacity(l * l);
    for i in 0..l {
        for j in 0..l {
            idx.push(if i == n {
                c
            } else if j == n {
                c + 1
            } else {
                g.pair_index[i * n + j]
            });
        }
    }
    let mut bias = tape.gather_rows(r, Rc::new(idx))?;

    match (&g.rel_pe, cfg.rel_pe_width()) {
        (None, 0) => {}
        (Some(u), k) if u.cols() == k && u.rows() == l * l => {
            let u = tape.constant(u.clone())?;
            let h = tape.matmul(u, p.var("rel.enc1")?)?;
            let h = tape.add_row(h, p.var("rel.enc1_b")?)?;
            let h = activate(tape, h, act)?;
            let h = tape.matmul(h, p.var("rel.enc2")?)?;
            let h = tape.add_row(h, p.var("rel.enc2_b")?)?;
            let h = tape.matmul(h, p.var("W_U")?)?;
            bias = tape.add(bias, h)?;
        }
        _ => return Err(NnError::PeMismatch("relative PE does not match the configuration".into())),
    }

    Ok(TokenBatch { x, bias, token_origin: g.origin.clone() })
}

#[derive(Clone, Copy, Debug, Default)]
pub struct ForwardOptions {
    pub fault: Option<GradFault>,
    /// Enables dropout with this seed; `None` is evaluation mode.
    pub dropout_seed: Option<u64>,
}

pub struct Forward {
    pub tape: Tape,
    pub params: BoundParams,
    pub batch: TokenBatch,
    /// Final token embeddings, `L x d`.
    pub embeddings: Var,
    /// Decoder output, one row per entry of `output_tokens`.
    pub output: Var,
    pub output_tokens: Vec<usize>,
    node_tokens: Vec<usize>,
    edge_tokens: Vec<usize>,
    cls: usize,
    edge_level: bool,
}

impl Forward {
    pub fn cls_embedding(&self) -> &[f64] {
        self.tape.value(self.embeddings).row(self.cls)
    }

    /// Embeddings of the node tokens, ordered by node id.
    pub fn node_embeddings(&self) -> Vec<&[f64]> {
        let e = self.tape.value(self.embeddings);
        self.node_tokens.iter().map(|&t| e.row(t)).collect()
    }

    /// Embeddings of the edge tokens in canonical edge order.
    pub fn edge_embeddings(&self) -> Result<Vec<&[f64]>> {
        if !self.edge_level {
            return Err(NnError::Config("edge embeddings need edge tokenization".into()));
        }
        let e = self.tape.value(self.embeddings);
        Ok(self.edge_tokens.iter().map(|&t| e.row(t)).collect())
    }

    pub fn outputs(&self) -> &Tensor {
        self.tape.value(self.output)
    }
}

#[derive(Clone, Debug)]
pub struct Gdt {
    config: GdtConfig,
    params: ParamStore,
}

impl Gdt {
    pub fn new(config: GdtConfig) -> Result<Self> {
        let params = ParamStore::init(&config)?;
        Ok(Gdt { config, params })
    }

    pub fn from_parts(config: GdtConfig, params: ParamStore) -> Result<Self> {
        config.validate()?;
        let fresh = ParamStore::init(&config)?;
        let same_layout = fresh.len() == params.len()
            && fresh.iter().zip(params.iter()).all(|(a, b)| a.name == b.name && a.value.shape() == b.value.shape());
        if !same_layout {
            return Err(NnError::Config("parameters do not match the configuration".into()));
        }
        Ok(Gdt { config, params })
    }

    pub fn config(&self) -> &GdtConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn forward(&self, g: &PreparedGraph, opts: ForwardOptions) -> Result<Forward> {
        self.forward_level(g, self.config.output.level, opts)
    }

    /// Runs the stack and decodes the tokens of `level`.
    pub fn forward_level(&self, g: &PreparedGraph, level: OutputLevel, opts: ForwardOptions) -> Result<Forward> {
        let cfg = &self.config;
        if level == OutputLevel::Edge && cfg.tokenization != Tokenization::Edge {
            return Err(NnError::Config("edge outputs need edge tokenization".into()));
        }
        let mut tape = match opts.fault {
            Some(f) => Tape::with_fault(f),
            None => Tape::new(),
        };
        let p = self.params.register(&mut tape)?;
        let batch = tokenize(&mut tape, &p, cfg, g)?;
        let mut drop = opts
            .dropout_seed
            .filter(|_| cfg.dropout > 0.0)
            .map(|s| (ChaCha8Rng::seed_from_u64(s), cfg.dropout));
        let mut x = batch.x;
        for t in 0..cfg.layers {
            let w = LayerVars::bind(&p, t)?;
            x = gdt_layer_with_dropout(&mut tape, x, batch.bias, &w, cfg.heads, cfg.activation, g.mask.as_deref(), &mut drop)?;
        }

        let node_tokens = g.node_tokens();
        let edge_tokens = g.edge_tokens();
        let output_tokens = match level {
            OutputLevel::Graph => vec![g.cls_index()],
            OutputLevel::Node => node_tokens.clone(),
            OutputLevel::Edge => edge_tokens.clone(),
        };
        if output_tokens.is_empty() {
            return Err(NnError::Precondition(format!("no tokens to decode at level {level:?}")));
        }
        // W_2 LN(GELU(W_1 y))
        let y = tape.gather_rows(x, Rc::new(output_tokens.clone()))?;
        let y = tape.matmul(y, p.var("dec.1")?)?;
        let y = tape.add_row(y, p.var("dec.1_b")?)?;
        let y = tape.gelu(y)?;
        let y = tape.layer_norm(y)?;
        let y = tape.matmul(y, p.var("dec.2")?)?;
        let output = tape.add_row(y, p.var("dec.2_b")?)?;

        Ok(Forward {
            tape,
            params: p,
            batch,
            embeddings: x,
            output,
            output_tokens,
            node_tokens,
            edge_tokens,
            cls: g.cls_index(),
            edge_level: cfg.tokenization == Tokenization::Edge,
        })
    }
}
