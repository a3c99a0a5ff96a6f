//! Model configuration and the learnable-parameter ledger.

use gdt_core::pe::PeKind;
use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Gelu,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tokenization {
    Node,
    Edge,
}

/// Which tokens the prediction head reads.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputLevel {
    Graph,
    Node,
    Edge,
}

/// Raw input features the encoders expect.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputSpec {
    /// Number of distinct token labels.
    pub label_vocab: usize,
    /// Tokens carry one scalar (edge weights under edge tokenization).
    #[serde(default)]
    pub token_scalar: bool,
    /// Divisor applied to weights and capacities before encoding.
    #[serde(default = "default_weight_scale")]
    pub weight_scale: f64,
}

fn default_weight_scale() -> f64 {
    10.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    pub level: OutputLevel,
    pub dim: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GdtConfig {
    pub d: usize,
    pub d_f: usize,
    #[serde(rename = "T")]
    pub layers: usize,
    #[serde(rename = "h")]
    pub heads: usize,
    pub tokenization: Tokenization,
    pub absolute_pe: PeKind,
    pub relative_pe: PeKind,
    /// Walk length / eigenpair count for the configured PEs.
    #[serde(default = "default_pe_k")]
    pub pe_k: usize,
    /// Width of the relative-PE encoder, the input side of `W_U`.
    #[serde(default = "default_rel_width")]
    pub rel_width: usize,
    pub activation: Activation,
    #[serde(default)]
    pub dropout: f64,
    pub seed: u64,
    pub input: InputSpec,
    pub output: OutputSpec,
}

fn default_pe_k() -> usize {
    8
}

fn default_rel_width() -> usize {
    16
}

impl GdtConfig {
    /// A small node-level configuration, handy as a starting point.
    pub fn small(d: usize, layers: usize, heads: usize, seed: u64) -> Self {
        GdtConfig {
            d,
            d_f: 2 * d,
            layers,
            heads,
            tokenization: Tokenization::Node,
            absolute_pe: PeKind::NoPe,
            relative_pe: PeKind::NoPe,
            pe_k: default_pe_k(),
            rel_width: default_rel_width(),
            activation: Activation::Gelu,
            dropout: 0.0,
            seed,
            input: InputSpec { label_vocab: 1, token_scalar: false, weight_scale: default_weight_scale() },
            output: OutputSpec { level: OutputLevel::Graph, dim: 1 },
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d / self.heads
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(NnError::Config(m));
        if self.d == 0 || self.d_f == 0 || self.layers == 0 || self.heads == 0 {
            return bad("d, d_f, T and h must all be positive".into());
        }
        if self.d % self.heads != 0 {
            return bad(format!("d = {} is not divisible by h = {}", self.d, self.heads));
        }
        if self.absolute_pe == PeKind::Rrwp {
            return bad("RRWP is a relative embedding".into());
        }
        if !matches!(self.relative_pe, PeKind::NoPe | PeKind::Rrwp) {
            return bad(format!("{} is not a relative embedding", self.relative_pe));
        }
        let uses_pe = self.absolute_pe != PeKind::NoPe || self.relative_pe != PeKind::NoPe;
        if uses_pe && self.pe_k == 0 {
            return bad("pe_k must be positive".into());
        }
        if self.rel_width == 0 {
            return bad("rel_width must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if self.output.level == OutputLevel::Edge && self.tokenization != Tokenization::Edge {
            return bad("edge outputs need edge tokenization".into());
        }
        if self.output.dim == 0 || self.input.label_vocab == 0 {
            return bad("output dim and label vocabulary must be positive".into());
        }
        if !(self.input.weight_scale.is_finite() && self.input.weight_scale > 0.0) {
            return bad("weight_scale must be positive".into());
        }
        Ok(())
    }

    /// Width of the raw absolute PE vector per token.
    pub fn abs_pe_width(&self) -> usize {
        match self.absolute_pe {
            PeKind::NoPe | PeKind::Rrwp => 0,
            PeKind::Rwse => self.pe_k,
            PeKind::Lpe => 2 * self.pe_k,
            PeKind::Spe => 3 * self.pe_k,
        }
    }

    /// Width of the raw relative PE vector per token pair.
    pub fn rel_pe_width(&self) -> usize {
        match self.relative_pe {
            PeKind::Rrwp => self.pe_k,
            _ => 0,
        }
    }

    /// The closed-form count of the overview table:
    /// `(3T+1) d^2 + (2T+1) d d_f + 3d + (d_f+1) h`.
    pub fn table_param_count(&self) -> usize {
        let (d, df, t, h) = (self.d, self.d_f, self.layers, self.heads);
        (3 * t + 1) * d * d + (2 * t + 1) * d * df + 3 * d + (df + 1) * h
    }

    /// What the instantiated model adds on top of [`Self::table_param_count`]:
    /// the per-layer output projection `W_O` and the wider `W_U`.
    pub fn ledger_param_count(&self) -> usize {
        self.table_param_count() + self.layers * self.d * self.d + (self.rel_width - 1) * self.heads
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_indivisible_heads() {
        let mut c = GdtConfig::small(10, 1, 3, 0);
        assert!(c.validate().is_err());
        c.heads = 2;
        c.validate().unwrap();
    }

    #[test]
    fn edge_outputs_need_edge_tokens() {
        let mut c = GdtConfig::small(8, 1, 1, 0);
        c.output.level = OutputLevel::Edge;
        assert!(c.validate().is_err());
        c.tokenization = Tokenization::Edge;
        c.validate().unwrap();
    }

    #[test]
    fn table_count_by_hand() {
        // d=2, d_f=3, T=1, h=1: 4*4 + 3*6 + 6 + 4
        let mut c = GdtConfig::small(2, 1, 1, 0);
        c.d_f = 3;
        assert_eq!(c.table_param_count(), 44);
    }

    #[test]
    fn config_json_round_trip() {
        let c = GdtConfig::small(8, 2, 2, 7);
        let s = serde_json::to_string(&c).unwrap();
        let back: GdtConfig = serde_json::from_str(&s).unwrap();
        assert_eq!(c, back);
    }
}
