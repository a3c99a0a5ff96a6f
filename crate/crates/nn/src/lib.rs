//! The generalized-distance graph transformer: biased multi-head attention
//! over node or edge tokens, reverse-mode gradients on a small tape, and a
//! deterministic training loop for the algorithmic-reasoning tasks.

pub mod config;
pub mod error;
pub mod gradcheck;
pub mod kernels;
pub mod model;
pub mod optim;
pub mod params;
pub mod prepare;
pub mod probe;
pub mod tape;
pub mod train;

pub use config::{Activation, GdtConfig, InputSpec, OutputLevel, OutputSpec, Tokenization};
pub use error::{NnError, Result};
pub use model::{gdt_layer, tokenize, Forward, ForwardOptions, Gdt, LayerVars, TokenBatch};
pub use params::{ParamGroup, ParamStore};
pub use prepare::{prepare, prepare_with_pe, PreparedGraph, TokenTag};
pub use tape::{GradFault, Gradients, Tape, Tensor, Var};
pub use optim::{AdamW, OptimConfig};
pub use train::{evaluate, prepare_examples, task_config, train, train_with, Example, Labels, ModelShape, TrainOptions, TrainReport};
pub use gradcheck::{check_gradients, GradCheckOptions, GradCheckReport};
pub use probe::{softmax_multiset_probe, ProbeVerdict};
