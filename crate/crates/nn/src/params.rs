//! Named parameter storage, initialization and JSON checkpoints.

use std::collections::HashMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::GdtConfig;
use crate::error::{NnError, Result};
use crate::prepare::PAIR_FEATURES;
use crate::tape::{Tape, Tensor, Var};

/// `Ledger` parameters belong to the overview table's Θ; the rest are
/// feature encoders and the decoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamGroup {
    Ledger,
    Embedding,
    Decoder,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Param {
    pub name: String,
    pub group: ParamGroup,
    pub value: Tensor,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: Vec<Param>,
    index: HashMap<String, usize>,
}

enum Init {
    FanIn,
    Unit,
    Zero,
}

impl ParamStore {
    /// Fresh parameters for `cfg`, drawn from `U(-1/sqrt(fan_in), 1/sqrt(fan_in))`.
    pub fn init(cfg: &GdtConfig) -> Result<Self> {
        cfg.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut s = ParamStore::default();
        let (d, df, h) = (cfg.d, cfg.d_f, cfg.heads);
        use ParamGroup::*;

        s.add("embed.label", Embedding, &[cfg.input.label_vocab, d], Init::Unit, &mut rng);
        if cfg.input.token_scalar {
            s.add("embed.scalar", Embedding, &[1, d], Init::FanIn, &mut rng);
        }
        s.add("embed.bias", Embedding, &[1, d], Init::Zero, &mut rng);
        let aw = cfg.abs_pe_width();
        if aw > 0 {
            s.add("pe.enc1", Embedding, &[aw, d], Init::FanIn, &mut rng);
            s.add("pe.enc1_b", Embedding, &[1, d], Init::Zero, &mut rng);
            s.add("pe.enc2", Embedding, &[d, d], Init::FanIn, &mut rng);
            s.add("pe.enc2_b", Embedding, &[1, d], Init::Zero, &mut rng);
        }
        s.add("edge.embed", Embedding, &[PAIR_FEATURES, d], Init::Unit, &mut rng);
        let rw = cfg.rel_pe_width();
        if rw > 0 {
            let u = cfg.rel_width;
            s.add("rel.enc1", Embedding, &[rw, u], Init::FanIn, &mut rng);
            s.add("rel.enc1_b", Embedding, &[1, u], Init::Zero, &mut rng);
            s.add("rel.enc2", Embedding, &[u, u], Init::FanIn, &mut rng);
            s.add("rel.enc2_b", Embedding, &[1, u], Init::Zero, &mut rng);
        }

        s.add("cls.token", Ledger, &[1, d], Init::Unit, &mut rng);
        s.add("cls.out", Ledger, &[1, d], Init::Unit, &mut rng);
        s.add("cls.in", Ledger, &[1, d], Init::Unit, &mut rng);
        s.add("W_P", Ledger, &[d, d], Init::FanIn, &mut rng);
        s.add("rho.1", Ledger, &[d, df], Init::FanIn, &mut rng);
        s.add("rho.2", Ledger, &[df, h], Init::FanIn, &mut rng);
        s.add("W_U", Ledger, &[cfg.rel_width, h], Init::FanIn, &mut rng);
        for t in 0..cfg.layers {
            for (w, shape) in [
                ("W_Q", [d, d]),
                ("W_K", [d, d]),
                ("W_V", [d, d]),
                ("W_O", [d, d]),
                ("W_1", [d, df]),
                ("W_2", [df, d]),
            ] {
                s.add(&format!("layer{t}.{w}"), Ledger, &shape, Init::FanIn, &mut rng);
            }
        }

        let o = cfg.output.dim;
        s.add("dec.1", Decoder, &[d, d], Init::FanIn, &mut rng);
        s.add("dec.1_b", Decoder, &[1, d], Init::Zero, &mut rng);
        s.add("dec.2", Decoder, &[d, o], Init::FanIn, &mut rng);
        s.add("dec.2_b", Decoder, &[1, o], Init::Zero, &mut rng);
        Ok(s)
    }

    fn add(&mut self, name: &str, group: ParamGroup, shape: &[usize], init: Init, rng: &mut ChaCha8Rng) {
        let len: usize = shape.iter().product();
        let bound = match init {
            Init::FanIn => 1.0 / (shape[0] as f64).sqrt(),
            Init::Unit => 1.0,
            Init::Zero => 0.0,
        };
        let data = (0..len)
            .map(|_| if bound > 0.0 { rng.gen_range(-bound..bound) } else { 0.0 })
            .collect();
        let value = Tensor::new(shape.to_vec(), data).expect("shape matches data");
        self.index.insert(name.to_string(), self.params.len());
        self.params.push(Param { name: name.to_string(), group, value });
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param> {
        self.params.iter_mut()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.index.get(name).map(|&i| &self.params[i].value)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.index.get(name).map(|&i| &mut self.params[i].value)
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn count(&self, group: ParamGroup) -> usize {
        self.params.iter().filter(|p| p.group == group).map(|p| p.value.len()).sum()
    }

    pub fn total(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    /// Puts every parameter on `tape`; vars come back in store order.
    pub fn register(&self, tape: &mut Tape) -> Result<BoundParams> {
        let vars = self
            .params
            .iter()
            .map(|p| tape.param(p.value.clone()))
            .collect::<Result<Vec<_>>>()?;
        Ok(BoundParams { vars, index: self.index.clone() })
    }

    pub fn to_checkpoint(&self, cfg: &GdtConfig) -> Checkpoint {
        Checkpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            config: cfg.clone(),
            params: self
                .params
                .iter()
                .map(|p| StoredParam {
                    name: p.name.clone(),
                    group: p.group,
                    shape: p.value.shape().to_vec(),
                    data: p.value.data().to_vec(),
                })
                .collect(),
        }
    }

    /// Rebuilds a store, checking names and shapes against a fresh init of
    /// the stored config.
    pub fn from_checkpoint(ck: &Checkpoint) -> Result<(GdtConfig, Self)> {
        if ck.format != CHECKPOINT_FORMAT || ck.version != CHECKPOINT_VERSION {
            return Err(NnError::Checkpoint(format!(
                "unsupported format {:?} version {}",
                ck.format, ck.version
            )));
        }
        let mut store = ParamStore::init(&ck.config)?;
        if store.len() != ck.params.len() {
            return Err(NnError::Checkpoint(format!(
                "expected {} parameters, found {}",
                store.len(),
                ck.params.len()
            )));
        }
        for (slot, stored) in store.params.iter_mut().zip(&ck.params) {
            if slot.name != stored.name || slot.value.shape() != stored.shape.as_slice() {
                return Err(NnError::Checkpoint(format!(
                    "parameter {} {:?} does not match {} {:?}",
                    stored.name,
                    stored.shape,
                    slot.name,
                    slot.value.shape()
                )));
            }
            slot.value = Tensor::new(stored.shape.clone(), stored.data.clone())
                .map_err(|e| NnError::Checkpoint(e.to_string()))?;
            if !slot.value.is_finite() {
                return Err(NnError::Checkpoint(format!("{} holds non-finite values", stored.name)));
            }
        }
        Ok((ck.config.clone(), store))
    }

    pub fn save(&self, cfg: &GdtConfig, path: &Path) -> Result<()> {
        let text = serde_json::to_string(&self.to_checkpoint(cfg))
            .map_err(|e| NnError::Checkpoint(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| NnError::Checkpoint(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<(GdtConfig, Self)> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| NnError::Checkpoint(format!("{}: {e}", path.display())))?;
        let ck: Checkpoint = serde_json::from_str(&text).map_err(|e| NnError::Checkpoint(e.to_string()))?;
        ParamStore::from_checkpoint(&ck)
    }
}

pub const CHECKPOINT_FORMAT: &str = "gdt-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoredParam {
    pub name: String,
    pub group: ParamGroup,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub version: u32,
    pub config: GdtConfig,
    pub params: Vec<StoredParam>,
}

/// Tape handles for one registration of a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct BoundParams {
    vars: Vec<Var>,
    index: HashMap<String, usize>,
}

impl BoundParams {
    pub fn var(&self, name: &str) -> Result<Var> {
        self.index
            .get(name)
            .map(|&i| self.vars[i])
            .ok_or_else(|| NnError::Config(format!("no parameter named {name}")))
    }

    pub fn opt(&self, name: &str) -> Option<Var> {
        self.index.get(name).map(|&i| self.vars[i])
    }

    /// Vars in store order.
    pub fn vars(&self) -> &[Var] {
        &self.vars
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::GdtConfig;
    use gdt_core::pe::PeKind;

    #[test]
    fn ledger_matches_closed_form() {
        for (d, t, h) in [(8, 1, 1), (16, 2, 2), (12, 3, 4)] {
            let mut cfg = GdtConfig::small(d, t, h, 3);
            cfg.relative_pe = PeKind::Rrwp;
            let s = ParamStore::init(&cfg).unwrap();
            assert_eq!(s.count(ParamGroup::Ledger), cfg.ledger_param_count());
        }
    }

    #[test]
    fn init_is_seed_deterministic() {
        let cfg = GdtConfig::small(8, 2, 2, 11);
        assert_eq!(ParamStore::init(&cfg).unwrap(), ParamStore::init(&cfg).unwrap());
        let other = GdtConfig { seed: 12, ..cfg.clone() };
        assert_ne!(ParamStore::init(&cfg).unwrap(), ParamStore::init(&other).unwrap());
    }

    #[test]
    fn checkpoint_round_trip_is_lossless() {
        let cfg = GdtConfig::small(8, 1, 2, 5);
        let s = ParamStore::init(&cfg).unwrap();
        let text = serde_json::to_string(&s.to_checkpoint(&cfg)).unwrap();
        let ck: Checkpoint = serde_json::from_str(&text).unwrap();
        let (cfg2, s2) = ParamStore::from_checkpoint(&ck).unwrap();
        assert_eq!(cfg, cfg2);
        assert_eq!(s, s2);
    }

    #[test]
    fn checkpoint_shape_mismatch_is_rejected() {
        let cfg = GdtConfig::small(8, 1, 2, 5);
        let mut ck = ParamStore::init(&cfg).unwrap().to_checkpoint(&cfg);
        ck.params[0].shape = vec![2, 2];
        assert!(ParamStore::from_checkpoint(&ck).is_err());
    }
}
