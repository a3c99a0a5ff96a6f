//! Central finite differences against the tape's analytic gradients.

use std::rc::Rc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::model::{ForwardOptions, Gdt};
use crate::params::ParamGroup;
use crate::prepare::PreparedGraph;
use crate::tape::GradFault;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheckOptions {
    pub eps: f64,
    /// Bound on `|analytic - fd| / max(1, |fd|)`.
    pub tolerance: f64,
    /// Check at most this many entries per parameter (evenly spaced).
    pub max_entries: Option<usize>,
    pub fault: Option<GradFault>,
    /// Seed for the random read-out weights of the probe loss.
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        GradCheckOptions { eps: 1e-5, tolerance: 1e-4, max_entries: None, fault: None, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamCheck {
    pub name: String,
    pub group: ParamGroup,
    pub checked: usize,
    pub max_error: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.params.iter().all(|p| p.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &ParamCheck> {
        self.params.iter().filter(|p| !p.passed)
    }
}

type ReadOut = (Rc<Vec<f64>>, Rc<Vec<f64>>);

/// Probe loss: fixed random read-outs of the final embeddings and of the
/// decoder output, so every parameter on a path to either is exercised.
fn probe_loss(model: &Gdt, g: &PreparedGraph, w: &ReadOut, fault: Option<GradFault>, grads: bool) -> Result<(f64, Vec<Vec<f64>>)> {
    let mut fwd = model.forward(g, ForwardOptions { fault, dropout_seed: None })?;
    let a = fwd.tape.dot(fwd.embeddings, w.0.clone())?;
    let b = fwd.tape.dot(fwd.output, w.1.clone())?;
    let loss = fwd.tape.add(a, b)?;
    let value = fwd.tape.value(loss).data()[0];
    if !grads {
        return Ok((value, Vec::new()));
    }
    let g = fwd.tape.backward(loss)?;
    let out = fwd
        .params
        .vars()
        .iter()
        .zip(model.params().iter())
        .map(|(&v, p)| g.get(v).map_or_else(|| vec![0.0; p.value.len()], <[f64]>::to_vec))
        .collect();
    Ok((value, out))
}

/// Checks the parameters of `groups` (all when empty).
pub fn check_gradients(model: &Gdt, g: &PreparedGraph, groups: &[ParamGroup], opts: GradCheckOptions) -> Result<GradCheckReport> {
    let probe = model.forward(g, ForwardOptions::default())?;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut draw = |n: usize| Rc::new((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>());
    let weights = (
        draw(probe.tape.value(probe.embeddings).len()),
        draw(probe.outputs().len()),
    );
    drop(probe);
    let (_, analytic) = probe_loss(model, g, &weights, opts.fault, true)?;

    let mut work = model.clone();
    let mut report = GradCheckReport { params: Vec::new() };
    let names: Vec<(String, ParamGroup, usize)> =
        model.params().iter().map(|p| (p.name.clone(), p.group, p.value.len())).collect();
    for (pi, (name, group, len)) in names.into_iter().enumerate() {
        if !groups.is_empty() && !groups.contains(&group) {
            continue;
        }
        let stride = opts.max_entries.map_or(1, |m| len.div_ceil(m.max(1)).max(1));
        let mut max_error: f64 = 0.0;
        let mut checked = 0;
        for e in (0..len).step_by(stride) {
            let orig = work.params().get(&name).expect("listed").data()[e];
            work.params_mut().get_mut(&name).expect("listed").data_mut()[e] = orig + opts.eps;
            let plus = probe_loss(&work, g, &weights, None, false)?.0;
            work.params_mut().get_mut(&name).expect("listed").data_mut()[e] = orig - opts.eps;
            let minus = probe_loss(&work, g, &weights, None, false)?.0;
            work.params_mut().get_mut(&name).expect("listed").data_mut()[e] = orig;
            let fd = (plus - minus) / (2.0 * opts.eps);
            let err = (analytic[pi][e] - fd).abs() / fd.abs().max(1.0);
            max_error = max_error.max(err);
            checked += 1;
        }
        report.params.push(ParamCheck { name, group, checked, max_error, passed: max_error <= opts.tolerance });
    }
    Ok(report)
}
