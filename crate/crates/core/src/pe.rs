//! Raw positional-embedding features: RWSE and RRWP in exact arithmetic,
//! LPE and SPE from the normalized Laplacian.

use std::collections::BTreeMap;

use num_traits::One;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{format_rational, Graph};
use crate::linalg::{
    normalized_laplacian, random_walk_matrix, rational_to_f64, symmetric_eig, Rational,
    RationalMatrix, RealMatrix, DEFAULT_EIG_TOL,
};
use crate::wl::{gd_wl_distinguishes, one_wl_distinguishes, DistanceMatrix};

/// Float features are compared after rounding to this grid.
pub const FLOAT_TOLERANCE: f64 = 1e-7;

/// Eigenvalues closer than this count as tied when truncating LPE.
const TIE_EPS: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PeKind {
    NoPe,
    Rwse,
    Rrwp,
    Lpe,
    Spe,
}

impl PeKind {
    pub const ALL: [PeKind; 5] = [PeKind::NoPe, PeKind::Rwse, PeKind::Rrwp, PeKind::Lpe, PeKind::Spe];

    pub fn name(self) -> &'static str {
        match self {
            PeKind::NoPe => "nope",
            PeKind::Rwse => "rwse",
            PeKind::Rrwp => "rrwp",
            PeKind::Lpe => "lpe",
            PeKind::Spe => "spe",
        }
    }

    pub fn is_relative(self) -> bool {
        self == PeKind::Rrwp
    }
}

impl std::str::FromStr for PeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PeKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Parse(format!("unknown PE kind {s:?}")))
    }
}

impl std::fmt::Display for PeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum FeatureValues {
    Exact(Vec<Vec<Rational>>),
    Real(Vec<Vec<f64>>),
}

/// One feature vector per node.
#[derive(Clone, Debug, PartialEq)]
pub struct AbsolutePEFeatures {
    pub kind: PeKind,
    pub k: usize,
    pub values: FeatureValues,
    /// LPE only: the k-th and (k+1)-th eigenvalues coincide, so the cut
    /// through the eigenspace depends on the solver's basis.
    pub tie_cut: bool,
}

impl AbsolutePEFeatures {
    pub fn num_nodes(&self) -> usize {
        match &self.values {
            FeatureValues::Exact(v) => v.len(),
            FeatureValues::Real(v) => v.len(),
        }
    }

    pub fn width(&self) -> usize {
        match &self.values {
            FeatureValues::Exact(v) => v.first().map_or(0, Vec::len),
            FeatureValues::Real(v) => v.first().map_or(0, Vec::len),
        }
    }

    pub fn is_exact(&self) -> bool {
        matches!(self.values, FeatureValues::Exact(_))
    }

    pub fn to_f64(&self) -> Vec<Vec<f64>> {
        match &self.values {
            FeatureValues::Exact(v) => v
                .iter()
                .map(|row| row.iter().map(rational_to_f64).collect())
                .collect(),
            FeatureValues::Real(v) => v.clone(),
        }
    }

    pub fn exact(&self) -> Option<&[Vec<Rational>]> {
        match &self.values {
            FeatureValues::Exact(v) => Some(v),
            FeatureValues::Real(_) => None,
        }
    }
}

/// Stacked random-walk powers `[I, R, ..., R^(k-1)]` for every ordered pair.
#[derive(Clone, Debug, PartialEq)]
pub struct RelativePEFeatures {
    pub k: usize,
    pub slices: Vec<RationalMatrix>,
}

impl RelativePEFeatures {
    pub fn num_nodes(&self) -> usize {
        self.slices.first().map_or(0, RationalMatrix::rows)
    }

    pub fn pair(&self, i: usize, j: usize) -> Vec<Rational> {
        self.slices.iter().map(|s| s.get(i, j).clone()).collect()
    }

    /// Row-major `n x n x k` array of floats.
    pub fn to_f64(&self) -> Vec<f64> {
        let n = self.num_nodes();
        let mut out = Vec::with_capacity(n * n * self.k);
        for i in 0..n {
            for j in 0..n {
                out.extend(self.slices.iter().map(|s| rational_to_f64(s.get(i, j))));
            }
        }
        out
    }

    pub fn as_distance(&self) -> DistanceMatrix {
        DistanceMatrix::from_fn(self.num_nodes(), |i, j| self.pair(i, j))
    }
}

pub fn no_pe(g: &Graph) -> AbsolutePEFeatures {
    AbsolutePEFeatures {
        kind: PeKind::NoPe,
        k: 0,
        values: FeatureValues::Real(vec![Vec::new(); g.n()]),
        tie_cut: false,
    }
}

/// `(R_ii, (R^2)_ii, ..., (R^k)_ii)` per node, exact.
pub fn rwse(g: &Graph, k: usize) -> Result<AbsolutePEFeatures> {
    rwse_with_identity(g, k, false)
}

/// Like [`rwse`], optionally prefixed by the constant `t = 0` entry.
pub fn rwse_with_identity(g: &Graph, k: usize, include_identity: bool) -> Result<AbsolutePEFeatures> {
    if k == 0 {
        return Err(Error::InvalidParameter("RWSE needs k >= 1".into()));
    }
    let powers = random_walk_matrix(g)?.powers(k + 1)?;
    let first = if include_identity { 0 } else { 1 };
    let values = (0..g.n())
        .map(|v| (first..=k).map(|t| powers[t].get(v, v).clone()).collect())
        .collect();
    Ok(AbsolutePEFeatures {
        kind: PeKind::Rwse,
        k,
        values: FeatureValues::Exact(values),
        tie_cut: false,
    })
}

pub fn rrwp(g: &Graph, k: usize) -> Result<RelativePEFeatures> {
    if k == 0 {
        return Err(Error::InvalidParameter("RRWP needs k >= 1".into()));
    }
    Ok(RelativePEFeatures {
        k,
        slices: random_walk_matrix(g)?.powers(k)?,
    })
}

/// Float route for RRWP, used when exact powers are not needed: row-major
/// `n x n x k`, slice 0 the identity.
pub fn rrwp_f64(g: &Graph, k: usize) -> Result<Vec<f64>> {
    if k == 0 {
        return Err(Error::InvalidParameter("RRWP needs k >= 1".into()));
    }
    let n = g.n();
    let r = random_walk_matrix(g)?.to_real();
    let mut slices = vec![RealMatrix::identity(n)];
    for t in 1..k {
        let next = slices[t - 1].mul(&r)?;
        slices.push(next);
    }
    let mut out = Vec::with_capacity(n * n * k);
    for i in 0..n {
        for j in 0..n {
            out.extend(slices.iter().map(|s| s.get(i, j)));
        }
    }
    Ok(out)
}

/// Float route for RWSE (k return probabilities per node).
pub fn rwse_f64(g: &Graph, k: usize) -> Result<Vec<Vec<f64>>> {
    let flat = rrwp_f64(g, k + 1)?;
    let n = g.n();
    let w = k + 1;
    Ok((0..n)
        .map(|v| (1..=k).map(|t| flat[(v * n + v) * w + t]).collect())
        .collect())
}

/// Node `u` gets `(lambda_1, V_u1, ..., lambda_k, V_uk)` for the k smallest
/// eigenvalues; missing pairs (k > n) are zero.
pub fn lpe_features(g: &Graph, k: usize) -> Result<AbsolutePEFeatures> {
    let n = g.n();
    let eig = symmetric_eig(&normalized_laplacian(g)?, DEFAULT_EIG_TOL)?;
    let used = k.min(n);
    let tie_cut = used > 0 && used < n && (eig.eigenvalues[used] - eig.eigenvalues[used - 1]).abs() < TIE_EPS;
    let values = (0..n)
        .map(|u| {
            let mut row = Vec::with_capacity(2 * k);
            for j in 0..k {
                if j < used {
                    row.push(eig.eigenvalues[j]);
                    row.push(eig.eigenvectors.get(u, j));
                } else {
                    row.extend([0.0, 0.0]);
                }
            }
            row
        })
        .collect();
    Ok(AbsolutePEFeatures {
        kind: PeKind::Lpe,
        k,
        values: FeatureValues::Real(values),
        tie_cut,
    })
}

/// Channels `Q_l = V diag((1 - lambda)^l) V^T` for `l = 1..=k`.
pub fn spe_channels(g: &Graph, k: usize) -> Result<Vec<RealMatrix>> {
    let eig = symmetric_eig(&normalized_laplacian(g)?, DEFAULT_EIG_TOL)?;
    Ok((1..=k)
        .map(|l| eig.spectral_function(|x| (1.0 - x).powi(l as i32)))
        .collect())
}

/// Per node and channel: diagonal entry, row sum, row sum of squares.
pub fn spe_features(g: &Graph, k: usize) -> Result<AbsolutePEFeatures> {
    if k == 0 {
        return Err(Error::InvalidParameter("SPE needs k >= 1".into()));
    }
    let channels = spe_channels(g, k)?;
    let values = (0..g.n())
        .map(|u| {
            channels
                .iter()
                .flat_map(|q| {
                    let row = q.row(u);
                    [
                        q.get(u, u),
                        row.iter().sum::<f64>(),
                        row.iter().map(|x| x * x).sum::<f64>(),
                    ]
                })
                .collect()
        })
        .collect();
    Ok(AbsolutePEFeatures {
        kind: PeKind::Spe,
        k,
        values: FeatureValues::Real(values),
        tie_cut: false,
    })
}

pub fn absolute_features(g: &Graph, kind: PeKind, k: usize) -> Result<AbsolutePEFeatures> {
    match kind {
        PeKind::NoPe => Ok(no_pe(g)),
        PeKind::Rwse => rwse(g, k),
        PeKind::Lpe => lpe_features(g, k),
        PeKind::Spe => spe_features(g, k),
        PeKind::Rrwp => Err(Error::InvalidParameter("RRWP is a relative PE".into())),
    }
}

/// Whether the PE tells the two graphs apart. Absolute kinds compare node
/// vector multisets (exactly for RWSE, on a 1e-7 grid for LPE/SPE); RRWP
/// runs GD-WL with the pair vectors as distance; NoPE falls back to 1-WL,
/// the power the attention bias alone provides.
pub fn pe_distinguish(ga: &Graph, gb: &Graph, kind: PeKind, k: usize) -> Result<bool> {
    match kind {
        PeKind::NoPe => Ok(one_wl_distinguishes(ga, gb)),
        PeKind::Rrwp => {
            let da = rrwp(ga, k)?.as_distance();
            let db = rrwp(gb, k)?.as_distance();
            gd_wl_distinguishes(ga, &da, gb, &db)
        }
        PeKind::Rwse => {
            let key = |g: &Graph| -> Result<Vec<Vec<Rational>>> {
                let mut v = rwse(g, k)?.exact().expect("RWSE is exact").to_vec();
                v.sort();
                Ok(v)
            };
            Ok(key(ga)? != key(gb)?)
        }
        PeKind::Lpe | PeKind::Spe => {
            let a = absolute_features(ga, kind, k)?.to_f64();
            let b = absolute_features(gb, kind, k)?.to_f64();
            Ok(!float_multisets_match(a, b, FLOAT_TOLERANCE))
        }
    }
}

/// Multiset equality of rows up to `tol` in every coordinate. Rounding to a
/// fixed grid would split values straddling a cell boundary, so rows are
/// matched greedily in sorted order instead.
fn float_multisets_match(mut a: Vec<Vec<f64>>, b: Vec<Vec<f64>>, tol: f64) -> bool {
    if a.len() != b.len() {
        return false;
    }
    let close = |x: &[f64], y: &[f64]| x.len() == y.len() && x.iter().zip(y).all(|(p, q)| (p - q).abs() <= tol);
    let lex = |x: &Vec<f64>, y: &Vec<f64>| {
        x.iter()
            .zip(y)
            .map(|(p, q)| p.total_cmp(q))
            .find(|o| o.is_ne())
            .unwrap_or(x.len().cmp(&y.len()))
    };
    a.sort_by(lex);
    let mut used = vec![false; b.len()];
    a.iter().all(|row| {
        match (0..b.len()).find(|&j| !used[j] && close(row, &b[j])) {
            Some(j) => {
                used[j] = true;
                true
            }
            None => false,
        }
    })
}

/// Serialized PE features. Exact values are `"p/q"` strings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeDump {
    pub kind: PeKind,
    pub k: usize,
    pub exact: bool,
    pub node_features: serde_json::Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pair_features: Option<serde_json::Value>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub flags: BTreeMap<String, bool>,
}

impl From<&AbsolutePEFeatures> for PeDump {
    fn from(f: &AbsolutePEFeatures) -> Self {
        let node_features = match &f.values {
            FeatureValues::Exact(v) => serde_json::json!(v
                .iter()
                .map(|row| row.iter().map(format_rational).collect::<Vec<_>>())
                .collect::<Vec<_>>()),
            FeatureValues::Real(v) => serde_json::json!(v),
        };
        let mut flags = BTreeMap::new();
        if f.kind == PeKind::Lpe {
            flags.insert("tie_cut".to_string(), f.tie_cut);
        }
        PeDump {
            kind: f.kind,
            k: f.k,
            exact: f.is_exact(),
            node_features,
            pair_features: None,
            flags,
        }
    }
}

impl From<&RelativePEFeatures> for PeDump {
    fn from(f: &RelativePEFeatures) -> Self {
        let n = f.num_nodes();
        // The diagonal of the non-identity slices doubles as a per-node view.
        let node: Vec<Vec<String>> = (0..n)
            .map(|v| f.pair(v, v)[1..].iter().map(format_rational).collect())
            .collect();
        let pairs: Vec<Vec<Vec<String>>> = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| f.pair(i, j).iter().map(format_rational).collect())
                    .collect()
            })
            .collect();
        PeDump {
            kind: PeKind::Rrwp,
            k: f.k,
            exact: true,
            node_features: serde_json::json!(node),
            pair_features: Some(serde_json::json!(pairs)),
            flags: BTreeMap::new(),
        }
    }
}

/// `Sum_i (1 - lambda_i)^t v_i v_i^T` diagonal for `t = 1..=k`, the spectral
/// side of the random-walk return-probability identity.
pub fn spectral_return_probabilities(g: &Graph, k: usize) -> Result<Vec<Vec<f64>>> {
    let channels = spe_channels(g, k)?;
    Ok((0..g.n())
        .map(|u| channels.iter().map(|q| q.get(u, u)).collect())
        .collect())
}

/// Exact identity slice check helper: is slice 0 the identity?
pub fn identity_slice_ok(f: &RelativePEFeatures) -> bool {
    let n = f.num_nodes();
    (0..n).all(|i| (0..n).all(|j| (*f.slices[0].get(i, j) == Rational::one()) == (i == j)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::csl_graph;

    fn q(p: i64, d: i64) -> Rational {
        Rational::new(p.into(), d.into())
    }

    #[test]
    fn rwse_cycle() {
        let f = rwse(&Graph::cycle(4), 2).unwrap();
        for row in f.exact().unwrap() {
            assert_eq!(row, &vec![q(0, 1), q(1, 2)]);
        }
        let with_id = rwse_with_identity(&Graph::cycle(4), 2, true).unwrap();
        assert_eq!(with_id.width(), 3);
    }

    #[test]
    fn rrwp_single_edge() {
        let f = rrwp(&Graph::path(2), 3).unwrap();
        assert_eq!(f.pair(0, 1), vec![q(0, 1), q(1, 1), q(0, 1)]);
        assert!(identity_slice_ok(&f));
    }

    #[test]
    fn rrwp_diagonal_recovers_rwse() {
        let g = crate::graph::er_stitched(10, 0.25, 1, 4).unwrap();
        let rel = rrwp(&g, 6).unwrap();
        let abs = rwse(&g, 5).unwrap();
        for v in 0..g.n() {
            assert_eq!(rel.pair(v, v)[1..].to_vec(), abs.exact().unwrap()[v]);
        }
    }

    #[test]
    fn float_routes_match_exact() {
        let g = crate::graph::er_stitched(9, 0.3, 1, 8).unwrap();
        let exact = rrwp(&g, 5).unwrap().to_f64();
        let float = rrwp_f64(&g, 5).unwrap();
        for (a, b) in exact.iter().zip(&float) {
            assert!((a - b).abs() < 1e-12);
        }
        let rw = rwse_f64(&g, 4).unwrap();
        let ex = rwse(&g, 4).unwrap().to_f64();
        for (a, b) in rw.iter().flatten().zip(ex.iter().flatten()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn lpe_single_edge() {
        let f = lpe_features(&Graph::path(2), 2).unwrap();
        let v = f.to_f64();
        assert!((v[0][0] - 0.0).abs() < 1e-12 && (v[0][2] - 2.0).abs() < 1e-12);
        // Constant first eigenvector, positive after the sign fix.
        assert!((v[0][1] - v[1][1]).abs() < 1e-12 && v[0][1] > 0.0);
    }

    #[test]
    fn lpe_pads_and_flags_ties() {
        let f = lpe_features(&Graph::cycle(4), 6).unwrap();
        assert_eq!(f.width(), 12);
        assert!(f.to_f64()[0][8..].iter().all(|x| *x == 0.0));
        assert!(lpe_features(&Graph::cycle(4), 2).unwrap().tie_cut);
        assert!(!lpe_features(&Graph::cycle(4), 3).unwrap().tie_cut);
    }

    #[test]
    fn spe_empty_graph_is_zero() {
        for q in spe_channels(&Graph::new(3), 3).unwrap() {
            assert!(q.as_slice().iter().all(|x| x.abs() < 1e-15));
        }
    }

    #[test]
    fn spe_diagonal_tracks_rwse() {
        let g = csl_graph(8, 3).unwrap().graph;
        let spectral = spectral_return_probabilities(&g, 6).unwrap();
        let exact = rwse(&g, 6).unwrap().to_f64();
        for (a, b) in spectral.iter().flatten().zip(exact.iter().flatten()) {
            assert!((a - b).abs() < 1e-7);
        }
    }

    #[test]
    fn csl_11_rwse_is_blind() {
        let a = csl_graph(11, 3).unwrap().graph;
        let b = csl_graph(11, 4).unwrap().graph;
        assert!(!pe_distinguish(&a, &b, PeKind::Rwse, 32).unwrap());
    }

    #[test]
    fn csl_8_rwse_separates_at_three_steps() {
        let a = csl_graph(8, 2).unwrap().graph;
        let b = csl_graph(8, 3).unwrap().graph;
        assert!(pe_distinguish(&a, &b, PeKind::Rwse, 3).unwrap());
    }

    #[test]
    fn identical_inputs_never_distinguish() {
        let g = crate::graph::er_stitched(8, 0.3, 1, 2).unwrap();
        for kind in PeKind::ALL {
            assert!(!pe_distinguish(&g, &g, kind, 4).unwrap(), "{kind}");
        }
    }

    #[test]
    fn float_matching_ignores_grid_boundaries() {
        let a = vec![vec![0.5e-7 - 1e-15, 1.0], vec![2.0, 3.0]];
        let b = vec![vec![2.0, 3.0], vec![0.5e-7 + 1e-15, 1.0]];
        assert!(float_multisets_match(a.clone(), b, FLOAT_TOLERANCE));
        assert!(!float_multisets_match(a, vec![vec![2.0, 3.0], vec![1e-6, 1.0]], FLOAT_TOLERANCE));
    }

    #[test]
    fn dump_layout() {
        let d = PeDump::from(&rwse(&Graph::path(2), 2).unwrap());
        let s = serde_json::to_string(&d).unwrap();
        assert!(s.contains(r#""kind":"rwse""#));
        assert!(s.contains(r#"["0/1","1/1"]"#));
        assert!(d.exact);
        let r = PeDump::from(&rrwp(&Graph::path(2), 2).unwrap());
        assert!(r.pair_features.is_some());
    }

    #[test]
    fn kind_parsing() {
        assert_eq!("RRWP".parse::<PeKind>().unwrap(), PeKind::Rrwp);
        assert!("xyz".parse::<PeKind>().is_err());
    }
}
