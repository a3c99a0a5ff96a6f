//! PE expressivity checks on CSL graphs: which encodings tell co-prime CSL
//! pairs apart, plus the RWSE walk-length threshold and blind spot.

use gdt_core::graph::{are_isomorphic_with_cap, csl_graph};
use gdt_core::pe::{pe_distinguish, rwse, PeKind};
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::Result;
use crate::report::Check;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HierarchyParams {
    /// Largest CSL size in the co-prime pair matrix.
    pub max_n: usize,
    /// Walk length for RWSE, RRWP and SPE in the matrix.
    pub k: usize,
    /// Largest `n` for the RWSE threshold check.
    pub threshold_max_n: usize,
    /// Walk lengths tested on CSL(11,3) / CSL(11,4).
    pub blind_walks: usize,
}

impl Default for HierarchyParams {
    fn default() -> Self {
        HierarchyParams { max_n: 14, k: 8, threshold_max_n: 40, blind_walks: 64 }
    }
}

/// Kinds in the matrix, in row order. NoPE stands for 1-WL.
pub const MATRIX_KINDS: [PeKind; 5] = [PeKind::NoPe, PeKind::Rwse, PeKind::Rrwp, PeKind::Spe, PeKind::Lpe];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairVerdicts {
    pub n: usize,
    pub a: usize,
    pub b: usize,
    pub isomorphic: bool,
    /// Distinguishability per entry of [`MATRIX_KINDS`].
    pub distinguished: Vec<bool>,
}

/// `(n, a, b)` with `2 <= a < b <= n - 2`, both co-prime to `n`.
pub fn coprime_pairs(max_n: usize) -> Vec<(usize, usize, usize)> {
    let gcd = |mut x: usize, mut y: usize| {
        while y != 0 {
            (x, y) = (y, x % y);
        }
        x
    };
    let mut out = Vec::new();
    for n in 5..=max_n {
        let ks: Vec<usize> = (2..n - 1).filter(|&k| gcd(n, k) == 1).collect();
        for (i, &a) in ks.iter().enumerate() {
            for &b in &ks[i + 1..] {
                out.push((n, a, b));
            }
        }
    }
    out
}

pub fn pair_matrix(max_n: usize, k: usize) -> Result<Vec<PairVerdicts>> {
    coprime_pairs(max_n)
        .into_iter()
        .map(|(n, a, b)| {
            let g = csl_graph(n, a)?.graph;
            let h = csl_graph(n, b)?.graph;
            let isomorphic = are_isomorphic_with_cap(&g, &h, max_n.max(n))?;
            let distinguished = MATRIX_KINDS
                .iter()
                .map(|&kind| pe_distinguish(&g, &h, kind, k))
                .collect::<gdt_core::Result<Vec<_>>>()?;
            Ok(PairVerdicts { n, a, b, isomorphic, distinguished })
        })
        .collect()
}

fn row(matrix: &[PairVerdicts], kind: PeKind) -> impl Iterator<Item = (&PairVerdicts, bool)> {
    let at = MATRIX_KINDS.iter().position(|&x| x == kind).expect("kind in matrix");
    matrix.iter().map(move |p| (p, p.distinguished[at]))
}

fn pair_name(p: &PairVerdicts) -> String {
    format!("CSL({},{})/CSL({},{})", p.n, p.a, p.n, p.b)
}

/// 1-WL tells no co-prime pair apart.
pub fn one_wl_blind(matrix: &[PairVerdicts]) -> Check {
    let split: Vec<String> = row(matrix, PeKind::NoPe).filter(|(_, d)| *d).map(|(p, _)| pair_name(p)).collect();
    Check::new(
        "csl-1-wl-blind",
        split.is_empty() && !matrix.is_empty(),
        format!("1-WL distinguishes {} of {} co-prime pairs", split.len(), matrix.len()),
    )
    .with_detail(json!({ "distinguished": split }))
}

/// RRWP separates every non-isomorphic co-prime pair.
pub fn rrwp_separates(matrix: &[PairVerdicts], k: usize) -> Check {
    let missed: Vec<String> = row(matrix, PeKind::Rrwp)
        .filter(|(p, d)| !p.isomorphic && !d)
        .map(|(p, _)| pair_name(p))
        .collect();
    let isomorphic: Vec<String> = matrix.iter().filter(|p| p.isomorphic).map(pair_name).collect();
    let tested = matrix.len() - isomorphic.len();
    Check::new(
        "csl-rrwp-separates",
        missed.is_empty() && tested > 0,
        format!(
            "RRWP (k={k}) distinguishes {} of {tested} non-isomorphic pairs; {} isomorphic pairs set aside",
            tested - missed.len(),
            isomorphic.len()
        ),
    )
    .with_detail(json!({ "missed": missed, "isomorphic_pairs": isomorphic }))
}

/// Walk length `k + 1` splits CSL(n,k) from CSL(n,k+1) for every
/// `n > k(k+1) + 1`, `k` in 2..=4.
pub fn rwse_threshold(max_n: usize) -> Result<Check> {
    let mut missed = Vec::new();
    let mut tested = 0;
    for k in 2..=4usize {
        for n in k * (k + 1) + 2..=max_n {
            let g = csl_graph(n, k)?.graph;
            let h = csl_graph(n, k + 1)?.graph;
            tested += 1;
            if !pe_distinguish(&g, &h, PeKind::Rwse, k + 1)? {
                missed.push(format!("CSL({n},{k})/CSL({n},{})", k + 1));
            }
        }
    }
    Ok(Check::new(
        "csl-rwse-threshold",
        missed.is_empty() && tested > 0,
        format!("{} of {tested} pairs split at walk length k+1 (k in 2..=4, n <= {max_n})", tested - missed.len()),
    )
    .with_detail(json!({ "missed": missed })))
}

/// CSL(11,3) and CSL(11,4) have identical exact RWSE for every walk length
/// up to `walks`.
pub fn rwse_blind_spot(walks: usize) -> Result<Check> {
    let g = csl_graph(11, 3)?.graph;
    let h = csl_graph(11, 4)?.graph;
    let fg = rwse(&g, walks)?;
    let fh = rwse(&h, walks)?;
    let mut a = fg.exact().expect("RWSE is exact").to_vec();
    let mut b = fh.exact().expect("RWSE is exact").to_vec();
    a.sort();
    b.sort();
    let first_split = (1..=walks).find(|&t| {
        let cut = |rows: &[Vec<gdt_core::Rational>]| {
            let mut r: Vec<Vec<gdt_core::Rational>> = rows.iter().map(|x| x[..t].to_vec()).collect();
            r.sort();
            r
        };
        cut(&a) != cut(&b)
    });
    Ok(Check::new(
        "csl-rwse-blind-11",
        first_split.is_none(),
        match first_split {
            None => format!("CSL(11,3) and CSL(11,4) share exact RWSE for all walk lengths <= {walks}"),
            Some(t) => format!("RWSE splits CSL(11,3)/CSL(11,4) at walk length {t}"),
        },
    ))
}

pub fn run(p: &HierarchyParams) -> Result<(Vec<Check>, serde_json::Value)> {
    let matrix = pair_matrix(p.max_n, p.k)?;
    let checks = vec![
        one_wl_blind(&matrix),
        rwse_threshold(p.threshold_max_n)?,
        rwse_blind_spot(p.blind_walks)?,
        rrwp_separates(&matrix, p.k),
    ];
    let rows: serde_json::Map<String, serde_json::Value> = MATRIX_KINDS
        .iter()
        .enumerate()
        .map(|(i, kind)| {
            let cells: Vec<bool> = matrix.iter().map(|v| v.distinguished[i]).collect();
            (kind.name().to_string(), json!(cells))
        })
        .collect();
    let data = json!({
        "family": "csl",
        "params": p,
        "pairs": matrix.iter().map(pair_name).collect::<Vec<_>>(),
        "isomorphic": matrix.iter().map(|v| v.isomorphic).collect::<Vec<_>>(),
        "matrix": rows,
    });
    Ok((checks, data))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coprime_pairs_for_small_n() {
        // n = 5: skips 2, 3; n = 7: 2..=5; n = 8: 3, 5
        let p = coprime_pairs(8);
        assert_eq!(p.iter().filter(|x| x.0 == 5).count(), 1);
        assert_eq!(p.iter().filter(|x| x.0 == 6).count(), 0);
        assert_eq!(p.iter().filter(|x| x.0 == 7).count(), 6);
        assert_eq!(p.iter().filter(|x| x.0 == 8).collect::<Vec<_>>(), vec![&(8, 3, 5)]);
    }

    #[test]
    fn small_matrix_passes() {
        let (checks, data) = run(&HierarchyParams { max_n: 13, k: 8, threshold_max_n: 16, blind_walks: 12 }).unwrap();
        for c in &checks {
            assert!(c.passed, "{}: {}", c.name, c.summary);
        }
        assert_eq!(data["matrix"]["rrwp"].as_array().unwrap().len(), coprime_pairs(13).len());
    }
}
