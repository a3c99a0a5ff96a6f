use std::collections::BTreeMap;

use crate::error::{Error, Result};

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Euclidean k-NN majority vote. Ties between labels are broken by the
/// smaller summed distance of their voters, then by the lower label id.
pub fn knn_few_shot(
    support: &[Vec<f64>],
    labels: &[u32],
    queries: &[Vec<f64>],
    k: usize,
) -> Result<Vec<u32>> {
    if support.is_empty() {
        return Err(Error::EmptySupport);
    }
    if support.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} support points with {} labels",
            support.len(),
            labels.len()
        )));
    }
    if k == 0 || k > support.len() {
        return Err(Error::InvalidParameter(format!(
            "k = {k} with {} support points",
            support.len()
        )));
    }
    let dim = support[0].len();
    if support.iter().chain(queries).any(|x| x.len() != dim) {
        return Err(Error::Shape("embeddings of different widths".into()));
    }
    Ok(queries
        .iter()
        .map(|q| {
            let mut d: Vec<(f64, usize)> = support
                .iter()
                .enumerate()
                .map(|(i, s)| (sq_dist(q, s).sqrt(), i))
                .collect();
            d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut votes: BTreeMap<u32, (usize, f64)> = BTreeMap::new();
            for &(dist, i) in &d[..k] {
                let e = votes.entry(labels[i]).or_insert((0, 0.0));
                e.0 += 1;
                e.1 += dist;
            }
            votes
                .into_iter()
                .min_by(|(la, (ca, da)), (lb, (cb, db))| {
                    cb.cmp(ca).then(da.total_cmp(db)).then(la.cmp(lb))
                })
                .map(|(l, _)| l)
                .expect("k >= 1 voters")
        })
        .collect())
}

/// Label occurring most often (lowest id on ties).
pub fn majority_label(labels: &[u32]) -> Option<u32> {
    let mut counts: BTreeMap<u32, usize> = BTreeMap::new();
    for &l in labels {
        *counts.entry(l).or_insert(0) += 1;
    }
    counts
        .into_iter()
        .min_by(|(la, ca), (lb, cb)| cb.cmp(ca).then(la.cmp(lb)))
        .map(|(l, _)| l)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_match_with_k1() {
        let s = vec![vec![0.0, 0.0], vec![1.0, 1.0]];
        assert_eq!(knn_few_shot(&s, &[3, 7], &[vec![1.0, 1.0]], 1).unwrap(), vec![7]);
    }

    #[test]
    fn full_k_is_global_majority() {
        let s = vec![vec![0.0], vec![10.0], vec![11.0]];
        let l = [0, 1, 1];
        assert_eq!(knn_few_shot(&s, &l, &[vec![0.0]], 3).unwrap(), vec![1]);
    }

    #[test]
    fn ties_prefer_closer_then_lower_label() {
        let s = vec![vec![0.0], vec![3.0]];
        assert_eq!(knn_few_shot(&s, &[5, 2], &[vec![1.0]], 2).unwrap(), vec![5]);
        assert_eq!(knn_few_shot(&s, &[5, 2], &[vec![1.5]], 2).unwrap(), vec![2]);
    }

    #[test]
    fn errors() {
        assert_eq!(knn_few_shot(&[], &[], &[vec![0.0]], 1), Err(Error::EmptySupport));
        assert!(knn_few_shot(&[vec![0.0]], &[0], &[vec![0.0]], 2).is_err());
    }

    #[test]
    fn majority() {
        assert_eq!(majority_label(&[2, 1, 1, 2]), Some(1));
        assert_eq!(majority_label(&[]), None);
    }
}
