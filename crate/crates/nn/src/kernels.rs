//! Dense kernels behind the tape: strided GEMM and fused biased attention.

use crate::error::{NnError, Result};

/// Strided view `(data, row_stride, col_stride)`.
pub type View<'a> = (&'a [f64], usize, usize);
pub type ViewMut<'a> = (&'a mut [f64], usize, usize);

fn last_index(rows: usize, cols: usize, rs: usize, cs: usize) -> usize {
    if rows == 0 || cols == 0 {
        0
    } else {
        (rows - 1) * rs + (cols - 1) * cs
    }
}

/// `C <- alpha A B + beta C` with `A: m x k`, `B: k x n`.
#[allow(clippy::too_many_arguments)]
pub fn gemm(m: usize, k: usize, n: usize, alpha: f64, a: View, b: View, beta: f64, c: ViewMut) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(k == 0 || last_index(m, k, a.1, a.2) < a.0.len(), "gemm: A out of bounds");
    assert!(k == 0 || last_index(k, n, b.1, b.2) < b.0.len(), "gemm: B out of bounds");
    assert!(last_index(m, n, c.1, c.2) < c.0.len(), "gemm: C out of bounds");
    // SAFETY: the asserts above keep every strided access inside its slice,
    // and `c` is an exclusive borrow distinct from `a` and `b`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.0.as_ptr(),
            a.1 as isize,
            a.2 as isize,
            b.0.as_ptr(),
            b.1 as isize,
            b.2 as isize,
            beta,
            c.0.as_mut_ptr(),
            c.1 as isize,
            c.2 as isize,
        );
    }
}

/// Row-wise softmax in place. A row whose entries are all `-inf` has no
/// defined softmax and is rejected.
pub fn softmax_rows(s: &mut [f64], cols: usize) -> Result<()> {
    for (i, row) in s.chunks_mut(cols).enumerate() {
        if row.iter().any(|x| x.is_nan()) {
            return Err(NnError::NonFinite("attention scores"));
        }
        let mx = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        if mx == f64::NEG_INFINITY {
            return Err(NnError::FullyMaskedRow(i));
        }
        let mut z = 0.0;
        for x in row.iter_mut() {
            *x = (*x - mx).exp();
            z += *x;
        }
        for x in row.iter_mut() {
            *x /= z;
        }
    }
    Ok(())
}

/// Returns the `L x d` output and the `h x L x L` probabilities.
#[allow(clippy::too_many_arguments)]
pub fn attention_forward(
    q: &[f64],
    k: &[f64],
    v: &[f64],
    bias: &[f64],
    mask: Option<&[f64]>,
    l: usize,
    d: usize,
    heads: usize,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut out = vec![0.0; l * d];
    let mut probs = vec![0.0; heads * l * l];
    for hd in 0..heads {
        let off = hd * dh;
        let p = &mut probs[hd * l * l..(hd + 1) * l * l];
        gemm(l, dh, l, scale, (&q[off..], d, 1), (&k[off..], 1, d), 0.0, (p, l, 1));
        for i in 0..l {
            for j in 0..l {
                let mut s = bias[(i * l + j) * heads + hd];
                if let Some(m) = mask {
                    s += m[i * l + j];
                }
                p[i * l + j] += s;
            }
        }
        softmax_rows(p, l)?;
        gemm(l, l, dh, 1.0, (p, l, 1), (&v[off..], d, 1), 0.0, (&mut out[off..], d, 1));
    }
    Ok((out, probs))
}

/// Adjoint of [`attention_forward`]; writes (overwrites) `dq, dk, dv, dbias`.
#[allow(clippy::too_many_arguments)]
pub fn attention_backward(
    dout: &[f64],
    q: &[f64],
    k: &[f64],
    v: &[f64],
    probs: &[f64],
    l: usize,
    d: usize,
    heads: usize,
    (dq, dk, dv, dbias): (&mut [f64], &mut [f64], &mut [f64], &mut [f64]),
) {
    let dh = d / heads;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut ds = vec![0.0; l * l];
    for hd in 0..heads {
        let off = hd * dh;
        let p = &probs[hd * l * l..(hd + 1) * l * l];
        // dP = dO V^T
        gemm(l, dh, l, 1.0, (&dout[off..], d, 1), (&v[off..], 1, d), 0.0, (&mut ds, l, 1));
        // dV = P^T dO
        gemm(l, l, dh, 1.0, (p, 1, l), (&dout[off..], d, 1), 1.0, (&mut dv[off..], d, 1));
        for i in 0..l {
            let row = i * l..(i + 1) * l;
            let dot: f64 = ds[row.clone()].iter().zip(&p[row.clone()]).map(|(a, b)| a * b).sum();
            for j in row {
                ds[j] = p[j] * (ds[j] - dot);
            }
        }
        for (pair, &x) in ds.iter().enumerate() {
            dbias[pair * heads + hd] += x;
        }
        gemm(l, l, dh, scale, (&ds, l, 1), (&k[off..], d, 1), 1.0, (&mut dq[off..], d, 1));
        gemm(l, l, dh, scale, (&ds, 1, l), (&q[off..], d, 1), 1.0, (&mut dk[off..], d, 1));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Scalar-by-scalar reference for one head.
    fn naive(q: &[f64], k: &[f64], v: &[f64], bias: &[f64], l: usize, d: usize, heads: usize) -> Vec<f64> {
        let dh = d / heads;
        let mut out = vec![0.0; l * d];
        for hd in 0..heads {
            for i in 0..l {
                let mut s: Vec<f64> = (0..l)
                    .map(|j| {
                        let dot: f64 = (0..dh).map(|a| q[i * d + hd * dh + a] * k[j * d + hd * dh + a]).sum();
                        dot / (dh as f64).sqrt() + bias[(i * l + j) * heads + hd]
                    })
                    .collect();
                let mx = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = s.iter().map(|x| (x - mx).exp()).sum();
                s.iter_mut().for_each(|x| *x = (*x - mx).exp() / z);
                for a in 0..dh {
                    out[i * d + hd * dh + a] = (0..l).map(|j| s[j] * v[j * d + hd * dh + a]).sum();
                }
            }
        }
        out
    }

    #[test]
    fn fused_matches_naive() {
        let (l, d, h) = (5, 6, 3);
        let f = |seed: usize, n: usize| -> Vec<f64> { (0..n).map(|i| (((i + seed) * 37 % 23) as f64 - 11.0) / 7.0).collect() };
        let (q, k, v, b) = (f(1, l * d), f(2, l * d), f(3, l * d), f(4, l * l * h));
        let (out, probs) = attention_forward(&q, &k, &v, &b, None, l, d, h).unwrap();
        let reference = naive(&q, &k, &v, &b, l, d, h);
        for (a, r) in out.iter().zip(&reference) {
            assert!((a - r).abs() < 1e-12);
        }
        for row in probs.chunks(l) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn fully_masked_row_is_an_error() {
        let mask = vec![0.0, f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY];
        let z = vec![0.0; 4];
        let r = attention_forward(&z, &z, &z, &z, Some(&mask), 2, 2, 1);
        assert!(matches!(r, Err(NnError::FullyMaskedRow(1))));
    }
}
