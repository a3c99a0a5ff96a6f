mod common;

use common::{max_abs_diff, random_perm, random_vec};
use gdt_nn::tape::{gelu, LAYER_NORM_EPS};
use gdt_nn::{gdt_layer, Activation, LayerVars, Tape, Tensor};

fn mat(rows: usize, cols: usize, data: Vec<f64>) -> Tensor {
    Tensor::matrix(rows, cols, data).unwrap()
}

struct Weights {
    q: Vec<f64>,
    k: Vec<f64>,
    v: Vec<f64>,
    o: Vec<f64>,
    w1: Vec<f64>,
    w2: Vec<f64>,
}

fn run_layer(x: &[f64], bias: &[f64], w: &Weights, l: usize, d: usize, df: usize, heads: usize) -> Vec<f64> {
    let mut tape = Tape::new();
    let xv = tape.constant(mat(l, d, x.to_vec())).unwrap();
    let bv = tape.constant(mat(l * l, heads, bias.to_vec())).unwrap();
    let lv = LayerVars {
        w_q: tape.param(mat(d, d, w.q.clone())).unwrap(),
        w_k: tape.param(mat(d, d, w.k.clone())).unwrap(),
        w_v: tape.param(mat(d, d, w.v.clone())).unwrap(),
        w_o: tape.param(mat(d, d, w.o.clone())).unwrap(),
        w_1: tape.param(mat(d, df, w.w1.clone())).unwrap(),
        w_2: tape.param(mat(df, d, w.w2.clone())).unwrap(),
    };
    let out = gdt_layer(&mut tape, xv, bv, &lv, heads, Activation::Gelu, None).unwrap();
    tape.value(out).data().to_vec()
}

fn random_weights(d: usize, df: usize, seed: u64) -> Weights {
    Weights {
        q: random_vec(d * d, seed),
        k: random_vec(d * d, seed + 1),
        v: random_vec(d * d, seed + 2),
        o: random_vec(d * d, seed + 3),
        w1: random_vec(d * df, seed + 4),
        w2: random_vec(df * d, seed + 5),
    }
}

#[test]
fn zero_weights_leave_tokens_unchanged() {
    let (l, d, df, h) = (5, 4, 6, 2);
    let x = random_vec(l * d, 1);
    let b = random_vec(l * l * h, 2);
    let zero = Weights {
        q: vec![0.0; d * d],
        k: vec![0.0; d * d],
        v: vec![0.0; d * d],
        o: vec![0.0; d * d],
        w1: vec![0.0; d * df],
        w2: vec![0.0; df * d],
    };
    assert_eq!(run_layer(&x, &b, &zero, l, d, df, h), x);
}

#[test]
fn permuting_tokens_permutes_the_output() {
    let (l, d, df, h) = (7, 6, 8, 3);
    let x = random_vec(l * d, 3);
    let b = random_vec(l * l * h, 4);
    let w = random_weights(d, df, 10);
    let out = run_layer(&x, &b, &w, l, d, df, h);
    let perm = random_perm(l, 5);
    // token i moves to position perm[i]
    let mut xp = vec![0.0; l * d];
    let mut bp = vec![0.0; l * l * h];
    for i in 0..l {
        xp[perm[i] * d..(perm[i] + 1) * d].copy_from_slice(&x[i * d..(i + 1) * d]);
        for j in 0..l {
            let src = (i * l + j) * h;
            let dst = (perm[i] * l + perm[j]) * h;
            bp[dst..dst + h].copy_from_slice(&b[src..src + h]);
        }
    }
    let outp = run_layer(&xp, &bp, &w, l, d, df, h);
    for i in 0..l {
        let a = &out[i * d..(i + 1) * d];
        let c = &outp[perm[i] * d..(perm[i] + 1) * d];
        assert!(max_abs_diff(a, c) < 1e-12);
    }
}

// --- straight-line reference: L = 3, d = 2, h = 1 ---

fn layer_norm_row(r: [f64; 2]) -> [f64; 2] {
    let mean = (r[0] + r[1]) / 2.0;
    let var = ((r[0] - mean).powi(2) + (r[1] - mean).powi(2)) / 2.0;
    let s = 1.0 / (var + LAYER_NORM_EPS).sqrt();
    [(r[0] - mean) * s, (r[1] - mean) * s]
}

fn times(r: [f64; 2], m: &[f64]) -> [f64; 2] {
    [r[0] * m[0] + r[1] * m[2], r[0] * m[1] + r[1] * m[3]]
}

#[test]
fn hand_sized_layer_matches_scalar_evaluation() {
    let x = [[1.0, -0.5], [0.25, 2.0], [-1.5, 0.75]];
    let bias = [0.1, -0.2, 0.3, 0.0, 0.5, -0.4, 0.2, 0.2, -0.1];
    let w = Weights {
        q: vec![0.5, -0.3, 0.8, 0.1],
        k: vec![-0.2, 0.7, 0.4, 0.9],
        v: vec![1.1, -0.6, 0.3, 0.2],
        o: vec![0.9, 0.1, -0.4, 0.6],
        w1: vec![0.3, -0.7, 0.5, 0.2],
        w2: vec![-0.8, 0.4, 0.6, 0.35],
    };

    let xn: Vec<[f64; 2]> = x.iter().map(|&r| layer_norm_row(r)).collect();
    let q: Vec<[f64; 2]> = xn.iter().map(|&r| times(r, &w.q)).collect();
    let k: Vec<[f64; 2]> = xn.iter().map(|&r| times(r, &w.k)).collect();
    let v: Vec<[f64; 2]> = xn.iter().map(|&r| times(r, &w.v)).collect();
    let scale = 1.0 / 2f64.sqrt();
    let mut x1 = [[0.0; 2]; 3];
    for i in 0..3 {
        let s: Vec<f64> = (0..3)
            .map(|j| (q[i][0] * k[j][0] + q[i][1] * k[j][1]) * scale + bias[i * 3 + j])
            .collect();
        let mx = s[0].max(s[1]).max(s[2]);
        let e: Vec<f64> = s.iter().map(|x| (x - mx).exp()).collect();
        let z = e[0] + e[1] + e[2];
        let a = [
            (e[0] * v[0][0] + e[1] * v[1][0] + e[2] * v[2][0]) / z,
            (e[0] * v[0][1] + e[1] * v[1][1] + e[2] * v[2][1]) / z,
        ];
        let ao = times(a, &w.o);
        x1[i] = [x[i][0] + ao[0], x[i][1] + ao[1]];
    }
    let mut expected = Vec::new();
    for r in x1 {
        let n = layer_norm_row(r);
        let hdn = times(n, &w.w1);
        let g = [gelu(hdn[0]), gelu(hdn[1])];
        let f = times(g, &w.w2);
        expected.extend([r[0] + f[0], r[1] + f[1]]);
    }

    let flat: Vec<f64> = x.iter().flatten().copied().collect();
    let out = run_layer(&flat, &bias, &w, 3, 2, 2, 1);
    assert!(max_abs_diff(&out, &expected) < 1e-12, "{out:?} vs {expected:?}");
}
