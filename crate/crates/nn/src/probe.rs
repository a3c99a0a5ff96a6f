//! Does a softmax-weighted average of one-hot rows determine the multiset of
//! (score, row) pairs? Scores are rationals; exponentials are evaluated in
//! big-integer fixed point so the comparison runs far below f64 precision.

use std::collections::HashMap;

use gdt_core::Rational;
use num_bigint::{BigInt, Sign};
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};

/// Fractional bits of the fixed-point representation (about 77 digits).
pub const PRECISION_BITS: u32 = 256;
const GUARD_BITS: u32 = 64;

/// Two averages closer than this count as equal.
pub const PROBE_TOLERANCE: f64 = 1e-30;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProbeVerdict {
    pub lhs_equal: bool,
    pub multisets_equal: bool,
}

/// `e^x` scaled by `2^(PRECISION_BITS + GUARD_BITS)`, via the Taylor series
/// of `e^(x / 2^s)` squared `s` times.
fn exp_fixed(x: &Rational) -> BigInt {
    let bits = PRECISION_BITS + GUARD_BITS;
    let one = BigInt::one() << bits;
    // halve until |x| <= 1/2
    let mut s = 0u32;
    let mut y = x.clone();
    let half = Rational::new(1.into(), 2.into());
    while y.abs() > half {
        y /= Rational::from_integer(2.into());
        s += 1;
    }
    let (p, q) = (y.numer().clone(), y.denom().clone());
    let mut term = one.clone();
    let mut sum = one.clone();
    let mut k = 1u64;
    loop {
        term = term * &p / (&q * BigInt::from(k));
        if term.is_zero() {
            break;
        }
        sum += &term;
        k += 1;
    }
    for _ in 0..s {
        sum = &sum * &sum >> bits;
    }
    sum
}

/// Per-class softmax mass `sum_{i in c} e^(v_i) / sum_i e^(v_i)` in fixed
/// point with `PRECISION_BITS` fractional bits. Entries of `exps` are
/// `e^(v_i)` from [`exp_fixed`].
fn class_mass(exps: &[BigInt], classes: &[usize], num_classes: usize) -> Vec<BigInt> {
    let mut s = vec![BigInt::zero(); num_classes];
    for (e, &c) in exps.iter().zip(classes) {
        s[c] += e;
    }
    let z: BigInt = s.iter().sum();
    s.into_iter().map(|sc| (sc << PRECISION_BITS) / &z).collect()
}

fn tolerance_fixed() -> BigInt {
    // ceil(1e-30 * 2^256) is far inside the representable range.
    let t = BigInt::from(10u32).pow(30);
    (BigInt::one() << PRECISION_BITS) / t
}

fn within(a: &[BigInt], b: &[BigInt], tol: &BigInt) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= *tol)
}

/// Column index of the single 1 in each row.
fn one_hot_classes(x: &[Vec<u8>]) -> Result<(Vec<usize>, usize)> {
    let width = x.first().map_or(0, Vec::len);
    let mut classes = Vec::with_capacity(x.len());
    for (i, row) in x.iter().enumerate() {
        if row.len() != width {
            return Err(NnError::Precondition(format!("row {i} has width {}, expected {width}", row.len())));
        }
        let ones: Vec<usize> = row.iter().enumerate().filter(|(_, &b)| b == 1).map(|(c, _)| c).collect();
        if ones.len() != 1 || row.iter().any(|&b| b > 1) {
            return Err(NnError::Precondition(format!("row {i} is not one-hot")));
        }
        classes.push(ones[0]);
    }
    Ok((classes, width))
}

fn max_of(v: &[Rational]) -> Option<&Rational> {
    v.iter().max()
}

fn multiset_key(v: &[Rational], classes: &[usize]) -> Vec<(Rational, usize)> {
    let mut k: Vec<(Rational, usize)> = v.iter().cloned().zip(classes.iter().copied()).collect();
    k.sort();
    k
}

fn lhs(v: &[Rational], classes: &[usize], width: usize) -> Vec<BigInt> {
    let m = max_of(v).expect("nonempty").clone();
    let exps: Vec<BigInt> = v.iter().map(|x| exp_fixed(&(x - &m))).collect();
    class_mass(&exps, classes, width)
}

/// Compares `softmax(v) X` with `softmax(w) X` and the multisets
/// `{{(v_i, X_i)}}`, `{{(w_i, X_i)}}`. Requires equal maxima and a one-hot
/// `X` with at least two distinct rows.
pub fn softmax_multiset_probe(v: &[Rational], w: &[Rational], x: &[Vec<u8>]) -> Result<ProbeVerdict> {
    let (classes, _) = one_hot_classes(x)?;
    let mut distinct = classes.clone();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(NnError::Precondition("X needs at least two distinct rows".into()));
    }
    probe_unchecked(v, w, x)
}

/// [`softmax_multiset_probe`] without the distinct-rows requirement, for
/// showing what goes wrong when it is dropped.
pub fn probe_unchecked(v: &[Rational], w: &[Rational], x: &[Vec<u8>]) -> Result<ProbeVerdict> {
    if v.is_empty() || v.len() != w.len() || v.len() != x.len() {
        return Err(NnError::Precondition(format!(
            "lengths differ or are zero: |v| = {}, |w| = {}, rows of X = {}",
            v.len(),
            w.len(),
            x.len()
        )));
    }
    if max_of(v) != max_of(w) {
        return Err(NnError::Precondition("max(v) and max(w) differ".into()));
    }
    let (classes, width) = one_hot_classes(x)?;
    let lhs_equal = within(&lhs(v, &classes, width), &lhs(w, &classes, width), &tolerance_fixed());
    let multisets_equal = multiset_key(v, &classes) == multiset_key(w, &classes);
    Ok(ProbeVerdict { lhs_equal, multisets_equal })
}

/// The counterexample for a single-class `X`: `v = (0, 1)` and `w = (1, 1)`
/// share a maximum and average to the same row, with different multisets.
pub fn single_class_counterexample() -> (Vec<Rational>, Vec<Rational>, Vec<Vec<u8>>) {
    let r = |n: i64| Rational::from_integer(n.into());
    (vec![r(0), r(1)], vec![r(1), r(1)], vec![vec![1], vec![1]])
}

/// Restricted growth strings of length `n` with at least `min_blocks` blocks:
/// every one-hot matrix up to a permutation of its columns.
pub fn set_partitions(n: usize, min_blocks: usize) -> Vec<Vec<usize>> {
    fn rec(cur: &mut Vec<usize>, n: usize, blocks: usize, min_blocks: usize, out: &mut Vec<Vec<usize>>) {
        if cur.len() == n {
            if blocks >= min_blocks {
                out.push(cur.clone());
            }
            return;
        }
        for b in 0..=blocks {
            cur.push(b);
            rec(cur, n, blocks.max(b + 1), min_blocks, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if n > 0 {
        rec(&mut Vec::with_capacity(n), n, 0, min_blocks, &mut out);
    }
    out
}

pub fn one_hot(classes: &[usize]) -> Vec<Vec<u8>> {
    let width = classes.iter().max().map_or(0, |m| m + 1);
    classes
        .iter()
        .map(|&c| (0..width).map(|j| (j == c) as u8).collect())
        .collect()
}

/// Exact route for `lhs_equal`. Clearing denominators turns equality of the
/// class masses into `sum e^(v_i + w_k) = sum e^(w_j + v_l)` over
/// `i, j` in the class and all `k, l`; by Lindemann-Weierstrass two such
/// sums of equal length agree iff their exponent multisets agree.
pub fn lhs_equal_exact(v: &[Rational], w: &[Rational], classes: &[usize]) -> bool {
    let width = classes.iter().max().map_or(0, |m| m + 1);
    (0..width).all(|c| {
        let mut a: Vec<Rational> = Vec::new();
        let mut b: Vec<Rational> = Vec::new();
        for (i, _) in classes.iter().enumerate().filter(|(_, &ci)| ci == c) {
            a.extend(w.iter().map(|wk| &v[i] + wk));
            b.extend(v.iter().map(|vl| &w[i] + vl));
        }
        a.sort();
        b.sort();
        a == b
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    /// Ordered `(v, w, X)` cases covered.
    pub cases: u64,
    /// Cases with equal averages but different multisets.
    pub forward_violations: u64,
    /// Cases with equal multisets but different averages.
    pub backward_violations: u64,
    pub partitions: usize,
    /// Pairs whose fixed-point verdict was re-derived with [`lhs_equal_exact`]:
    /// every flagged violation plus random pairs.
    pub exact_checked: u64,
    pub exact_mismatches: u64,
    /// First violation found.
    pub example: Option<String>,
}

impl SweepReport {
    pub fn passed(&self) -> bool {
        self.cases > 0 && self.forward_violations == 0 && self.backward_violations == 0 && self.exact_mismatches == 0
    }
}

fn all_vectors(alphabet: &[Rational], len: usize) -> Vec<Vec<Rational>> {
    let mut out = vec![Vec::new()];
    for _ in 0..len {
        out = out
            .into_iter()
            .flat_map(|v| {
                alphabet.iter().map(move |a| {
                    let mut v = v.clone();
                    v.push(a.clone());
                    v
                })
            })
            .collect();
    }
    out
}

fn show(v: &[Rational]) -> String {
    let parts: Vec<String> = v.iter().map(|x| x.to_string()).collect();
    format!("({})", parts.join(", "))
}

struct Group<'a> {
    avg: Vec<BigInt>,
    members: Vec<&'a Vec<Rational>>,
}

/// Every ordered pair `(v, w)` over `alphabet^len` with equal maxima, for
/// every `len` in `min_len..=max_len` and every one-hot `X` with at least
/// two distinct rows (up to column order).
///
/// Pairs are settled in bulk: vectors are grouped by multiset, each group
/// must share one average, and averages of different groups must be more
/// than the tolerance apart. Flagged pairs and `cross_checks` random pairs
/// are re-derived with the exact exponent-multiset criterion.
pub fn exhaustive_sweep(
    alphabet: &[Rational],
    min_len: usize,
    max_len: usize,
    cross_checks: usize,
    seed: u64,
) -> Result<SweepReport> {
    let tol = tolerance_fixed();
    let mut report = SweepReport {
        cases: 0,
        forward_violations: 0,
        backward_violations: 0,
        partitions: 0,
        exact_checked: 0,
        exact_mismatches: 0,
        example: None,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut alpha = alphabet.to_vec();
    alpha.sort();
    alpha.dedup();
    let exp_cache: HashMap<Rational, BigInt> = alpha
        .iter()
        .flat_map(|m| alpha.iter().filter(move |x| *x <= m).map(move |x| x - m))
        .map(|d| {
            let e = exp_fixed(&d);
            (d, e)
        })
        .collect();
    let lo = min_len.max(2);
    let blocks: usize = (lo..=max_len).map(|l| set_partitions(l, 2).len()).sum::<usize>() * alpha.len();
    let share = cross_checks.div_ceil(blocks.max(1));

    for len in lo..=max_len {
        let vectors = all_vectors(&alpha, len);
        for classes in set_partitions(len, 2) {
            report.partitions += 1;
            let width = classes.iter().max().map_or(0, |m| m + 1);
            for m in &alpha {
                let with_max: Vec<&Vec<Rational>> = vectors.iter().filter(|v| max_of(v) == Some(m)).collect();
                if with_max.is_empty() {
                    continue;
                }
                report.cases += (with_max.len() as u64).pow(2);
                let mut groups: HashMap<Vec<(Rational, usize)>, Group> = HashMap::new();
                for v in &with_max {
                    let exps: Vec<BigInt> = v.iter().map(|x| exp_cache[&(x - m)].clone()).collect();
                    let avg = class_mass(&exps, &classes, width);
                    let g = groups.entry(multiset_key(v, &classes)).or_insert_with(|| Group { avg: avg.clone(), members: Vec::new() });
                    if !within(&g.avg, &avg, &tol) {
                        report.backward_violations += 2 * g.members.len() as u64;
                        report
                            .example
                            .get_or_insert_with(|| format!("same multiset, different averages: {}", show(v)));
                    }
                    g.members.push(v);
                }
                let mut reps: Vec<Group> = groups.into_values().collect();
                reps.sort_by(|a, b| a.avg.cmp(&b.avg));
                for i in 0..reps.len() {
                    for j in i + 1..reps.len() {
                        if &reps[j].avg[0] - &reps[i].avg[0] > tol {
                            break;
                        }
                        if !within(&reps[i].avg, &reps[j].avg, &tol) {
                            continue;
                        }
                        let (v, w) = (reps[i].members[0], reps[j].members[0]);
                        report.forward_violations += 2 * (reps[i].members.len() * reps[j].members.len()) as u64;
                        report.exact_checked += 1;
                        if !lhs_equal_exact(v, w, &classes) {
                            report.exact_mismatches += 1;
                        }
                        report.example.get_or_insert_with(|| {
                            format!(
                                "equal averages, different multisets: v = {}, w = {}, X classes {classes:?}",
                                show(v),
                                show(w)
                            )
                        });
                    }
                }

                let x = one_hot(&classes);
                for _ in 0..share {
                    let v = with_max[rng.gen_range(0..with_max.len())];
                    let w = with_max[rng.gen_range(0..with_max.len())];
                    let verdict = softmax_multiset_probe(v, w, &x)?;
                    report.exact_checked += 1;
                    if verdict.lhs_equal != lhs_equal_exact(v, w, &classes) {
                        report.exact_mismatches += 1;
                    }
                }
            }
        }
    }
    Ok(report)
}

/// `0, 1/2, 1, 3/2, 2`.
pub fn half_step_alphabet() -> Vec<Rational> {
    (0..=4).map(|i| Rational::new(i.into(), 2.into())).collect()
}

/// Fixed-point value as f64, for reporting.
pub fn fixed_to_f64(x: &BigInt) -> f64 {
    let (sign, mag) = (x.sign(), x.magnitude());
    let shift = mag.bits().saturating_sub(60);
    let top = (mag >> shift).to_f64().unwrap_or(f64::INFINITY);
    let v = top * 2f64.powi(shift as i32 - PRECISION_BITS as i32);
    if sign == Sign::Minus {
        -v
    } else {
        v
    }
}
