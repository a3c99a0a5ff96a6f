//! Exact rational matrices for random-walk algebra, a small dense real
//! matrix type and a cyclic Jacobi eigensolver.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};
use crate::graph::Graph;

/// Arbitrary-precision fraction, always kept in lowest terms.
pub type Rational = num_rational::BigRational;

pub const DEFAULT_EIG_TOL: f64 = 1e-13;
pub const MAX_JACOBI_SWEEPS: usize = 100;

/// Dense row-major matrix of exact rationals.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RationalMatrix {
    rows: usize,
    cols: usize,
    data: Vec<Rational>,
}

impl RationalMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        RationalMatrix {
            rows,
            cols,
            data: vec![Rational::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = Rational::one();
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> &Rational {
        &self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, x: Rational) {
        self.data[i * self.cols + j] = x;
    }

    pub fn row(&self, i: usize) -> &[Rational] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn mul(&self, other: &RationalMatrix) -> Result<RationalMatrix> {
        if self.cols != other.rows {
            return Err(Error::Shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a.is_zero() {
                    continue;
                }
                for j in 0..other.cols {
                    let b = other.get(k, j);
                    if !b.is_zero() {
                        out.data[i * other.cols + j] += a * b;
                    }
                }
            }
        }
        Ok(out)
    }

    pub fn row_sums(&self) -> Vec<Rational> {
        (0..self.rows)
            .map(|i| self.row(i).iter().fold(Rational::zero(), |s, x| s + x))
            .collect()
    }

    /// Nonnegative entries and every row summing to exactly one.
    pub fn is_row_stochastic(&self) -> bool {
        self.data.iter().all(|x| !x.is_negative())
            && self.row_sums().iter().all(|s| s.is_one())
    }

    pub fn diagonal(&self) -> Vec<Rational> {
        (0..self.rows.min(self.cols))
            .map(|i| self.get(i, i).clone())
            .collect()
    }

    pub fn to_real(&self) -> RealMatrix {
        RealMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(rational_to_f64).collect(),
        }
    }

    fn require_square(&self) -> Result<()> {
        if self.rows == self.cols {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "expected a square matrix, got {}x{}",
                self.rows, self.cols
            )))
        }
    }

    /// `[I, M, M^2, ..., M^count-1]`, computed by repeated multiplication.
    ///
    /// Entries are rescaled to a common denominator first so the products run
    /// over big integers without per-entry gcd reductions.
    pub fn powers(&self, count: usize) -> Result<Vec<RationalMatrix>> {
        self.require_square()?;
        let n = self.rows;
        let denom = self
            .data
            .iter()
            .fold(BigInt::one(), |l, x| l.lcm(x.denom()));
        let base: Vec<BigInt> = self
            .data
            .iter()
            .map(|x| x.numer() * (&denom / x.denom()))
            .collect();
        let mut out = Vec::with_capacity(count);
        let mut cur: Vec<BigInt> = (0..n * n)
            .map(|idx| {
                if idx / n == idx % n {
                    BigInt::one()
                } else {
                    BigInt::zero()
                }
            })
            .collect();
        let mut scale = BigInt::one();
        for t in 0..count {
            if t > 0 {
                cur = int_mul(&cur, &base, n);
                scale *= &denom;
            }
            out.push(RationalMatrix {
                rows: n,
                cols: n,
                data: cur
                    .iter()
                    .map(|x| Rational::new(x.clone(), scale.clone()))
                    .collect(),
            });
        }
        Ok(out)
    }
}

fn int_mul(a: &[BigInt], b: &[BigInt], n: usize) -> Vec<BigInt> {
    let mut out = vec![BigInt::zero(); n * n];
    for i in 0..n {
        for k in 0..n {
            let x = &a[i * n + k];
            if x.is_zero() {
                continue;
            }
            for j in 0..n {
                let y = &b[k * n + j];
                if !y.is_zero() {
                    out[i * n + j] += x * y;
                }
            }
        }
    }
    out
}

pub fn rational_to_f64(x: &Rational) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}

/// `D^-1 A` with exact entries. An isolated node gets the indicator of
/// itself as its row (the walk stays put), keeping every row stochastic.
pub fn random_walk_matrix(g: &Graph) -> Result<RationalMatrix> {
    g.require_undirected()?;
    let n = g.n();
    let mut r = RationalMatrix::zeros(n, n);
    for v in 0..n {
        let d = g.degree(v);
        if d == 0 {
            r.set(v, v, Rational::one());
            continue;
        }
        let p = Rational::new(BigInt::one(), BigInt::from(d));
        for &w in g.neighbors(v) {
            r.set(v, w, p.clone());
        }
    }
    Ok(r)
}

/// Exact diagonal of `m^t`; all ones for `t = 0`.
pub fn matrix_power_diag(m: &RationalMatrix, t: usize) -> Result<Vec<Rational>> {
    let powers = m.powers(t + 1)?;
    Ok(powers[t].diagonal())
}

/// Dense row-major real matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct RealMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl RealMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        RealMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Shape("ragged rows".into()));
        }
        Ok(RealMatrix {
            rows: rows.len(),
            cols,
            data: rows.concat(),
        })
    }

    pub fn from_diag(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, &x) in d.iter().enumerate() {
            m.set(i, i, x);
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, x: f64) {
        self.data[i * self.cols + j] = x;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn transpose(&self) -> RealMatrix {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    pub fn mul(&self, other: &RealMatrix) -> Result<RealMatrix> {
        if self.cols != other.rows {
            return Err(Error::Shape(format!(
                "cannot multiply {}x{} by {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out.data[i * other.cols + j] += a * other.get(k, j);
                }
            }
        }
        Ok(out)
    }

    pub fn max_abs_diff(&self, other: &RealMatrix) -> f64 {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self.get(i, i)).sum()
    }

    fn max_asymmetry(&self) -> f64 {
        let mut worst = 0.0f64;
        for i in 0..self.rows {
            for j in i + 1..self.cols {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }
}

/// `I - D^-1/2 A D^-1/2`; isolated nodes contribute identity rows.
pub fn normalized_laplacian(g: &Graph) -> Result<RealMatrix> {
    g.require_undirected()?;
    let n = g.n();
    let mut l = RealMatrix::identity(n);
    let inv_sqrt: Vec<f64> = g
        .degrees()
        .iter()
        .map(|&d| if d == 0 { 0.0 } else { 1.0 / (d as f64).sqrt() })
        .collect();
    for (u, v) in g.edges() {
        let x = -inv_sqrt[u] * inv_sqrt[v];
        l.set(u, v, x);
        l.set(v, u, x);
    }
    Ok(l)
}

/// Eigenpairs of a real symmetric matrix; eigenvalues ascending, eigenvectors
/// as orthonormal columns with their first non-negligible entry positive.
#[derive(Clone, Debug)]
pub struct EigenDecomposition {
    pub eigenvalues: Vec<f64>,
    pub eigenvectors: RealMatrix,
    pub sweeps: usize,
}

impl EigenDecomposition {
    /// `V diag(f(lambda)) V^T`.
    pub fn spectral_function(&self, f: impl Fn(f64) -> f64) -> RealMatrix {
        let n = self.eigenvalues.len();
        let fl: Vec<f64> = self.eigenvalues.iter().map(|&l| f(l)).collect();
        let v = &self.eigenvectors;
        let mut out = RealMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let s: f64 = (0..n).map(|k| v.get(i, k) * fl[k] * v.get(j, k)).sum();
                out.set(i, j, s);
            }
        }
        out
    }

    pub fn reconstruct(&self) -> RealMatrix {
        self.spectral_function(|l| l)
    }
}

/// Entries below this magnitude are skipped when fixing eigenvector signs.
const SIGN_EPS: f64 = 1e-10;

/// Cyclic Jacobi rotations, row-major over the upper triangle, until the
/// off-diagonal Frobenius norm drops to `tol`.
pub fn symmetric_eig(a: &RealMatrix, tol: f64) -> Result<EigenDecomposition> {
    if a.rows != a.cols {
        return Err(Error::Shape(format!(
            "expected a square matrix, got {}x{}",
            a.rows, a.cols
        )));
    }
    let asym = a.max_asymmetry();
    if asym > 1e-12 {
        return Err(Error::NonSymmetric(asym));
    }
    let n = a.rows;
    let mut m = a.clone();
    let mut v = RealMatrix::identity(n);
    let off = |m: &RealMatrix| {
        let mut s = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                s += 2.0 * m.get(i, j) * m.get(i, j);
            }
        }
        s.sqrt()
    };
    let mut sweeps = 0;
    while off(&m) > tol {
        if sweeps == MAX_JACOBI_SWEEPS {
            return Err(Error::NoConvergence {
                sweeps,
                residual: off(&m),
            });
        }
        sweeps += 1;
        for p in 0..n {
            for q in p + 1..n {
                rotate(&mut m, &mut v, p, q);
            }
        }
    }

    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&i, &j| m.get(i, i).total_cmp(&m.get(j, j)));
    let eigenvalues: Vec<f64> = idx.iter().map(|&i| m.get(i, i)).collect();
    let mut vecs = RealMatrix::zeros(n, n);
    for (col, &src) in idx.iter().enumerate() {
        let flip = v
            .column(src)
            .iter()
            .find(|x| x.abs() > SIGN_EPS)
            .is_some_and(|&x| x < 0.0);
        for i in 0..n {
            let x = v.get(i, src);
            vecs.set(i, col, if flip { -x } else { x });
        }
    }
    Ok(EigenDecomposition {
        eigenvalues,
        eigenvectors: vecs,
        sweeps,
    })
}

fn rotate(m: &mut RealMatrix, v: &mut RealMatrix, p: usize, q: usize) {
    let n = m.rows;
    let apq = m.get(p, q);
    if apq == 0.0 {
        return;
    }
    let app = m.get(p, p);
    let aqq = m.get(q, q);
    let theta = (aqq - app) / (2.0 * apq);
    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
    let t = if theta == 0.0 { 1.0 } else { t };
    let c = 1.0 / (t * t + 1.0).sqrt();
    let s = t * c;
    for k in 0..n {
        let mkp = m.get(k, p);
        let mkq = m.get(k, q);
        m.set(k, p, c * mkp - s * mkq);
        m.set(k, q, s * mkp + c * mkq);
    }
    for k in 0..n {
        let mpk = m.get(p, k);
        let mqk = m.get(q, k);
        m.set(p, k, c * mpk - s * mqk);
        m.set(q, k, s * mpk + c * mqk);
    }
    m.set(p, q, 0.0);
    m.set(q, p, 0.0);
    for k in 0..n {
        let vkp = v.get(k, p);
        let vkq = v.get(k, q);
        v.set(k, p, c * vkp - s * vkq);
        v.set(k, q, s * vkp + c * vkq);
    }
}
