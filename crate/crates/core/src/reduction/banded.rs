//! Banded LU with partial pivoting, and a bordered solve on top of it.
//!
//! Storage follows the LAPACK `gbtrf` convention: column-major band with
//! `kl` extra rows on top to hold the fill-in from row interchanges, so
//! `A[i][j]` lives at `ab[(kl + ku + i − j) + j·ldab]`.

#![allow(clippy::needless_range_loop)]

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct BandMatrix {
    n: usize,
    kl: usize,
    ku: usize,
    ldab: usize,
    ab: Vec<f64>,
}

impl BandMatrix {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let ldab = 2 * kl + ku + 1;
        Self {
            n,
            kl,
            ku,
            ldab,
            ab: vec![0.0; ldab * n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn slot(&self, i: usize, j: usize) -> usize {
        debug_assert!(i + self.ku >= j && j + self.kl >= i);
        (self.kl + self.ku + i - j) + j * self.ldab
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let s = self.slot(i, j);
        self.ab[s] += v;
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        if i + self.ku < j || j + self.kl < i {
            0.0
        } else {
            self.ab[self.slot(i, j)]
        }
    }

    /// `y = A x`.
    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        let kv = self.kl + self.ku;
        y.iter_mut().for_each(|v| *v = 0.0);
        for j in 0..self.n {
            let xj = x[j];
            if xj == 0.0 {
                continue;
            }
            let lo = j.saturating_sub(self.ku);
            let hi = (j + self.kl).min(self.n - 1);
            let col = j * self.ldab;
            for i in lo..=hi {
                y[i] += self.ab[col + kv + i - j] * xj;
            }
        }
    }

    /// Max-abs row sum.
    pub fn norm_inf(&self) -> f64 {
        let mut rows = vec![0.0f64; self.n];
        let kv = self.kl + self.ku;
        for j in 0..self.n {
            let lo = j.saturating_sub(self.ku);
            let hi = (j + self.kl).min(self.n - 1);
            for (i, row) in rows.iter_mut().enumerate().take(hi + 1).skip(lo) {
                *row += self.ab[j * self.ldab + kv + i - j].abs();
            }
        }
        rows.into_iter().fold(0.0, f64::max)
    }

    /// Factor in place. Fails on an exactly zero pivot.
    pub fn factor(mut self) -> Result<BandLu> {
        let (n, kl, ku, ldab) = (self.n, self.kl, self.ku, self.ldab);
        let kv = kl + ku;
        let mut ipiv = vec![0usize; n];
        let mut ju = 0usize;
        let (mut pmin, mut pmax) = (f64::INFINITY, 0.0f64);
        for j in 0..n {
            let km = kl.min(n - 1 - j);
            let col = j * ldab;
            let mut p = 0;
            let mut best = self.ab[col + kv].abs();
            for i in 1..=km {
                let v = self.ab[col + kv + i].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            ipiv[j] = j + p;
            if best == 0.0 || !best.is_finite() {
                return Err(Error::Solver {
                    message: format!("zero pivot in column {j} of the banded factorisation"),
                    condition: f64::INFINITY,
                });
            }
            pmin = pmin.min(best);
            pmax = pmax.max(best);
            ju = ju.max((j + ku + p).min(n - 1));
            if p != 0 {
                for c in j..=ju {
                    let a = kv + j - c + c * ldab;
                    self.ab.swap(a, a + p);
                }
            }
            if km > 0 {
                let inv = 1.0 / self.ab[col + kv];
                for i in 1..=km {
                    self.ab[col + kv + i] *= inv;
                }
                for c in j + 1..=ju {
                    let ccol = c * ldab;
                    let u = self.ab[ccol + kv + j - c];
                    if u == 0.0 {
                        continue;
                    }
                    for i in 1..=km {
                        let l = self.ab[col + kv + i];
                        self.ab[ccol + kv + j + i - c] -= l * u;
                    }
                }
            }
        }
        Ok(BandLu {
            m: self,
            ipiv,
            pivot_ratio: pmax / pmin,
        })
    }
}

#[derive(Debug, Clone)]
pub struct BandLu {
    m: BandMatrix,
    ipiv: Vec<usize>,
    /// `max |u_jj| / min |u_jj|`, a cheap lower bound on the condition number.
    pub pivot_ratio: f64,
}

impl BandLu {
    pub fn dim(&self) -> usize {
        self.m.n
    }

    pub fn solve_in_place(&self, b: &mut [f64]) {
        let BandMatrix { n, kl, ku, ldab, .. } = self.m;
        let kv = kl + ku;
        let ab = &self.m.ab;
        for j in 0..n.saturating_sub(1) {
            let lm = kl.min(n - 1 - j);
            let l = self.ipiv[j];
            if l != j {
                b.swap(l, j);
            }
            let bj = b[j];
            if bj != 0.0 {
                let col = j * ldab;
                for i in 1..=lm {
                    b[j + i] -= ab[col + kv + i] * bj;
                }
            }
        }
        for j in (0..n).rev() {
            let col = j * ldab;
            b[j] /= ab[col + kv];
            let t = b[j];
            if t != 0.0 {
                for i in j.saturating_sub(kv)..j {
                    b[i] -= ab[col + kv + i - j] * t;
                }
            }
        }
    }
}

/// Factorisation of the bordered system `[[A, B], [Bᵀ, 0]]`, with `A` banded
/// and `B` a few dense columns, by block elimination on the Schur complement
/// `S = Bᵀ A⁻¹ B`.
#[derive(Debug, Clone)]
pub struct BorderedLu {
    a: BandMatrix,
    lu: BandLu,
    border: Vec<Vec<f64>>,
    ainv_b: Vec<Vec<f64>>,
    schur: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    pub condition: f64,
}

impl BorderedLu {
    pub fn new(a: BandMatrix, border: Vec<Vec<f64>>) -> Result<Self> {
        let n = a.dim();
        if border.iter().any(|c| c.len() != n) {
            return Err(Error::invalid("border columns must match the matrix size"));
        }
        let lu = a.clone().factor()?;
        let ainv_b: Vec<Vec<f64>> = border
            .iter()
            .map(|c| {
                let mut x = c.clone();
                lu.solve_in_place(&mut x);
                x
            })
            .collect();
        let m = border.len();
        let s = DMatrix::from_fn(m, m, |i, j| dot(&border[i], &ainv_b[j]));
        let sv = s.clone().singular_values();
        let schur_cond = if m == 0 { 1.0 } else { sv.max() / sv.min().max(f64::MIN_POSITIVE) };
        let condition = lu.pivot_ratio.max(schur_cond);
        if m > 0 && (sv.min().is_nan() || sv.min() <= 1e-14 * sv.max()) {
            return Err(Error::Solver {
                message: "constraint block of the bordered system is singular".into(),
                condition,
            });
        }
        Ok(Self {
            a,
            lu,
            border,
            ainv_b,
            schur: s.lu(),
            condition,
        })
    }

    fn solve_once(&self, f: &[f64], g: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let mut y = f.to_vec();
        self.lu.solve_in_place(&mut y);
        let m = self.border.len();
        if m == 0 {
            return (y, Vec::new());
        }
        let rhs = DVector::from_fn(m, |i, _| dot(&self.border[i], &y) - g[i]);
        let c = self.schur.solve(&rhs).expect("Schur complement checked nonsingular");
        for (k, col) in self.ainv_b.iter().enumerate() {
            let ck = c[k];
            for (yi, xi) in y.iter_mut().zip(col) {
                *yi -= xi * ck;
            }
        }
        (y, c.iter().copied().collect())
    }

    /// Solves `A x + B c = f`, `Bᵀ x = g`, with two steps of iterative
    /// refinement.
    pub fn solve(&self, f: &[f64], g: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (mut x, mut c) = self.solve_once(f, g);
        let n = x.len();
        let mut ax = vec![0.0; n];
        for _ in 0..2 {
            self.a.matvec(&x, &mut ax);
            let mut r1: Vec<f64> = f.iter().zip(&ax).map(|(a, b)| a - b).collect();
            for (k, col) in self.border.iter().enumerate() {
                for (ri, bi) in r1.iter_mut().zip(col) {
                    *ri -= bi * c[k];
                }
            }
            let r2: Vec<f64> = self.border.iter().zip(g).map(|(col, gi)| gi - dot(col, &x)).collect();
            let (dx, dc) = self.solve_once(&r1, &r2);
            x.iter_mut().zip(&dx).for_each(|(a, b)| *a += b);
            c.iter_mut().zip(&dc).for_each(|(a, b)| *a += b);
        }
        (x, c)
    }

    pub fn matrix(&self) -> &BandMatrix {
        &self.a
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}
