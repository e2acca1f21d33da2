//! Exact linear algebra over ℚ: incremental spans for independence tests and
//! small dense solves.

use std::collections::BTreeMap;

use num_traits::{One, Zero};

use crate::poly::{Polynomial, Rational};

/// Sparse vector over an ordered key set.
pub type SparseVec<K> = BTreeMap<K, Rational>;

#[derive(Debug, Clone)]
struct EchelonRow<K> {
    pivot: K,
    values: SparseVec<K>,
    /// Expression of this row in terms of the inserted generators.
    combo: Vec<Rational>,
}

/// Span of a growing set of sparse vectors, kept in echelon form.
///
/// Each accepted generator gets an index; [`SparseSpan::express`] writes a
/// vector as a combination of the accepted generators.
#[derive(Debug, Clone)]
pub struct SparseSpan<K: Ord + Clone> {
    rows: Vec<EchelonRow<K>>,
    generators: usize,
}

impl<K: Ord + Clone> Default for SparseSpan<K> {
    fn default() -> Self {
        Self { rows: Vec::new(), generators: 0 }
    }
}

fn axpy<K: Ord + Clone>(y: &mut SparseVec<K>, a: &Rational, x: &SparseVec<K>) {
    for (k, v) in x {
        let e = y.entry(k.clone()).or_insert_with(Rational::zero);
        *e += a * v;
        if e.is_zero() {
            y.remove(k);
        }
    }
}

impl<K: Ord + Clone> SparseSpan<K> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    /// Reduces `v` against the echelon rows; returns the residual and the
    /// combination (over generators) that was subtracted.
    fn reduce(&self, v: &SparseVec<K>) -> (SparseVec<K>, Vec<Rational>) {
        let mut r = v.clone();
        let mut combo = vec![Rational::zero(); self.generators];
        for row in &self.rows {
            if let Some(c) = r.get(&row.pivot).cloned() {
                let f = -c.clone() / row.values[&row.pivot].clone();
                axpy(&mut r, &f, &row.values);
                for (a, b) in combo.iter_mut().zip(&row.combo) {
                    *a -= &f * b;
                }
            }
        }
        (r, combo)
    }

    /// Adds `v` if it is independent of the current span.
    pub fn insert(&mut self, v: &SparseVec<K>) -> bool {
        let (residual, mut combo) = self.reduce(v);
        let Some(pivot) = residual.keys().next().cloned() else {
            return false;
        };
        // residual = v - Σ combo_i g_i
        for c in combo.iter_mut() {
            *c = -c.clone();
        }
        combo.push(Rational::one());
        for row in &mut self.rows {
            row.combo.push(Rational::zero());
        }
        self.generators += 1;
        self.rows.push(EchelonRow { pivot, values: residual, combo });
        true
    }

    pub fn contains(&self, v: &SparseVec<K>) -> bool {
        self.reduce(v).0.is_empty()
    }

    /// Coefficients `c` with `v = Σ c_i g_i`, if `v` lies in the span.
    pub fn express(&self, v: &SparseVec<K>) -> Option<Vec<Rational>> {
        let (residual, combo) = self.reduce(v);
        residual.is_empty().then_some(combo)
    }
}

/// Rank of a dense rational matrix.
pub fn rank(rows: &[Vec<Rational>]) -> usize {
    let mut span: SparseSpan<usize> = SparseSpan::new();
    for r in rows {
        let v: SparseVec<usize> =
            r.iter().enumerate().filter(|(_, x)| !x.is_zero()).map(|(i, x)| (i, x.clone())).collect();
        span.insert(&v);
    }
    span.dim()
}

/// Solves the square system `a · x = b` by Gauss–Jordan elimination.
pub fn solve(a: &[Vec<Rational>], b: &[Rational]) -> Option<Vec<Rational>> {
    let n = a.len();
    let mut m: Vec<Vec<Rational>> = a
        .iter()
        .zip(b)
        .map(|(row, bi)| {
            let mut r = row.clone();
            r.push(bi.clone());
            r
        })
        .collect();
    for col in 0..n {
        let piv = (col..n).find(|&r| !m[r][col].is_zero())?;
        m.swap(col, piv);
        let p = m[col][col].clone();
        for v in m[col].iter_mut() {
            *v /= &p;
        }
        for r in 0..n {
            if r != col && !m[r][col].is_zero() {
                let f = m[r][col].clone();
                for c in col..=n {
                    let delta = &f * &m[col][c];
                    m[r][c] -= delta;
                }
            }
        }
    }
    Some(m.into_iter().map(|mut r| r.pop().unwrap()).collect())
}

/// Inverse of a square rational matrix.
pub fn inverse(a: &[Vec<Rational>]) -> Option<Vec<Vec<Rational>>> {
    let n = a.len();
    let mut cols = Vec::with_capacity(n);
    for j in 0..n {
        let e: Vec<Rational> =
            (0..n).map(|i| if i == j { Rational::one() } else { Rational::zero() }).collect();
        cols.push(solve(a, &e)?);
    }
    Some((0..n).map(|i| (0..n).map(|j| cols[j][i].clone()).collect()).collect())
}

/// Determinant of a square polynomial matrix by cofactor expansion
/// (sizes here never exceed the ambient dimension, at most 8).
pub fn poly_det(m: &[Vec<Polynomial>]) -> Polynomial {
    let n = m.len();
    assert!(n > 0 && m.iter().all(|r| r.len() == n), "square matrix required");
    let ctx = m[0][0].context().clone();
    fn rec(m: &[Vec<Polynomial>], rows: &[usize], cols: &mut Vec<usize>, ctx: &crate::poly::Context) -> Polynomial {
        if rows.is_empty() {
            return Polynomial::one(ctx);
        }
        let r = rows[0];
        let mut acc = Polynomial::zero(ctx);
        let avail: Vec<usize> = cols.clone();
        for (k, &c) in avail.iter().enumerate() {
            if m[r][c].is_zero() {
                continue;
            }
            cols.remove(k);
            let minor = rec(m, &rows[1..], cols, ctx);
            cols.insert(k, c);
            let term = &m[r][c] * &minor;
            acc = if k % 2 == 0 { &acc + &term } else { &acc - &term };
        }
        acc
    }
    let rows: Vec<usize> = (0..n).collect();
    let mut cols: Vec<usize> = (0..n).collect();
    rec(m, &rows, &mut cols, &ctx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::{int, rat, Variables};

    #[test]
    fn span_expresses_combinations() {
        let mut s: SparseSpan<usize> = SparseSpan::new();
        let a: SparseVec<usize> = [(0, int(1)), (1, int(2))].into_iter().collect();
        let b: SparseVec<usize> = [(1, int(1)), (2, int(-1))].into_iter().collect();
        assert!(s.insert(&a));
        assert!(s.insert(&b));
        let c: SparseVec<usize> = [(0, int(2)), (1, int(7)), (2, int(-3))].into_iter().collect();
        assert!(!s.insert(&c));
        assert_eq!(s.express(&c).unwrap(), vec![int(2), int(3)]);
        let d: SparseVec<usize> = [(3, int(1))].into_iter().collect();
        assert!(s.express(&d).is_none());
    }

    #[test]
    fn dense_solve_and_rank() {
        let a = vec![vec![int(2), int(1)], vec![int(1), int(3)]];
        let x = solve(&a, &[int(3), int(5)]).unwrap();
        assert_eq!(x, vec![rat(4, 5), rat(7, 5)]);
        assert_eq!(rank(&[vec![int(1), int(2)], vec![int(2), int(4)]]), 1);
        assert!(solve(&[vec![int(1), int(2)], vec![int(2), int(4)]], &[int(1), int(1)]).is_none());
        let inv = inverse(&a).unwrap();
        assert_eq!(inv[0][0], rat(3, 5));
    }

    #[test]
    fn polynomial_determinant() {
        let c = Variables::indexed("x", vec![1, 2]);
        let x1 = Polynomial::var(&c, 0);
        let one = Polynomial::one(&c);
        let zero = Polynomial::zero(&c);
        // columns ∂1 and x1 ∂2
        let m = vec![vec![one.clone(), zero.clone()], vec![zero, x1.clone()]];
        assert_eq!(poly_det(&m), x1);
    }
}
