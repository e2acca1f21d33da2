//! Commutators, the Lie algebra generated by a system, and its graded basis.

use std::fmt;

use serde::Serialize;

use crate::dsl::SystemSpec;
use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::linalg::{rank, SparseSpan};
use crate::poly::Rational;

/// Entries in `{0, 1, …, m}`; `0` is the drift.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(transparent)]
pub struct MultiIndex(pub Vec<usize>);

impl MultiIndex {
    pub fn new(entries: Vec<usize>) -> Self {
        MultiIndex(entries)
    }

    pub fn entries(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `|I| = Σ p_{i_j}` with `p₀ = 2` and `p_i = 1` otherwise.
    pub fn weight(&self) -> u32 {
        self.0.iter().map(|&i| generator_weight(i)).sum()
    }

    pub fn extended(&self, j: usize) -> Self {
        let mut e = self.0.clone();
        e.push(j);
        MultiIndex(e)
    }
}

impl fmt::Display for MultiIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: Vec<String> = self.0.iter().map(|i| i.to_string()).collect();
        write!(f, "({})", s.join(","))
    }
}

pub fn generator_weight(i: usize) -> u32 {
    if i == 0 {
        2
    } else {
        1
    }
}

/// `[X, Y] = XY − YX`.
pub fn lie_bracket(x: &VectorField, y: &VectorField) -> Result<VectorField> {
    x.bracket(y)
}

/// Left-nested bracket `[[[X_{i₁}, X_{i₂}], X_{i₃}], …]`, checked to be
/// homogeneous of degree `|I|`.
pub fn nested_bracket(spec: &SystemSpec, index: &MultiIndex) -> Result<VectorField> {
    let Some((&first, rest)) = index.entries().split_first() else {
        return Err(Error::Index("empty multi-index".into()));
    };
    let mut acc = spec.generator(first)?.clone();
    for &j in rest {
        acc = acc.bracket(spec.generator(j)?)?;
    }
    if !acc.is_zero() && !acc.degree_violations(index.weight()).is_empty() {
        return Err(Error::InvalidSystem(format!("bracket X_{index} is not homogeneous of degree {}", index.weight())));
    }
    Ok(acc)
}

fn generator_indices(spec: &SystemSpec) -> Vec<usize> {
    let start = if spec.drift().is_some() { 0 } else { 1 };
    (start..=spec.m()).collect()
}

/// All nonzero left-nested brackets with `|I| ≤ max_weight`, ordered by
/// weight and then lexicographically.
pub fn nested_brackets_upto(spec: &SystemSpec, max_weight: u32) -> Result<Vec<(MultiIndex, VectorField)>> {
    let gens = generator_indices(spec);
    // by_weight[w] holds the nonzero brackets of weight w
    let mut by_weight: Vec<Vec<(MultiIndex, VectorField)>> = vec![Vec::new(); max_weight as usize + 1];
    for &g in &gens {
        let w = generator_weight(g);
        if w <= max_weight {
            let f = spec.generator(g)?.clone();
            if !f.is_zero() {
                by_weight[w as usize].push((MultiIndex::new(vec![g]), f));
            }
        }
    }
    for w in 1..=max_weight {
        let level = by_weight[w as usize].clone();
        for (idx, f) in &level {
            for &g in &gens {
                let nw = w + generator_weight(g);
                if nw > max_weight {
                    continue;
                }
                let b = f.bracket(spec.generator(g)?)?;
                if b.is_zero() {
                    continue;
                }
                let ni = idx.extended(g);
                if !b.degree_violations(nw).is_empty() {
                    return Err(Error::InvalidSystem(format!("bracket X_{ni} is not homogeneous")));
                }
                by_weight[nw as usize].push((ni, b));
            }
        }
        by_weight[w as usize].sort_by(|a, b| a.0.cmp(&b.0));
    }
    Ok(by_weight.into_iter().flatten().collect())
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BasisElement {
    pub index: MultiIndex,
    pub weight: u32,
    pub field: VectorField,
}

/// Graded basis of `Lie(X)` made of left-nested brackets.
#[derive(Debug, Clone)]
pub struct LieBasis {
    pub elements: Vec<BasisElement>,
    /// `N = dim Lie(X)`.
    pub dim: usize,
    /// Largest bracket weight among the basis elements.
    pub step: u32,
    /// Homogeneous dimension `Σσ_j`.
    pub q: u32,
    /// `N − n`.
    pub p: usize,
    span: SparseSpan<(usize, crate::poly::Monomial)>,
}

impl LieBasis {
    /// Coordinates of `v` in the basis, if `v ∈ Lie(X)`.
    pub fn express(&self, v: &VectorField) -> Option<Vec<Rational>> {
        self.span.express(&v.sparse())
    }

    pub fn weights(&self) -> Vec<u32> {
        self.elements.iter().map(|e| e.weight).collect()
    }

    pub fn fields(&self) -> Vec<&VectorField> {
        self.elements.iter().map(|e| &e.field).collect()
    }
}

/// Breadth-first bracket closure up to weight `σ_n` with exact elimination.
pub fn lie_basis(spec: &SystemSpec) -> Result<LieBasis> {
    let top = *spec.sigma().last().unwrap();
    let all = nested_brackets_upto(spec, top)?;
    let mut span = SparseSpan::new();
    let mut elements = Vec::new();
    for (index, field) in all {
        if span.insert(&field.sparse()) {
            elements.push(BasisElement { weight: index.weight(), index, field });
        }
    }
    // Brackets of weight above σ_n must vanish (negative homogeneity degree).
    for e in &elements {
        for g in generator_indices(spec) {
            if e.weight + generator_weight(g) > top {
                let b = e.field.bracket(spec.generator(g)?)?;
                if !b.is_zero() {
                    return Err(Error::Inconsistent(format!(
                        "bracket of weight {} > σ_n does not vanish",
                        e.weight + generator_weight(g)
                    )));
                }
            }
        }
    }
    let dim = elements.len();
    let step = elements.iter().map(|e| e.weight).max().unwrap_or(0);
    Ok(LieBasis { elements, dim, step, q: spec.q(), p: dim.saturating_sub(spec.n()), span })
}

/// Rank over ℚ of the basis fields evaluated at `point`.
pub fn hormander_rank(spec: &SystemSpec, basis: &LieBasis, point: &[Rational]) -> Result<usize> {
    if point.len() != spec.n() {
        return Err(Error::Arity { expected: spec.n(), got: point.len() });
    }
    let rows = basis.elements.iter().map(|e| e.field.eval_rational(point)).collect::<Result<Vec<_>>>()?;
    Ok(rank(&rows))
}

/// Checks the structural hypotheses: homogeneity, Hörmander rank `n` at the
/// origin and `N > n`.
pub fn check_admissible(spec: &SystemSpec, basis: &LieBasis) -> Result<()> {
    let rep = crate::dsl::validate_homogeneity(spec);
    if !rep.ok {
        return Err(Error::InvalidSystem("fields are not δ_λ-homogeneous of the required degree".into()));
    }
    if !rep.linearly_independent {
        return Err(Error::InvalidSystem("fields X₁..X_m are linearly dependent".into()));
    }
    let zero = vec![Rational::from_integer(0.into()); spec.n()];
    let r = hormander_rank(spec, basis, &zero)?;
    if r != spec.n() {
        return Err(Error::InvalidSystem(format!("Hörmander rank at 0 is {r} < n = {}", spec.n())));
    }
    if basis.dim <= spec.n() {
        return Err(Error::InvalidSystem(format!("dim Lie(X) = {} is not larger than n = {}", basis.dim, spec.n())));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsl::parse_system;
    use crate::poly::{int, rat, Context, Polynomial, Variables};
    use proptest::prelude::*;

    fn sec5(n: usize) -> SystemSpec {
        let mut x1 = vec!["1".to_string()];
        x1.resize(n, "0".into());
        let mut x2 = vec!["0".to_string()];
        for i in 1..n {
            x2.push(format!("x{i}"));
        }
        let a: Vec<&str> = x1.iter().map(String::as_str).collect();
        let b: Vec<&str> = x2.iter().map(String::as_str).collect();
        SystemSpec::from_strings((1..=n as u32).collect(), &[&a, &b], None).unwrap()
    }

    #[test]
    fn grushin_brackets() {
        let g1 = SystemSpec::grushin(1);
        let b = lie_bracket(g1.field(0), g1.field(1)).unwrap();
        assert_eq!(b.to_string(), "(0, 1)");
        let g2 = SystemSpec::grushin(2);
        let b = lie_bracket(g2.field(0), g2.field(1)).unwrap();
        assert_eq!(b.to_string(), "(0, 2*x1)");
        assert!(lie_bracket(g2.field(1), g2.field(1)).unwrap().is_zero());
        let nb = nested_bracket(&g2, &MultiIndex::new(vec![1, 2, 1])).unwrap();
        assert_eq!(nb.to_string(), "(0, -2)");
        assert_eq!(nested_bracket(&g2, &MultiIndex::new(vec![1])).unwrap(), *g2.field(0));
        assert!(nested_bracket(&g2, &MultiIndex::new(vec![3])).is_err());
        assert!(nested_bracket(&g2, &MultiIndex::new(vec![0, 1])).is_err());
    }

    #[test]
    fn sec5_bracket() {
        let s = sec5(3);
        assert_eq!(nested_bracket(&s, &MultiIndex::new(vec![1, 2])).unwrap().to_string(), "(0, 1, 0)");
    }

    #[test]
    fn basis_dimensions() {
        for k in 1..=3u32 {
            let s = SystemSpec::grushin(k);
            let b = lie_basis(&s).unwrap();
            assert_eq!((b.dim, b.step, b.q, b.p), (k as usize + 2, k + 1, k + 2, k as usize));
            check_admissible(&s, &b).unwrap();
        }
        for n in 3..=4usize {
            let b = lie_basis(&sec5(n)).unwrap();
            assert_eq!(b.q as usize, n * (n + 1) / 2);
            assert_eq!(b.dim, n + 1);
        }
    }

    #[test]
    fn rank_examples() {
        let s = SystemSpec::grushin(1);
        let b = lie_basis(&s).unwrap();
        assert_eq!(hormander_rank(&s, &b, &[int(0), int(0)]).unwrap(), 2);
        assert_eq!(hormander_rank(&s, &b, &[int(5), int(-3)]).unwrap(), 2);
        let single = parse_system("dim=2; weights=[1,1]; X1=(1,0)").unwrap();
        let bs = lie_basis(&single).unwrap();
        assert_eq!(bs.dim, 1);
        assert_eq!(hormander_rank(&single, &bs, &[int(2), int(7)]).unwrap(), 1);
        assert!(check_admissible(&single, &bs).is_err());
    }

    #[test]
    fn drift_weight_two() {
        let s = parse_system("dim=2; weights=[1,3]; X1=(1,0); X0=(0,x1)").unwrap();
        let b = lie_basis(&s).unwrap();
        assert_eq!(b.dim, 3);
        assert_eq!(b.weights(), vec![1, 2, 3]);
        assert_eq!(b.elements[2].index, MultiIndex::new(vec![0, 1]));
        assert_eq!(MultiIndex::new(vec![0, 1, 0]).weight(), 5);
    }

    #[test]
    fn basis_homogeneity_identity() {
        for s in [SystemSpec::grushin(3), sec5(4)] {
            let b = lie_basis(&s).unwrap();
            let w = s.sigma().to_vec();
            for lam in [rat(2, 1), rat(-3, 7), rat(5, 2)] {
                for e in &b.elements {
                    for (i, c) in e.field.coeffs().iter().enumerate() {
                        let expo = w[i] as i32 - e.weight as i32;
                        let factor = if expo >= 0 {
                            num_traits::pow::pow(lam.clone(), expo as usize)
                        } else {
                            Rational::from_integer(1.into()) / num_traits::pow::pow(lam.clone(), (-expo) as usize)
                        };
                        assert_eq!(c.dilate(&lam), c.scale(&factor));
                    }
                }
            }
        }
    }

    fn ctx2() -> Context {
        Variables::indexed("x", vec![1, 1])
    }

    fn poly_strategy() -> impl Strategy<Value = Polynomial> {
        prop::collection::vec(((0u32..3, 0u32..3), -4i64..5), 0..4).prop_map(|terms| {
            let c = ctx2();
            let mut acc = Polynomial::zero(&c);
            for ((a, b), k) in terms {
                acc = &acc + &Polynomial::monomial(&c, vec![a, b], int(k));
            }
            acc
        })
    }

    fn field_strategy() -> impl Strategy<Value = VectorField> {
        (poly_strategy(), poly_strategy()).prop_map(|(a, b)| VectorField::new(vec![a, b]).unwrap())
    }

    proptest! {
        #[test]
        fn antisymmetry_and_jacobi(x in field_strategy(), y in field_strategy(), z in field_strategy()) {
            let xy = lie_bracket(&x, &y).unwrap();
            prop_assert_eq!(xy.clone(), lie_bracket(&y, &x).unwrap().neg());
            let j = lie_bracket(&xy, &z).unwrap()
                .add(&lie_bracket(&lie_bracket(&y, &z).unwrap(), &x).unwrap())
                .add(&lie_bracket(&lie_bracket(&z, &x).unwrap(), &y).unwrap());
            prop_assert!(j.is_zero());
        }
    }

}
