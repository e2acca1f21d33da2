//! The ball-volume polynomial `Λ(x, ρ) = Σ_k f_k(x) ρ^k`, where `f_k` sums
//! the absolute determinants of n-tuples of brackets with total weight `k`.

use std::collections::BTreeMap;

use num_traits::{Signed, Zero};
use serde::Serialize;

use crate::dsl::SystemSpec;
use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::lie::{nested_brackets_upto, MultiIndex};
use crate::linalg::poly_det;
use crate::poly::{CompiledPoly, Polynomial, Rational};

#[derive(Debug, Clone)]
pub struct DetTerm {
    pub indices: Vec<MultiIndex>,
    pub det: Polynomial,
    compiled: CompiledPoly,
}

#[derive(Debug, Clone)]
pub struct VolumeProfile {
    n: usize,
    q: u32,
    sigma: Vec<u32>,
    terms: BTreeMap<u32, Vec<DetTerm>>,
}

/// Candidate brackets: left-nested, `i₁ < i₂` when the length is at least 2,
/// nonzero, weight at most `σ_n`, and distinct up to sign within a weight.
pub fn candidate_brackets(spec: &SystemSpec) -> Result<Vec<(MultiIndex, VectorField)>> {
    let top = *spec.sigma().last().unwrap();
    let mut out: Vec<(MultiIndex, VectorField)> = Vec::new();
    for (idx, f) in nested_brackets_upto(spec, top)? {
        let e = idx.entries();
        if e.len() >= 2 && e[0] >= e[1] {
            continue;
        }
        let w = idx.weight();
        let neg = f.neg();
        if out.iter().any(|(j, g)| j.weight() == w && (*g == f || *g == neg)) {
            continue;
        }
        out.push((idx, f));
    }
    Ok(out)
}

fn combinations(len: usize, k: usize) -> Vec<Vec<usize>> {
    fn rec(start: usize, len: usize, k: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == k {
            out.push(cur.clone());
            return;
        }
        for i in start..len {
            if len - i < k - cur.len() {
                break;
            }
            cur.push(i);
            rec(i + 1, len, k, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    rec(0, len, k, &mut Vec::new(), &mut out);
    out
}

/// Enumerates the n-tuples of candidate brackets and groups the nonzero
/// determinants by total weight.
pub fn build_profile(spec: &SystemSpec) -> Result<VolumeProfile> {
    let n = spec.n();
    let q = spec.q();
    let cands = candidate_brackets(spec)?;
    let mut terms: BTreeMap<u32, Vec<DetTerm>> = BTreeMap::new();
    for combo in combinations(cands.len(), n) {
        let k: u32 = combo.iter().map(|&i| cands[i].0.weight()).sum();
        let m: Vec<Vec<Polynomial>> =
            (0..n).map(|row| combo.iter().map(|&c| cands[c].1.coeff(row).clone()).collect()).collect();
        let det = poly_det(&m);
        if det.is_zero() {
            continue;
        }
        if k > q {
            return Err(Error::Inconsistent(format!("nonzero determinant of weight {k} > q = {q}")));
        }
        if !det.is_homogeneous_of(q - k) {
            return Err(Error::Inconsistent(format!("determinant of weight {k} is not homogeneous of degree {}", q - k)));
        }
        let indices = combo.iter().map(|&c| cands[c].0.clone()).collect();
        let compiled = det.compile();
        terms.entry(k).or_default().push(DetTerm { indices, det, compiled });
    }
    let profile = VolumeProfile { n, q, sigma: spec.sigma().to_vec(), terms };
    match profile.f_q() {
        Some(c) if c.is_positive() => Ok(profile),
        _ => Err(Error::InvalidSystem("f_q vanishes: the system does not satisfy the Hörmander condition".into())),
    }
}

impl VolumeProfile {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn q(&self) -> u32 {
        self.q
    }

    /// Weights `k` with at least one nonzero determinant.
    pub fn degrees(&self) -> Vec<u32> {
        self.terms.keys().copied().collect()
    }

    pub fn terms(&self, k: u32) -> &[DetTerm] {
        self.terms.get(&k).map(Vec::as_slice).unwrap_or(&[])
    }

    /// The constant `f_q`.
    pub fn f_q(&self) -> Option<Rational> {
        let t = self.terms.get(&self.q)?;
        let mut acc = Rational::zero();
        for d in t {
            acc += d.det.as_constant()?.abs();
        }
        Some(acc)
    }

    pub fn f_k(&self, k: u32, x: &[f64]) -> f64 {
        self.terms(k).iter().map(|d| d.compiled.eval(x).abs()).sum()
    }

    pub fn f_k_rational(&self, k: u32, x: &[Rational]) -> Result<Rational> {
        let mut acc = Rational::zero();
        for d in self.terms(k) {
            acc += d.det.eval_rational(x)?.abs();
        }
        Ok(acc)
    }

    /// Exact `Λ` at a rational point.
    pub fn lambda_rational(&self, x: &[Rational], rho: &Rational) -> Result<Rational> {
        if !rho.is_positive() {
            return Err(Error::Domain("ρ must be positive".into()));
        }
        let mut acc = Rational::zero();
        for &k in self.terms.keys() {
            acc += self.f_k_rational(k, x)? * num_traits::pow::pow(rho.clone(), k as usize);
        }
        Ok(acc)
    }

    pub fn sigma(&self) -> &[u32] {
        &self.sigma
    }

    pub fn summary(&self) -> Vec<FkSummary> {
        self.terms
            .iter()
            .map(|(&k, ts)| FkSummary {
                k,
                determinants: ts
                    .iter()
                    .map(|t| DetSummary {
                        indices: t.indices.iter().map(|i| i.to_string()).collect(),
                        det: t.det.to_string(),
                    })
                    .collect(),
            })
            .collect()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DetSummary {
    pub indices: Vec<String>,
    pub det: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct FkSummary {
    pub k: u32,
    pub determinants: Vec<DetSummary>,
}

/// `Λ(x, ρ) = Σ f_k(x) ρ^k`.
pub fn lambda_eval(profile: &VolumeProfile, x: &[f64], rho: f64) -> Result<f64> {
    if !(rho > 0.0) {
        return Err(Error::Domain(format!("ρ must be positive, got {rho}")));
    }
    if x.len() != profile.n {
        return Err(Error::Arity { expected: profile.n, got: x.len() });
    }
    Ok(profile.terms.keys().map(|&k| profile.f_k(k, x) * rho.powi(k as i32)).sum())
}

/// `Λ(x, 2ρ) / Λ(x, ρ)`.
pub fn doubling_ratio(profile: &VolumeProfile, x: &[f64], rho: f64) -> Result<f64> {
    Ok(lambda_eval(profile, x, 2.0 * rho)? / lambda_eval(profile, x, rho)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::{int, rat};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sec5(n: usize) -> SystemSpec {
        let mut a = vec!["1".to_string()];
        a.resize(n, "0".into());
        let mut b = vec!["0".to_string()];
        b.extend((1..n).map(|i| format!("x{i}")));
        let a: Vec<&str> = a.iter().map(String::as_str).collect();
        let b: Vec<&str> = b.iter().map(String::as_str).collect();
        SystemSpec::from_strings((1..=n as u32).collect(), &[&a, &b], None).unwrap()
    }

    fn factorial(k: u32) -> i64 {
        (1..=k as i64).product()
    }

    #[test]
    fn grushin_table() {
        for k in 1..=3u32 {
            let p = build_profile(&SystemSpec::grushin(k)).unwrap();
            assert_eq!(p.degrees(), (2..=k + 2).collect::<Vec<_>>());
            assert_eq!(p.f_q().unwrap(), int(factorial(k)));
            let x = [rat(-3, 2), int(5)];
            for j in 2..=k + 2 {
                // f_j = k!/(k-j+2)! |x1|^{k-j+2}
                let e = k + 2 - j;
                let expect = int(factorial(k) / factorial(e)) * num_traits::pow::pow(rat(3, 2), e as usize);
                assert_eq!(p.f_k_rational(j, &x).unwrap(), expect, "k={k} j={j}");
            }
        }
    }

    #[test]
    fn sec5_table() {
        for n in 3..=4usize {
            let p = build_profile(&sec5(n)).unwrap();
            let q = (n * (n + 1) / 2) as u32;
            assert_eq!(p.q(), q);
            assert_eq!(p.f_q().unwrap(), int(1));
            let x: Vec<Rational> = (0..n).map(|i| rat(2 * i as i64 - 3, 3)).collect();
            for j in 1..n {
                assert_eq!(p.f_k_rational(q - j as u32, &x).unwrap(), x[j - 1].abs(), "n={n} j={j}");
            }
            assert!(p.degrees().iter().all(|&k| k >= n as u32 && k <= q));
        }
    }

    #[test]
    fn lambda_values() {
        let p = build_profile(&SystemSpec::grushin(1)).unwrap();
        for rho in [0.3, 1.0, 2.5] {
            assert!((lambda_eval(&p, &[0.0, 0.0], rho).unwrap() - rho.powi(3)).abs() < 1e-12);
            let l = lambda_eval(&p, &[1.0, 0.0], rho).unwrap();
            assert!((l - rho * rho - rho.powi(3)).abs() < 1e-12);
        }
        assert_eq!(doubling_ratio(&p, &[0.0, 0.0], 0.7).unwrap(), 8.0);
        assert!((doubling_ratio(&p, &[1.0, 0.0], 1.0).unwrap() - 6.0).abs() < 1e-12);
        assert!(lambda_eval(&p, &[0.0, 0.0], 0.0).is_err());
        assert!(doubling_ratio(&p, &[0.0, 0.0], -1.0).is_err());
    }

    #[test]
    fn homogeneity_exact() {
        for spec in [SystemSpec::grushin(2), sec5(3)] {
            let p = build_profile(&spec).unwrap();
            let x: Vec<Rational> = (0..spec.n()).map(|i| rat(3 - 2 * i as i64, 5)).collect();
            for lam in [rat(2, 1), rat(1, 3), rat(7, 4)] {
                let dx: Vec<Rational> = x
                    .iter()
                    .zip(spec.sigma())
                    .map(|(v, &s)| v * num_traits::pow::pow(lam.clone(), s as usize))
                    .collect();
                let rho = rat(3, 2);
                let lhs = p.lambda_rational(&dx, &(&lam * &rho)).unwrap();
                let rhs = num_traits::pow::pow(lam.clone(), p.q() as usize) * p.lambda_rational(&x, &rho).unwrap();
                assert_eq!(lhs, rhs);
                for k in p.degrees() {
                    let l = p.f_k_rational(k, &dx).unwrap();
                    let r = num_traits::pow::pow(lam.clone(), (p.q() - k) as usize) * p.f_k_rational(k, &x).unwrap();
                    assert_eq!(l, r);
                }
            }
            let zero = vec![int(0); spec.n()];
            for k in p.degrees() {
                if k < p.q() {
                    assert!(p.f_k_rational(k, &zero).unwrap().is_zero());
                }
            }
        }
    }

    #[test]
    fn doubling_bounds_and_monotone_surrogate() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for spec in [SystemSpec::grushin(1), SystemSpec::grushin(3), sec5(4)] {
            let p = build_profile(&spec).unwrap();
            let n = spec.n();
            let cap = 2f64.powi(p.q() as i32);
            for _ in 0..2000 {
                let x: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
                let rho = 10f64.powf(rng.gen_range(-2.0..2.0));
                let r = doubling_ratio(&p, &x, rho).unwrap();
                assert!(r <= cap * (1.0 + 1e-12) && r >= 2.0, "{r}");
                let beta = (n + 1) as f64;
                let g1 = lambda_eval(&p, &x, rho).unwrap() / rho.powf(beta - 1.0);
                let g2 = lambda_eval(&p, &x, rho * 1.1).unwrap() / (rho * 1.1).powf(beta - 1.0);
                assert!(g2 >= g1 * (1.0 - 1e-12));
            }
        }
    }
}
