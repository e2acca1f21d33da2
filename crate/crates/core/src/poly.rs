//! Exact multivariate polynomials over the rationals with weighted grading.
//!
//! Every polynomial lives in a [`Context`]: an ordered list of variable names,
//! each carrying a positive integer weight. The weighted degree of a monomial
//! `x^e` is `Σ e_i · w_i`; this is the degree with respect to the dilations
//! `x_i ↦ λ^{w_i} x_i`.
//!
//! Terms are kept in a `BTreeMap` keyed by `(weighted degree, exponents)`, so
//! iteration order is graded-lexicographic and printing is reproducible.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{Error, Result};

/// Exact rational scalar.
pub type Rational = BigRational;

/// Builds the rational `num/den`.
pub fn rat(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

/// Builds the integer `n` as a rational.
pub fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

/// Lossy conversion used by the numeric layer.
pub fn rat_to_f64(r: &Rational) -> f64 {
    r.to_f64().unwrap_or_else(|| {
        // numerator/denominator too large for a direct conversion
        let n = r.numer().to_f64().unwrap_or(f64::NAN);
        let d = r.denom().to_f64().unwrap_or(f64::NAN);
        n / d
    })
}

/// Ordered variable names with their dilation weights.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Variables {
    names: Vec<String>,
    weights: Vec<u32>,
}

/// Shared variable context.
pub type Context = Arc<Variables>;

impl Variables {
    pub fn new<S: Into<String>>(names: impl IntoIterator<Item = S>, weights: Vec<u32>) -> Context {
        let names: Vec<String> = names.into_iter().map(Into::into).collect();
        assert_eq!(names.len(), weights.len(), "one weight per variable");
        assert!(weights.iter().all(|&w| w > 0), "weights must be positive");
        Arc::new(Variables { names, weights })
    }

    /// Variables `prefix1, …, prefixN` with the given weights.
    pub fn indexed(prefix: &str, weights: Vec<u32>) -> Context {
        let names = (1..=weights.len()).map(|i| format!("{prefix}{i}"));
        Self::new(names, weights)
    }

    /// Concatenates several contexts (names must stay unique).
    pub fn concat(parts: &[&Context]) -> Context {
        let mut names = Vec::new();
        let mut weights = Vec::new();
        for p in parts {
            names.extend(p.names.iter().cloned());
            weights.extend(p.weights.iter().copied());
        }
        Self::new(names, weights)
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn weights(&self) -> &[u32] {
        &self.weights
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }
}

fn same_context(a: &Context, b: &Context) -> bool {
    Arc::ptr_eq(a, b) || **a == **b
}

/// Exponent vector tagged with its weighted degree, ordered graded-lex.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Monomial {
    degree: u32,
    exps: Vec<u32>,
}

impl Monomial {
    fn new(exps: Vec<u32>, weights: &[u32]) -> Self {
        let degree = exps.iter().zip(weights).map(|(e, w)| e * w).sum();
        Monomial { degree, exps }
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn exponents(&self) -> &[u32] {
        &self.exps
    }
}

/// Polynomial with rational coefficients in a weighted variable context.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Polynomial {
    ctx: Context,
    terms: BTreeMap<Monomial, Rational>,
}

impl fmt::Debug for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Polynomial({self})")
    }
}

/// Binary operation selector for [`poly_arith`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArithOp {
    Add,
    Sub,
    Mul,
}

/// Context-checked arithmetic.
pub fn poly_arith(a: &Polynomial, b: &Polynomial, op: ArithOp) -> Result<Polynomial> {
    a.check_context(b)?;
    Ok(match op {
        ArithOp::Add => a + b,
        ArithOp::Sub => a - b,
        ArithOp::Mul => a * b,
    })
}

impl Polynomial {
    pub fn zero(ctx: &Context) -> Self {
        Polynomial { ctx: ctx.clone(), terms: BTreeMap::new() }
    }

    pub fn constant(ctx: &Context, c: Rational) -> Self {
        let mut p = Self::zero(ctx);
        p.add_term(vec![0; ctx.len()], c);
        p
    }

    pub fn one(ctx: &Context) -> Self {
        Self::constant(ctx, Rational::one())
    }

    /// The coordinate function of variable `i`.
    pub fn var(ctx: &Context, i: usize) -> Self {
        assert!(i < ctx.len(), "variable index out of range");
        let mut e = vec![0; ctx.len()];
        e[i] = 1;
        let mut p = Self::zero(ctx);
        p.add_term(e, Rational::one());
        p
    }

    pub fn var_named(ctx: &Context, name: &str) -> Result<Self> {
        let i = ctx
            .index_of(name)
            .ok_or_else(|| Error::Context(format!("unknown variable `{name}`")))?;
        Ok(Self::var(ctx, i))
    }

    /// Single monomial `c · x^exps`.
    pub fn monomial(ctx: &Context, exps: Vec<u32>, c: Rational) -> Self {
        assert_eq!(exps.len(), ctx.len(), "exponent arity");
        let mut p = Self::zero(ctx);
        p.add_term(exps, c);
        p
    }

    pub fn context(&self) -> &Context {
        &self.ctx
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn num_terms(&self) -> usize {
        self.terms.len()
    }

    /// Terms in ascending graded-lex order.
    pub fn terms(&self) -> impl DoubleEndedIterator<Item = (&Monomial, &Rational)> {
        self.terms.iter()
    }

    pub fn check_context(&self, other: &Polynomial) -> Result<()> {
        if same_context(&self.ctx, &other.ctx) {
            Ok(())
        } else {
            Err(Error::Context(format!(
                "variable contexts differ: {:?} vs {:?}",
                self.ctx.names, other.ctx.names
            )))
        }
    }

    fn add_term(&mut self, exps: Vec<u32>, c: Rational) {
        if c.is_zero() {
            return;
        }
        let m = Monomial::new(exps, &self.ctx.weights);
        let entry = self.terms.entry(m);
        match entry {
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(c);
            }
            std::collections::btree_map::Entry::Occupied(mut o) => {
                *o.get_mut() += c;
                if o.get().is_zero() {
                    o.remove();
                }
            }
        }
    }

    /// Constant term, if the polynomial is constant.
    pub fn as_constant(&self) -> Option<Rational> {
        match self.terms.len() {
            0 => Some(Rational::zero()),
            1 => {
                let (m, c) = self.terms.iter().next().unwrap();
                m.exps.iter().all(|&e| e == 0).then(|| c.clone())
            }
            _ => None,
        }
    }

    pub fn constant_term(&self) -> Rational {
        self.terms
            .iter()
            .find(|(m, _)| m.degree == 0 && m.exps.iter().all(|&e| e == 0))
            .map(|(_, c)| c.clone())
            .unwrap_or_else(Rational::zero)
    }

    pub fn scale(&self, c: &Rational) -> Self {
        if c.is_zero() {
            return Self::zero(&self.ctx);
        }
        let terms = self.terms.iter().map(|(m, v)| (m.clone(), v * c)).collect();
        Polynomial { ctx: self.ctx.clone(), terms }
    }

    pub fn pow(&self, k: u32) -> Self {
        let mut acc = Self::one(&self.ctx);
        for _ in 0..k {
            acc = &acc * self;
        }
        acc
    }

    /// Formal partial derivative with respect to variable index `i`.
    pub fn partial(&self, i: usize) -> Self {
        assert!(i < self.ctx.len(), "variable index out of range");
        let mut out = Self::zero(&self.ctx);
        for (m, c) in &self.terms {
            let e = m.exps[i];
            if e == 0 {
                continue;
            }
            let mut exps = m.exps.clone();
            exps[i] -= 1;
            out.add_term(exps, c * int(e as i64));
        }
        out
    }

    pub fn partial_named(&self, name: &str) -> Result<Self> {
        let i = self
            .ctx
            .index_of(name)
            .ok_or_else(|| Error::Context(format!("unknown variable `{name}`")))?;
        Ok(self.partial(i))
    }

    /// Largest exponent of each variable (used to size power tables).
    fn max_exponents(&self) -> Vec<u32> {
        let mut mx = vec![0; self.ctx.len()];
        for m in self.terms.keys() {
            for (a, &e) in mx.iter_mut().zip(&m.exps) {
                *a = (*a).max(e);
            }
        }
        mx
    }

    /// Exact evaluation at a rational point.
    pub fn eval_rational(&self, point: &[Rational]) -> Result<Rational> {
        self.check_arity(point.len())?;
        let powers = power_table(point, &self.max_exponents(), Rational::one());
        let mut acc = Rational::zero();
        for (m, c) in &self.terms {
            let mut t = c.clone();
            for (i, &e) in m.exps.iter().enumerate() {
                if e > 0 {
                    t *= &powers[i][e as usize];
                }
            }
            acc += t;
        }
        Ok(acc)
    }

    /// Floating-point evaluation.
    pub fn eval_f64(&self, point: &[f64]) -> Result<f64> {
        self.check_arity(point.len())?;
        Ok(self.compile().eval(point))
    }

    fn check_arity(&self, n: usize) -> Result<()> {
        if n == self.ctx.len() {
            Ok(())
        } else {
            Err(Error::Arity { expected: self.ctx.len(), got: n })
        }
    }

    /// Splits into δ-homogeneous components, ascending by degree.
    pub fn delta_decompose(&self) -> Vec<(u32, Polynomial)> {
        let mut parts: BTreeMap<u32, Polynomial> = BTreeMap::new();
        for (m, c) in &self.terms {
            parts
                .entry(m.degree)
                .or_insert_with(|| Self::zero(&self.ctx))
                .terms
                .insert(m.clone(), c.clone());
        }
        parts.into_iter().collect()
    }

    /// Set of weighted degrees present.
    pub fn degrees(&self) -> Vec<u32> {
        let mut d: Vec<u32> = self.terms.keys().map(|m| m.degree).collect();
        d.dedup();
        d
    }

    /// True if every monomial has weighted degree `deg` (the zero polynomial qualifies).
    pub fn is_homogeneous_of(&self, deg: u32) -> bool {
        self.terms.keys().all(|m| m.degree == deg)
    }

    /// `p ∘ δ_λ`: each monomial picks up `λ^{degree}`.
    pub fn dilate(&self, lambda: &Rational) -> Self {
        let mut out = Self::zero(&self.ctx);
        for (m, c) in &self.terms {
            out.terms.insert(m.clone(), c * pow_rational(lambda, m.degree));
        }
        out
    }

    /// Substitutes variable `i ↦ images[i]`; every image must share `target`.
    pub fn compose(&self, target: &Context, images: &[Polynomial]) -> Result<Polynomial> {
        self.check_arity(images.len())?;
        for img in images {
            if !same_context(img.context(), target) {
                return Err(Error::Context("composition images live in a different context".into()));
            }
        }
        let mx = self.max_exponents();
        let mut powers: Vec<Vec<Polynomial>> = Vec::with_capacity(images.len());
        for (img, &e) in images.iter().zip(&mx) {
            let mut row = vec![Polynomial::one(target)];
            for k in 1..=e as usize {
                let next = &row[k - 1] * img;
                row.push(next);
            }
            powers.push(row);
        }
        let mut acc = Polynomial::zero(target);
        for (m, c) in &self.terms {
            let mut t = Polynomial::constant(target, c.clone());
            for (i, &e) in m.exps.iter().enumerate() {
                if e > 0 {
                    t = &t * &powers[i][e as usize];
                }
            }
            acc = &acc + &t;
        }
        Ok(acc)
    }

    /// Re-expresses the polynomial in a context that contains all of its
    /// variables (matched by name).
    pub fn embed(&self, target: &Context) -> Result<Polynomial> {
        let mut map = Vec::with_capacity(self.ctx.len());
        for name in &self.ctx.names {
            let j = target
                .index_of(name)
                .ok_or_else(|| Error::Context(format!("variable `{name}` missing from target")))?;
            map.push(j);
        }
        let mut out = Polynomial::zero(target);
        for (m, c) in &self.terms {
            let mut exps = vec![0; target.len()];
            for (i, &e) in m.exps.iter().enumerate() {
                exps[map[i]] += e;
            }
            out.add_term(exps, c.clone());
        }
        Ok(out)
    }

    /// Indices of variables that actually occur.
    pub fn support(&self) -> Vec<usize> {
        let mx = self.max_exponents();
        (0..mx.len()).filter(|&i| mx[i] > 0).collect()
    }

    /// Fast floating-point evaluator.
    pub fn compile(&self) -> CompiledPoly {
        let terms = self
            .terms
            .iter()
            .map(|(m, c)| {
                let factors = m
                    .exps
                    .iter()
                    .enumerate()
                    .filter(|(_, &e)| e > 0)
                    .map(|(i, &e)| (i, e as i32))
                    .collect();
                (rat_to_f64(c), factors)
            })
            .collect();
        CompiledPoly { arity: self.ctx.len(), terms }
    }
}

fn pow_rational(base: &Rational, e: u32) -> Rational {
    let mut acc = Rational::one();
    for _ in 0..e {
        acc *= base;
    }
    acc
}

fn power_table(point: &[Rational], mx: &[u32], one: Rational) -> Vec<Vec<Rational>> {
    point
        .iter()
        .zip(mx)
        .map(|(v, &e)| {
            let mut row = vec![one.clone()];
            for k in 1..=e as usize {
                let next = &row[k - 1] * v;
                row.push(next);
            }
            row
        })
        .collect()
}

/// Polynomial lowered to `f64` for hot numeric loops.
#[derive(Debug, Clone)]
pub struct CompiledPoly {
    arity: usize,
    terms: Vec<(f64, Vec<(usize, i32)>)>,
}

impl CompiledPoly {
    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.arity);
        self.terms
            .iter()
            .map(|(c, fs)| fs.iter().fold(*c, |acc, &(i, e)| acc * x[i].powi(e)))
            .sum()
    }
}

impl std::ops::Add for &Polynomial {
    type Output = Polynomial;
    fn add(self, rhs: &Polynomial) -> Polynomial {
        assert!(same_context(&self.ctx, &rhs.ctx), "context mismatch in add");
        let mut out = self.clone();
        for (m, c) in &rhs.terms {
            out.add_term(m.exps.clone(), c.clone());
        }
        out
    }
}

impl std::ops::Sub for &Polynomial {
    type Output = Polynomial;
    fn sub(self, rhs: &Polynomial) -> Polynomial {
        assert!(same_context(&self.ctx, &rhs.ctx), "context mismatch in sub");
        let mut out = self.clone();
        for (m, c) in &rhs.terms {
            out.add_term(m.exps.clone(), -c.clone());
        }
        out
    }
}

impl std::ops::Mul for &Polynomial {
    type Output = Polynomial;
    fn mul(self, rhs: &Polynomial) -> Polynomial {
        assert!(same_context(&self.ctx, &rhs.ctx), "context mismatch in mul");
        let mut out = Polynomial::zero(&self.ctx);
        for (ma, ca) in &self.terms {
            for (mb, cb) in &rhs.terms {
                let exps = ma.exps.iter().zip(&mb.exps).map(|(a, b)| a + b).collect();
                out.add_term(exps, ca * cb);
            }
        }
        out
    }
}

impl std::ops::Neg for &Polynomial {
    type Output = Polynomial;
    fn neg(self) -> Polynomial {
        let terms = self.terms.iter().map(|(m, c)| (m.clone(), -c.clone())).collect();
        Polynomial { ctx: self.ctx.clone(), terms }
    }
}

/// Canonical text: terms by descending graded-lex order, `*` between
/// factors, `^` for powers, coefficients as `num/den`.
impl fmt::Display for Polynomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (k, (m, c)) in self.terms.iter().rev().enumerate() {
            let neg = c.is_negative();
            let abs = c.abs();
            if k == 0 {
                if neg {
                    write!(f, "-")?;
                }
            } else {
                write!(f, " {} ", if neg { '-' } else { '+' })?;
            }
            let mut factors: Vec<String> = Vec::new();
            for (i, &e) in m.exps.iter().enumerate() {
                match e {
                    0 => {}
                    1 => factors.push(self.ctx.names[i].clone()),
                    _ => factors.push(format!("{}^{}", self.ctx.names[i], e)),
                }
            }
            if factors.is_empty() {
                write!(f, "{abs}")?;
            } else if abs.is_one() {
                write!(f, "{}", factors.join("*"))?;
            } else {
                write!(f, "{}*{}", abs, factors.join("*"))?;
            }
        }
        Ok(())
    }
}
