//! The `.hvf` text format for homogeneous vector-field systems.
//!
//! ```text
//! # Grushin plane, k = 1
//! dim = 2
//! weights = [1, 2]
//! field X1 = (1, 0)
//! field X2 = (0, x1)
//! ```
//!
//! Statements are separated by newlines or `;`, and `#` starts a comment.
//! A field may also be written without the `field` keyword (`X1 = (1, 0)`).
//! The drift is given as `drift = (…)` or under the name `X0`. Polynomial
//! entries use the variables `x1..xn`, `+ - * ^`, parentheses and rational
//! literals `p/q`.

use std::fmt;

use num_bigint::BigInt;
use num_traits::Zero;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::linalg::SparseSpan;
use crate::poly::{Context, Polynomial, Rational, Variables};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NamedField {
    pub name: String,
    pub field: VectorField,
}

/// A homogeneous vector-field system on ℝⁿ.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SystemSpec {
    ctx: Context,
    fields: Vec<NamedField>,
    drift: Option<VectorField>,
}

impl SystemSpec {
    pub fn new(sigma: Vec<u32>, fields: Vec<NamedField>, drift: Option<VectorField>) -> Result<Self> {
        check_weights(&sigma)?;
        if fields.is_empty() {
            return Err(Error::InvalidSystem("at least one field is required".into()));
        }
        let ctx = Variables::indexed("x", sigma);
        let n = ctx.len();
        for f in fields.iter().map(|f| &f.field).chain(drift.iter()) {
            if f.dim() != n || **f.context() != *ctx {
                return Err(Error::InvalidSystem("field does not live on the system's coordinates".into()));
            }
        }
        Ok(SystemSpec { ctx, fields, drift })
    }

    /// Convenience constructor from coefficient strings.
    pub fn from_strings(sigma: Vec<u32>, fields: &[&[&str]], drift: Option<&[&str]>) -> Result<Self> {
        let ctx = Variables::indexed("x", sigma.clone());
        let mk = |coeffs: &[&str]| -> Result<VectorField> {
            let polys = coeffs.iter().map(|s| parse_polynomial(s, &ctx)).collect::<Result<Vec<_>>>()?;
            VectorField::new(polys)
        };
        let named = fields
            .iter()
            .enumerate()
            .map(|(i, c)| Ok(NamedField { name: format!("X{}", i + 1), field: mk(c)? }))
            .collect::<Result<Vec<_>>>()?;
        let drift = drift.map(mk).transpose()?;
        Self::new(sigma, named, drift)
    }

    /// The Grushin system `∂₁, x₁^k ∂₂` with weights `(1, k+1)`.
    pub fn grushin(k: u32) -> Self {
        let c = format!("x1^{k}");
        Self::from_strings(vec![1, k + 1], &[&["1", "0"], &["0", &c]], None).expect("valid Grushin system")
    }

    /// Whether this is the Grushin plane `∂₁, x₁∂₂` without drift (names ignored).
    pub fn is_grushin_one(&self) -> bool {
        let g = Self::grushin(1);
        self.drift.is_none()
            && self.ctx == g.ctx
            && self.fields.len() == 2
            && self.fields.iter().zip(&g.fields).all(|(a, b)| a.field == b.field)
    }

    pub fn n(&self) -> usize {
        self.ctx.len()
    }

    pub fn m(&self) -> usize {
        self.fields.len()
    }

    pub fn sigma(&self) -> &[u32] {
        self.ctx.weights()
    }

    /// Homogeneous dimension `q = Σ σ_i`.
    pub fn q(&self) -> u32 {
        self.sigma().iter().sum()
    }

    pub fn context(&self) -> &Context {
        &self.ctx
    }

    pub fn fields(&self) -> &[NamedField] {
        &self.fields
    }

    pub fn field(&self, i: usize) -> &VectorField {
        &self.fields[i].field
    }

    pub fn drift(&self) -> Option<&VectorField> {
        self.drift.as_ref()
    }

    /// Generator by index: `0` is the drift, `1..=m` the fields.
    pub fn generator(&self, idx: usize) -> Result<&VectorField> {
        match idx {
            0 => self.drift.as_ref().ok_or_else(|| Error::Index("system has no drift (index 0)".into())),
            i if i <= self.m() => Ok(&self.fields[i - 1].field),
            i => Err(Error::Index(format!("field index {i} out of 0..={}", self.m()))),
        }
    }

    /// Canonical `.hvf` text.
    pub fn to_hvf(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for SystemSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "dim = {}", self.n())?;
        let w: Vec<String> = self.sigma().iter().map(|w| w.to_string()).collect();
        writeln!(f, "weights = [{}]", w.join(", "))?;
        for nf in &self.fields {
            writeln!(f, "field {} = {}", nf.name, nf.field)?;
        }
        if let Some(d) = &self.drift {
            writeln!(f, "drift = {d}")?;
        }
        Ok(())
    }
}

fn check_weights(sigma: &[u32]) -> Result<()> {
    if sigma.is_empty() {
        return Err(Error::InvalidSystem("empty weight list".into()));
    }
    if sigma[0] != 1 || sigma.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidSystem(
            "weights must be nondecreasing with σ₁=1".into(),
        ));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Tokenizer and expression parser
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Int(BigInt),
    Ident(String),
    Sym(char),
}

#[derive(Debug, Clone)]
struct Token {
    tok: Tok,
    line: usize,
    col: usize,
}

fn tokenize(text: &str, line: usize, col0: usize) -> Result<Vec<Token>> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let col = col0 + i;
        if c.is_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && chars[i].is_ascii_digit() {
                i += 1;
            }
            if i < chars.len() && chars[i] == '.' {
                return Err(Error::Parse { line, col: col0 + i, msg: "decimal literals are not allowed; use p/q".into() });
            }
            let s: String = chars[start..i].iter().collect();
            out.push(Token { tok: Tok::Int(s.parse().unwrap()), line, col });
        } else if c.is_alphabetic() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            out.push(Token { tok: Tok::Ident(chars[start..i].iter().collect()), line, col });
        } else if "+-*/^(),[]=".contains(c) {
            out.push(Token { tok: Tok::Sym(c), line, col });
            i += 1;
        } else {
            return Err(Error::Parse { line, col, msg: format!("unexpected character `{c}`") });
        }
    }
    Ok(out)
}

struct ExprParser<'a> {
    toks: &'a [Token],
    pos: usize,
    ctx: &'a Context,
    end: (usize, usize),
}

impl<'a> ExprParser<'a> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|t| &t.tok)
    }

    fn here(&self) -> (usize, usize) {
        self.toks.get(self.pos).map(|t| (t.line, t.col)).unwrap_or(self.end)
    }

    fn err<T>(&self, msg: impl Into<String>) -> Result<T> {
        let (line, col) = self.here();
        Err(Error::Parse { line, col, msg: msg.into() })
    }

    fn expect(&mut self, c: char) -> Result<()> {
        if self.peek() == Some(&Tok::Sym(c)) {
            self.pos += 1;
            Ok(())
        } else {
            self.err(format!("expected `{c}`"))
        }
    }

    fn expr(&mut self) -> Result<Polynomial> {
        let mut acc = self.term()?;
        loop {
            match self.peek() {
                Some(Tok::Sym('+')) => {
                    self.pos += 1;
                    acc = &acc + &self.term()?;
                }
                Some(Tok::Sym('-')) => {
                    self.pos += 1;
                    acc = &acc - &self.term()?;
                }
                _ => return Ok(acc),
            }
        }
    }

    fn term(&mut self) -> Result<Polynomial> {
        let mut acc = self.unary()?;
        loop {
            match self.peek() {
                Some(Tok::Sym('*')) => {
                    self.pos += 1;
                    acc = &acc * &self.unary()?;
                }
                Some(Tok::Sym('/')) => {
                    self.pos += 1;
                    let here = self.here();
                    let d = self.unary()?;
                    match d.as_constant() {
                        Some(c) if !c.is_zero() => acc = acc.scale(&(Rational::from_integer(1.into()) / c)),
                        _ => {
                            return Err(Error::Parse {
                                line: here.0,
                                col: here.1,
                                msg: "division only by a nonzero constant".into(),
                            })
                        }
                    }
                }
                _ => return Ok(acc),
            }
        }
    }

    fn unary(&mut self) -> Result<Polynomial> {
        match self.peek() {
            Some(Tok::Sym('-')) => {
                self.pos += 1;
                Ok(-&self.unary()?)
            }
            Some(Tok::Sym('+')) => {
                self.pos += 1;
                self.unary()
            }
            _ => self.power(),
        }
    }

    fn power(&mut self) -> Result<Polynomial> {
        let base = self.atom()?;
        if self.peek() == Some(&Tok::Sym('^')) {
            self.pos += 1;
            match self.peek().cloned() {
                Some(Tok::Int(e)) => {
                    self.pos += 1;
                    let e: u32 = e.try_into().or_else(|_| self.err("exponent too large"))?;
                    Ok(base.pow(e))
                }
                _ => self.err("expected a nonnegative integer exponent"),
            }
        } else {
            Ok(base)
        }
    }

    fn atom(&mut self) -> Result<Polynomial> {
        match self.peek().cloned() {
            Some(Tok::Int(v)) => {
                self.pos += 1;
                Ok(Polynomial::constant(self.ctx, Rational::from_integer(v)))
            }
            Some(Tok::Ident(name)) => {
                let (line, col) = self.here();
                self.pos += 1;
                match self.ctx.index_of(&name) {
                    Some(i) => Ok(Polynomial::var(self.ctx, i)),
                    None => Err(Error::Parse { line, col, msg: format!("unknown variable `{name}`") }),
                }
            }
            Some(Tok::Sym('(')) => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            _ => self.err("expected a number, variable or `(`"),
        }
    }
}

/// Parses a single polynomial expression in the given context.
pub fn parse_polynomial(text: &str, ctx: &Context) -> Result<Polynomial> {
    let toks = tokenize(text, 1, 1)?;
    let mut p = ExprParser { toks: &toks, pos: 0, ctx, end: (1, text.chars().count() + 1) };
    let e = p.expr()?;
    if p.pos != toks.len() {
        return p.err("trailing input");
    }
    Ok(e)
}

// ---------------------------------------------------------------------------
// Statement level
// ---------------------------------------------------------------------------

struct Stmt {
    lhs: String,
    line: usize,
    col: usize,
    rhs: Vec<Token>,
    rhs_end: (usize, usize),
}

fn split_statements(text: &str) -> Result<Vec<Stmt>> {
    let mut out = Vec::new();
    for (li, raw) in text.lines().enumerate() {
        let line = li + 1;
        let code = raw.split('#').next().unwrap_or("");
        let mut offset = 0;
        for piece in code.split(';') {
            let col0 = offset + 1;
            offset += piece.chars().count() + 1;
            if piece.trim().is_empty() {
                continue;
            }
            let Some(eq) = piece.find('=') else {
                let lead = piece.len() - piece.trim_start().len();
                return Err(Error::Parse { line, col: col0 + lead, msg: "expected `name = value`".into() });
            };
            let lhs_raw = &piece[..eq];
            let lead = lhs_raw.len() - lhs_raw.trim_start().len();
            let lhs = lhs_raw.split_whitespace().collect::<Vec<_>>().join(" ");
            let rhs_text = &piece[eq + 1..];
            let rhs_col = col0 + piece[..eq + 1].chars().count();
            let rhs = tokenize(rhs_text, line, rhs_col)?;
            let rhs_end = (line, rhs_col + rhs_text.chars().count());
            out.push(Stmt { lhs, line, col: col0 + lead, rhs, rhs_end });
        }
    }
    Ok(out)
}

fn parse_int_stmt(s: &Stmt) -> Result<u32> {
    match s.rhs.as_slice() {
        [Token { tok: Tok::Int(v), .. }] => u32::try_from(v.clone())
            .map_err(|_| Error::Parse { line: s.line, col: s.col, msg: "integer out of range".into() }),
        [t, ..] => Err(Error::Parse { line: t.line, col: t.col, msg: "expected a positive integer".into() }),
        [] => Err(Error::Parse { line: s.rhs_end.0, col: s.rhs_end.1, msg: "missing value".into() }),
    }
}

fn parse_weights(s: &Stmt) -> Result<Vec<u32>> {
    let t = &s.rhs;
    let bad = |tok: Option<&Token>, msg: &str| {
        let (line, col) = tok.map(|t| (t.line, t.col)).unwrap_or(s.rhs_end);
        Error::Parse { line, col, msg: msg.into() }
    };
    if t.first().map(|x| &x.tok) != Some(&Tok::Sym('[')) {
        return Err(bad(t.first(), "expected `[`"));
    }
    let mut out = Vec::new();
    let mut i = 1;
    loop {
        match t.get(i).map(|x| &x.tok) {
            Some(Tok::Int(v)) => {
                out.push(u32::try_from(v.clone()).map_err(|_| bad(t.get(i), "weight out of range"))?);
                i += 1;
            }
            _ => return Err(bad(t.get(i), "weights must be integers")),
        }
        match t.get(i).map(|x| &x.tok) {
            Some(Tok::Sym(',')) => i += 1,
            Some(Tok::Sym(']')) => {
                i += 1;
                break;
            }
            _ => return Err(bad(t.get(i), "weights must be integers separated by `,`")),
        }
    }
    if i != t.len() {
        return Err(bad(t.get(i), "trailing input after weights"));
    }
    Ok(out)
}

fn parse_tuple(s: &Stmt, ctx: &Context) -> Result<VectorField> {
    let mut p = ExprParser { toks: &s.rhs, pos: 0, ctx, end: s.rhs_end };
    p.expect('(')?;
    let mut coeffs = vec![p.expr()?];
    while p.peek() == Some(&Tok::Sym(',')) {
        p.pos += 1;
        coeffs.push(p.expr()?);
    }
    p.expect(')')?;
    if p.pos != s.rhs.len() {
        return p.err("trailing input after field");
    }
    if coeffs.len() != ctx.len() {
        return Err(Error::Parse {
            line: s.line,
            col: s.col,
            msg: format!("field has {} components, expected {}", coeffs.len(), ctx.len()),
        });
    }
    VectorField::new(coeffs)
}

/// Parses `.hvf` text into a system.
pub fn parse_system(text: &str) -> Result<SystemSpec> {
    let stmts = split_statements(text)?;
    let last_line = text.lines().count().max(1);
    let missing = |what: &str| Error::Parse { line: last_line, col: 1, msg: format!("missing `{what}` section") };

    let mut dim = None;
    let mut weights = None;
    let mut field_stmts = Vec::new();
    let mut drift_stmt = None;
    for s in &stmts {
        let dup = |what: &str| Error::Parse { line: s.line, col: s.col, msg: format!("duplicate `{what}`") };
        match s.lhs.as_str() {
            "dim" => {
                if dim.replace(parse_int_stmt(s)?).is_some() {
                    return Err(dup("dim"));
                }
            }
            "weights" => {
                if weights.replace(parse_weights(s)?).is_some() {
                    return Err(dup("weights"));
                }
            }
            "drift" | "X0" | "field X0" => {
                if drift_stmt.replace(s).is_some() {
                    return Err(dup("drift"));
                }
            }
            lhs => {
                let name = lhs.strip_prefix("field ").unwrap_or(lhs).trim();
                let valid = !name.is_empty()
                    && name.chars().next().is_some_and(|c| c.is_alphabetic())
                    && name.chars().all(|c| c.is_alphanumeric() || c == '_');
                if !valid {
                    return Err(Error::Parse { line: s.line, col: s.col, msg: format!("bad statement name `{lhs}`") });
                }
                field_stmts.push((name.to_string(), s));
            }
        }
    }
    let dim = dim.ok_or_else(|| missing("dim"))? as usize;
    let weights = weights.ok_or_else(|| missing("weights"))?;
    if field_stmts.is_empty() {
        return Err(missing("field"));
    }
    if weights.len() != dim {
        return Err(Error::InvalidSystem(format!("dim = {dim} but {} weights given", weights.len())));
    }
    check_weights(&weights)?;
    let ctx = Variables::indexed("x", weights.clone());
    let mut fields = Vec::new();
    for (name, s) in field_stmts {
        if fields.iter().any(|f: &NamedField| f.name == name) {
            return Err(Error::Parse { line: s.line, col: s.col, msg: format!("duplicate field `{name}`") });
        }
        fields.push(NamedField { name, field: parse_tuple(s, &ctx)? });
    }
    let drift = drift_stmt.map(|s| parse_tuple(s, &ctx)).transpose()?;
    SystemSpec::new(weights, fields, drift)
}

// ---------------------------------------------------------------------------
// Homogeneity report
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, PartialEq, Eq)]
pub struct FieldDegree {
    pub name: String,
    /// Required degree: 1 for fields, 2 for the drift.
    pub expected: u32,
    /// Detected homogeneity degree, if any.
    pub degree: Option<u32>,
    /// Components `i` whose coefficient is not of pure δ-degree `σ_i − expected`.
    pub violations: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, PartialEq, Eq)]
pub struct HomogeneityReport {
    pub ok: bool,
    pub per_field_degrees: Vec<FieldDegree>,
    /// X₁..X_m linearly independent over ℚ as polynomial vector fields.
    pub linearly_independent: bool,
}

/// Structural δ-homogeneity check (degree 1 for fields, 2 for the drift).
pub fn validate_homogeneity(spec: &SystemSpec) -> HomogeneityReport {
    let mut per = Vec::new();
    let mut ok = true;
    let entries = spec
        .fields
        .iter()
        .map(|f| (f.name.clone(), &f.field, 1))
        .chain(spec.drift.iter().map(|d| ("X0".to_string(), d, 2)));
    for (name, f, expected) in entries {
        let violations = f.degree_violations(expected);
        let degree = if f.is_zero() { None } else { f.homogeneous_degree() };
        if !violations.is_empty() || f.is_zero() {
            ok = false;
        }
        per.push(FieldDegree { name, expected, degree, violations });
    }
    let mut span = SparseSpan::new();
    let linearly_independent = spec.fields.iter().all(|f| span.insert(&f.field.sparse()));
    HomogeneityReport { ok, per_field_degrees: per, linearly_independent }
}
