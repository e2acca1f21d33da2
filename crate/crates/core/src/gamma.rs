//! Fundamental solution of the Grushin operator `∂₁² + x₁²∂₂²`.
//!
//! Three evaluation routes share one normalisation `γ₀`:
//! the lifted Heisenberg kernel `Γ_G`, the saturation integral over the
//! added variable, and the closed form through `K(m)`. Derivatives along the
//! fields come from the representation formulas (symbolic `X̃`-derivatives of
//! `Γ_G` integrated in `η`) and, independently, from finite differences.

use std::f64::consts::{PI, SQRT_2};
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::distance::grushin_distance_surrogate;
use crate::dsl::SystemSpec;
use crate::error::{Error, Result};
use crate::field::VectorField;
use crate::lift::{build_lift, LiftedSystem};
use crate::numeric::quad::{gauss_kronrod, integrate_real_line, QuadResult, QuadratureSpec, Rule};
use crate::numeric::{elliptic_k_complement, Jet, Scalar};
use crate::poly::{rat, CompiledPoly, Context, Polynomial, Variables};

pub use crate::lift::phi_change_of_variable;

/// Which variable a field acts on in `Γ(x; y)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Side {
    X,
    Y,
}

/// One letter `X_i^x` or `X_i^y` of a derivative word.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub struct Direction {
    /// 1-based field index.
    pub field: usize,
    pub side: Side,
}

impl Direction {
    pub fn x(field: usize) -> Self {
        Direction { field, side: Side::X }
    }

    pub fn y(field: usize) -> Self {
        Direction { field, side: Side::Y }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self.side {
            Side::X => "x",
            Side::Y => "y",
        };
        write!(f, "X{}^{}", self.field, s)
    }
}

impl FromStr for Direction {
    type Err = Error;

    /// Accepts `X1^x`, `X2^y`, or the short forms `X1x`, `X2y`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Parse { line: 1, col: 1, msg: format!("bad derivative direction `{s}` (expected X1^x, X2^y, ...)") };
        let body = s.trim().strip_prefix('X').ok_or_else(bad)?;
        let (num, side) = match body.split_once('^') {
            Some((n, sd)) => (n, sd),
            None if body.len() >= 2 => body.split_at(body.len() - 1),
            None => return Err(bad()),
        };
        let field: usize = num.parse().map_err(|_| bad())?;
        if !(1..=2).contains(&field) {
            return Err(Error::Index(format!("field X{field} does not exist on the Grushin plane")));
        }
        let side = match side {
            "x" => Side::X,
            "y" => Side::Y,
            _ => return Err(bad()),
        };
        Ok(Direction { field, side })
    }
}

/// Parses a word such as `"X1^x X2^y"` (spaces, commas or `*` between letters).
pub fn parse_word(s: &str) -> Result<Vec<Direction>> {
    s.split(|c: char| c.is_whitespace() || c == ',' || c == '*').filter(|t| !t.is_empty()).map(str::parse).collect()
}

/// `Σ_k P_k · S^{−1/2−k}` with polynomial `P_k` and base `S`.
///
/// Closed under vector fields with polynomial coefficients and under
/// polynomial substitution, which is all the representation formulas need.
#[derive(Debug, Clone)]
pub struct RadicalExpr {
    base: Polynomial,
    terms: Vec<Polynomial>,
}

impl RadicalExpr {
    /// `S^{−1/2}`.
    pub fn inverse_sqrt(base: Polynomial) -> Self {
        let one = Polynomial::one(base.context());
        RadicalExpr { base, terms: vec![one] }
    }

    pub fn base(&self) -> &Polynomial {
        &self.base
    }

    pub fn terms(&self) -> &[Polynomial] {
        &self.terms
    }

    /// `Z(P S^{−a}) = (ZP) S^{−a} − a P (ZS) S^{−a−1}`.
    pub fn apply(&self, z: &VectorField) -> Self {
        let ctx = self.base.context();
        let zs = z.apply(&self.base);
        let mut out = vec![Polynomial::zero(ctx); self.terms.len() + 1];
        for (k, p) in self.terms.iter().enumerate() {
            out[k] = &out[k] + &z.apply(p);
            let a = rat(2 * k as i64 + 1, 2);
            out[k + 1] = &out[k + 1] - &(p * &zs).scale(&a);
        }
        while out.len() > 1 && out.last().is_some_and(Polynomial::is_zero) {
            out.pop();
        }
        RadicalExpr { base: self.base.clone(), terms: out }
    }

    pub fn compose(&self, target: &Context, images: &[Polynomial]) -> Result<Self> {
        Ok(RadicalExpr {
            base: self.base.compose(target, images)?,
            terms: self.terms.iter().map(|p| p.compose(target, images)).collect::<Result<_>>()?,
        })
    }

    pub fn compile(&self) -> CompiledRadical {
        CompiledRadical { base: self.base.compile(), terms: self.terms.iter().map(Polynomial::compile).collect() }
    }
}

#[derive(Debug, Clone)]
pub struct CompiledRadical {
    base: CompiledPoly,
    terms: Vec<CompiledPoly>,
}

impl CompiledRadical {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let s = self.base.eval(x);
        let inv = 1.0 / s;
        let mut w = inv.sqrt();
        let mut acc = 0.0;
        for t in &self.terms {
            acc += t.eval(x) * w;
            w *= inv;
        }
        acc
    }
}

/// `Γ/γ₀` in closed form, generic so that jets give exact derivatives.
///
/// Uses `K(m)` through the complementary parameter `1 − m`, computed without
/// cancellation on both sides of `x₁y₁ = 0`.
pub fn closed_form_unit<S: Scalar>(x1: S, x2: S, y1: S, y2: S) -> S {
    let a = x1 * x1 + y1 * y1;
    let b = x2 - y2;
    let big_a = a * a + b * b.scale(4.0);
    let s = big_a.sqrt();
    let p = x1 * y1;
    let mc = if p.value() >= 0.0 {
        let c = x1 * x1 - y1 * y1;
        (c * c + b * b.scale(4.0)) / (s * (s + p.scale(2.0))).scale(2.0)
    } else {
        S::cst(0.5) - p / s
    };
    big_a.powf(-0.25).scale(SQRT_2) * elliptic_k_complement(mc)
}

/// [`closed_form_unit`] at `y = x + δ`, exact for offsets far below the
/// spacing of floats near `x`. Independent of `x₂`.
pub fn closed_form_offset_unit<S: Scalar>(x1: S, d1: S, d2: S) -> S {
    let y1 = x1 + d1;
    let a = x1 * x1 + y1 * y1;
    let big_a = a * a + d2 * d2.scale(4.0);
    let s = big_a.sqrt();
    let p = x1 * y1;
    let mc = if p.value() >= 0.0 {
        let c = d1 * (x1.scale(2.0) + d1);
        (c * c + d2 * d2.scale(4.0)) / (s * (s + p.scale(2.0))).scale(2.0)
    } else {
        S::cst(0.5) - p / s
    };
    big_a.powf(-0.25).scale(SQRT_2) * elliptic_k_complement(mc)
}

/// The argument `m = ½ + x₁y₁/√((x₁²+y₁²)² + 4(x₂−y₂)²)` of `K`.
pub fn elliptic_parameter(x: &[f64], y: &[f64]) -> f64 {
    let a = x[0] * x[0] + y[0] * y[0];
    let b = x[1] - y[1];
    0.5 + x[0] * y[0] / (a * a + 4.0 * b * b).sqrt()
}

/// A derivative computed along both routes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DerivativePair {
    pub representation: f64,
    pub representation_error: f64,
    pub finite_difference: f64,
}

impl DerivativePair {
    pub fn rel_diff(&self) -> f64 {
        (self.representation - self.finite_difference).abs() / self.representation.abs().max(self.finite_difference.abs())
    }
}

/// Compiled integrand of a representation formula in `(x₁, x₂, y₁, y₂, η)`.
#[derive(Debug, Clone)]
pub struct DerivativeKernel {
    word: Vec<Direction>,
    integrand: CompiledRadical,
}

impl DerivativeKernel {
    pub fn word(&self) -> &[Direction] {
        &self.word
    }
}

/// `Γ` for the Grushin plane with its Heisenberg lift.
#[derive(Debug, Clone)]
pub struct GammaGrushin {
    gamma0: f64,
    spec: SystemSpec,
    lift: LiftedSystem,
    kernel: Polynomial,
    kernel_c: CompiledPoly,
    /// `fields[j][l]` and `grads[j][l][k] = ∂_k` of the coefficient.
    fields: Vec<Vec<CompiledPoly>>,
    grads: Vec<Vec<Vec<CompiledPoly>>>,
}

impl GammaGrushin {
    pub fn new(gamma0: f64) -> Result<Self> {
        let spec = SystemSpec::grushin(1);
        let lift = build_lift(&spec)?;
        let ctx = lift.context().clone();
        let v = |i| Polynomial::var(&ctx, i);
        let (x1, x2, xi) = (v(0), v(1), v(2));
        // (x₁² + ξ²)² + 16 (x₂ − ½ x₁ξ)²
        let r2 = &(&x1 * &x1) + &(&xi * &xi);
        let t = &x2 - &(&x1 * &xi).scale(&rat(1, 2));
        let kernel = &(&r2 * &r2) + &(&t * &t).scale(&rat(16, 1));
        let kernel_c = kernel.compile();
        let fields = spec.fields().iter().map(|f| f.field.coeffs().iter().map(Polynomial::compile).collect()).collect();
        let grads = spec
            .fields()
            .iter()
            .map(|f| f.field.coeffs().iter().map(|c| (0..2).map(|k| c.partial(k).compile()).collect()).collect())
            .collect();
        Ok(GammaGrushin { gamma0, spec, lift, kernel, kernel_c, fields, grads })
    }

    /// `γ₀ = 1`; useful before calibration and for linear rescaling.
    pub fn unit() -> Result<Self> {
        Self::new(1.0)
    }

    /// Builds the engine with `γ₀` from [`calibrate_gamma0`].
    pub fn calibrated(quad: &QuadratureSpec) -> Result<(Self, Calibration)> {
        let cal = calibrate_gamma0(quad)?;
        Ok((Self::new(cal.gamma0)?, cal))
    }

    pub fn gamma0(&self) -> f64 {
        self.gamma0
    }

    pub fn with_gamma0(mut self, gamma0: f64) -> Self {
        self.gamma0 = gamma0;
        self
    }

    pub fn lift(&self) -> &LiftedSystem {
        &self.lift
    }

    pub fn spec(&self) -> &SystemSpec {
        &self.spec
    }

    /// The radicand of `Γ_G` as a polynomial in `(x₁, x₂, ξ)`.
    pub fn heisenberg_radicand(&self) -> &Polynomial {
        &self.kernel
    }

    /// `Γ_G(z) = γ₀ ((x₁²+ξ²)² + 16(x₂−½x₁ξ)²)^{−1/2}`.
    pub fn gamma_g_heis(&self, z: &[f64]) -> Result<f64> {
        if z.len() != 3 {
            return Err(Error::Arity { expected: 3, got: z.len() });
        }
        if z.iter().all(|v| *v == 0.0) {
            return Err(Error::Domain("Γ_G has its pole at the origin".into()));
        }
        Ok(self.gamma0 / self.kernel_c.eval(z).sqrt())
    }

    /// `γ₀ ∫_ℝ dη / √(((x₁−y₁)²+η²)² + 4(2x₂−2y₂+η(x₁+y₁))²)`.
    pub fn saturation(&self, x: &[f64], y: &[f64], quad: &QuadratureSpec) -> Result<QuadResult> {
        check_pair(x, y)?;
        let (dx, s, b) = (x[0] - y[0], x[0] + y[0], 2.0 * (x[1] - y[1]));
        let f = |eta: f64| {
            let u = dx * dx + eta * eta;
            let v = b + eta * s;
            1.0 / (u * u + 4.0 * v * v).sqrt()
        };
        let r = integrate_real_line(f, length_scale(x, y), Rule::Simpson, quad)?;
        Ok(QuadResult { value: self.gamma0 * r.value, error: self.gamma0 * r.error, evaluations: r.evaluations })
    }

    /// `γ₀ √2 A^{−1/4} K(½ + x₁y₁/√A)` with `A = (x₁²+y₁²)² + 4(x₂−y₂)²`.
    pub fn closed_form(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        check_pair(x, y)?;
        Ok(self.gamma0 * closed_form_unit(x[0], x[1], y[0], y[1]))
    }

    /// Value, gradient and Hessian in `(x₁, x₂, y₁, y₂)`.
    pub fn jet(&self, x: &[f64], y: &[f64]) -> Result<Jet<4>> {
        check_pair(x, y)?;
        let [a, b, c, d] = Jet::<4>::vars([x[0], x[1], y[0], y[1]]);
        Ok(closed_form_unit(a, b, c, d).scale(self.gamma0))
    }

    /// `Γ(x; x + δ)`.
    pub fn closed_form_offset(&self, x: &[f64; 2], d: &[f64; 2]) -> Result<f64> {
        if d[0] == 0.0 && d[1] == 0.0 {
            return Err(Error::Domain("Γ(x; y) has its pole at x = y".into()));
        }
        Ok(self.gamma0 * closed_form_offset_unit(x[0], d[0], d[1]))
    }

    /// Value, gradient and Hessian of `δ ↦ Γ(x; x + δ)`.
    pub fn jet_offset(&self, x: &[f64; 2], d: &[f64; 2]) -> Result<Jet<2>> {
        if d[0] == 0.0 && d[1] == 0.0 {
            return Err(Error::Domain("Γ(x; y) has its pole at x = y".into()));
        }
        let [a, b] = Jet::<2>::vars(*d);
        Ok(closed_form_offset_unit(Jet::constant(x[0]), a, b).scale(self.gamma0))
    }

    /// `Γ(x; y_i)` for many `y`, in parallel.
    pub fn grid(&self, x: &[f64], ys: &[[f64; 2]]) -> Vec<Result<f64>> {
        ys.par_iter().map(|y| self.closed_form(x, y)).collect()
    }

    fn field_at(&self, j: usize, p: &[f64]) -> [f64; 2] {
        [self.fields[j][0].eval(p), self.fields[j][1].eval(p)]
    }

    /// Coefficients of `X_j` acting on the chosen side, as a 4-vector.
    fn lifted_coeffs(&self, d: Direction, x: &[f64], y: &[f64]) -> ([f64; 4], [[f64; 4]; 4]) {
        let (p, off) = match d.side {
            Side::X => (x, 0),
            Side::Y => (y, 2),
        };
        let j = d.field - 1;
        let a = self.field_at(j, p);
        let mut v = [0.0; 4];
        let mut jac = [[0.0; 4]; 4];
        for l in 0..2 {
            v[off + l] = a[l];
            for k in 0..2 {
                jac[off + k][off + l] = self.grads[j][l][k].eval(p);
            }
        }
        (v, jac)
    }

    /// Derivative from the analytic jet of the closed form; order 3 adds one
    /// central difference (step `1e−4·d`) along the outermost field.
    pub fn derivative_jet(&self, x: &[f64], y: &[f64], word: &[Direction]) -> Result<f64> {
        check_word(word)?;
        if let [d, rest @ ..] = word {
            if rest.len() == 2 {
                let h = 1e-4 * grushin_distance_surrogate(x, y);
                let p = if d.side == Side::X { x } else { y };
                let a = self.field_at(d.field - 1, p);
                let plus = [p[0] + h * a[0], p[1] + h * a[1]];
                let minus = [p[0] - h * a[0], p[1] - h * a[1]];
                let (fp, fm) = match d.side {
                    Side::X => (self.derivative_jet(&plus, y, rest)?, self.derivative_jet(&minus, y, rest)?),
                    Side::Y => (self.derivative_jet(x, &plus, rest)?, self.derivative_jet(x, &minus, rest)?),
                };
                return Ok((fp - fm) / (2.0 * h));
            }
        }
        let j = self.jet(x, y)?;
        Ok(match word {
            [] => j.v,
            [d] => j.dir(&self.lifted_coeffs(*d, x, y).0),
            [d1, d2] => {
                // D₁D₂Γ = a₁ᵏa₂ˡ ∂ₖₗΓ + a₁ᵏ (∂ₖa₂ˡ) ∂ₗΓ
                let (a1, _) = self.lifted_coeffs(*d1, x, y);
                let (a2, jac2) = self.lifted_coeffs(*d2, x, y);
                let mut first = [0.0; 4];
                for l in 0..4 {
                    first[l] = (0..4).map(|k| a1[k] * jac2[k][l]).sum();
                }
                j.dir2(&a1, &a2) + j.dir(&first)
            }
            _ => unreachable!("order checked above"),
        })
    }

    /// Nested central differences of the closed form along the fields, step `1e−4·d`.
    pub fn derivative_fd(&self, x: &[f64], y: &[f64], word: &[Direction]) -> Result<f64> {
        check_word(word)?;
        check_pair(x, y)?;
        let h = 1e-4 * grushin_distance_surrogate(x, y);
        if !(h > f64::MIN_POSITIVE * 1e20) {
            return Err(Error::Domain("finite-difference step underflow".into()));
        }
        self.fd_rec(x, y, word, h)
    }

    fn fd_rec(&self, x: &[f64], y: &[f64], word: &[Direction], h: f64) -> Result<f64> {
        let Some((d, rest)) = word.split_first() else {
            return self.closed_form(x, y);
        };
        let p = match d.side {
            Side::X => x,
            Side::Y => y,
        };
        let a = self.field_at(d.field - 1, p);
        let plus = [p[0] + h * a[0], p[1] + h * a[1]];
        let minus = [p[0] - h * a[0], p[1] - h * a[1]];
        let (fp, fm) = match d.side {
            Side::X => (self.fd_rec(&plus, y, rest, h)?, self.fd_rec(&minus, y, rest, h)?),
            Side::Y => (self.fd_rec(x, &plus, rest, h)?, self.fd_rec(x, &minus, rest, h)?),
        };
        Ok((fp - fm) / (2.0 * h))
    }

    /// Symbolic integrand of the representation formula for `word`.
    ///
    /// The word is read as an operator product: the last letter acts first.
    pub fn derivative_kernel(&self, word: &[Direction]) -> Result<DerivativeKernel> {
        check_word(word)?;
        let lf = self.lift.lifted_fields();
        let ys: Vec<usize> = word.iter().filter(|d| d.side == Side::Y).map(|d| d.field - 1).collect();
        let xs: Vec<usize> = word.iter().filter(|d| d.side == Side::X).map(|d| d.field - 1).collect();
        let mut g = RadicalExpr::inverse_sqrt(self.kernel.clone());
        for &j in ys.iter().rev() {
            g = g.apply(&lf[j]);
        }
        let ctx5 = Variables::new(["x1", "x2", "y1", "y2", "eta"], vec![1, 2, 1, 2, 1]);
        let v = |i| Polynomial::var(&ctx5, i);
        let zero = Polynomial::zero(&ctx5);
        let (x0, y0) = ([v(0), v(1), zero.clone()], [v(2), v(3), zero]);
        let (xe, ye) = ([v(0), v(1), v(4)], [v(2), v(3), v(4)]);
        let integrand = if xs.is_empty() {
            // around (x,0)⁻¹ ∗ (y,η)
            let w = self.lift.mul_poly(&self.lift.inv_poly(&x0)?, &ye)?;
            g.compose(&ctx5, &w)?
        } else {
            if !ys.is_empty() {
                g = g.compose(self.lift.context(), self.lift.inversion())?;
            }
            for &j in xs.iter().rev() {
                g = g.apply(&lf[j]);
            }
            let w = self.lift.mul_poly(&self.lift.inv_poly(&y0)?, &xe)?;
            g.compose(&ctx5, &w)?
        };
        Ok(DerivativeKernel { word: word.to_vec(), integrand: integrand.compile() })
    }

    /// `∫_ℝ kernel(x, y, η) dη`, scaled by `γ₀`.
    pub fn derivative_representation(
        &self,
        kernel: &DerivativeKernel,
        x: &[f64],
        y: &[f64],
        quad: &QuadratureSpec,
    ) -> Result<QuadResult> {
        check_pair(x, y)?;
        let f = |eta: f64| kernel.integrand.eval(&[x[0], x[1], y[0], y[1], eta]);
        let r = integrate_real_line(f, length_scale(x, y), Rule::GaussKronrod, quad)?;
        Ok(QuadResult { value: self.gamma0 * r.value, error: self.gamma0 * r.error, evaluations: r.evaluations })
    }

    /// Both derivative routes for one word.
    pub fn derivative(&self, x: &[f64], y: &[f64], word: &[Direction], quad: &QuadratureSpec) -> Result<DerivativePair> {
        let k = self.derivative_kernel(word)?;
        let rep = self.derivative_representation(&k, x, y, quad)?;
        Ok(DerivativePair {
            representation: rep.value,
            representation_error: rep.error,
            finite_difference: self.derivative_fd(x, y, word)?,
        })
    }
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != 2 || y.len() != 2 {
        return Err(Error::Arity { expected: 2, got: if x.len() != 2 { x.len() } else { y.len() } });
    }
    if x == y {
        return Err(Error::Domain("Γ(x; y) has its pole at x = y".into()));
    }
    Ok(())
}

fn check_word(word: &[Direction]) -> Result<()> {
    if word.len() > 3 {
        return Err(Error::Unsupported("derivatives of order > 3".into()));
    }
    if let Some(d) = word.iter().find(|d| !(1..=2).contains(&d.field)) {
        return Err(Error::Index(format!("field X{} does not exist", d.field)));
    }
    Ok(())
}

/// Natural `η`-scale of the saturation integrand.
fn length_scale(x: &[f64], y: &[f64]) -> f64 {
    grushin_distance_surrogate(x, y).max(1e-300)
}

/// Smooth compactly supported test function `A (1 + ℓ(y − c)) · exp(1 − 1/(1 − |y−c|²/R²))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bump {
    pub amplitude: f64,
    pub center: [f64; 2],
    pub radius: f64,
    /// Linear factor `ℓ`.
    pub slope: [f64; 2],
}

impl Default for Bump {
    fn default() -> Self {
        Bump { amplitude: 1.0, center: [1.0, 0.3], radius: 0.6, slope: [0.5, -0.3] }
    }
}

impl Bump {
    pub fn eval<S: Scalar>(&self, y1: S, y2: S) -> S {
        let u = y1 - S::cst(self.center[0]);
        let v = y2 - S::cst(self.center[1]);
        let s = (u * u + v * v).scale(1.0 / (self.radius * self.radius));
        if s.value() >= 1.0 {
            return S::cst(0.0);
        }
        let poly = S::cst(1.0) + u.scale(self.slope[0]) + v.scale(self.slope[1]);
        poly.scale(self.amplitude) * (S::cst(1.0) - S::cst(1.0) / (S::cst(1.0) - s)).exp()
    }

    pub fn value(&self, y: &[f64]) -> f64 {
        self.eval(y[0], y[1])
    }

    /// `Lφ = ∂₁²φ + y₁² ∂₂²φ`.
    pub fn grushin_laplacian(&self, y: &[f64]) -> f64 {
        let [a, b] = Jet::<2>::vars([y[0], y[1]]);
        let j = self.eval(a, b);
        j.h[0][0] + y[0] * y[0] * j.h[1][1]
    }

    /// Farthest point of the support along direction `u` from an interior `x`.
    fn exit_radius(&self, x: &[f64], u: [f64; 2]) -> f64 {
        let w = [x[0] - self.center[0], x[1] - self.center[1]];
        let b = w[0] * u[0] + w[1] * u[1];
        let c = w[0] * w[0] + w[1] * w[1] - self.radius * self.radius;
        -b + (b * b - c).max(0.0).sqrt()
    }
}

/// `∫ Γ(x; y) Lφ(y) dy` in polar coordinates about `x` (with the given `γ₀`).
pub fn apply_to_bump(gamma: &GammaGrushin, bump: &Bump, x: &[f64], quad: &QuadratureSpec) -> Result<f64> {
    let inside = (x[0] - bump.center[0]).hypot(x[1] - bump.center[1]) < bump.radius;
    if !inside {
        return Err(Error::Domain("the test point must lie inside the bump's support".into()));
    }
    let inner = QuadratureSpec { rel_tol: quad.rel_tol * 0.1, ..*quad };
    let radial = |theta: f64| {
        let u = [theta.cos(), theta.sin()];
        let rmax = bump.exit_radius(x, u);
        let f = |r: f64| {
            if r <= 0.0 {
                return 0.0;
            }
            let y = [x[0] + r * u[0], x[1] + r * u[1]];
            let g = gamma.gamma0 * closed_form_unit(x[0], x[1], y[0], y[1]);
            g * bump.grushin_laplacian(&y) * r
        };
        gauss_kronrod(f, 0.0, rmax, &inner).map_or(f64::NAN, |r| r.value)
    };
    Ok(gauss_kronrod(radial, 0.0, 2.0 * PI, quad)?.value)
}

/// Outcome of [`calibrate_gamma0`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Calibration {
    pub gamma0: f64,
    pub bump: Bump,
    pub test_point: [f64; 2],
    pub check_point: [f64; 2],
    /// `|γ₀ ∫Γ₁Lφ + φ| / |φ|` at the check point.
    pub residual: f64,
}

pub const CALIBRATION_TEST_POINT: [f64; 2] = [1.1, 0.35];
pub const CALIBRATION_CHECK_POINT: [f64; 2] = [0.85, 0.15];

/// Fixes `γ₀` from `∫Γ(x; y) Lφ(y) dy = −φ(x)` at a test point (by linearity,
/// the integral is computed with `γ₀ = 1`) and reports the residual at a
/// second point.
pub fn calibrate_gamma0(quad: &QuadratureSpec) -> Result<Calibration> {
    calibrate_with(&Bump::default(), CALIBRATION_TEST_POINT, CALIBRATION_CHECK_POINT, quad)
}

pub fn calibrate_with(bump: &Bump, test: [f64; 2], check: [f64; 2], quad: &QuadratureSpec) -> Result<Calibration> {
    let unit = GammaGrushin::unit()?;
    let i_test = apply_to_bump(&unit, bump, &test, quad)?;
    if i_test == 0.0 || !i_test.is_finite() {
        return Err(Error::Tolerance { reason: "degenerate calibration integral".into(), estimate: i_test });
    }
    let gamma0 = -bump.value(&test) / i_test;
    let i_check = apply_to_bump(&unit, bump, &check, quad)?;
    let phi = bump.value(&check);
    let residual = (gamma0 * i_check + phi).abs() / phi.abs();
    if residual > 1e-2 {
        return Err(Error::Tolerance { reason: "γ₀ calibration is not self-consistent".into(), estimate: residual });
    }
    Ok(Calibration { gamma0, bump: *bump, test_point: test, check_point: check, residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::elliptic_k;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn quad() -> QuadratureSpec {
        QuadratureSpec::with_rel_tol(1e-10)
    }

    #[test]
    fn heisenberg_kernel_values() {
        let g = GammaGrushin::new(2.0).unwrap();
        assert_eq!(g.gamma_g_heis(&[1.0, 0.0, 0.0]).unwrap(), 2.0);
        assert_eq!(g.gamma_g_heis(&[0.0, 1.0, 0.0]).unwrap(), 0.5);
        assert!(g.gamma_g_heis(&[0.0, 0.0, 0.0]).is_err());
        let z = [0.3, -0.7, 1.1];
        for lam in [0.5, 2.0, 3.0] {
            let dz = g.lift().dilate_f64(lam, &z);
            let r = g.gamma_g_heis(&dz).unwrap() / g.gamma_g_heis(&z).unwrap();
            assert!((r * lam * lam - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn closed_form_matches_saturation() {
        let g = GammaGrushin::unit().unwrap();
        let pairs = [([1.0, 0.0], [0.0, 1.0]), ([0.5, -0.2], [-0.7, 0.4]), ([0.0, 0.0], [0.3, 0.1]), ([1.0, 1.0], [1.001, 1.0])];
        for (x, y) in pairs {
            let a = g.closed_form(&x, &y).unwrap();
            let b = g.saturation(&x, &y, &QuadratureSpec::with_rel_tol(1e-9)).unwrap().value;
            assert!((a - b).abs() / a < 1e-6, "{x:?} {y:?}: {a} vs {b}");
        }
    }

    #[test]
    fn offset_form_matches_and_resolves_tiny_offsets() {
        let g = GammaGrushin::unit().unwrap();
        for (x, y) in [([1.0, 1.0], [0.3, -0.2]), ([-0.4, 0.2], [0.5, 0.9]), ([0.0, 0.0], [0.0, 0.3])] {
            let d = [y[0] - x[0], y[1] - x[1]];
            let a = g.closed_form(&x, &y).unwrap();
            assert!((g.closed_form_offset(&x, &d).unwrap() - a).abs() < 1e-13 * a);
            let (j, k) = (g.jet(&x, &y).unwrap(), g.jet_offset(&x, &d).unwrap());
            assert!((j.g[2] - k.g[0]).abs() < 1e-10 * j.g[2].abs().max(1.0));
            assert!((j.h[3][3] - k.h[1][1]).abs() < 1e-9 * j.h[3][3].abs().max(1.0));
        }
        // logarithmic growth off the axis: Γ ≈ a ln(1/ρ) + b in the offset
        let x = [1.0, 1.0];
        let v: Vec<f64> = [1e-20, 1e-40, 1e-60].iter().map(|&r| g.closed_form_offset(&x, &[r, 0.0]).unwrap()).collect();
        assert!(((v[2] - v[1]) - (v[1] - v[0])).abs() < 1e-9 * v[2]);
        assert!(!g.closed_form_offset(&x, &[0.0, 0.0]).is_ok());
    }

    #[test]
    fn closed_form_on_the_axis() {
        let g = GammaGrushin::unit().unwrap();
        let (x2, y): (f64, [f64; 2]) = (0.4, [0.7, -0.2]);
        let expect: f64 = SQRT_2 * elliptic_k(0.5).unwrap() * (y[0].powi(4) + 4.0 * (x2 - y[1]) * (x2 - y[1])).powf(-0.25);
        assert!((g.closed_form(&[0.0, x2], &y).unwrap() - expect).abs() < 1e-14);
        assert!(g.closed_form(&[1.0, 2.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn parameter_domain() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100_000 {
            let x: [f64; 2] = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
            let y: [f64; 2] = [rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0)];
            let m = elliptic_parameter(&x, &y);
            if x[0] * y[0] > 0.0 {
                assert!(m > 0.0 && m < 1.0);
            } else {
                assert!(m > -1.0 && m <= 0.5);
            }
        }
    }

    #[test]
    fn symmetry_homogeneity_positivity() {
        let g = GammaGrushin::unit().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let x = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
            let y = [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)];
            let lam: f64 = rng.gen_range(0.1..5.0);
            let v = g.closed_form(&x, &y).unwrap();
            assert!(v > 0.0);
            assert!((g.closed_form(&y, &x).unwrap() / v - 1.0).abs() < 1e-12);
            let dx = [lam * x[0], lam * lam * x[1]];
            let dy = [lam * y[0], lam * lam * y[1]];
            assert!((g.closed_form(&dx, &dy).unwrap() * lam / v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn pole_at_the_diagonal() {
        let g = GammaGrushin::unit().unwrap();
        // off the axis the singularity is only logarithmic, so stay near x₁ = 0
        for x in [[1e-3, 0.5], [0.0, 0.0], [0.0, -1.5]] {
            // Γ ≥ 10³ once the surrogate distance drops below some δ(x)
            let f = |t: f64| g.closed_form(&x, &[x[0] + t, x[1] + t * t]).unwrap();
            let (mut lo, mut hi) = (0.0f64, 1.0f64);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                if f(mid) >= 1e3 {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            assert!(lo > 0.0);
            for k in 1..20 {
                assert!(f(lo * k as f64 / 20.0) >= 1e3);
            }
        }
    }

    #[test]
    fn word_parsing() {
        assert_eq!(parse_word("X1^x X2^y").unwrap(), vec![Direction::x(1), Direction::y(2)]);
        assert_eq!(parse_word("X2y,X1x").unwrap(), vec![Direction::y(2), Direction::x(1)]);
        assert!(parse_word("X3^x").is_err());
        assert!(parse_word("Y1^x").is_err());
        assert_eq!(Direction::y(2).to_string(), "X2^y");
    }

    #[test]
    fn radical_expr_differentiates_like_the_closed_form() {
        let g = GammaGrushin::unit().unwrap();
        let ctx = g.lift().context().clone();
        let e = RadicalExpr::inverse_sqrt(g.heisenberg_radicand().clone());
        let d = e.apply(&g.lift().lifted_fields()[1]).apply(&g.lift().lifted_fields()[0]).compile();
        let z = [0.4, -0.3, 0.8];
        let f = |z: &[f64]| 1.0 / g.heisenberg_radicand().eval_f64(z).unwrap().sqrt();
        // X̃₁X̃₂ by nested differences
        let h = 1e-4;
        let x2 = |z: [f64; 3]| (f(&[z[0], z[1] + h * z[0], z[2] + h]) - f(&[z[0], z[1] - h * z[0], z[2] - h])) / (2.0 * h);
        let fd = (x2([z[0] + h, z[1], z[2]]) - x2([z[0] - h, z[1], z[2]])) / (2.0 * h);
        assert!((d.eval(&z) - fd).abs() < 1e-6 * fd.abs().max(1.0), "{} {}", d.eval(&z), fd);
        assert_eq!(ctx.len(), 3);
    }

    #[test]
    fn derivatives_agree() {
        let g = GammaGrushin::unit().unwrap();
        let p = g.derivative(&[1.0, 0.0], &[2.0, 0.0], &[Direction::y(1)], &quad()).unwrap();
        assert!(p.rel_diff() < 1e-4, "{p:?}");
        let words = [
            vec![Direction::x(1)],
            vec![Direction::x(2)],
            vec![Direction::y(2)],
            vec![Direction::x(1), Direction::y(2)],
            vec![Direction::x(2), Direction::x(1)],
            vec![Direction::y(1), Direction::y(2)],
        ];
        for (x, y) in [([0.7, -0.2], [-0.4, 0.5]), ([1.2, 0.3], [0.9, -0.6])] {
            for w in &words {
                let p = g.derivative(&x, &y, w, &quad()).unwrap();
                let jet = g.derivative_jet(&x, &y, w).unwrap();
                assert!(p.rel_diff() < 1e-3, "{w:?}: {p:?}");
                assert!((jet - p.representation).abs() < 1e-6 * jet.abs().max(1e-3), "{w:?}: {jet} {p:?}");
            }
        }
    }

    #[test]
    fn derivative_decays_along_a_ray() {
        let g = GammaGrushin::unit().unwrap();
        let x = [0.5, 0.2];
        let vals: Vec<f64> = (1..8)
            .map(|k| {
                let t = 2f64.powi(k);
                g.derivative_jet(&x, &[t, t * 0.3], &[Direction::y(1)]).unwrap().abs()
            })
            .collect();
        assert!(vals.windows(2).all(|w| w[1] < w[0]));
    }

    #[test]
    fn calibration_is_self_consistent() {
        let spec = QuadratureSpec::with_rel_tol(1e-8);
        let cal = calibrate_gamma0(&spec).unwrap();
        assert!(cal.residual < 1e-3, "{cal:?}");
        // doubling φ leaves γ₀ unchanged
        let b2 = Bump { amplitude: 2.0, ..cal.bump };
        let c2 = calibrate_with(&b2, cal.test_point, cal.check_point, &spec).unwrap();
        assert!((c2.gamma0 / cal.gamma0 - 1.0).abs() < 1e-14);
        let g = GammaGrushin::new(cal.gamma0).unwrap();
        let third = [1.2, 0.5];
        let got = apply_to_bump(&g, &cal.bump, &third, &spec).unwrap();
        assert!((got + cal.bump.value(&third)).abs() / cal.bump.value(&third) < 1e-3);
    }
}
