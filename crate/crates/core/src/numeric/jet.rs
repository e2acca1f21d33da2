//! Truncated Taylor arithmetic: value, gradient and Hessian in `D` variables.

use std::ops::{Add, Div, Mul, Neg, Sub};

/// Arithmetic shared by `f64` and [`Jet`].
pub trait Scalar:
    Copy + Add<Output = Self> + Sub<Output = Self> + Mul<Output = Self> + Div<Output = Self> + Neg<Output = Self>
{
    fn cst(c: f64) -> Self;
    fn value(&self) -> f64;
    fn sqrt(self) -> Self;
    fn powf(self, p: f64) -> Self;
    fn ln(self) -> Self;
    fn exp(self) -> Self;
    fn abs(self) -> Self;

    fn scale(self, c: f64) -> Self {
        self * Self::cst(c)
    }
}

impl Scalar for f64 {
    fn cst(c: f64) -> Self {
        c
    }
    fn value(&self) -> f64 {
        *self
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn powf(self, p: f64) -> Self {
        f64::powf(self, p)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn abs(self) -> Self {
        f64::abs(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jet<const D: usize> {
    pub v: f64,
    pub g: [f64; D],
    pub h: [[f64; D]; D],
}

impl<const D: usize> Jet<D> {
    pub fn constant(v: f64) -> Self {
        Jet { v, g: [0.0; D], h: [[0.0; D]; D] }
    }

    /// The coordinate function `x_i` with value `v`.
    pub fn var(v: f64, i: usize) -> Self {
        let mut j = Self::constant(v);
        j.g[i] = 1.0;
        j
    }

    /// Seeds a point as a vector of independent variables.
    pub fn vars(x: [f64; D]) -> [Self; D] {
        std::array::from_fn(|i| Self::var(x[i], i))
    }

    /// `f(self)` given `f`, `f′`, `f″` at the value.
    fn chain(self, f0: f64, f1: f64, f2: f64) -> Self {
        let mut out = Self::constant(f0);
        for i in 0..D {
            out.g[i] = f1 * self.g[i];
            for k in 0..D {
                out.h[i][k] = f1 * self.h[i][k] + f2 * self.g[i] * self.g[k];
            }
        }
        out
    }

    /// Derivative of the scalar along direction `a` (`Σ a_i ∂_i`).
    pub fn dir(&self, a: &[f64; D]) -> f64 {
        (0..D).map(|i| a[i] * self.g[i]).sum()
    }

    /// Second derivative `Σ a_i b_k ∂_i∂_k`.
    pub fn dir2(&self, a: &[f64; D], b: &[f64; D]) -> f64 {
        let mut s = 0.0;
        for i in 0..D {
            for k in 0..D {
                s += a[i] * b[k] * self.h[i][k];
            }
        }
        s
    }
}

impl<const D: usize> Add for Jet<D> {
    type Output = Self;
    fn add(mut self, o: Self) -> Self {
        self.v += o.v;
        for i in 0..D {
            self.g[i] += o.g[i];
            for k in 0..D {
                self.h[i][k] += o.h[i][k];
            }
        }
        self
    }
}

impl<const D: usize> Neg for Jet<D> {
    type Output = Self;
    fn neg(mut self) -> Self {
        self.v = -self.v;
        for i in 0..D {
            self.g[i] = -self.g[i];
            for k in 0..D {
                self.h[i][k] = -self.h[i][k];
            }
        }
        self
    }
}

impl<const D: usize> Sub for Jet<D> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        self + (-o)
    }
}

impl<const D: usize> Mul for Jet<D> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let mut out = Self::constant(self.v * o.v);
        for i in 0..D {
            out.g[i] = self.v * o.g[i] + o.v * self.g[i];
            for k in 0..D {
                out.h[i][k] =
                    self.v * o.h[i][k] + o.v * self.h[i][k] + self.g[i] * o.g[k] + o.g[i] * self.g[k];
            }
        }
        out
    }
}

impl<const D: usize> Div for Jet<D> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let r = 1.0 / o.v;
        self * o.chain(r, -r * r, 2.0 * r * r * r)
    }
}

impl<const D: usize> Scalar for Jet<D> {
    fn cst(c: f64) -> Self {
        Self::constant(c)
    }
    fn value(&self) -> f64 {
        self.v
    }
    fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        self.chain(s, 0.5 / s, -0.25 / (s * self.v))
    }
    fn powf(self, p: f64) -> Self {
        let v = self.v;
        self.chain(v.powf(p), p * v.powf(p - 1.0), p * (p - 1.0) * v.powf(p - 2.0))
    }
    fn ln(self) -> Self {
        let v = self.v;
        self.chain(v.ln(), 1.0 / v, -1.0 / (v * v))
    }
    fn exp(self) -> Self {
        let e = self.v.exp();
        self.chain(e, e, e)
    }
    fn abs(self) -> Self {
        if self.v < 0.0 {
            -self
        } else {
            self
        }
    }
    fn scale(mut self, c: f64) -> Self {
        self.v *= c;
        for i in 0..D {
            self.g[i] *= c;
            for k in 0..D {
                self.h[i][k] *= c;
            }
        }
        self
    }
}
