//! Polynomial vector fields.

use std::fmt;

use crate::error::{Error, Result};
use crate::linalg::SparseVec;
use crate::poly::{Context, Monomial, Polynomial, Rational};

/// `Σ coeffs[i] ∂/∂v_i`, where `v_i` are the first `coeffs.len()` variables of
/// the context. Any further context variables act as parameters.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct VectorField {
    coeffs: Vec<Polynomial>,
}

impl fmt::Debug for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "VectorField{self}")
    }
}

impl fmt::Display for VectorField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.coeffs.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

impl VectorField {
    pub fn new(coeffs: Vec<Polynomial>) -> Result<Self> {
        let Some(first) = coeffs.first() else {
            return Err(Error::Arity { expected: 1, got: 0 });
        };
        let ctx = first.context().clone();
        if ctx.len() < coeffs.len() {
            return Err(Error::Arity { expected: ctx.len(), got: coeffs.len() });
        }
        for c in &coeffs[1..] {
            first.check_context(c)?;
        }
        Ok(VectorField { coeffs })
    }

    pub fn zero(ctx: &Context, dim: usize) -> Self {
        VectorField { coeffs: vec![Polynomial::zero(ctx); dim] }
    }

    /// The coordinate field `∂/∂v_i`.
    pub fn coordinate(ctx: &Context, dim: usize, i: usize) -> Self {
        let mut f = Self::zero(ctx, dim);
        f.coeffs[i] = Polynomial::one(ctx);
        f
    }

    pub fn dim(&self) -> usize {
        self.coeffs.len()
    }

    pub fn context(&self) -> &Context {
        self.coeffs[0].context()
    }

    pub fn coeffs(&self) -> &[Polynomial] {
        &self.coeffs
    }

    pub fn coeff(&self, i: usize) -> &Polynomial {
        &self.coeffs[i]
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(Polynomial::is_zero)
    }

    /// Directional derivative `X f`.
    pub fn apply(&self, f: &Polynomial) -> Polynomial {
        let mut acc = Polynomial::zero(f.context());
        for (i, a) in self.coeffs.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            let d = f.partial(i);
            if !d.is_zero() {
                acc = &acc + &(a * &d);
            }
        }
        acc
    }

    pub fn scale(&self, c: &Rational) -> Self {
        VectorField { coeffs: self.coeffs.iter().map(|p| p.scale(c)).collect() }
    }

    pub fn neg(&self) -> Self {
        VectorField { coeffs: self.coeffs.iter().map(|p| -p).collect() }
    }

    pub fn add(&self, other: &Self) -> Self {
        VectorField { coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a + b).collect() }
    }

    pub fn sub(&self, other: &Self) -> Self {
        VectorField { coeffs: self.coeffs.iter().zip(&other.coeffs).map(|(a, b)| a - b).collect() }
    }

    /// Multiplies every coefficient by a polynomial.
    pub fn mul_poly(&self, p: &Polynomial) -> Self {
        VectorField { coeffs: self.coeffs.iter().map(|a| a * p).collect() }
    }

    /// Commutator `[X, Y] = XY − YX`.
    pub fn bracket(&self, other: &Self) -> Result<Self> {
        if self.dim() != other.dim() {
            return Err(Error::Context(format!(
                "vector fields of dimension {} and {}",
                self.dim(),
                other.dim()
            )));
        }
        self.coeffs[0].check_context(&other.coeffs[0])?;
        let coeffs = (0..self.dim())
            .map(|i| &self.apply(&other.coeffs[i]) - &other.apply(&self.coeffs[i]))
            .collect();
        Ok(VectorField { coeffs })
    }

    pub fn eval_rational(&self, point: &[Rational]) -> Result<Vec<Rational>> {
        self.coeffs.iter().map(|c| c.eval_rational(point)).collect()
    }

    pub fn eval_f64(&self, point: &[f64]) -> Result<Vec<f64>> {
        self.coeffs.iter().map(|c| c.eval_f64(point)).collect()
    }

    /// Coefficients flattened into a sparse vector keyed by (component, monomial).
    pub fn sparse(&self) -> SparseVec<(usize, Monomial)> {
        let mut v = SparseVec::new();
        for (i, c) in self.coeffs.iter().enumerate() {
            for (m, r) in c.terms() {
                v.insert((i, m.clone()), r.clone());
            }
        }
        v
    }

    /// Components whose coefficient is not δ-homogeneous of degree
    /// `weight_i − deg` (with a negative target degree only the zero
    /// coefficient is admissible).
    pub fn degree_violations(&self, deg: u32) -> Vec<usize> {
        let w = self.context().weights().to_vec();
        (0..self.dim())
            .filter(|&i| {
                let c = &self.coeffs[i];
                if c.is_zero() {
                    return false;
                }
                if w[i] < deg {
                    return true;
                }
                !c.is_homogeneous_of(w[i] - deg)
            })
            .collect()
    }

    /// The homogeneity degree, if the field is non-zero and homogeneous.
    pub fn homogeneous_degree(&self) -> Option<u32> {
        let w = self.context().weights();
        let mut found: Option<i64> = None;
        for (i, c) in self.coeffs.iter().enumerate() {
            for d in c.degrees() {
                let cand = w[i] as i64 - d as i64;
                match found {
                    None => found = Some(cand),
                    Some(f) if f != cand => return None,
                    _ => {}
                }
            }
        }
        found.filter(|&d| d >= 0).map(|d| d as u32)
    }

    /// Re-expresses every coefficient in a larger context.
    pub fn embed(&self, target: &Context) -> Result<Self> {
        Ok(VectorField { coeffs: self.coeffs.iter().map(|c| c.embed(target)).collect::<Result<_>>()? })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::{int, Variables};

    #[test]
    fn grushin_bracket() {
        let c = Variables::indexed("x", vec![1, 2]);
        let x1 = Polynomial::var(&c, 0);
        let d1 = VectorField::coordinate(&c, 2, 0);
        let x2f = VectorField::new(vec![Polynomial::zero(&c), x1.clone()]).unwrap();
        let b = d1.bracket(&x2f).unwrap();
        assert_eq!(b, VectorField::coordinate(&c, 2, 1));
        assert_eq!(x2f.homogeneous_degree(), Some(1));
        assert_eq!(b.homogeneous_degree(), Some(2));
        assert!(d1.bracket(&d1).unwrap().is_zero());
        assert_eq!(b.eval_rational(&[int(3), int(4)]).unwrap(), vec![int(0), int(1)]);
    }
}
