//! Complete elliptic integral of the first kind via the arithmetic–geometric mean.

use std::f64::consts::FRAC_PI_2;

use super::jet::Scalar;
use crate::error::{Error, Result};

/// Arithmetic–geometric mean of positive `a`, `b`.
///
/// Runs two extra rounds after the values agree so that derivative parts of
/// jets settle as well.
pub fn agm<S: Scalar>(mut a: S, mut b: S) -> S {
    let mut extra = 0;
    for _ in 0..80 {
        let (av, bv) = (a.value(), b.value());
        if (av - bv).abs() <= 4.0 * f64::EPSILON * av.abs() {
            extra += 1;
            if extra > 2 {
                break;
            }
        }
        let next_a = (a + b).scale(0.5);
        b = (a * b).sqrt();
        a = next_a;
    }
    a
}

/// `K(m)` in terms of the complementary parameter `mc = 1 − m`.
///
/// Accurate near `m → 1` when `mc` is known without cancellation.
pub fn elliptic_k_complement<S: Scalar>(mc: S) -> S {
    S::cst(FRAC_PI_2) / agm(S::cst(1.0), mc.sqrt())
}

/// `K(m) = ∫₀^{π/2} dθ / √(1 − m sin²θ)` for `−1 < m < 1`.
pub fn elliptic_k(m: f64) -> Result<f64> {
    if !(m > -1.0 && m < 1.0) {
        return Err(Error::Domain(format!("elliptic K needs −1 < m < 1, got {m}")));
    }
    Ok(elliptic_k_complement(1.0 - m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::jet::Jet;
    use crate::numeric::quad::{gauss_kronrod, QuadratureSpec};

    fn k_quad(m: f64) -> f64 {
        let spec = QuadratureSpec { rel_tol: 1e-14, abs_tol: 0.0, max_subdivisions: 2000 };
        gauss_kronrod(|t: f64| 1.0 / (1.0 - m * t.sin().powi(2)).sqrt(), 0.0, FRAC_PI_2, &spec).unwrap().value
    }

    #[test]
    fn known_values() {
        assert!((elliptic_k(0.0).unwrap() - FRAC_PI_2).abs() < 1e-15);
        assert!((elliptic_k(0.5).unwrap() - 1.854_074_677_301_372).abs() < 1e-14);
        assert!(elliptic_k(1.0).is_err());
        assert!(elliptic_k(-1.0).is_err());
        assert!(elliptic_k(f64::NAN).is_err());
    }

    #[test]
    fn agrees_with_quadrature() {
        for i in 0..=30 {
            let m = -0.9 + i as f64 * (0.99 + 0.9) / 30.0;
            let a = elliptic_k(m).unwrap();
            assert!((a - k_quad(m)).abs() / a < 1e-12, "m={m}");
        }
    }

    #[test]
    fn increasing_and_log_asymptotic() {
        let mut prev = 0.0;
        for i in 0..100 {
            let k = elliptic_k(i as f64 / 100.0).unwrap();
            assert!(k > prev);
            prev = k;
        }
        let mc = 1e-6;
        let r = elliptic_k(1.0 - mc).unwrap() / (-0.5 * mc.ln());
        assert!((r - 1.0).abs() < 0.25);
        // K(m) = ln 4 − ½ ln(1−m) + O((1−m) ln(1−m))
        for mc in [1e-8, 1e-12, 1e-20] {
            let k = elliptic_k_complement(mc);
            assert!((k - (4f64.ln() - 0.5 * f64::ln(mc))).abs() < 10.0 * mc * mc.ln().abs() + 1e-14);
        }
    }

    #[test]
    fn derivative_through_agm() {
        // dK/dm = (E − (1−m)K) / (2m(1−m)), with E from quadrature
        let m = 0.3;
        let j = elliptic_k_complement(Jet::<1>::constant(1.0) - Jet::<1>::var(m, 0));
        let spec = QuadratureSpec { rel_tol: 1e-14, abs_tol: 0.0, max_subdivisions: 2000 };
        let e = gauss_kronrod(|t: f64| (1.0 - m * t.sin().powi(2)).sqrt(), 0.0, FRAC_PI_2, &spec).unwrap().value;
        let dk = (e - (1.0 - m) * j.v) / (2.0 * m * (1.0 - m));
        assert!((j.g[0] - dk).abs() < 1e-12);
    }
}
