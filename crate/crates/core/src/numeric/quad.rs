//! Adaptive one-dimensional quadrature.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureSpec {
    pub rel_tol: f64,
    pub abs_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        QuadratureSpec { rel_tol: 1e-8, abs_tol: 1e-14, max_subdivisions: 4000 }
    }
}

impl QuadratureSpec {
    pub fn with_rel_tol(rel_tol: f64) -> Self {
        QuadratureSpec { rel_tol, ..Self::default() }
    }

    fn target(&self, value: f64) -> f64 {
        self.abs_tol.max(self.rel_tol * value.abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    pub error: f64,
    pub evaluations: usize,
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728,
];
const WG: [f64; 4] = [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

fn gk15(f: &mut impl FnMut(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut k = fc * WGK[7];
    let mut g = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        k += WGK[j] * s;
        if j % 2 == 1 {
            g += WG[j / 2] * s;
        }
    }
    (k * h, ((k - g) * h).abs())
}

struct Piece {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Piece {
    fn eq(&self, o: &Self) -> bool {
        self.error == o.error
    }
}
impl Eq for Piece {}
impl PartialOrd for Piece {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        Some(self.cmp(o))
    }
}
impl Ord for Piece {
    fn cmp(&self, o: &Self) -> Ordering {
        self.error.total_cmp(&o.error)
    }
}

/// Globally adaptive Gauss–Kronrod (7/15) quadrature on `[a, b]`.
pub fn gauss_kronrod(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, spec: &QuadratureSpec) -> Result<QuadResult> {
    if a == b {
        return Ok(QuadResult { value: 0.0, error: 0.0, evaluations: 0 });
    }
    let (v, e) = gk15(&mut f, a, b);
    let mut evals = 15;
    let mut heap = BinaryHeap::new();
    heap.push(Piece { a, b, value: v, error: e });
    let (mut total, mut err) = (v, e);
    while err > spec.target(total) {
        if !total.is_finite() {
            return Err(Error::Tolerance { reason: "non-finite integrand".into(), estimate: f64::INFINITY });
        }
        if heap.len() >= spec.max_subdivisions {
            return Err(Error::Tolerance { reason: format!("quadrature on [{a}, {b}] did not converge"), estimate: err });
        }
        let p = heap.pop().unwrap();
        let m = 0.5 * (p.a + p.b);
        if m <= p.a || m >= p.b {
            return Err(Error::Tolerance { reason: "interval underflow in quadrature".into(), estimate: err });
        }
        let (v1, e1) = gk15(&mut f, p.a, m);
        let (v2, e2) = gk15(&mut f, m, p.b);
        evals += 30;
        total += v1 + v2 - p.value;
        err += e1 + e2 - p.error;
        heap.push(Piece { a: p.a, b: m, value: v1, error: e1 });
        heap.push(Piece { a: m, b: p.b, value: v2, error: e2 });
        if heap.len() % 64 == 0 {
            // resum to avoid drift from incremental updates
            total = heap.iter().map(|p| p.value).sum();
            err = heap.iter().map(|p| p.error).sum();
        }
    }
    Ok(QuadResult { value: total, error: err, evaluations: evals })
}

/// Adaptive Simpson quadrature on `[a, b]` with Richardson correction.
pub fn adaptive_simpson(mut f: impl FnMut(f64) -> f64, a: f64, b: f64, spec: &QuadratureSpec) -> Result<QuadResult> {
    let fa = f(a);
    let fm = f(0.5 * (a + b));
    let fb = f(b);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    // a coarse composite pass fixes the absolute target
    let coarse: f64 = {
        let n = 16;
        let h = (b - a) / n as f64;
        (0..n)
            .map(|i| {
                let x0 = a + i as f64 * h;
                h / 6.0 * (f(x0) + 4.0 * f(x0 + 0.5 * h) + f(x0 + h))
            })
            .sum()
    };
    let tol = spec.target(coarse);
    let mut evals = 3 + 48;
    let mut total = 0.0;
    let mut err = 0.0;
    // (a, b, fa, fm, fb, estimate, tolerance, depth)
    let mut stack = vec![(a, b, fa, fm, fb, whole, tol, 0u32)];
    let mut pieces = 0usize;
    while let Some((a, b, fa, fm, fb, s, tol, depth)) = stack.pop() {
        let m = 0.5 * (a + b);
        let flm = f(0.5 * (a + m));
        let frm = f(0.5 * (m + b));
        evals += 2;
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        let delta = left + right - s;
        if delta.abs() <= 15.0 * tol || depth >= 60 {
            if depth >= 60 && delta.abs() > 15.0 * tol {
                return Err(Error::Tolerance { reason: "adaptive Simpson hit the depth limit".into(), estimate: delta.abs() });
            }
            total += left + right + delta / 15.0;
            err += delta.abs() / 15.0;
            pieces += 1;
            if pieces > 64 * spec.max_subdivisions {
                return Err(Error::Tolerance { reason: "adaptive Simpson exceeded its budget".into(), estimate: err });
            }
        } else {
            stack.push((a, m, fa, flm, fm, left, 0.5 * tol, depth + 1));
            stack.push((m, b, fm, frm, fb, right, 0.5 * tol, depth + 1));
        }
    }
    if !total.is_finite() {
        return Err(Error::Tolerance { reason: "non-finite integrand".into(), estimate: f64::INFINITY });
    }
    Ok(QuadResult { value: total, error: err, evaluations: evals })
}

/// Which rule [`integrate_real_line`] uses on the compactified interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Rule {
    Simpson,
    GaussKronrod,
}

/// `∫_ℝ f(η) dη` through `η = L·s/(1 − s²)`, `s ∈ (−1, 1)`.
///
/// `scale` (`L`) should be comparable to the width of the integrand's bulk.
pub fn integrate_real_line(
    mut f: impl FnMut(f64) -> f64,
    scale: f64,
    rule: Rule,
    spec: &QuadratureSpec,
) -> Result<QuadResult> {
    const EDGE: f64 = 1.0 - 1.0 / (1u64 << 40) as f64;
    let g = move |s: f64| {
        let s = s.clamp(-EDGE, EDGE);
        let d = 1.0 - s * s;
        let eta = scale * s / d;
        let jac = scale * (1.0 + s * s) / (d * d);
        let v = f(eta) * jac;
        if v.is_finite() {
            v
        } else {
            0.0
        }
    };
    match rule {
        Rule::Simpson => adaptive_simpson(g, -1.0, 1.0, spec),
        Rule::GaussKronrod => gauss_kronrod(g, -1.0, 1.0, spec),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn polynomial_and_smooth() {
        let s = QuadratureSpec::with_rel_tol(1e-12);
        let r = gauss_kronrod(|x| x.powi(5) - 3.0 * x, 0.0, 2.0, &s).unwrap();
        assert!((r.value - (64.0 / 6.0 - 6.0)).abs() < 1e-12);
        let r = adaptive_simpson(|x: f64| x.sin(), 0.0, PI, &s).unwrap();
        assert!((r.value - 2.0).abs() < 1e-10);
    }

    #[test]
    fn endpoint_singularity() {
        let s = QuadratureSpec::with_rel_tol(1e-10);
        let r = gauss_kronrod(|x: f64| x.ln(), 0.0, 1.0, &s).unwrap();
        assert!((r.value + 1.0).abs() < 1e-9);
    }

    #[test]
    fn real_line() {
        let s = QuadratureSpec::with_rel_tol(1e-10);
        for rule in [Rule::Simpson, Rule::GaussKronrod] {
            let r = integrate_real_line(|x| 1.0 / (1.0 + x * x), 1.0, rule, &s).unwrap();
            assert!((r.value - PI).abs() < 1e-8, "{rule:?} {}", r.value);
            let r = integrate_real_line(|x| (-x * x).exp(), 0.5, rule, &s).unwrap();
            assert!((r.value - PI.sqrt()).abs() < 1e-8);
        }
    }

    #[test]
    fn failure_is_reported() {
        let s = QuadratureSpec { rel_tol: 1e-14, abs_tol: 0.0, max_subdivisions: 5 };
        assert!(matches!(gauss_kronrod(|x: f64| 1.0 / x.sqrt(), 0.0, 1.0, &s), Err(Error::Tolerance { .. })));
    }
}
