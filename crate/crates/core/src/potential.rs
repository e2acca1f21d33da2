//! Mean-value operators for the Grushin operator `L = ∂₁² + y₁²∂₂²`.
//!
//! Everything is built on the superlevel sets `Ω_r(x) = {Γ(x;·) > 1/r}`,
//! extracted as closed polylines. Boundary integrals run along the
//! polylines; solid integrals run along rays from the pole, clipped by the
//! polylines and refined on `Γ` itself.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimates::{annulus_integral, EstimateReport, Gate, Geometry};
use crate::gamma::GammaGrushin;
use crate::numeric::contour::{self, marching_squares, Grid};
use crate::numeric::quad::{gauss_kronrod, QuadResult, QuadratureSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeshSpec {
    /// Cells per axis of the contouring grid.
    pub cells: usize,
    /// Bisection tolerance for contour crossings, relative to the set's extent.
    pub contour_tol: f64,
    /// How often the grid may be enlarged when a contour leaves it.
    pub max_enlargements: usize,
}

impl Default for MeshSpec {
    fn default() -> Self {
        MeshSpec { cells: 200, contour_tol: 1e-10, max_enlargements: 6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PotentialOptions {
    pub alpha: f64,
    pub mesh: MeshSpec,
    #[serde(skip)]
    pub quad: QuadratureSpec,
    /// Intervals of the trapezoid rule in `ρ` for `Q_r`.
    pub rho_steps: usize,
    /// Relative size of the modelled (not integrated) disc around the pole.
    pub excision_tol: f64,
}

impl Default for PotentialOptions {
    fn default() -> Self {
        PotentialOptions {
            alpha: 3.0,
            mesh: MeshSpec::default(),
            quad: QuadratureSpec { rel_tol: 1e-7, abs_tol: 1e-15, max_subdivisions: 2000 },
            rho_steps: 16,
            excision_tol: 1e-6,
        }
    }
}

/// Boundary of `Ω_r(x)` as closed polylines.
///
/// Vertices are stored as offsets `y − x` from the pole: off the axis the
/// sets shrink like `exp(−c/r)` and quickly fall below float spacing near `x`.
#[derive(Debug, Clone)]
pub struct LevelSet {
    pub pole: [f64; 2],
    pub r: f64,
    /// The contoured value of `Γ_x`: `1/r`, or a slightly perturbed level.
    pub level: f64,
    /// Closed polylines in offsets from the pole.
    pub curves: Vec<Vec<[f64; 2]>>,
    /// Diagonal of one mesh cell.
    pub cell: f64,
}

impl LevelSet {
    /// Even–odd membership of the offset `d` over all curves.
    pub fn contains_offset(&self, d: [f64; 2]) -> bool {
        self.curves.iter().filter(|c| contour::contains(c, d)).count() % 2 == 1
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        self.contains_offset([p[0] - self.pole[0], p[1] - self.pole[1]])
    }

    pub fn absolute_curves(&self) -> Vec<Vec<[f64; 2]>> {
        self.curves.iter().map(|c| c.iter().map(|v| [self.pole[0] + v[0], self.pole[1] + v[1]]).collect()).collect()
    }

    pub fn area(&self) -> f64 {
        self.curves
            .iter()
            .enumerate()
            .map(|(i, c)| {
                let depth = self.curves.iter().enumerate().filter(|&(j, o)| j != i && contour::contains(o, c[0])).count();
                let a = contour::signed_area(c).abs();
                if depth % 2 == 0 {
                    a
                } else {
                    -a
                }
            })
            .sum()
    }

    pub fn perimeter(&self) -> f64 {
        self.segments().map(|(a, b)| dist(a, b)).sum()
    }

    pub fn vertices(&self) -> impl Iterator<Item = [f64; 2]> + '_ {
        self.curves.iter().flatten().copied()
    }

    pub fn segments(&self) -> impl Iterator<Item = ([f64; 2], [f64; 2])> + '_ {
        self.curves.iter().flat_map(|c| (0..c.len()).map(move |k| (c[k], c[(k + 1) % c.len()])))
    }

    /// Largest surrogate distance from the pole to the boundary.
    pub fn surrogate_radius(&self) -> f64 {
        self.vertices().map(|v| surrogate_offset(&self.pole, &v)).fold(0.0, f64::max)
    }

    /// Every vertex of `self` lies inside `other`.
    pub fn inside(&self, other: &LevelSet) -> bool {
        if self.pole == other.pole {
            self.vertices().all(|v| other.contains_offset(v))
        } else {
            self.absolute_curves().iter().flatten().all(|&v| other.contains(v))
        }
    }

    /// Sorted distances at which the ray `pole + ρ(cos φ, sin φ)` crosses the polylines.
    fn ray_crossings(&self, phi: f64) -> Vec<f64> {
        let e = [phi.cos(), phi.sin()];
        let mut out: Vec<f64> = self
            .segments()
            .filter_map(|(a, b)| {
                let (ax, ay) = (a[0], a[1]);
                let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
                let den = e[0] * dy - e[1] * dx;
                if den == 0.0 {
                    return None;
                }
                let rho = (ax * dy - ay * dx) / den;
                let s = (ax * e[1] - ay * e[0]) / den;
                ((0.0..1.0).contains(&s) && rho > 0.0).then_some(rho)
            })
            .collect();
        out.sort_by(f64::total_cmp);
        out
    }
}

/// The surrogate distance from `x` to `x + d`, without forming `x + d`.
fn surrogate_offset(x: &[f64; 2], d: &[f64; 2]) -> f64 {
    d[0].abs() + d[1].abs() / ((x[0] * x[0] + d[1].abs()).sqrt() + x[0].abs())
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Test functions with their value and `Lu`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TestFunction {
    One,
    Y1,
    Y2,
    Y1Y2,
    Y1Sq,
    Y2Sq,
    ExpY1,
    ExpY2,
}

impl TestFunction {
    pub const ALL: [TestFunction; 8] = [
        TestFunction::One,
        TestFunction::Y1,
        TestFunction::Y2,
        TestFunction::Y1Y2,
        TestFunction::Y1Sq,
        TestFunction::Y2Sq,
        TestFunction::ExpY1,
        TestFunction::ExpY2,
    ];

    pub fn eval(self, y: &[f64; 2]) -> f64 {
        match self {
            TestFunction::One => 1.0,
            TestFunction::Y1 => y[0],
            TestFunction::Y2 => y[1],
            TestFunction::Y1Y2 => y[0] * y[1],
            TestFunction::Y1Sq => y[0] * y[0],
            TestFunction::Y2Sq => y[1] * y[1],
            TestFunction::ExpY1 => y[0].exp(),
            TestFunction::ExpY2 => y[1].exp(),
        }
    }

    /// `Lu = ∂₁²u + y₁²∂₂²u`.
    pub fn laplacian(self, y: &[f64; 2]) -> f64 {
        match self {
            TestFunction::One | TestFunction::Y1 | TestFunction::Y2 | TestFunction::Y1Y2 => 0.0,
            TestFunction::Y1Sq => 2.0,
            TestFunction::Y2Sq => 2.0 * y[0] * y[0],
            TestFunction::ExpY1 => y[0].exp(),
            TestFunction::ExpY2 => y[0] * y[0] * y[1].exp(),
        }
    }

    pub fn is_harmonic(self) -> bool {
        matches!(self, TestFunction::One | TestFunction::Y1 | TestFunction::Y2 | TestFunction::Y1Y2)
    }
}

impl fmt::Display for TestFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TestFunction::One => "1",
            TestFunction::Y1 => "y1",
            TestFunction::Y2 => "y2",
            TestFunction::Y1Y2 => "y1*y2",
            TestFunction::Y1Sq => "y1^2",
            TestFunction::Y2Sq => "y2^2",
            TestFunction::ExpY1 => "exp(y1)",
            TestFunction::ExpY2 => "exp(y2)",
        };
        f.write_str(s)
    }
}

impl FromStr for TestFunction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t: String = s.chars().filter(|c| !c.is_whitespace()).collect();
        TestFunction::ALL
            .into_iter()
            .find(|f| f.to_string() == t || f.to_string().replace('*', "") == t)
            .ok_or_else(|| Error::Unsupported(format!("unknown test function '{s}' (expected one of 1, y1, y2, y1*y2, y1^2, y2^2, exp(y1), exp(y2))")))
    }
}

/// Values of the kernels at one point.
#[derive(Debug, Clone, Copy)]
struct KernelPoint {
    gamma: f64,
    /// `Σ|X_jΓ_x|²`.
    xgrad2: f64,
    grad: f64,
}

pub struct MeanValue<'a> {
    g: &'a GammaGrushin,
    pub opts: PotentialOptions,
}

impl<'a> MeanValue<'a> {
    pub fn new(g: &'a GammaGrushin, opts: PotentialOptions) -> Self {
        MeanValue { g, opts }
    }

    /// Kernel data at `y = x + d`.
    fn kernel_point(&self, x: &[f64; 2], d: &[f64; 2]) -> Result<KernelPoint> {
        let j = self.g.jet_offset(x, d)?;
        let (g1, g2) = (j.g[0], j.g[1]);
        let y1 = x[0] + d[0];
        Ok(KernelPoint { gamma: j.v, xgrad2: g1 * g1 + y1 * y1 * g2 * g2, grad: g1.hypot(g2) })
    }

    /// `K_x(y) = Σ|X_jΓ_x|² / |∇Γ_x|`.
    pub fn surface_kernel(&self, x: &[f64; 2], y: &[f64; 2]) -> Result<f64> {
        let k = self.kernel_point(x, &[y[0] - x[0], y[1] - x[1]])?;
        Ok(k.xgrad2 / k.grad)
    }

    /// `K^α_x(y) = Σ|X_jΓ_x|² / Γ_x^{2+α}`.
    pub fn solid_kernel(&self, x: &[f64; 2], y: &[f64; 2]) -> Result<f64> {
        let k = self.kernel_point(x, &[y[0] - x[0], y[1] - x[1]])?;
        Ok(k.xgrad2 / k.gamma.powf(2.0 + self.opts.alpha))
    }

    /// `Γ(x; x + d)`, infinite at the pole.
    fn gamma_or_inf(&self, x: &[f64; 2], d: [f64; 2]) -> f64 {
        match self.g.closed_form_offset(x, &d) {
            Ok(v) if v.is_finite() => v,
            _ => f64::INFINITY,
        }
    }

    /// Offset where `Γ_x` drops below `level` along `t ↦ (t cos θ, t^p sin θ)`.
    fn ray_extent(&self, x: &[f64; 2], th: f64, p: i32, level: f64) -> [f64; 2] {
        let at = |t: f64| [t * th.cos(), t.powi(p) * th.sin()];
        let mut t = 1.0;
        while t > 1e-150 && self.gamma_or_inf(x, at(t)) <= level {
            t *= 0.5;
        }
        let mut last_inside = t;
        let mut outside_run = 0;
        while outside_run < 4 && t < 1e12 {
            t *= 2.0;
            if self.gamma_or_inf(x, at(t)) > level {
                last_inside = t;
                outside_run = 0;
            } else {
                outside_run += 1;
            }
        }
        let (mut lo, mut hi) = (last_inside, 2.0 * last_inside);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if self.gamma_or_inf(x, at(mid)) > level {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        at(hi)
    }

    /// Closed polylines of `{Γ(x;·) = 1/r}`.
    pub fn level_set(&self, x: [f64; 2], r: f64) -> Result<LevelSet> {
        if !(r > 0.0 && r.is_finite()) {
            return Err(Error::Domain(format!("level radius must be positive, got {r}")));
        }
        match self.level_set_at(x, r, 1.0 / r) {
            // non-generic level: retry once, slightly perturbed
            Err(Error::Tolerance { .. }) => self.level_set_at(x, r, (1.0 + 1e-6) / r),
            other => other,
        }
    }

    fn level_set_at(&self, x: [f64; 2], r: f64, level: f64) -> Result<LevelSet> {
        let mesh = self.opts.mesh;
        let (mut lo, mut hi) = ([0.0f64; 2], [0.0f64; 2]);
        // Euclidean rays see the elliptic shape off the axis, the
        // anisotropic ones the shape near it
        for k in 0..128 {
            let p = self.ray_extent(&x, 2.0 * PI * ((k / 2) as f64 + 0.5) / 64.0, 1 + k % 2, level);
            for i in 0..2 {
                lo[i] = lo[i].min(p[i]);
                hi[i] = hi[i].max(p[i]);
            }
        }
        let mut half = [0.0; 2];
        let mut centre = [0.0; 2];
        for i in 0..2 {
            centre[i] = 0.5 * (lo[i] + hi[i]);
            half[i] = 0.65 * (hi[i] - lo[i]).max(1e-300);
        }
        let f = |p: [f64; 2]| self.gamma_or_inf(&x, p).min(1e300) - level;
        for _ in 0..=mesh.max_enlargements {
            let grid = Grid::centered(centre, half, mesh.cells, mesh.cells);
            let extent = half[0].max(half[1]);
            match marching_squares(f, &grid, mesh.contour_tol * extent) {
                Ok(curves) if !curves.is_empty() => {
                    let cell = (2.0 * half[0]).hypot(2.0 * half[1]) / mesh.cells as f64;
                    let ls = LevelSet { pole: x, r, level, curves, cell };
                    for v in ls.vertices() {
                        let k = self.kernel_point(&x, &v)?;
                        if !(k.grad > 1e-12 * k.gamma / extent) || !k.xgrad2.is_finite() {
                            return Err(Error::Tolerance {
                                reason: format!("|∇Γ_x| vanishes on the level set at ({:.6}, {:.6})", v[0], v[1]),
                                estimate: k.grad,
                            });
                        }
                    }
                    if !ls.contains_offset([0.0, 0.0]) {
                        return Err(Error::Domain("extracted level set does not contain its pole".into()));
                    }
                    return Ok(ls);
                }
                Ok(_) => return Err(Error::Domain("no level curve found; the mesh misses Ω_r".into())),
                Err(Error::Domain(_)) => half = half.map(|h| 2.0 * h),
                Err(e) => return Err(e),
            }
        }
        Err(Error::Domain("level curve leaves the grid after enlargement; enlarge the domain".into()))
    }

    /// `∫_{∂Ω} u K_x dH¹`, trapezoid on the polyline and on the polyline with
    /// midpoints projected onto the curve, then Richardson-combined.
    pub fn boundary_integral(&self, ls: &LevelSet, u: &(impl Fn(&[f64; 2]) -> f64 + Sync)) -> Result<QuadResult> {
        let x = ls.pole;
        let f = |p: &[f64; 2]| -> Result<f64> {
            let k = self.kernel_point(&x, p)?;
            Ok(u(&[x[0] + p[0], x[1] + p[1]]) * k.xgrad2 / k.grad)
        };
        let project = |mut p: [f64; 2]| -> Result<[f64; 2]> {
            for _ in 0..4 {
                let k = self.g.jet_offset(&x, &p)?;
                let (d1, d2) = (k.g[0], k.g[1]);
                let s = (k.v - ls.level) / (d1 * d1 + d2 * d2);
                p = [p[0] - s * d1, p[1] - s * d2];
            }
            Ok(p)
        };
        let segs: Vec<_> = ls.segments().collect();
        let parts: Vec<(f64, f64)> = segs
            .par_iter()
            .map(|&(a, b)| {
                let m = project([0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])])?;
                let (fa, fb, fm) = (f(&a)?, f(&b)?, f(&m)?);
                let coarse = 0.5 * dist(a, b) * (fa + fb);
                let fine = 0.5 * dist(a, m) * (fa + fm) + 0.5 * dist(m, b) * (fm + fb);
                Ok((coarse, fine))
            })
            .collect::<Result<_>>()?;
        let (coarse, fine): (f64, f64) = parts.iter().fold((0.0, 0.0), |s, p| (s.0 + p.0, s.1 + p.1));
        let value = fine + (fine - coarse) / 3.0;
        Ok(QuadResult { value, error: (fine - coarse).abs() / 3.0, evaluations: 3 * segs.len() })
    }

    /// `∫_{Ω} h dy` in polar coordinates about the pole, with the disc
    /// around the pole excised and shrunk until its contribution is negligible.
    ///
    /// `h` receives the offset `y − x` and the point `y`.
    pub fn solid_integral(&self, ls: &LevelSet, h: &(impl Fn(&[f64; 2], &[f64; 2]) -> f64 + Sync)) -> Result<QuadResult> {
        let x = ls.pole;
        let quad = self.opts.quad;
        let inner = QuadratureSpec { rel_tol: quad.rel_tol * 0.1, abs_tol: quad.abs_tol * 0.1, ..quad };
        let h = |d: &[f64; 2]| h(d, &[x[0] + d[0], x[1] + d[1]]);
        let ray = |phi: f64| -> Result<f64> {
            let e = [phi.cos(), phi.sin()];
            let at = |rho: f64| [rho * e[0], rho * e[1]];
            let crossings: Vec<f64> = ls
                .ray_crossings(phi)
                .into_iter()
                .map(|c| {
                    let g = |rho: f64| self.gamma_or_inf(&x, at(rho)) - ls.level;
                    let (mut lo, mut hi) = ((c - ls.cell).max(0.5 * c), c + ls.cell);
                    if !(g(lo) > 0.0 && g(hi) <= 0.0) {
                        return c;
                    }
                    for _ in 0..80 {
                        let mid = 0.5 * (lo + hi);
                        if g(mid) > 0.0 {
                            lo = mid;
                        } else {
                            hi = mid;
                        }
                    }
                    0.5 * (lo + hi)
                })
                .collect();
            if crossings.is_empty() {
                return Err(Error::Domain("ray from the pole never leaves Ω_r".into()));
            }
            // [0, c₀] through ρ = c₀ exp(1 − 1/v), which turns logarithmic
            // tails at off-axis poles into a power of v
            let c0 = crossings[0];
            let radial = |v: f64| {
                let rho = c0 * (1.0 - 1.0 / v).exp();
                h(&at(rho)) * rho * rho / (v * v)
            };
            let v_of = |eps: f64| 1.0 / (1.0 - (eps / c0).ln());
            // shrink the excised disc until its estimated share is negligible;
            // measured against ∫|h| since a sign-changing u can cancel along the ray
            let scale = gauss_kronrod(|v| radial(v).abs(), v_of(1e-3 * c0), 1.0, &inner)?.value;
            let floor = 1e-200 * c0;
            let mut eps = 1e-4 * c0;
            let mut excised;
            loop {
                let v = v_of(eps);
                // the integrand behaves like v³ near v = 0 at off-axis poles
                excised = radial(v) * v / 4.0;
                if excised.abs() <= self.opts.excision_tol * scale + quad.abs_tol {
                    break;
                }
                if eps <= floor {
                    return Err(Error::Tolerance {
                        reason: "pole excision did not converge before the resolution floor".into(),
                        estimate: excised,
                    });
                }
                eps = (eps * 1e-2).max(floor);
            }
            // the excised disc enters through its v³ model
            let mut total = gauss_kronrod(radial, v_of(eps), 1.0, &inner)?.value + excised;
            for w in crossings[1..].chunks_exact(2) {
                total += gauss_kronrod(|rho| h(&at(rho)) * rho, w[0], w[1], &inner)?.value;
            }
            Ok(total)
        };
        let quarters: Vec<Result<QuadResult>> = (0..4)
            .into_par_iter()
            .map(|k| {
                let a = k as f64 * PI / 2.0;
                let mut failure = None;
                let r = gauss_kronrod(
                    |phi| match ray(phi) {
                        Ok(v) => v,
                        Err(e) => {
                            failure.get_or_insert(e);
                            f64::NAN
                        }
                    },
                    a,
                    a + PI / 2.0,
                    &quad,
                );
                match failure {
                    Some(e) => Err(e),
                    None => r,
                }
            })
            .collect();
        let mut out = QuadResult { value: 0.0, error: 0.0, evaluations: 0 };
        for q in quarters {
            let q = q?;
            out.value += q.value;
            out.error += q.error;
            out.evaluations += q.evaluations;
        }
        Ok(out)
    }

    /// `m_r(u)(x)`.
    pub fn m_r(&self, u: &(impl Fn(&[f64; 2]) -> f64 + Sync), x: [f64; 2], r: f64) -> Result<QuadResult> {
        self.boundary_integral(&self.level_set(x, r)?, u)
    }

    /// `M_r(u)(x) = (α+1)/r^{α+1} ∫_{Ω_r} u K^α_x`.
    pub fn big_m_r(&self, u: &(impl Fn(&[f64; 2]) -> f64 + Sync), x: [f64; 2], r: f64) -> Result<QuadResult> {
        let ls = self.level_set(x, r)?;
        let a = self.opts.alpha;
        let h = |d: &[f64; 2], y: &[f64; 2]| match self.kernel_point(&x, d) {
            Ok(k) => u(y) * k.xgrad2 / k.gamma.powf(2.0 + a),
            Err(_) => 0.0,
        };
        let q = self.solid_integral(&ls, &h)?;
        let c = (a + 1.0) / r.powf(a + 1.0);
        Ok(QuadResult { value: c * q.value, error: c * q.error, evaluations: q.evaluations })
    }

    /// `q_r(x) = ∫_{Ω_r}(Γ_x − 1/r)`.
    pub fn q_r(&self, x: [f64; 2], r: f64) -> Result<f64> {
        let ls = self.level_set(x, r)?;
        Ok(self.solid_integral(&ls, &|d: &[f64; 2], _: &[f64; 2]| (self.gamma_or_inf(&x, *d) - 1.0 / r).max(0.0))?.value)
    }

    /// `∫_{Ω_r}(Γ_x − 1/r) Lu`.
    pub fn green_remainder(&self, u: TestFunction, x: [f64; 2], r: f64) -> Result<f64> {
        let ls = self.level_set(x, r)?;
        let h = |d: &[f64; 2], y: &[f64; 2]| (self.gamma_or_inf(&x, *d) - 1.0 / r).max(0.0) * u.laplacian(y);
        Ok(self.solid_integral(&ls, &h)?.value)
    }

    pub fn deficits(&self, x: [f64; 2], r: f64) -> Result<Deficits> {
        let a = self.opts.alpha;
        let n = self.opts.rho_steps.max(1);
        let q = self.q_r(x, r)?;
        let inner: Vec<f64> =
            (1..n).into_par_iter().map(|i| self.q_r(x, r * i as f64 / n as f64)).collect::<Result<_>>()?;
        // trapezoid in ρ; the integrand vanishes at ρ = 0
        let h = r / n as f64;
        let mut s = 0.5 * r.powf(a) * q;
        for (i, qi) in inner.iter().enumerate() {
            s += (h * (i + 1) as f64).powf(a) * qi;
        }
        let big_q = (a + 1.0) / r.powf(a + 1.0) * h * s;
        let ls = self.level_set(x, r)?;
        let w = self.solid_integral(&ls, &|d: &[f64; 2], _: &[f64; 2]| {
            let g = self.gamma_or_inf(&x, *d);
            (r.powf(a) - g.powf(-a)).max(0.0)
        })?;
        Ok(Deficits { q_r: q, big_q_r: big_q, omega_r: w.value / (a * r.powf(a + 1.0)) })
    }

    /// `∫_{Ω_{1/k}(x)} Γ(x;y) K^α_0(y) dy`.
    pub fn a8_integral(&self, x: [f64; 2], k: f64) -> Result<f64> {
        let ls = self.level_set(x, 1.0 / k)?;
        let a = self.opts.alpha;
        let h = |d: &[f64; 2], y: &[f64; 2]| {
            let k0 = match self.kernel_point(&[0.0, 0.0], y) {
                Ok(p) if p.gamma.is_finite() => p.xgrad2 / p.gamma.powf(2.0 + a),
                _ => 0.0,
            };
            let g = self.gamma_or_inf(&x, *d);
            if g.is_finite() {
                g * k0
            } else {
                0.0
            }
        };
        Ok(self.solid_integral(&ls, &h)?.value)
    }
}

/// `sup_x f_k(x)` over `poles` for each `k`.
pub fn a8_profile(mv: &MeanValue, poles: &[[f64; 2]], ks: &[f64]) -> Result<Vec<f64>> {
    ks.iter()
        .map(|&k| {
            let v = poles.par_iter().map(|&x| mv.a8_integral(x, k)).collect::<Result<Vec<f64>>>()?;
            Ok(v.into_iter().fold(0.0, f64::max))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Deficits {
    pub q_r: f64,
    pub big_q_r: f64,
    pub omega_r: f64,
}

/// `max_r r^{−p} ∫_{B(x,r)} d^p / Λ(x, d) dy` over `radii`, in the surrogate metric.
pub fn integrability_constant(x: [f64; 2], p: f64, radii: &[f64], quad: &QuadratureSpec) -> Result<f64> {
    let geo = Geometry::grushin()?;
    let h = |y: &[f64; 2]| {
        let d = geo.d(&x, y);
        d.powf(p) / geo.lambda(&x, d)
    };
    radii
        .par_iter()
        .map(|&r| Ok(annulus_integral(x, 1e-9 * r, r, h, quad)? / r.powf(p)))
        .collect::<Result<Vec<f64>>>()
        .map(|v| v.into_iter().fold(0.0, f64::max))
}

/// One line of an identity or monotonicity table.
#[derive(Debug, Clone, Serialize)]
pub struct MeanValueRow {
    pub pole: [f64; 2],
    pub r: f64,
    pub func: String,
    pub u_x: f64,
    pub m_r: f64,
    pub big_m_r: f64,
    pub harmonic: bool,
}

impl MeanValueRow {
    pub const CSV_HEADER: &'static str = "x1,x2,r,u,u_x,m_r,M_r,harmonic";

    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{:.12e},{:.12e},{:.12e},{}",
            self.pole[0], self.pole[1], self.r, self.func, self.u_x, self.m_r, self.big_m_r, self.harmonic
        )
    }

    pub fn scale(&self) -> f64 {
        self.u_x.abs().max(1.0)
    }
}

/// `u(x)`, `m_r(u)(x)` and `M_r(u)(x)` for every pole × level × function.
pub fn mean_value_table(
    mv: &MeanValue,
    poles: &[[f64; 2]],
    levels: &[f64],
    funcs: &[TestFunction],
) -> Result<Vec<MeanValueRow>> {
    let jobs: Vec<([f64; 2], f64)> = poles.iter().flat_map(|&p| levels.iter().map(move |&r| (p, r))).collect();
    let rows: Vec<Vec<MeanValueRow>> = jobs
        .par_iter()
        .map(|&(x, r)| {
            funcs
                .iter()
                .map(|&u| {
                    let f = |y: &[f64; 2]| u.eval(y);
                    Ok(MeanValueRow {
                        pole: x,
                        r,
                        func: u.to_string(),
                        u_x: u.eval(&x),
                        m_r: mv.m_r(&f, x, r)?.value,
                        big_m_r: mv.big_m_r(&f, x, r)?.value,
                        harmonic: u.is_harmonic(),
                    })
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    Ok(rows.into_iter().flatten().collect())
}

/// Gates over a mean-value table: identities for harmonic functions,
/// sub-mean and ordering inequalities and monotonicity in `r` for the rest.
pub fn mean_value_report(rows: &[MeanValueRow], tol: f64) -> EstimateReport {
    let mut rep = EstimateReport::new("mean_value", format!("{} rows", rows.len()));
    let harmonic = rows
        .iter()
        .filter(|r| r.harmonic)
        .map(|r| ((r.m_r - r.u_x).abs().max((r.big_m_r - r.u_x).abs())) / r.scale())
        .fold(0.0f64, f64::max);
    // quadrature noise in the inequalities
    let slack = |r: &MeanValueRow| 1e-6 * r.scale();
    let sub: Vec<&MeanValueRow> = rows.iter().filter(|r| !r.harmonic).collect();
    let sub_mean = sub
        .iter()
        .filter(|r| r.m_r < r.u_x - slack(r) || r.big_m_r < r.u_x - slack(r) || r.big_m_r > r.m_r + slack(r))
        .count();
    let mut monotone = 0;
    for a in &sub {
        for b in &sub {
            if a.pole == b.pole && a.func == b.func && a.r < b.r && (b.m_r < a.m_r - slack(a) || b.big_m_r < a.big_m_r - slack(a))
            {
                monotone += 1;
            }
        }
    }
    rep.constants.insert("harmonic_residual".into(), harmonic);
    rep.worst_ratio = harmonic;
    rep.gate(Gate::at_most("harmonic identity residual", harmonic, tol));
    rep.gate(Gate::at_most("sub-mean violations", sub_mean as f64, 0.0));
    rep.gate(Gate::at_most("monotonicity violations", monotone as f64, 0.0));
    rep
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gamma() -> GammaGrushin {
        GammaGrushin::new(1.0 / (2.0 * PI)).unwrap()
    }

    #[test]
    fn test_function_parsing() {
        for f in TestFunction::ALL {
            assert_eq!(f.to_string().parse::<TestFunction>().unwrap(), f);
        }
        assert_eq!("y1 y2".parse::<TestFunction>().unwrap(), TestFunction::Y1Y2);
        assert!("sin(y1)".parse::<TestFunction>().is_err());
    }

    #[test]
    fn laplacians_by_differences() {
        let h = 1e-4;
        let y = [0.7, -0.4];
        for f in TestFunction::ALL {
            let d11 = (f.eval(&[y[0] + h, y[1]]) - 2.0 * f.eval(&y) + f.eval(&[y[0] - h, y[1]])) / (h * h);
            let d22 = (f.eval(&[y[0], y[1] + h]) - 2.0 * f.eval(&y) + f.eval(&[y[0], y[1] - h])) / (h * h);
            assert!((d11 + y[0] * y[0] * d22 - f.laplacian(&y)).abs() < 1e-5, "{f}");
        }
    }

    #[test]
    fn origin_level_set_symmetry_and_scaling() {
        let g = gamma();
        let mv = MeanValue::new(&g, PotentialOptions::default());
        let a = mv.level_set([0.0, 0.0], 0.5).unwrap();
        assert_eq!(a.curves.len(), 1);
        for v in a.vertices() {
            assert!((g.closed_form(&[0.0, 0.0], &v).unwrap() - 2.0).abs() < 1e-8);
        }
        for v in a.vertices().step_by(7) {
            assert!(a.contains([-0.999 * v[0], 0.999 * v[1]]));
            assert!(a.contains([0.999 * v[0], -0.999 * v[1]]));
        }
        let b = mv.level_set([0.0, 0.0], 1.0).unwrap();
        assert!(a.inside(&b));
        let slope = (b.area() / a.area()).ln() / 2f64.ln();
        assert!((slope - 3.0).abs() < 0.02, "{slope}");
        assert!((b.surrogate_radius() / a.surrogate_radius() - 2.0).abs() < 1e-3);
    }

    #[test]
    fn kernels_are_nonnegative() {
        let g = gamma();
        let mv = MeanValue::new(&g, PotentialOptions::default());
        let ls = mv.level_set([1.0, 1.0], 5.0).unwrap();
        for c in ls.absolute_curves() {
            for v in c {
                assert!(mv.surface_kernel(&[1.0, 1.0], &v).unwrap() >= 0.0);
                assert!(mv.solid_kernel(&[1.0, 1.0], &[0.5 * (v[0] + 1.0), 0.5 * (v[1] + 1.0)]).unwrap() >= 0.0);
            }
        }
    }

    #[test]
    fn normalisation() {
        let g = gamma();
        let mv = MeanValue::new(&g, PotentialOptions::default());
        let one = |_: &[f64; 2]| 1.0;
        for (x, r) in [([0.0, 0.0], 0.5), ([0.0, 1.0], 1.0), ([1.0, 1.0], 5.0)] {
            let m = mv.m_r(&one, x, r).unwrap().value;
            assert!((m - 1.0).abs() < 1e-6, "m_r(1) at {x:?}, r={r}: {m}");
            let big = mv.big_m_r(&one, x, r).unwrap().value;
            assert!((big - 1.0).abs() < 1e-6, "M_r(1) at {x:?}, r={r}: {big}");
        }
    }

    #[test]
    fn ray_crossings_hit_the_polyline() {
        let ls = LevelSet {
            pole: [0.0, 0.0],
            r: 1.0,
            level: 1.0,
            curves: vec![vec![[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]]],
            cell: 0.1,
        };
        assert_eq!(ls.ray_crossings(0.0), vec![1.0]);
        assert!((ls.ray_crossings(PI / 4.0)[0] - 2f64.sqrt()).abs() < 1e-12);
        assert!((ls.area() - 4.0).abs() < 1e-12);
        assert!((ls.perimeter() - 8.0).abs() < 1e-12);
    }

    #[test]
    fn harmonic_identities() {
        let g = gamma();
        let mv = MeanValue::new(&g, PotentialOptions::default());
        let y2 = |y: &[f64; 2]| y[1];
        assert!((mv.m_r(&y2, [0.0, 1.0], 1.0).unwrap().value - 1.0).abs() < 1e-3);
        for (x, r) in [([0.5, -0.3], 3.0), ([1.0, 1.0], 5.0), ([0.0, 0.5], 0.8)] {
            for u in [TestFunction::Y1, TestFunction::Y2, TestFunction::Y1Y2] {
                let f = |y: &[f64; 2]| u.eval(y);
                let ux = u.eval(&x);
                let m = mv.m_r(&f, x, r).unwrap().value;
                let big = mv.big_m_r(&f, x, r).unwrap().value;
                assert!((m - ux).abs() < 1e-6 * ux.abs().max(1.0), "m_r({u}) at {x:?}: {m} vs {ux}");
                assert!((big - ux).abs() < 1e-6 * ux.abs().max(1.0), "M_r({u}) at {x:?}: {big} vs {ux}");
            }
        }
    }

    #[test]
    fn subharmonic_inequalities_and_green_formula() {
        let g = gamma();
        let mv = MeanValue::new(&g, PotentialOptions::default());
        let x = [0.5, 0.2];
        let sq1 = |y: &[f64; 2]| y[0] * y[0];
        let sq2 = |y: &[f64; 2]| y[1] * y[1];
        let mut last = x[0] * x[0];
        for r in [1.0, 2.0, 4.0] {
            let m = mv.m_r(&sq1, x, r).unwrap().value;
            assert!(m > last, "{r}: {m} ≤ {last}");
            last = m;
            let q = mv.q_r(x, r).unwrap();
            let rel = (m - x[0] * x[0] - 2.0 * q).abs() / (2.0 * q);
            assert!(rel < 1e-3, "Gauss–Green at r={r}: {rel}");
            let (m2, big2) = (mv.m_r(&sq2, x, r).unwrap().value, mv.big_m_r(&sq2, x, r).unwrap().value);
            assert!(big2 <= m2 && big2 >= x[1] * x[1]);
        }
    }

    #[test]
    fn deficits_are_positive_and_q_grows() {
        let g = gamma();
        let mv = MeanValue::new(&g, PotentialOptions { rho_steps: 8, ..PotentialOptions::default() });
        let d = mv.deficits([0.0, 0.0], 0.5).unwrap();
        assert!(d.q_r > 0.0 && d.big_q_r > 0.0 && d.omega_r > 0.0);
        let q: Vec<f64> = [0.25, 0.5, 1.0].iter().map(|&r| mv.q_r([0.0, 0.0], r).unwrap()).collect();
        assert!(q[0] < q[1] && q[1] < q[2]);
    }

    #[test]
    fn a8_sequence_decreases() {
        let g = gamma();
        let mv = MeanValue::new(&g, PotentialOptions::default());
        let f: Vec<f64> = [4.0, 8.0, 16.0].iter().map(|&k| mv.a8_integral([1.0, 1.0], k).unwrap()).collect();
        assert!(f[0] > f[1] && f[1] > f[2] && f[2] > 0.0);
        let poles: Vec<[f64; 2]> = (0..9).map(|i| [0.5 * (i % 3) as f64, 0.5 * (i / 3) as f64]).collect();
        let sup = a8_profile(&mv, &poles, &[4.0, 8.0, 16.0]).unwrap();
        assert!(sup[0] > sup[1] && sup[1] > sup[2]);
    }

    #[test]
    fn integrability_constant_is_stable() {
        let radii = [0.05, 0.1, 0.2, 0.5, 1.0];
        let c = integrability_constant([1.0, 0.5], 2.0, &radii, &QuadratureSpec::with_rel_tol(1e-6)).unwrap();
        let cf = integrability_constant([1.0, 0.5], 2.0, &radii, &QuadratureSpec::with_rel_tol(1e-9)).unwrap();
        assert!(c > 0.0 && (c - cf).abs() < 1e-3 * c);
    }
}
