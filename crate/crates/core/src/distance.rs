//! Carnot–Carathéodory distance: the homogeneous norm, the explicit Grushin
//! surrogate and an optimal-control upper bound for general systems.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::dsl::SystemSpec;
use crate::error::{Error, Result};
use crate::numeric::optimize::{levenberg_marquardt, LmOptions};
use crate::poly::CompiledPoly;

/// `S(x) = Σ |x_i|^{1/σ_i}`.
pub fn hom_norm(weights: &[u32], x: &[f64]) -> f64 {
    x.iter().zip(weights).map(|(v, &w)| v.abs().powf(1.0 / w as f64)).sum()
}

/// `|x₁−y₁| + √(x₁² + |x₂−y₂|) − |x₁|`, comparable to `d_X` on the Grushin plane.
pub fn grushin_distance_surrogate(x: &[f64], y: &[f64]) -> f64 {
    (x[0] - y[0]).abs() + (x[0] * x[0] + (x[1] - y[1]).abs()).sqrt() - x[0].abs()
}

/// [`grushin_distance_surrogate`] with a check that `spec` is the Grushin plane.
pub fn surrogate_for(spec: &SystemSpec, x: &[f64], y: &[f64]) -> Result<f64> {
    if !spec.is_grushin_one() {
        return Err(Error::Unsupported("the distance surrogate is only known for the Grushin plane (k = 1)".into()));
    }
    Ok(grushin_distance_surrogate(x, y))
}

/// Piecewise-constant controls on `M` equal segments of `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ControlPath {
    pub segments: usize,
    /// `controls[s][j]` multiplies `X_{j+1}` on segment `s`.
    pub controls: Vec<Vec<f64>>,
    /// Drift multipliers, constrained by `|a₀| ≤ r²`.
    pub drift_controls: Option<Vec<f64>>,
}

impl ControlPath {
    /// Largest control magnitude; the drift enters through `√|a₀|`.
    pub fn radius(&self) -> f64 {
        let a = self.controls.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        let d = self.drift_controls.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs().sqrt()));
        a.max(d)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct DistanceOptions {
    pub segments: usize,
    pub rk_steps: usize,
    pub restarts: usize,
    pub seed: u64,
    /// Endpoint tolerance for a path to count as feasible.
    pub endpoint_tol: f64,
    /// Relative width at which bisection on `r` stops.
    pub rel_precision: f64,
    pub use_drift: bool,
    pub max_lm_iter: usize,
}

impl Default for DistanceOptions {
    fn default() -> Self {
        DistanceOptions {
            segments: 16,
            rk_steps: 64,
            restarts: 8,
            seed: 7,
            endpoint_tol: 1e-6,
            rel_precision: 2e-3,
            use_drift: false,
            max_lm_iter: 60,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct DistanceReport {
    pub r_hat: f64,
    pub endpoint_error: f64,
    pub path: ControlPath,
    pub feasibility_checks: usize,
}

/// Numeric right-hand sides `X_j(x)` for integration.
struct Dynamics {
    n: usize,
    fields: Vec<Vec<CompiledPoly>>,
    drift: Option<Vec<CompiledPoly>>,
}

impl Dynamics {
    fn new(spec: &SystemSpec, use_drift: bool) -> Self {
        let compile = |f: &crate::field::VectorField| f.coeffs().iter().map(|c| c.compile()).collect::<Vec<_>>();
        Dynamics {
            n: spec.n(),
            fields: spec.fields().iter().map(|f| compile(&f.field)).collect(),
            drift: if use_drift { spec.drift().map(compile) } else { None },
        }
    }

    fn m(&self) -> usize {
        self.fields.len()
    }

    fn rhs(&self, x: &[f64], a: &[f64], a0: f64, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (f, &c) in self.fields.iter().zip(a) {
            if c != 0.0 {
                for i in 0..self.n {
                    out[i] += c * f[i].eval(x);
                }
            }
        }
        if let Some(d) = &self.drift {
            for i in 0..self.n {
                out[i] += a0 * d[i].eval(x);
            }
        }
    }

    /// RK4 with `steps` equal steps over `[0, 1]`.
    fn endpoint(&self, x0: &[f64], path: &ControlPath, steps: usize) -> Vec<f64> {
        let n = self.n;
        let h = 1.0 / steps as f64;
        let mut x = x0.to_vec();
        let (mut k1, mut k2, mut k3, mut k4) = (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        let mut tmp = vec![0.0; n];
        for s in 0..steps {
            let seg = (s * path.segments) / steps;
            let a = &path.controls[seg];
            let a0 = path.drift_controls.as_ref().map_or(0.0, |d| d[seg]);
            self.rhs(&x, a, a0, &mut k1);
            for i in 0..n {
                tmp[i] = x[i] + 0.5 * h * k1[i];
            }
            self.rhs(&tmp, a, a0, &mut k2);
            for i in 0..n {
                tmp[i] = x[i] + 0.5 * h * k2[i];
            }
            self.rhs(&tmp, a, a0, &mut k3);
            for i in 0..n {
                tmp[i] = x[i] + h * k3[i];
            }
            self.rhs(&tmp, a, a0, &mut k4);
            for i in 0..n {
                x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
            }
        }
        x
    }
}

/// Integrates `γ′ = Σ a_j X_j(γ)` (plus `a₀X₀` if present) from `x`.
pub fn integrate_path(spec: &SystemSpec, x: &[f64], path: &ControlPath, rk_steps: usize) -> Result<Vec<f64>> {
    if x.len() != spec.n() || path.controls.iter().any(|c| c.len() != spec.m()) {
        return Err(Error::Arity { expected: spec.n(), got: x.len() });
    }
    Ok(Dynamics::new(spec, path.drift_controls.is_some()).endpoint(x, path, rk_steps))
}

struct Problem<'a> {
    dyn_: &'a Dynamics,
    x: &'a [f64],
    y: &'a [f64],
    opts: &'a DistanceOptions,
    drift: bool,
}

impl Problem<'_> {
    fn n_params(&self) -> usize {
        self.opts.segments * (self.dyn_.m() + usize::from(self.drift))
    }

    /// Controls `r·tanh(b)` (drift `r²·tanh(b)`), so every parameter vector is admissible.
    fn path(&self, r: f64, b: &[f64]) -> ControlPath {
        let m = self.dyn_.m();
        let stride = m + usize::from(self.drift);
        let controls = (0..self.opts.segments).map(|s| (0..m).map(|j| r * b[s * stride + j].tanh()).collect()).collect();
        let drift_controls = self
            .drift
            .then(|| (0..self.opts.segments).map(|s| r * r * b[s * stride + m].tanh()).collect());
        ControlPath { segments: self.opts.segments, controls, drift_controls }
    }

    fn residual(&self, r: f64, b: &[f64]) -> Vec<f64> {
        let e = self.dyn_.endpoint(self.x, &self.path(r, b), self.opts.rk_steps);
        e.iter().zip(self.y).map(|(a, b)| a - b).collect()
    }

    /// Tries to reach `y` with controls bounded by `r`; returns the best parameters.
    fn attempt(&self, r: f64, starts: &[Vec<f64>]) -> (f64, Vec<f64>) {
        let lm = LmOptions { max_iter: self.opts.max_lm_iter, residual_tol: 0.1 * self.opts.endpoint_tol, fd_step: 1e-7 };
        starts
            .par_iter()
            .map(|b0| {
                let res = levenberg_marquardt(|b| self.residual(r, b), b0, &lm);
                (res.residual_norm, res.params)
            })
            .min_by(|a, b| a.0.total_cmp(&b.0))
            .expect("at least one start")
    }

    fn starts(&self, r: f64, warm: Option<&ControlPath>, round: u64) -> Vec<Vec<f64>> {
        let k = self.n_params();
        let mut out = Vec::new();
        if let Some(p) = warm {
            // re-express the previous controls at the new radius
            let mut b = Vec::with_capacity(k);
            for s in 0..self.opts.segments {
                for &a in &p.controls[s] {
                    b.push((a / r).clamp(-0.999, 0.999).atanh());
                }
                if self.drift {
                    let a0 = p.drift_controls.as_ref().map_or(0.0, |d| d[s]);
                    b.push((a0 / (r * r)).clamp(-0.999, 0.999).atanh());
                }
            }
            out.push(b);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.opts.seed ^ round.wrapping_mul(0x9e37_79b9_7f4a_7c15));
        while out.len() < self.opts.restarts.max(1) {
            out.push((0..k).map(|_| rng.gen_range(-1.0..1.0)).collect());
        }
        out
    }
}

/// Upper bound for `d_X(x, y)`: bisection on the control bound `r`, each
/// feasibility test a multi-start Levenberg–Marquardt solve of the endpoint
/// equation over piecewise-constant controls.
pub fn distance_upper_bound(spec: &SystemSpec, x: &[f64], y: &[f64], opts: &DistanceOptions) -> Result<DistanceReport> {
    let n = spec.n();
    if x.len() != n || y.len() != n {
        return Err(Error::Arity { expected: n, got: if x.len() != n { x.len() } else { y.len() } });
    }
    if x == y {
        return Err(Error::Domain("distance_upper_bound needs x ≠ y".into()));
    }
    let dyn_ = Dynamics::new(spec, opts.use_drift);
    let prob = Problem { dyn_: &dyn_, x, y, opts, drift: opts.use_drift && dyn_.drift.is_some() };
    let diff: Vec<f64> = x.iter().zip(y).map(|(a, b)| b - a).collect();
    let mut r = hom_norm(spec.sigma(), &diff).max(1e-12);
    let mut checks = 0usize;
    let mut round = 0u64;
    let mut closest = f64::INFINITY;
    let mut feasible = |r: f64, warm: Option<&ControlPath>| -> Option<(f64, ControlPath)> {
        checks += 1;
        round += 1;
        let (err, b) = prob.attempt(r, &prob.starts(r, warm, round));
        closest = closest.min(err);
        (err < opts.endpoint_tol).then(|| (err, prob.path(r, &b)))
    };

    // bracket [lo, hi] with hi feasible
    let mut best: Option<(f64, ControlPath)> = None;
    for _ in 0..40 {
        if let Some(found) = feasible(r, None) {
            best = Some(found);
            break;
        }
        r *= 2.0;
    }
    let Some(mut best) = best else {
        return Err(Error::Tolerance {
            reason: format!("optimizer failed to reach the endpoint with controls up to {r:.3e}; closest endpoint residual"),
            estimate: closest,
        });
    };
    let mut hi = best.1.radius();
    let mut lo = 0.0;
    loop {
        let trial = 0.5 * hi;
        match feasible(trial, Some(&best.1)) {
            Some(found) => {
                hi = found.1.radius();
                best = found;
            }
            None => {
                lo = trial;
                break;
            }
        }
        if hi < 1e-300 {
            break;
        }
    }
    while hi - lo > opts.rel_precision * hi {
        let mid = 0.5 * (lo + hi);
        match feasible(mid, Some(&best.1)) {
            Some(found) => {
                hi = found.1.radius().min(mid);
                best = found;
            }
            None => lo = mid,
        }
    }
    let (err, path) = best;
    Ok(DistanceReport { r_hat: path.radius(), endpoint_error: err, path, feasibility_checks: checks })
}
