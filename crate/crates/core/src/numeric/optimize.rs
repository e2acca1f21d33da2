//! Damped Gauss–Newton (Levenberg–Marquardt) for small least-squares problems.

#[derive(Debug, Clone, Copy)]
pub struct LmOptions {
    pub max_iter: usize,
    /// Stop once `‖r‖` falls below this.
    pub residual_tol: f64,
    pub fd_step: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions { max_iter: 200, residual_tol: 1e-10, fd_step: 1e-7 }
    }
}

#[derive(Debug, Clone)]
pub struct LmResult {
    pub params: Vec<f64>,
    pub residual_norm: f64,
    pub iterations: usize,
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Solves `(A + μ I) x = b` for symmetric positive definite `A` via Cholesky.
fn solve_damped(a: &[Vec<f64>], mu: f64, b: &[f64]) -> Option<Vec<f64>> {
    let n = b.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = a[i][j] + if i == j { mu } else { 0.0 };
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                if s <= 0.0 {
                    return None;
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    let mut y = vec![0.0; n];
    for i in 0..n {
        let s: f64 = (0..i).map(|k| l[i][k] * y[k]).sum();
        y[i] = (b[i] - s) / l[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let s: f64 = (i + 1..n).map(|k| l[k][i] * x[k]).sum();
        x[i] = (y[i] - s) / l[i][i];
    }
    Some(x)
}

/// Minimizes `‖r(p)‖²` from `p0` with a forward-difference Jacobian.
pub fn levenberg_marquardt(residual: impl Fn(&[f64]) -> Vec<f64>, p0: &[f64], opts: &LmOptions) -> LmResult {
    let k = p0.len();
    let mut p = p0.to_vec();
    let mut r = residual(&p);
    let mut cost = norm(&r);
    let mut mu = 1e-3;
    let mut it = 0;
    while it < opts.max_iter && cost > opts.residual_tol {
        it += 1;
        let m = r.len();
        let mut jac = vec![vec![0.0; k]; m];
        for c in 0..k {
            let h = opts.fd_step * (1.0 + p[c].abs());
            let mut q = p.clone();
            q[c] += h;
            let rq = residual(&q);
            for row in 0..m {
                jac[row][c] = (rq[row] - r[row]) / h;
            }
        }
        let mut jtj = vec![vec![0.0; k]; k];
        let mut jtr = vec![0.0; k];
        for a in 0..k {
            for b in 0..=a {
                let s: f64 = (0..m).map(|row| jac[row][a] * jac[row][b]).sum();
                jtj[a][b] = s;
                jtj[b][a] = s;
            }
            jtr[a] = -(0..m).map(|row| jac[row][a] * r[row]).sum::<f64>();
        }
        let scale = (0..k).map(|a| jtj[a][a]).fold(0.0f64, f64::max).max(1e-300);
        let mut improved = false;
        for _ in 0..30 {
            let Some(step) = solve_damped(&jtj, mu * scale, &jtr) else {
                mu *= 10.0;
                continue;
            };
            let q: Vec<f64> = p.iter().zip(&step).map(|(a, b)| a + b).collect();
            let rq = residual(&q);
            let c = norm(&rq);
            if c.is_finite() && c < cost {
                p = q;
                r = rq;
                cost = c;
                mu = (mu / 3.0).max(1e-12);
                improved = true;
                break;
            }
            mu *= 4.0;
        }
        if !improved {
            break;
        }
    }
    LmResult { params: p, residual_norm: cost, iterations: it }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rosenbrock_residuals() {
        let r = levenberg_marquardt(|p| vec![10.0 * (p[1] - p[0] * p[0]), 1.0 - p[0]], &[-1.2, 1.0], &LmOptions::default());
        assert!(r.residual_norm < 1e-8);
        assert!((r.params[0] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn underdetermined_system() {
        let r = levenberg_marquardt(|p| vec![p[0] + p[1] * p[2] - 2.0], &[0.0, 0.0, 0.0], &LmOptions::default());
        assert!(r.residual_norm < 1e-10);
    }
}
