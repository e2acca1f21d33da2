//! Marching squares for closed level curves of a scalar field on a
//! rectangle, with crossings refined by bisection along cell edges.

use std::collections::HashMap;

use rayon::prelude::*;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub nx: usize,
    pub ny: usize,
}

impl Grid {
    pub fn centered(center: [f64; 2], half_width: [f64; 2], nx: usize, ny: usize) -> Self {
        Grid {
            x_min: center[0] - half_width[0],
            x_max: center[0] + half_width[0],
            y_min: center[1] - half_width[1],
            y_max: center[1] + half_width[1],
            nx,
            ny,
        }
    }

    fn node(&self, i: usize, j: usize) -> [f64; 2] {
        [
            self.x_min + (self.x_max - self.x_min) * i as f64 / self.nx as f64,
            self.y_min + (self.y_max - self.y_min) * j as f64 / self.ny as f64,
        ]
    }
}

/// Edge identifier: `(i, j, horizontal)` joins node `(i,j)` to `(i+1,j)` or `(i,j+1)`.
type EdgeId = (usize, usize, bool);

/// Bisection for `f(p) = 0` on the segment `[a, b]` with a sign change.
fn refine(f: &(impl Fn([f64; 2]) -> f64 + Sync), a: [f64; 2], b: [f64; 2], fa: f64, tol: f64) -> [f64; 2] {
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
    let at = |t: f64| [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
    let pos_a = fa > 0.0;
    while (hi - lo) * len > tol {
        let mid = 0.5 * (lo + hi);
        let v = f(at(mid));
        if (v > 0.0) == pos_a {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo < 1e-17 {
            break;
        }
    }
    at(0.5 * (lo + hi))
}

/// Closed polylines of `{f = 0}` inside the grid (first point not repeated).
///
/// Fails if a curve reaches the grid boundary.
pub fn marching_squares(f: impl Fn([f64; 2]) -> f64 + Sync, grid: &Grid, tol: f64) -> Result<Vec<Vec<[f64; 2]>>> {
    let (nx, ny) = (grid.nx, grid.ny);
    let vals: Vec<Vec<f64>> =
        (0..=nx).into_par_iter().map(|i| (0..=ny).map(|j| f(grid.node(i, j))).collect()).collect();
    let positive = |i: usize, j: usize| vals[i][j] > 0.0;
    for i in 0..=nx {
        for j in 0..=ny {
            if vals[i][j].is_nan() {
                return Err(Error::Domain("NaN in contoured field".into()));
            }
        }
    }

    // segments per cell as pairs of crossed edges
    let mut adj: HashMap<EdgeId, Vec<EdgeId>> = HashMap::new();
    for i in 0..nx {
        for j in 0..ny {
            let c = [positive(i, j), positive(i + 1, j), positive(i + 1, j + 1), positive(i, j + 1)];
            // edges: bottom, right, top, left
            let e = [(i, j, true), (i + 1, j, false), (i, j + 1, true), (i, j, false)];
            let crossed: Vec<usize> = (0..4).filter(|&k| c[k] != c[(k + 1) % 4]).collect();
            let pairs: Vec<(usize, usize)> = match crossed.len() {
                0 => continue,
                2 => vec![(crossed[0], crossed[1])],
                4 => {
                    // saddle: decide by the cell centre
                    let p = grid.node(i, j);
                    let q = grid.node(i + 1, j + 1);
                    let centre = f([0.5 * (p[0] + q[0]), 0.5 * (p[1] + q[1])]) > 0.0;
                    if centre == c[0] {
                        vec![(0, 1), (2, 3)]
                    } else {
                        vec![(3, 0), (1, 2)]
                    }
                }
                _ => unreachable!(),
            };
            for (a, b) in pairs {
                adj.entry(e[a]).or_default().push(e[b]);
                adj.entry(e[b]).or_default().push(e[a]);
            }
        }
    }
    for nb in adj.values() {
        if nb.len() != 2 {
            return Err(Error::Domain("level curve leaves the grid; enlarge the domain".into()));
        }
    }

    let crossing = |e: &EdgeId| -> [f64; 2] {
        let (i, j, h) = *e;
        let (i2, j2) = if h { (i + 1, j) } else { (i, j + 1) };
        refine(&f, grid.node(i, j), grid.node(i2, j2), vals[i][j], tol)
    };

    let mut seen: HashMap<EdgeId, bool> = HashMap::new();
    let mut keys: Vec<EdgeId> = adj.keys().copied().collect();
    keys.sort();
    let mut curves = Vec::new();
    for start in keys {
        if seen.contains_key(&start) {
            continue;
        }
        let mut chain = vec![start];
        seen.insert(start, true);
        let mut prev = start;
        let mut cur = adj[&start][0];
        while cur != start {
            seen.insert(cur, true);
            chain.push(cur);
            let nb = &adj[&cur];
            let next = if nb[0] == prev { nb[1] } else { nb[0] };
            prev = cur;
            cur = next;
        }
        curves.push(chain);
    }
    Ok(curves.into_par_iter().map(|c| c.iter().map(crossing).collect()).collect())
}

/// Signed area (positive for counter-clockwise orientation).
pub fn signed_area(poly: &[[f64; 2]]) -> f64 {
    let n = poly.len();
    0.5 * (0..n).map(|k| {
        let (a, b) = (poly[k], poly[(k + 1) % n]);
        a[0] * b[1] - b[0] * a[1]
    }).sum::<f64>()
}

/// Even–odd point-in-polygon test.
pub fn contains(poly: &[[f64; 2]], p: [f64; 2]) -> bool {
    let n = poly.len();
    let mut inside = false;
    for k in 0..n {
        let (a, b) = (poly[k], poly[(k + 1) % n]);
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) / (b[1] - a[1]) * (b[0] - a[0]);
            if p[0] < x {
                inside = !inside;
            }
        }
    }
    inside
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn circle() {
        let g = Grid::centered([0.1, -0.2], [2.0, 2.0], 101, 101);
        let curves = marching_squares(|p| 1.0 - (p[0] - 0.1).powi(2) - (p[1] + 0.2).powi(2), &g, 1e-12).unwrap();
        assert_eq!(curves.len(), 1);
        let c = &curves[0];
        for p in c {
            let r = ((p[0] - 0.1).powi(2) + (p[1] + 0.2).powi(2)).sqrt();
            assert!((r - 1.0).abs() < 1e-10);
        }
        assert!((signed_area(c).abs() - PI).abs() < 2e-3);
        assert!(contains(c, [0.1, -0.2]));
        assert!(!contains(c, [1.5, 0.0]));
    }

    #[test]
    fn two_components_and_open_curve() {
        let g = Grid::centered([0.0, 0.0], [3.0, 2.0], 120, 80);
        let f = |p: [f64; 2]| 0.5 - ((p[0] - 1.5).powi(2) + p[1] * p[1]).min((p[0] + 1.5).powi(2) + p[1] * p[1]);
        assert_eq!(marching_squares(f, &g, 1e-10).unwrap().len(), 2);
        let small = Grid::centered([0.0, 0.0], [0.5, 0.5], 20, 20);
        assert!(marching_squares(|p| 0.36 - p[0] * p[0] - p[1] * p[1], &small, 1e-10).is_err());
        assert!(marching_squares(|p| 1.0 - p[0] * p[0] - p[1] * p[1], &small, 1e-10).unwrap().is_empty());
    }
}
