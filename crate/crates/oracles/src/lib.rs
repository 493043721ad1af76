//! Slow, obviously-correct reference computations for cross-checking the
//! smocklab solvers and geometry. Nothing here depends on smocklab itself.

use std::collections::BTreeSet;

pub type P2 = [f64; 2];

/// Twice the signed area of `abc`; positive when counter-clockwise.
pub fn orient(a: P2, b: P2, c: P2) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

/// Positive when `d` lies inside the circle through the counter-clockwise
/// triangle `abc`.
pub fn incircle(a: P2, b: P2, c: P2, d: P2) -> f64 {
    let r = |p: P2| [p[0] - d[0], p[1] - d[1], (p[0] - d[0]).powi(2) + (p[1] - d[1]).powi(2)];
    let (a, b, c) = (r(a), r(b), r(c));
    a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0]) + a[2] * (b[0] * c[1] - b[1] * c[0])
}

/// No three points within `eps` of collinear and no four within `eps` of
/// cocircular.
pub fn in_general_position(points: &[P2], eps: f64) -> bool {
    let n = points.len();
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let o = orient(points[i], points[j], points[k]);
                if o.abs() <= eps {
                    return false;
                }
                let (a, b, c) = if o > 0.0 { (i, j, k) } else { (i, k, j) };
                for l in k + 1..n {
                    if incircle(points[a], points[b], points[c], points[l]).abs() <= eps {
                        return false;
                    }
                }
            }
        }
    }
    true
}

/// Delaunay edges by testing every triangle for an empty circumcircle.
/// Quartic in the point count; only meaningful in general position.
pub fn delaunay_edges_bruteforce(points: &[P2]) -> BTreeSet<[usize; 2]> {
    let n = points.len();
    let mut edges = BTreeSet::new();
    for i in 0..n {
        for j in i + 1..n {
            for k in j + 1..n {
                let o = orient(points[i], points[j], points[k]);
                if o == 0.0 {
                    continue;
                }
                let (a, b, c) = if o > 0.0 { (i, j, k) } else { (i, k, j) };
                let empty = (0..n)
                    .filter(|&l| l != i && l != j && l != k)
                    .all(|l| incircle(points[a], points[b], points[c], points[l]) < 0.0);
                if empty {
                    edges.extend([[i, j], [i, k], [j, k]]);
                }
            }
        }
    }
    edges
}

/// Smallest Euclidean distance between a point of `a` and a point of `b`.
pub fn min_pair_distance(a: &[P2], b: &[P2]) -> f64 {
    let mut best = f64::INFINITY;
    for p in a {
        for q in b {
            best = best.min((p[0] - q[0]).hypot(p[1] - q[1]));
        }
    }
    best
}

/// Central-difference gradient.
pub fn fd_gradient(f: &dyn Fn(&[f64]) -> f64, x: &[f64]) -> Vec<f64> {
    let mut y = x.to_vec();
    (0..x.len())
        .map(|i| {
            let h = 1e-6 * x[i].abs().max(1.0);
            y[i] = x[i] + h;
            let up = f(&y);
            y[i] = x[i] - h;
            let down = f(&y);
            y[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Minimizes `f` by BFGS on finite-difference gradients, with Armijo
/// backtracking. Returns the last iterate.
pub fn fd_descent(f: &dyn Fn(&[f64]) -> f64, x0: &[f64], max_iters: usize, grad_tol: f64) -> Vec<f64> {
    let n = x0.len();
    let mut x = x0.to_vec();
    let mut fx = f(&x);
    let mut g = fd_gradient(f, &x);
    let identity = |m: &mut Vec<f64>| {
        m.iter_mut().for_each(|v| *v = 0.0);
        (0..n).for_each(|i| m[i * n + i] = 1.0);
    };
    let mut h = vec![0.0; n * n];
    identity(&mut h);
    for _ in 0..max_iters {
        if g.iter().fold(0.0f64, |m, v| m.max(v.abs())) < grad_tol {
            break;
        }
        let mut p: Vec<f64> = (0..n).map(|i| -dot(&h[i * n..(i + 1) * n], &g)).collect();
        if dot(&p, &g) >= 0.0 {
            identity(&mut h);
            p = g.iter().map(|v| -v).collect();
        }
        let slope = dot(&p, &g);
        let mut t = 1.0;
        let mut next = None;
        for _ in 0..60 {
            let cand: Vec<f64> = x.iter().zip(&p).map(|(a, b)| a + t * b).collect();
            let fc = f(&cand);
            if fc <= fx + 1e-4 * t * slope {
                next = Some((cand, fc));
                break;
            }
            t *= 0.5;
        }
        let Some((xn, fnew)) = next else { break };
        let gn = fd_gradient(f, &xn);
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-14 {
            let rho = 1.0 / sy;
            let hy: Vec<f64> = (0..n).map(|i| dot(&h[i * n..(i + 1) * n], &y)).collect();
            let yhy = dot(&y, &hy);
            for i in 0..n {
                for j in 0..n {
                    h[i * n + j] += -rho * (hy[i] * s[j] + s[i] * hy[j]) + (rho * rho * yhy + rho) * s[i] * s[j];
                }
            }
        }
        x = xn;
        fx = fnew;
        g = gn;
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn square_with_offset_point() {
        let pts = [[0.0, 0.0], [1.0, 0.0], [1.1, 1.0], [0.0, 1.0]];
        let e = delaunay_edges_bruteforce(&pts);
        assert_eq!(e.len(), 5);
        assert!(e.contains(&[1, 3]));
    }

    #[test]
    fn descent_finds_rosenbrock_minimum() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let x = fd_descent(&f, &[-1.2, 1.0], 2000, 1e-8);
        assert!((x[0] - 1.0).abs() < 1e-4 && (x[1] - 1.0).abs() < 1e-4);
    }
}
