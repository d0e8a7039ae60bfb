//! Projected gradient descent and the Euclidean projections it needs.

use crate::numeric::{dot, norm};

/// Euclidean projection onto `{q : q_i >= lo, sum q = 1}` by sorting.
pub(crate) fn project_simplex(x: &[f64], lo: f64) -> Vec<f64> {
    let m = x.len();
    let mass = 1.0 - lo * m as f64;
    let y: Vec<f64> = x.iter().map(|v| v - lo).collect();
    let mut u = y.clone();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, &v) in u.iter().enumerate() {
        cumsum += v;
        let t = (cumsum - mass) / (k + 1) as f64;
        if v - t > 0.0 {
            theta = t;
        }
    }
    y.iter().map(|v| (v - theta).max(0.0) + lo).collect()
}

/// A closed convex set inside the plane `sum q = 1`, given by
/// `a . q = b` (equality) or `a . q >= b`, with `a` orthogonal to the ones
/// vector.
#[derive(Debug, Clone)]
pub(crate) struct PlaneCut {
    a: Vec<f64>,
    b: f64,
    equality: bool,
}

impl PlaneCut {
    /// Turns `h . q (= or >=) rhs` into an equivalent cut on the sum plane.
    pub(crate) fn new(h: &[f64], rhs: f64, equality: bool) -> Self {
        let mean = h.iter().sum::<f64>() / h.len() as f64;
        Self {
            a: h.iter().map(|v| v - mean).collect(),
            b: rhs - mean,
            equality,
        }
    }

    fn project(&self, x: &[f64]) -> Vec<f64> {
        let m = x.len() as f64;
        let shift = (1.0 - x.iter().sum::<f64>()) / m;
        let mut y: Vec<f64> = x.iter().map(|v| v + shift).collect();
        let aa = dot(&self.a, &self.a);
        if aa == 0.0 {
            return y;
        }
        let gap = self.b - dot(&self.a, &y);
        if self.equality || gap > 0.0 {
            for (yi, ai) in y.iter_mut().zip(&self.a) {
                *yi += gap / aa * ai;
            }
        }
        y
    }

    pub(crate) fn residual(&self, q: &[f64]) -> f64 {
        let v = self.b - dot(&self.a, q);
        if self.equality {
            v.abs()
        } else {
            v.max(0.0)
        }
    }
}

/// Dykstra's alternating projection onto `{q >= lo, sum q = 1} ∩ cut`.
pub(crate) fn project_polytope(x: &[f64], lo: f64, cut: &PlaneCut) -> Vec<f64> {
    let m = x.len();
    let mut a = x.to_vec();
    let mut p = vec![0.0; m];
    let mut q = vec![0.0; m];
    for _ in 0..20_000 {
        let ya: Vec<f64> = a.iter().zip(&q).map(|(v, c)| v + c).collect();
        let yb = cut.project(&ya);
        q = ya.iter().zip(&yb).map(|(v, w)| v - w).collect();
        let xa: Vec<f64> = yb.iter().zip(&p).map(|(v, c)| v + c).collect();
        let na = project_simplex(&xa, lo);
        p = xa.iter().zip(&na).map(|(v, w)| v - w).collect();
        let change: f64 = na.iter().zip(&a).map(|(u, v)| (u - v).abs()).fold(0.0, f64::max);
        a = na;
        if change <= 1e-15 && cut.residual(&a) <= 1e-13 {
            break;
        }
    }
    a
}

#[derive(Debug, Clone)]
pub(crate) struct PgdOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Gradient-mapping norm `||x - P(x - grad)||` at the returned point.
    pub residual: f64,
}

/// Projected gradient descent with Barzilai-Borwein steps and a
/// backtracking sufficient-decrease test.
pub(crate) fn pgd(
    obj: &dyn Fn(&[f64]) -> f64,
    grad: &dyn Fn(&[f64]) -> Vec<f64>,
    proj: &dyn Fn(&[f64]) -> Vec<f64>,
    x0: &[f64],
    tol: f64,
    max_iters: usize,
) -> PgdOutcome {
    let step = |x: &[f64], g: &[f64], alpha: f64| -> Vec<f64> {
        let y: Vec<f64> = x.iter().zip(g).map(|(a, b)| a - alpha * b).collect();
        proj(&y)
    };
    let mapping = |x: &[f64], g: &[f64]| -> f64 {
        let y = step(x, g, 1.0);
        x.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    };

    let mut x = proj(x0);
    let mut fx = obj(&x);
    let mut g = grad(&x);
    let mut alpha = 1.0;
    let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut iterations = 0;
    let mut residual = mapping(&x, &g);

    while iterations < max_iters && residual > tol {
        iterations += 1;
        if let Some((px, pg)) = &prev {
            let s: Vec<f64> = x.iter().zip(px).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = g.iter().zip(pg).map(|(a, b)| a - b).collect();
            let sy = dot(&s, &y);
            if sy > 0.0 {
                alpha = (dot(&s, &s) / sy).clamp(1e-12, 1e12);
            }
        }
        let mut accepted = None;
        for _ in 0..80 {
            let xn = step(&x, &g, alpha);
            let d: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
            let fn_ = obj(&xn);
            let model = fx + dot(&g, &d) + dot(&d, &d) / (2.0 * alpha);
            if fn_.is_finite() && fn_ <= model + 4.0 * f64::EPSILON * fx.abs() {
                accepted = Some((xn, fn_));
                break;
            }
            alpha *= 0.5;
        }
        let Some((xn, fn_)) = accepted else {
            break;
        };
        if norm(&xn.iter().zip(&x).map(|(a, b)| a - b).collect::<Vec<_>>()) == 0.0 {
            break;
        }
        let gn = grad(&xn);
        prev = Some((std::mem::replace(&mut x, xn), std::mem::replace(&mut g, gn)));
        fx = fn_;
        residual = mapping(&x, &g);
    }
    PgdOutcome {
        converged: residual <= tol,
        x,
        iterations,
        residual,
    }
}
