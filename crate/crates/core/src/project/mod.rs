//! Divergence minimization over constrained subsets of the probability
//! simplex: `q_f(S) = argmin_{q in S} D_f(p || q)`.
//!
//! Two constraint families are supported. A mean hyperplane `h . q = mu`
//! gives a convex problem, solved by projected gradient descent. The exterior
//! of a divergence ball, `metric(p, q) >= eps`, is not convex:
//!
//! - for total variation it splits exactly into the halfspace pieces
//!   `s . (q - p) >= eps`, one per sign pattern `s`, each solved as a convex
//!   problem;
//! - for chi-square the minimizer of a convex `D_f(p || .)` lies on the
//!   sphere `chi2(p, q) = eps`, which is searched by multi-start descent over
//!   ray directions from `p`.
//!
//! Iterates stay `margin` inside the simplex so KL objectives remain finite;
//! the reported objective is re-evaluated exactly at the returned point.

mod solver;
mod sweep;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub use sweep::{ball_sweep, mean_sweep, BallMode, SweepCell, SweepGenerator, SweepTable};

use crate::bregman::{chi2_unchecked, GeneratorND};
use crate::error::{ensure_stochastic, Error, Result};
use crate::ext::{serde_f64, ExtendedReal};
use crate::numeric::{dot, norm};
use solver::{pgd, project_polytope, PlaneCut};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "tv")]
    Tv,
    #[serde(rename = "chi2")]
    ChiSquare,
}

impl Metric {
    pub fn eval(&self, p: &[f64], q: &[f64]) -> ExtendedReal {
        match self {
            Metric::Tv => ExtendedReal::new(p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum()),
            Metric::ChiSquare => chi2_unchecked(p, q),
        }
    }

    /// `sup_q metric(p, q)` over the simplex.
    pub fn sup_over_simplex(&self, p: &[f64]) -> ExtendedReal {
        match self {
            Metric::Tv => {
                let min = p.iter().copied().fold(f64::INFINITY, f64::min);
                ExtendedReal::new(2.0 * (1.0 - min))
            }
            Metric::ChiSquare => ExtendedReal::INFINITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConstraintSet {
    MeanHyperplane { h: Vec<f64>, mu: f64 },
    BallExterior { metric: Metric, epsilon: f64 },
}

impl ConstraintSet {
    fn check_feasible(&self, p: &[f64]) -> Result<()> {
        match self {
            ConstraintSet::MeanHyperplane { h, mu } => {
                if h.len() != p.len() {
                    return Err(Error::DimensionMismatch(h.len(), p.len()));
                }
                let lo = h.iter().copied().fold(f64::INFINITY, f64::min);
                let hi = h.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                if !(lo..=hi).contains(mu) {
                    return Err(Error::Infeasible(format!("mu = {mu} outside [{lo}, {hi}]")));
                }
            }
            ConstraintSet::BallExterior { metric, epsilon } => {
                if epsilon.is_nan() || *epsilon < 0.0 {
                    return Err(Error::InvalidArgument(format!("epsilon must be >= 0, got {epsilon}")));
                }
                let sup = metric.sup_over_simplex(p);
                if ExtendedReal::new(*epsilon) > sup {
                    return Err(Error::Infeasible(format!("epsilon = {epsilon} exceeds {sup}")));
                }
            }
        }
        Ok(())
    }

    /// How far `q` is from satisfying the constraint (0 when satisfied).
    pub fn residual(&self, p: &[f64], q: &[f64]) -> f64 {
        match self {
            ConstraintSet::MeanHyperplane { h, mu } => (dot(h, q) - mu).abs(),
            ConstraintSet::BallExterior { metric, epsilon } => {
                let v = metric.eval(p, q);
                if v.is_infinite() {
                    0.0
                } else {
                    (epsilon - v.value()).max(0.0)
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverOpts {
    pub max_iters: usize,
    /// Stopping threshold on the gradient-mapping norm.
    pub tol: f64,
    /// Iterates are kept at least this far inside the simplex.
    pub margin: f64,
    /// Random starts for the chi-square exterior search.
    pub n_starts: usize,
    pub seed: u64,
    /// Extra starting points; feasible ones are also kept as candidates.
    pub warm_starts: Vec<Vec<f64>>,
}

impl Default for SolverOpts {
    fn default() -> Self {
        Self {
            max_iters: 100_000,
            tol: 1e-9,
            margin: 1e-9,
            n_starts: 8,
            seed: 0,
            warm_starts: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionResult {
    pub q_star: Vec<f64>,
    pub objective: ExtendedReal,
    pub iterations: usize,
    pub converged: bool,
    /// Gradient-mapping norm (hyperplane and TV pieces) or tangential
    /// gradient norm on the chi-square sphere.
    #[serde(with = "serde_f64")]
    pub kkt_residual: f64,
    pub constraint_residual: f64,
    /// True when the problem is non-convex and the result is the best of
    /// several local searches.
    pub local: bool,
}

struct Candidate {
    q: Vec<f64>,
    objective: f64,
    iterations: usize,
    converged: bool,
    residual: f64,
}

fn pick_best(cands: Vec<Candidate>) -> Option<Candidate> {
    // strict improvement only, so ties keep the earliest candidate
    cands.into_iter().fold(None, |best: Option<Candidate>, c| match best {
        Some(b) if b.objective <= c.objective => Some(b),
        _ => Some(c),
    })
}

pub fn minimize_divergence(
    f: &dyn GeneratorND,
    p: &[f64],
    s: &ConstraintSet,
    opts: &SolverOpts,
) -> Result<ProjectionResult> {
    if p.len() != f.dim() {
        return Err(Error::DimensionMismatch(p.len(), f.dim()));
    }
    ensure_stochastic("p", p, 1e-10)?;
    s.check_feasible(p)?;
    let obj = |q: &[f64]| f.divergence(p, q).value();
    let grad = |q: &[f64]| f.divergence_grad_q(p, q);

    let (best, local) = match s {
        ConstraintSet::MeanHyperplane { h, mu } => {
            let cut = PlaneCut::new(h, *mu, true);
            let proj = |x: &[f64]| project_polytope(x, opts.margin, &cut);
            let out = pgd(&obj, &grad, &proj, p, opts.tol, opts.max_iters);
            let c = Candidate {
                objective: obj(&out.x),
                q: out.x,
                iterations: out.iterations,
                converged: out.converged,
                residual: out.residual,
            };
            (c, false)
        }
        ConstraintSet::BallExterior { epsilon, .. } if *epsilon == 0.0 => (
            Candidate {
                q: p.to_vec(),
                objective: 0.0,
                iterations: 0,
                converged: true,
                residual: 0.0,
            },
            false,
        ),
        ConstraintSet::BallExterior { metric, epsilon } => {
            let mut cands = match metric {
                Metric::Tv => tv_pieces(p, *epsilon, &obj, &grad, opts),
                Metric::ChiSquare => chi2_sphere(f, p, *epsilon, opts),
            };
            for w in &opts.warm_starts {
                let feasible = match metric.eval(p, w).finite() {
                    Some(v) => v >= *epsilon * (1.0 - 1e-12),
                    None => true,
                };
                if w.len() == p.len() && feasible {
                    cands.push(Candidate {
                        q: w.clone(),
                        objective: obj(w),
                        iterations: 0,
                        converged: true,
                        residual: 0.0,
                    });
                }
            }
            let best = pick_best(cands).ok_or_else(|| {
                Error::Infeasible(format!("no feasible start for epsilon = {epsilon}"))
            })?;
            (best, *metric == Metric::ChiSquare)
        }
    };
    let objective = f.divergence(p, &best.q);
    Ok(ProjectionResult {
        constraint_residual: s.residual(p, &best.q),
        q_star: best.q,
        objective,
        iterations: best.iterations,
        converged: best.converged,
        kkt_residual: best.residual,
        local,
    })
}

/// One convex solve per sign pattern `s` with `{s . (q - p) >= eps}`
/// reachable on the simplex. Patterns with all-equal signs are empty.
fn tv_pieces(
    p: &[f64],
    eps: f64,
    obj: &dyn Fn(&[f64]) -> f64,
    grad: &dyn Fn(&[f64]) -> Vec<f64>,
    opts: &SolverOpts,
) -> Vec<Candidate> {
    let m = p.len();
    let mut out = Vec::new();
    for mask in 1..(1usize << m) - 1 {
        let s: Vec<f64> = (0..m).map(|i| if mask >> i & 1 == 1 { 1.0 } else { -1.0 }).collect();
        let sp = dot(&s, p);
        // max of s . q over the margin-shrunk simplex
        let reach = 1.0 - 2.0 * opts.margin * m as f64;
        if reach - sp < eps {
            continue;
        }
        let cut = PlaneCut::new(&s, eps + sp, false);
        let proj = |x: &[f64]| project_polytope(x, opts.margin, &cut);
        let outcome = pgd(obj, grad, &proj, p, opts.tol, opts.max_iters);
        out.push(Candidate {
            objective: obj(&outcome.x),
            q: outcome.x,
            iterations: outcome.iterations,
            converged: outcome.converged,
            residual: outcome.residual,
        });
    }
    out
}

/// Orthonormal basis of `{d : sum d = 0}` (Helmert columns), as rows.
fn sum_zero_basis(m: usize) -> Vec<Vec<f64>> {
    (1..m)
        .map(|k| {
            let s = ((k * (k + 1)) as f64).sqrt();
            (0..m)
                .map(|i| match i.cmp(&k) {
                    std::cmp::Ordering::Less => 1.0 / s,
                    std::cmp::Ordering::Equal => -(k as f64) / s,
                    std::cmp::Ordering::Greater => 0.0,
                })
                .collect()
        })
        .collect()
}

struct Sphere<'a> {
    f: &'a dyn GeneratorND,
    p: &'a [f64],
    eps: f64,
    margin: f64,
    basis: Vec<Vec<f64>>,
}

struct RayPoint {
    q: Vec<f64>,
    d: Vec<f64>,
    t: f64,
    value: f64,
}

impl Sphere<'_> {
    fn direction(&self, u: &[f64]) -> Vec<f64> {
        let m = self.p.len();
        (0..m).map(|i| self.basis.iter().zip(u).map(|(b, c)| b[i] * c).sum()).collect()
    }

    fn coords(&self, d: &[f64]) -> Vec<f64> {
        self.basis.iter().map(|b| dot(b, d)).collect()
    }

    /// The point where the ray from `p` along `u` meets `chi2 = eps`, if it
    /// does so before leaving the margin-shrunk simplex.
    fn hit(&self, u: &[f64]) -> Option<RayPoint> {
        let d = self.direction(u);
        let t_max = self
            .p
            .iter()
            .zip(&d)
            .filter(|(_, &di)| di < 0.0)
            .map(|(&pi, &di)| (pi - self.margin) / -di)
            .fold(f64::INFINITY, f64::min);
        if !(t_max.is_finite() && t_max > 0.0) {
            return None;
        }
        // chi2 along the ray is convex and increasing in t, so Newton steps
        // from t_max descend monotonically onto the root from the feasible side
        let chi = |t: f64| -> (f64, f64) {
            let (mut v, mut dv) = (0.0, 0.0);
            for (&pi, &di) in self.p.iter().zip(&d) {
                let qi = pi + t * di;
                v += t * t * di * di / qi;
                dv += di * di * t * (2.0 * pi + t * di) / (qi * qi);
            }
            (v - self.eps, dv)
        };
        if chi(t_max).0 < 0.0 {
            return None;
        }
        let mut t = t_max;
        for _ in 0..200 {
            let (c, dc) = chi(t);
            if c <= 0.0 || dc <= 0.0 {
                break;
            }
            let next = t - c / dc;
            if next.is_nan() || next >= t {
                break;
            }
            t = next;
        }
        let q: Vec<f64> = self.p.iter().zip(&d).map(|(a, b)| a + t * b).collect();
        let value = self.f.divergence(self.p, &q).value();
        Some(RayPoint { q, d, t, value })
    }

    /// Tangential gradient of `u -> D_f(p || q(u))` on the unit sphere.
    fn gradient(&self, u: &[f64], r: &RayPoint) -> Vec<f64> {
        let gf = self.f.divergence_grad_q(self.p, &r.q);
        let gc: Vec<f64> = self
            .p
            .iter()
            .zip(&r.q)
            .map(|(&a, &b)| (b * b - a * a) / (b * b))
            .collect();
        let ratio = dot(&gf, &r.d) / dot(&gc, &r.d);
        let gd: Vec<f64> = gf.iter().zip(&gc).map(|(a, b)| r.t * (a - ratio * b)).collect();
        let gu = self.coords(&gd);
        let radial = dot(&gu, u);
        gu.iter().zip(u).map(|(g, x)| g - radial * x).collect()
    }

    /// Riemannian gradient descent on the unit sphere of directions with
    /// Barzilai-Borwein steps and Armijo backtracking. Stops at `tol` or when
    /// no representable decrease remains.
    fn descend(&self, u0: Vec<f64>, tol: f64, max_iters: usize) -> Option<Candidate> {
        let normalize = |v: Vec<f64>| -> Vec<f64> {
            let n = norm(&v);
            v.into_iter().map(|x| x / n).collect()
        };
        let mut u = normalize(u0);
        let mut r = self.hit(&u)?;
        let mut g = self.gradient(&u, &r);
        let mut alpha = 0.1;
        let mut iterations = 0;
        while iterations < max_iters && norm(&g) > tol {
            iterations += 1;
            let gg = dot(&g, &g);
            let mut accepted = None;
            for _ in 0..60 {
                let un = normalize(u.iter().zip(&g).map(|(a, b)| a - alpha * b).collect());
                if let Some(rn) = self.hit(&un) {
                    if rn.value <= r.value - 1e-4 * alpha * gg {
                        accepted = Some((un, rn));
                        break;
                    }
                }
                alpha *= 0.5;
            }
            let Some((un, rn)) = accepted else {
                break;
            };
            let gn = self.gradient(&un, &rn);
            let sv: Vec<f64> = un.iter().zip(&u).map(|(a, b)| a - b).collect();
            let yv: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
            let sy = dot(&sv, &yv);
            alpha = if sy > 0.0 { (dot(&sv, &sv) / sy).clamp(1e-12, 1e3) } else { (2.0 * alpha).min(1e3) };
            let stalled = r.value - rn.value <= 4.0 * f64::EPSILON * r.value.abs();
            u = un;
            r = rn;
            g = gn;
            if stalled {
                break;
            }
        }
        let residual = norm(&g);
        Some(Candidate {
            objective: r.value,
            q: r.q,
            iterations,
            converged: residual <= tol || residual <= 1e-7 * (1.0 + r.value),
            residual,
        })
    }
}

fn chi2_sphere(f: &dyn GeneratorND, p: &[f64], eps: f64, opts: &SolverOpts) -> Vec<Candidate> {
    let m = p.len();
    let sphere = Sphere {
        f,
        p,
        eps,
        margin: opts.margin,
        basis: sum_zero_basis(m),
    };
    let mut starts: Vec<Vec<f64>> = Vec::new();
    for w in &opts.warm_starts {
        let d: Vec<f64> = w.iter().zip(p).map(|(a, b)| a - b).collect();
        let u = sphere.coords(&d);
        if norm(&u) > 0.0 {
            starts.push(u);
        }
    }
    for k in 0..m - 1 {
        for sign in [1.0, -1.0] {
            starts.push((0..m - 1).map(|j| if j == k { sign } else { 0.0 }).collect());
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for _ in 0..opts.n_starts {
        starts.push((0..m - 1).map(|_| StandardNormal.sample(&mut rng)).collect());
    }
    starts
        .into_iter()
        .filter_map(|u| sphere.descend(u, opts.tol, opts.max_iters))
        .collect()
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;

    use super::*;
    use crate::bregman::{Square, SumSeparable, XLogX};

    const P: [f64; 3] = [0.25, 0.5, 0.25];
    const H: [f64; 3] = [-1.0, 0.0, 1.0];

    /// Dense 1-D search over `q = (t, 1 - 2t - mu, t + mu)`, refined by
    /// golden section.
    fn mean_oracle(f: &dyn GeneratorND, mu: f64) -> f64 {
        let lo = (-mu).max(0.0);
        let hi = (1.0 - mu) / 2.0;
        let val = |t: f64| f.divergence(&P, &[t, 1.0 - 2.0 * t - mu, t + mu]).value();
        let n = 20_000;
        let mut best = (f64::INFINITY, lo);
        for i in 0..=n {
            let t = lo + (hi - lo) * i as f64 / n as f64;
            let v = val(t);
            if v < best.0 {
                best = (v, t);
            }
        }
        let step = (hi - lo) / n as f64;
        let (mut a, mut b) = ((best.1 - step).max(lo), (best.1 + step).min(hi));
        let phi = 0.5 * (5f64.sqrt() - 1.0);
        for _ in 0..200 {
            let c = b - phi * (b - a);
            let d = a + phi * (b - a);
            if val(c) < val(d) {
                b = d;
            } else {
                a = c;
            }
        }
        best.0.min(val(0.5 * (a + b)))
    }

    /// Minimum of `D_f(p || q)` over the simplex grid of step `1/n` subject to
    /// `metric(p, q) >= eps`.
    fn ball_oracle(f: &dyn GeneratorND, metric: Metric, eps: f64, n: usize) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..=n {
            for j in 0..=n - i {
                let q = [i as f64 / n as f64, j as f64 / n as f64, (n - i - j) as f64 / n as f64];
                let ok = match metric.eval(&P, &q).finite() {
                    Some(v) => v >= eps,
                    None => true,
                };
                if ok {
                    best = best.min(f.divergence(&P, &q).value());
                }
            }
        }
        best
    }

    #[test]
    fn zero_mean_constraint_returns_p() {
        for f in [
            &SumSeparable::new(XLogX, 3) as &dyn GeneratorND,
            &SumSeparable::new(Square, 3),
        ] {
            let s = ConstraintSet::MeanHyperplane { h: H.to_vec(), mu: 0.0 };
            let r = minimize_divergence(f, &P, &s, &SolverOpts::default()).unwrap();
            assert!(r.objective.value() < 1e-15);
            for (a, b) in r.q_star.iter().zip(P) {
                assert_abs_diff_eq!(*a, b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn zero_ball_returns_p() {
        let f = SumSeparable::new(XLogX, 3);
        let s = ConstraintSet::BallExterior { metric: Metric::Tv, epsilon: 0.0 };
        let r = minimize_divergence(&f, &P, &s, &SolverOpts::default()).unwrap();
        assert_eq!(r.objective, ExtendedReal::ZERO);
        assert_eq!(r.q_star, P.to_vec());
    }

    #[test]
    fn mean_constraint_matches_line_search_oracle() {
        for f in [
            &SumSeparable::new(XLogX, 3) as &dyn GeneratorND,
            &SumSeparable::new(Square, 3),
        ] {
            for mu in [-0.45, -0.3, 0.1, 0.3, 0.5] {
                let s = ConstraintSet::MeanHyperplane { h: H.to_vec(), mu };
                let r = minimize_divergence(f, &P, &s, &SolverOpts::default()).unwrap();
                let oracle = mean_oracle(f, mu);
                assert!(
                    (r.objective.value() - oracle).abs() < 1e-6,
                    "{} mu={mu}: {} vs {oracle}",
                    f.label(),
                    r.objective
                );
                assert!(r.constraint_residual < 1e-8);
                assert!((r.q_star.iter().sum::<f64>() - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn ball_exterior_beats_grid_oracle() {
        let kl = SumSeparable::new(XLogX, 3);
        let sq = SumSeparable::new(Square, 3);
        for f in [&kl as &dyn GeneratorND, &sq] {
            for (metric, eps) in [(Metric::Tv, 0.3), (Metric::Tv, 0.9), (Metric::ChiSquare, 0.5), (Metric::ChiSquare, 1.5)] {
                let s = ConstraintSet::BallExterior { metric, epsilon: eps };
                let r = minimize_divergence(f, &P, &s, &SolverOpts::default()).unwrap();
                let oracle = ball_oracle(f, metric, eps, 400);
                assert!(
                    r.objective.value() <= oracle + 1e-6,
                    "{} {metric:?} {eps}: {} vs {oracle}",
                    f.label(),
                    r.objective
                );
                assert!(r.constraint_residual < 1e-8, "{r:?}");
            }
        }
    }

    #[test]
    fn infeasible_constraints_are_rejected() {
        let f = SumSeparable::new(Square, 3);
        let s = ConstraintSet::MeanHyperplane { h: H.to_vec(), mu: 1.5 };
        assert!(matches!(
            minimize_divergence(&f, &P, &s, &SolverOpts::default()),
            Err(Error::Infeasible(_))
        ));
        let s = ConstraintSet::BallExterior { metric: Metric::Tv, epsilon: 1.6 };
        assert!(minimize_divergence(&f, &P, &s, &SolverOpts::default()).is_err());
    }

    #[test]
    fn helmert_basis_is_orthonormal() {
        let b = sum_zero_basis(4);
        for i in 0..3 {
            assert_abs_diff_eq!(b[i].iter().sum::<f64>(), 0.0, epsilon = 1e-15);
            for j in 0..3 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert_abs_diff_eq!(dot(&b[i], &b[j]), want, epsilon = 1e-15);
            }
        }
    }
}
