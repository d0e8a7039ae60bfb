//! Certification of the KL-domination inequalities on grids and samples.
//!
//! Every check evaluates a violation `lhs - C * KL` (so positive means the
//! inequality fails) and reduces it to the single worst point. Infinite KL
//! makes a point pass trivially; an infinite left side with finite KL is an
//! infinite violation. Reductions order by value and then lexicographically
//! by point, so reports are identical regardless of thread scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bregman::{
    breg1_unchecked, gen_kl_unchecked, hessian_gap_certificate, separable_constant, CertificateReport,
    Generator1D, GeneratorND, SampleSpec, XLogX,
};
use crate::error::{ensure_stochastic, ensure_unit, Error, Result};
use crate::ext::{serde_f64, ExtendedReal};
use crate::numeric::{lex_cmp, unit_grid};
use crate::proper_loss::{regret, universality_constant, Entropy, Logarithmic};

/// Absolute violation tolerance on the divergence scale.
pub const TOLERANCE: f64 = 1e-9;

/// Multiplicative slack used to turn a strict lower bound on `C` into a
/// usable constant: `C = bound * (1 + DEFAULT_SLACK)`.
pub const DEFAULT_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Precondition {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub inequality_id: String,
    pub constant_used: f64,
    pub n_points: usize,
    /// `max(lhs - C * rhs)`; positive means violated, `-inf` if every point
    /// passed trivially.
    #[serde(with = "serde_f64")]
    pub max_violation: f64,
    pub worst_pair: Option<(Vec<f64>, Vec<f64>)>,
    pub tolerance: f64,
    pub pass: bool,
    pub preconditions: Vec<Precondition>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certificate: Option<CertificateReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

impl BoundReport {
    /// Inequality holds and every precondition passed.
    pub fn certified(&self) -> bool {
        self.pass && self.preconditions.iter().all(|p| p.pass)
    }
}

/// The worst point seen so far; a total order makes merging associative.
#[derive(Debug, Clone)]
struct Worst {
    value: f64,
    p: Vec<f64>,
    q: Vec<f64>,
}

impl Worst {
    fn empty() -> Option<Self> {
        None
    }

    fn is_worse_than(&self, other: &Self) -> bool {
        match self.value.total_cmp(&other.value) {
            std::cmp::Ordering::Greater => true,
            std::cmp::Ordering::Less => false,
            std::cmp::Ordering::Equal => {
                lex_cmp(&self.p, &other.p).then(lex_cmp(&self.q, &other.q)).is_lt()
            }
        }
    }

    fn merge(a: Option<Self>, b: Option<Self>) -> Option<Self> {
        match (a, b) {
            (None, x) | (x, None) => x,
            (Some(a), Some(b)) => Some(if b.is_worse_than(&a) { b } else { a }),
        }
    }
}

/// `lhs - c * rhs` with the conventions described in the module docs.
/// `NaN` never appears in well-formed inputs; it is treated as a violation.
fn violation(lhs: ExtendedReal, rhs: ExtendedReal, c: f64) -> f64 {
    if rhs.is_infinite() {
        return f64::NEG_INFINITY;
    }
    let v = lhs.value() - c * rhs.value();
    if v.is_nan() {
        f64::INFINITY
    } else {
        v
    }
}

fn report(
    id: &str,
    c: f64,
    n_points: usize,
    worst: Option<Worst>,
    preconditions: Vec<Precondition>,
) -> BoundReport {
    let (max_violation, worst_pair) = match worst {
        Some(w) => (w.value, Some((w.p, w.q))),
        None => (f64::NEG_INFINITY, None),
    };
    BoundReport {
        inequality_id: id.to_string(),
        constant_used: c,
        n_points,
        max_violation,
        worst_pair,
        tolerance: TOLERANCE,
        pass: max_violation <= TOLERANCE,
        preconditions,
        certificate: None,
        note: None,
    }
}

fn ensure_constant(c: f64) -> Result<()> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidArgument(format!("C must be positive and finite, got {c}")));
    }
    Ok(())
}

fn ensure_grid_step(step: f64) -> Result<()> {
    if !(step > 0.0 && step <= 0.5) {
        return Err(Error::InvalidArgument(format!("grid step must lie in (0, 0.5], got {step}")));
    }
    Ok(())
}

/// Worst violation of `lhs(s, t) <= c * rhs(s, t)` over the closed square grid.
fn grid_square<F>(step: f64, eval: F) -> (usize, Option<Worst>)
where
    F: Fn(f64, f64) -> f64 + Sync,
{
    let grid = unit_grid(step);
    let worst = grid
        .par_iter()
        .map(|&p| {
            grid.iter().fold(Worst::empty(), |acc, &q| {
                let w = Worst {
                    value: eval(p, q),
                    p: vec![p],
                    q: vec![q],
                };
                Worst::merge(acc, Some(w))
            })
        })
        .reduce(Worst::empty, Worst::merge);
    (grid.len() * grid.len(), worst)
}

/// Binary domination `C * KL(p || q) >= D_{-G}(p || q)` over the closed grid
/// `{0, h, ..., 1}^2`.
///
/// Runs for any positive `C`; whether `C` exceeds `w(1/2) / 2` is recorded as
/// a precondition rather than enforced, so sub-threshold constants produce a
/// witness instead of an error.
pub fn verify_thm1(g: &dyn Entropy, c: f64, grid_step: f64) -> Result<BoundReport> {
    ensure_constant(c)?;
    ensure_grid_step(grid_step)?;
    let bound = universality_constant(g);
    let pre = Precondition {
        name: "C > w(1/2)/2".into(),
        pass: matches!(bound, Ok(b) if c > b),
        detail: match &bound {
            Ok(b) => format!("w(1/2)/2 = {b}"),
            Err(e) => e.to_string(),
        },
    };
    let (n, worst) = grid_square(grid_step, |p, q| {
        let d = regret(g, p, q).expect("grid lies in [0, 1]");
        let kl = regret(&Logarithmic, p, q).expect("grid lies in [0, 1]");
        violation(d, kl, c)
    });
    Ok(report("thm1", c, n, worst, vec![pre]))
}

/// Multivariate domination `C * genKL(p || q) >= D_f(p || q)` on sampled
/// pairs of `[0, 1]^m`, preceded by the Hessian-gap certificate on the
/// sampler's interior points.
pub fn verify_thm2(f: &dyn GeneratorND, c: f64, sampler: &SampleSpec) -> Result<BoundReport> {
    ensure_constant(c)?;
    let cert = hessian_gap_certificate(f, c, sampler)?;
    let pairs = sampler.pairs(f.dim())?;
    let worst = pairs
        .par_iter()
        .map(|(p, q)| {
            Some(Worst {
                value: violation(f.divergence(p, q), gen_kl_unchecked(p, q), c),
                p: p.clone(),
                q: q.clone(),
            })
        })
        .reduce(Worst::empty, Worst::merge);
    let pre = Precondition {
        name: "hessian gap C diag(1/p) - H_f(p) > 0".into(),
        pass: cert.pass,
        detail: format!("min eigenvalue {} over {} points", cert.min_gap, cert.n_samples),
    };
    let mut r = report("thm2", c, pairs.len(), worst, vec![pre]);
    r.certificate = Some(cert);
    r.note = Some("preconditions and inequality checked on samples; not a proof".into());
    Ok(r)
}

/// Separable domination, checked componentwise:
/// `C * (s log(s/t) - s + t) >= d_g(s || t)` on the closed grid of step
/// `sampler.grid_step` plus `sampler.n_random` uniform pairs.
///
/// Preconditions: `C > g''(1)` and convexity of `d_g(p || .)`, i.e.
/// `(q - p) g'''(q) + g''(q) >= 0` for `p in {0, 1}` on the grid.
pub fn verify_thm3(g: &dyn Generator1D, c: f64, sampler: &SampleSpec) -> Result<BoundReport> {
    ensure_constant(c)?;
    ensure_grid_step(sampler.grid_step)?;
    let bound = separable_constant(g);
    let above = Precondition {
        name: "C > g''(1)".into(),
        pass: c > bound.value(),
        detail: format!("g''(1) = {bound}"),
    };
    let mut worst_curv = (f64::INFINITY, f64::NAN);
    for q in unit_grid(sampler.grid_step.min(1e-3)) {
        if q <= 0.0 || q >= 1.0 {
            continue;
        }
        for p in [0.0, 1.0] {
            let v = (q - p) * g.g3(q) + g.g2(q);
            if v < worst_curv.0 {
                worst_curv = (v, q);
            }
        }
    }
    let convex = Precondition {
        name: "d_g(p || .) convex".into(),
        pass: worst_curv.0 >= -TOLERANCE,
        detail: format!("min (q-p) g'''(q) + g''(q) = {} at q = {}", worst_curv.0, worst_curv.1),
    };

    let eval = |s: f64, t: f64| violation(breg1_unchecked(g, s, t), breg1_unchecked(&XLogX, s, t), c);
    let (n_grid, grid_worst) = grid_square(sampler.grid_step, eval);
    let mut rng = ChaCha8Rng::seed_from_u64(sampler.seed);
    let pairs: Vec<(f64, f64)> = (0..sampler.n_random)
        .map(|_| (rng.random::<f64>(), rng.random::<f64>()))
        .collect();
    let random_worst = pairs
        .par_iter()
        .map(|&(s, t)| {
            Some(Worst {
                value: eval(s, t),
                p: vec![s],
                q: vec![t],
            })
        })
        .reduce(Worst::empty, Worst::merge);
    let worst = Worst::merge(grid_worst, random_worst);
    Ok(report("thm3", c, n_grid + pairs.len(), worst, vec![above, convex]))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FisherReport {
    pub p: f64,
    pub constant_used: f64,
    pub dps: Vec<f64>,
    pub ratios: Vec<f64>,
    /// Maximum of the last three ratios.
    pub limsup_estimate: f64,
    pub tail_decreasing: bool,
    pub truncated: bool,
    pub pass: bool,
}

const FISHER_LIMSUP_TOL: f64 = 1e-3;
const FISHER_MIN_DP: f64 = 1e-8;

/// Local quadratic behaviour near `p`: the ratios
/// `r_k = [D_{-G}(p || p + dp_k) / C] / [dp_k^2 J(p) / 2]`, `dp_k = dp0 / 2^k`,
/// with `J(p) = 1 / (p (1 - p))`.
///
/// If `p + dp0` is not in `(0, 1)` the perturbation is applied downwards
/// (`p - dp_k`) instead. Halving stops early once `dp_k < 1e-8`. The check
/// passes when the maximum of the last three ratios is at most `1 + 1e-3`
/// and the last three successive differences are nonincreasing.
pub fn local_fisher_check(
    g: &dyn Entropy,
    c: f64,
    p: f64,
    dp0: f64,
    halvings: usize,
) -> Result<FisherReport> {
    ensure_constant(c)?;
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::OutOfDomain {
            what: "p",
            value: p,
            domain: "(0, 1)",
        });
    }
    if !(dp0 > 0.0 && dp0 < 1.0) {
        return Err(Error::InvalidArgument(format!("dp0 must lie in (0, 1), got {dp0}")));
    }
    let sign = if p + dp0 < 1.0 { 1.0 } else { -1.0 };
    if p + sign * dp0 <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "neither p + dp0 nor p - dp0 lies in (0, 1) for p = {p}, dp0 = {dp0}"
        )));
    }
    let j = 1.0 / (p * (1.0 - p));
    let mut dps = Vec::new();
    let mut ratios = Vec::new();
    let mut truncated = false;
    for k in 0..=halvings {
        let dp = dp0 / 2f64.powi(k as i32);
        if dp < FISHER_MIN_DP {
            truncated = true;
            break;
        }
        let q = p + sign * dp;
        // the representable step, so rounding of q does not leak into the ratio
        let step = q - p;
        let d = regret(g, p, q)?;
        ratios.push((d.value() / c) / (step * step * j / 2.0));
        dps.push(dp);
    }
    let tail = &ratios[ratios.len().saturating_sub(3)..];
    let limsup_estimate = tail.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let diffs: Vec<f64> = ratios.windows(2).map(|w| (w[0] - w[1]).abs()).collect();
    let last = &diffs[diffs.len().saturating_sub(3)..];
    let tail_decreasing = last.windows(2).all(|w| w[1] <= w[0] + 1e-12);
    Ok(FisherReport {
        p,
        constant_used: c,
        dps,
        ratios,
        limsup_estimate,
        tail_decreasing,
        truncated,
        pass: limsup_estimate <= 1.0 + FISHER_LIMSUP_TOL && tail_decreasing,
    })
}

/// A joint weighting of `(x, t)` pairs with conditional label distributions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointWeights {
    /// `w[x][t]`, nonnegative, summing to 1.
    pub w: Vec<Vec<f64>>,
    pub p_y_given_x: Vec<Vec<f64>>,
    pub p_y_given_t: Vec<Vec<f64>>,
}

const STOCHASTIC_TOL: f64 = 1e-12;

impl JointWeights {
    pub fn validate(&self) -> Result<()> {
        let nx = self.p_y_given_x.len();
        let nt = self.p_y_given_t.len();
        if self.w.len() != nx {
            return Err(Error::DimensionMismatch(self.w.len(), nx));
        }
        let flat: Vec<f64> = self.w.iter().flatten().copied().collect();
        for row in &self.w {
            if row.len() != nt {
                return Err(Error::DimensionMismatch(row.len(), nt));
            }
        }
        ensure_stochastic("joint weights", &flat, STOCHASTIC_TOL)?;
        let m = self.p_y_given_x.first().map_or(0, Vec::len);
        for row in self.p_y_given_x.iter().chain(&self.p_y_given_t) {
            if row.len() != m {
                return Err(Error::DimensionMismatch(row.len(), m));
            }
            ensure_stochastic("conditional row", row, STOCHASTIC_TOL)?;
        }
        Ok(())
    }

    /// Random weights and conditionals (uniform draws, normalized) for tests
    /// and demonstrations.
    pub fn random(nx: usize, nt: usize, m: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let row = |rng: &mut ChaCha8Rng, n: usize| -> Vec<f64> {
            let v: Vec<f64> = (0..n).map(|_| rng.random_range(0.05..1.0)).collect();
            let s: f64 = v.iter().sum();
            let mut v: Vec<f64> = v.into_iter().map(|x| x / s).collect();
            // put the rounding residue on the last entry so the row sums to 1
            let head: f64 = v[..n - 1].iter().sum();
            v[n - 1] = 1.0 - head;
            v
        };
        let flat = row(&mut rng, nx * nt);
        let w = flat.chunks(nt).map(<[f64]>::to_vec).collect();
        let p_y_given_x = (0..nx).map(|_| row(&mut rng, m)).collect();
        let p_y_given_t = (0..nt).map(|_| row(&mut rng, m)).collect();
        Self {
            w,
            p_y_given_x,
            p_y_given_t,
        }
    }
}

/// Expected-divergence bound
/// `sum_{x,t} w(x,t) D_f(p(.|x) || p(.|t)) <= C sum_{x,t} w(x,t) KL(p(.|x) || p(.|t))`.
///
/// `worst_pair` holds `([x], [t])` of the largest pointwise weighted
/// violation; `max_violation` is the aggregate `lhs - C * rhs`.
pub fn expected_bound_check(
    f: &dyn GeneratorND,
    c: f64,
    jw: &JointWeights,
    sampler: &SampleSpec,
) -> Result<BoundReport> {
    ensure_constant(c)?;
    jw.validate()?;
    let m = jw.p_y_given_x.first().map_or(0, Vec::len);
    if m != f.dim() {
        return Err(Error::DimensionMismatch(m, f.dim()));
    }
    let cert = hessian_gap_certificate(f, c, sampler)?;
    let mut lhs = ExtendedReal::ZERO;
    let mut rhs = ExtendedReal::ZERO;
    let mut worst = Worst::empty();
    let mut n = 0;
    for (x, row) in jw.w.iter().enumerate() {
        for (t, &wt) in row.iter().enumerate() {
            if wt == 0.0 {
                continue;
            }
            n += 1;
            let (a, b) = (&jw.p_y_given_x[x], &jw.p_y_given_t[t]);
            let d = f.divergence(a, b).scale(wt);
            let kl = gen_kl_unchecked(a, b).scale(wt);
            lhs = lhs + d;
            rhs = rhs + kl;
            worst = Worst::merge(
                worst,
                Some(Worst {
                    value: violation(d, kl, c),
                    p: vec![x as f64],
                    q: vec![t as f64],
                }),
            );
        }
    }
    let pre = Precondition {
        name: "hessian gap C diag(1/p) - H_f(p) > 0".into(),
        pass: cert.pass,
        detail: format!("min eigenvalue {} over {} points", cert.min_gap, cert.n_samples),
    };
    let mut r = report("ib", c, n, worst, vec![pre]);
    r.max_violation = violation(lhs, rhs, c);
    r.pass = r.max_violation <= TOLERANCE;
    r.certificate = Some(cert);
    Ok(r)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PinskerTriple {
    pub kl: ExtendedReal,
    pub half_tv_sq: f64,
    pub half_l2_sq: f64,
}

impl PinskerTriple {
    /// `kl >= half_tv_sq >= half_l2_sq` within `1e-12`.
    pub fn ordered(&self) -> bool {
        let kl_ok = self.kl.is_infinite() || self.kl.value() >= self.half_tv_sq - 1e-12;
        kl_ok && self.half_tv_sq >= self.half_l2_sq - 1e-12
    }
}

/// `(KL(p || q), TV(p, q)^2 / 2, ||p - q||^2 / 2)` for simplex vectors.
pub fn pinsker_compare(p: &[f64], q: &[f64]) -> Result<PinskerTriple> {
    crate::error::ensure_same_len(p, q)?;
    ensure_stochastic("p", p, 1e-9)?;
    ensure_stochastic("q", q, 1e-9)?;
    for &x in p.iter().chain(q) {
        ensure_unit("coordinate", x)?;
    }
    let tv: f64 = p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum();
    let l2: f64 = p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(PinskerTriple {
        kl: gen_kl_unchecked(p, q),
        half_tv_sq: 0.5 * tv * tv,
        half_l2_sq: 0.5 * l2,
    })
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;

    use super::*;
    use crate::bregman::{Mahalanobis, MahalanobisQ, Square, SumSeparable};
    use crate::proper_loss::{Boosting, Quadratic};

    fn q_s() -> Mahalanobis {
        Mahalanobis::new(
            MahalanobisQ::from_rows(&[[3.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 1.0]]).unwrap(),
        )
    }

    fn small_sampler() -> SampleSpec {
        SampleSpec {
            grid_step: 0.1,
            n_random: 3000,
            seed: 7,
            corner_margin: 1e-6,
        }
    }

    /// Brute-force maximum of `(p - q)^2 - c KL(p || q)` with independent
    /// closed-form KL.
    fn thm1_quadratic_oracle(c: f64, step: f64) -> (f64, f64, f64) {
        let n = (1.0 / step).round() as usize;
        let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
        for i in 0..=n {
            for j in 1..n {
                let (p, q) = (i as f64 / n as f64, j as f64 / n as f64);
                let mut kl = 0.0;
                if p > 0.0 {
                    kl += p * (p / q).ln();
                }
                if p < 1.0 {
                    kl += (1.0 - p) * ((1.0 - p) / (1.0 - q)).ln();
                }
                let v = (p - q) * (p - q) - c * kl;
                if v > best.0 {
                    best = (v, p, q);
                }
            }
        }
        best
    }

    #[test]
    fn thm1_quadratic_passes_above_threshold() {
        let r = verify_thm1(&Quadratic, 1.0 + 1e-6, 1e-3).unwrap();
        assert!(r.certified(), "{r:?}");
        assert_eq!(r.n_points, 1001 * 1001);
    }

    #[test]
    fn thm1_quadratic_fails_below_threshold_with_oracle_witness() {
        let r = verify_thm1(&Quadratic, 0.4, 1e-2).unwrap();
        assert!(!r.pass);
        assert!(!r.preconditions[0].pass);
        let (v, p, q) = thm1_quadratic_oracle(0.4, 1e-2);
        assert_abs_diff_eq!(r.max_violation, v, epsilon = 1e-12);
        let (wp, wq) = r.worst_pair.unwrap();
        assert_abs_diff_eq!(wp[0], p, epsilon = 1e-12);
        assert_abs_diff_eq!(wq[0], q, epsilon = 1e-12);
        assert!(r.max_violation > 0.0);
    }

    #[test]
    fn thm1_is_deterministic() {
        let a = verify_thm1(&Quadratic, 0.4, 1e-2).unwrap();
        let b = verify_thm1(&Quadratic, 0.4, 1e-2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn thm1_boosting_fails_for_any_constant() {
        // regret grows like 2 sqrt(q) near p = 0 while KL grows like q
        let r = verify_thm1(&Boosting, 4.0 + 1e-6, 1e-3).unwrap();
        assert!(r.preconditions[0].pass);
        assert!(!r.pass);
        let (wp, wq) = r.worst_pair.unwrap();
        assert!(wp[0] == 0.0 || wp[0] == 1.0, "{wp:?} {wq:?}");
        // larger constants only push the failing region below q = 4 / C^2
        let c = 100.0;
        let q = 1e-5;
        let d = regret(&Boosting, 0.0, q).unwrap().value();
        let kl = regret(&Logarithmic, 0.0, q).unwrap().value();
        assert!(d > c * kl);
    }

    #[test]
    fn thm2_examples() {
        let r = verify_thm2(&q_s(), 3.0 + 1e-6, &small_sampler()).unwrap();
        assert!(r.certified(), "{r:?}");
        let sq = SumSeparable::new(Square, 3);
        let r = verify_thm2(&sq, 2.0 + 1e-6, &small_sampler()).unwrap();
        assert!(r.certified(), "{r:?}");
        let r = verify_thm2(&q_s(), 2.5, &small_sampler()).unwrap();
        assert!(!r.preconditions[0].pass);
    }

    #[test]
    fn thm3_examples() {
        let spec = SampleSpec {
            grid_step: 1e-2,
            ..small_sampler()
        };
        let r = verify_thm3(&Square, 2.0 + 1e-6, &spec).unwrap();
        assert!(r.certified(), "{r:?}");
        let r = verify_thm3(&XLogX, 1.0 + 1e-6, &spec).unwrap();
        assert!(r.certified(), "{r:?}");
        let r = verify_thm3(&Square, 1.0, &spec).unwrap();
        assert!(!r.pass);
        assert!(!r.preconditions[0].pass);
        // oracle: at s = 1, t = 1/2, (1 - t)^2 = 0.25 > -ln t - 1 + t = 0.193
        assert!(r.max_violation >= 0.25 - (2f64.ln() - 0.5) - 1e-12);
    }

    #[test]
    fn fisher_examples() {
        let r = local_fisher_check(&Logarithmic, 1.0, 0.5, 0.1, 20).unwrap();
        assert_abs_diff_eq!(*r.ratios.last().unwrap(), 1.0, epsilon = 1e-5);
        assert!(r.pass, "{r:?}");
        let r = local_fisher_check(&Quadratic, 1.0 + 1e-6, 0.5, 0.1, 20).unwrap();
        assert!(r.pass);
        assert!(r.ratios.iter().all(|&x| x <= 1.0));
        let r = local_fisher_check(&Boosting, 4.0 + 1e-6, 0.25, 0.1, 20).unwrap();
        let oracle = Boosting.g2(0.25).abs() / ((4.0 + 1e-6) / (0.25 * 0.75));
        assert_abs_diff_eq!(r.limsup_estimate, oracle, epsilon = 1e-5);
        assert!(r.pass);
    }

    #[test]
    fn fisher_mirrors_near_the_upper_end() {
        let r = local_fisher_check(&Logarithmic, 2.0 + 1e-6, 0.9, 0.1, 20).unwrap();
        assert!(r.ratios.iter().all(|x| x.is_finite()));
        assert!(r.pass);
    }

    #[test]
    fn fisher_truncates_tiny_steps() {
        let r = local_fisher_check(&Quadratic, 1.5, 0.5, 1e-6, 20).unwrap();
        assert!(r.truncated);
        assert!(r.dps.iter().all(|&d| d >= 1e-8));
    }

    #[test]
    fn expected_bound_examples() {
        let sq = SumSeparable::new(Square, 3);
        let jw = JointWeights::random(4, 3, 3, 11);
        let r = expected_bound_check(&sq, 2.0 + 1e-6, &jw, &small_sampler()).unwrap();
        assert!(r.certified(), "{r:?}");
        let r = expected_bound_check(&q_s(), 3.0 + 1e-6, &jw, &small_sampler()).unwrap();
        assert!(r.certified(), "{r:?}");

        let mut same = jw.clone();
        same.p_y_given_t = vec![same.p_y_given_x[0].clone(); 3];
        same.p_y_given_x = vec![same.p_y_given_x[0].clone(); 4];
        let r = expected_bound_check(&sq, 2.0 + 1e-6, &same, &small_sampler()).unwrap();
        assert_eq!(r.max_violation, 0.0);

        let mut bad = jw;
        bad.w[0][0] += 0.1;
        assert!(expected_bound_check(&sq, 3.0, &bad, &small_sampler()).is_err());
    }

    #[test]
    fn pinsker_examples() {
        let t = pinsker_compare(&[0.3, 0.7], &[0.3, 0.7]).unwrap();
        assert_eq!((t.kl.value(), t.half_tv_sq, t.half_l2_sq), (0.0, 0.0, 0.0));
        let t = pinsker_compare(&[0.25, 0.5, 0.25], &[0.5, 0.25, 0.25]).unwrap();
        assert_abs_diff_eq!(t.kl.value(), 0.25 * 2f64.ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(t.half_tv_sq, 0.125, epsilon = 1e-15);
        assert_abs_diff_eq!(t.half_l2_sq, 0.0625, epsilon = 1e-15);
        assert!(t.ordered());
        let t = pinsker_compare(&[1.0, 0.0], &[0.0, 1.0]).unwrap();
        assert!(t.kl.is_infinite());
        assert_eq!((t.half_tv_sq, t.half_l2_sq), (2.0, 1.0));
        assert!(pinsker_compare(&[0.5, 0.6], &[0.5, 0.5]).is_err());
    }
}
