//! Bregman divergences on `[0, 1]` and `[0, 1]^m`.
//!
//! For a strictly convex generator `g`, `d_g(s || t) = g(s) - g(t) - (s - t) g'(t)`.
//! Generators are continuously extended to the closed interval; at a boundary
//! point `t` the derivative is the one-sided limit, which may be infinite:
//!
//! - `s == t` gives 0,
//! - `g'(0) = -inf` or `g'(1) = +inf` gives `+inf`,
//! - otherwise the interior formula is applied with the limiting slope.
//!
//! The result is a lower semi-continuous map into `[0, +inf]`.

mod certificate;
mod generators;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use certificate::{hessian_gap_certificate, CertificateReport, SampleSpec};
pub use generators::{
    CustomGenerator1D, CustomGeneratorND, Mahalanobis, MahalanobisQ, NegatedEntropy,
    OneMinusXLogX, Square, SumSeparable, XLogX,
};

use crate::error::{ensure_same_len, ensure_unit, ensure_unit_cube, Result};
use crate::ext::ExtendedReal;
use crate::numeric::{dot, integrate, xlogy_ratio};

/// A strictly convex scalar generator on `[0, 1]`.
///
/// `g` is the continuous extension on the closed interval. `g1` must return
/// the one-sided limits at 0 and 1 (possibly infinite). `g2` and `g3` are
/// evaluated in the open interval; `g2_at_one` is the limit of `g2` at 1.
pub trait Generator1D: Send + Sync + fmt::Debug {
    fn label(&self) -> &str;
    fn g(&self, p: f64) -> f64;
    fn g1(&self, p: f64) -> f64;
    fn g2(&self, p: f64) -> f64;
    fn g3(&self, p: f64) -> f64;

    fn g2_at_one(&self) -> f64 {
        let v = self.g2(1.0);
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    }
}

/// Scalar Bregman divergence with boundary semantics; no range checks.
pub(crate) fn breg1_unchecked(g: &dyn Generator1D, s: f64, t: f64) -> ExtendedReal {
    if s == t {
        return ExtendedReal::ZERO;
    }
    let interior = |x: f64| x > 0.0 && x < 1.0;
    if interior(t) {
        // nearby interior points: integral form avoids cancellation
        if interior(s) {
            let room = s.min(1.0 - s).min(t).min(1.0 - t);
            if (s - t).abs() <= 0.05 * room {
                let v = integrate(|v| v * g.g2(s - v), 0.0, s - t);
                return ExtendedReal::divergence(v);
            }
        }
        return ExtendedReal::divergence(g.g(s) - g.g(t) - (s - t) * g.g1(t));
    }
    let slope = g.g1(t);
    if (t == 0.0 && slope == f64::NEG_INFINITY) || (t == 1.0 && slope == f64::INFINITY) {
        return ExtendedReal::INFINITY;
    }
    ExtendedReal::divergence(g.g(s) - g.g(t) - (s - t) * slope)
}

pub fn breg1(g: &dyn Generator1D, s: f64, t: f64) -> Result<ExtendedReal> {
    ensure_unit("s", s)?;
    ensure_unit("t", t)?;
    Ok(breg1_unchecked(g, s, t))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    SumSeparable,
    Mahalanobis,
    Custom,
}

/// A strictly convex generator on `[0, 1]^m`.
pub trait GeneratorND: Send + Sync + fmt::Debug {
    fn dim(&self) -> usize;
    fn label(&self) -> &str;
    fn kind(&self) -> GeneratorKind;
    fn f(&self, p: &[f64]) -> f64;
    fn grad(&self, p: &[f64]) -> Vec<f64>;
    fn hessian(&self, p: &[f64]) -> nalgebra::DMatrix<f64>;

    /// `D_f(p || q)` without range checks. The default is the plain
    /// definition, valid wherever the gradient at `q` is finite.
    fn divergence(&self, p: &[f64], q: &[f64]) -> ExtendedReal {
        let d: Vec<f64> = p.iter().zip(q).map(|(a, b)| a - b).collect();
        ExtendedReal::divergence(self.f(p) - self.f(q) - dot(&d, &self.grad(q)))
    }

    /// Gradient of `D_f(p || q)` with respect to `q`, `H_f(q) (q - p)`.
    fn divergence_grad_q(&self, p: &[f64], q: &[f64]) -> Vec<f64> {
        let h = self.hessian(q);
        let d = nalgebra::DVector::from_iterator(q.len(), q.iter().zip(p).map(|(a, b)| a - b));
        (h * d).iter().copied().collect()
    }
}

fn check_nd(f: &dyn GeneratorND, p: &[f64], q: &[f64]) -> Result<()> {
    ensure_same_len(p, q)?;
    if p.len() != f.dim() {
        return Err(crate::Error::DimensionMismatch(p.len(), f.dim()));
    }
    ensure_unit_cube("p", p)?;
    ensure_unit_cube("q", q)
}

pub fn breg_n(f: &dyn GeneratorND, p: &[f64], q: &[f64]) -> Result<ExtendedReal> {
    check_nd(f, p, q)?;
    Ok(f.divergence(p, q))
}

/// Generalized KL divergence `sum p log(p/q) - sum p + sum q` on the cube.
pub fn gen_kl(p: &[f64], q: &[f64]) -> Result<ExtendedReal> {
    ensure_same_len(p, q)?;
    ensure_unit_cube("p", p)?;
    ensure_unit_cube("q", q)?;
    Ok(gen_kl_unchecked(p, q))
}

pub(crate) fn gen_kl_unchecked(p: &[f64], q: &[f64]) -> ExtendedReal {
    let mut total = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        let t = xlogy_ratio(a, b);
        if t.is_infinite() {
            return ExtendedReal::INFINITY;
        }
        total += t - a + b;
    }
    ExtendedReal::divergence(total)
}

/// Bernoulli KL divergence `KL(p || q)` between success probabilities.
pub fn kl_binary(p: f64, q: f64) -> Result<ExtendedReal> {
    gen_kl(&[p, 1.0 - p], &[q, 1.0 - q])
}

/// Total variation in the unnormalized form `sum |p_i - q_i|`.
pub fn tv(p: &[f64], q: &[f64]) -> Result<f64> {
    ensure_same_len(p, q)?;
    Ok(p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum())
}

/// Neyman chi-square `sum (p_i - q_i)^2 / q_i`.
pub fn chi2(p: &[f64], q: &[f64]) -> Result<ExtendedReal> {
    ensure_same_len(p, q)?;
    Ok(chi2_unchecked(p, q))
}

pub(crate) fn chi2_unchecked(p: &[f64], q: &[f64]) -> ExtendedReal {
    let mut total = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        if a == b {
            continue;
        }
        if b == 0.0 {
            return ExtendedReal::INFINITY;
        }
        total += (a - b) * (a - b) / b;
    }
    ExtendedReal::divergence(total)
}

/// Largest eigenvalue of `Q`; any constant strictly above it makes
/// `C * KL` dominate the Mahalanobis divergence of `Q`.
pub fn mahalanobis_constant(q: &MahalanobisQ) -> f64 {
    q.lambda_max()
}

/// The limit `g''(1)`; `+inf` means the separable bound is vacuous.
pub fn separable_constant(g: &dyn Generator1D) -> ExtendedReal {
    ExtendedReal::new(g.g2_at_one())
}
