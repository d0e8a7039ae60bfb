//! Binary proper losses in Savage form.
//!
//! A proper loss is represented by its generalized entropy `G(p) = L(p, p)`,
//! a concave function on `[0, 1]`. Everything else follows from `G`:
//!
//! ```text
//! l0(q)   = G(q) - q G'(q)
//! l1(q)   = G(q) + (1 - q) G'(q)
//! L(p, q) = G(q) + (p - q) G'(q)          (expected loss)
//! regret  = L(p, q) - G(p) = D_{-G}(p || q)
//! w(p)    = -G''(p)                        (weight function)
//! ```
//!
//! All logarithms are natural, so every constant is in nats. At `q in {0, 1}`
//! the partial losses use the analytic one-sided limits of each family and
//! may be `+inf` (e.g. log-loss `l1(0)`).

mod admissibility;
mod families;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use admissibility::{check_admissible, AdmissibilityReport, CheckOutcome};
pub use families::{Boosting, CustomEntropy, Logarithmic, Quadratic};

use crate::error::{ensure_unit, Error, Result};
use crate::ext::ExtendedReal;
use crate::numeric::integrate;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Quadratic,
    Logarithmic,
    Boosting,
    Custom,
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Family::Quadratic => "quadratic",
            Family::Logarithmic => "logarithmic",
            Family::Boosting => "boosting",
            Family::Custom => "custom",
        };
        f.write_str(s)
    }
}

/// Generalized entropy of a binary proper loss.
///
/// `g` is defined on the closed interval; `g1` returns one-sided limits at the
/// endpoints (possibly infinite); `g2` and `g3` are only evaluated in the
/// open interval.
pub trait Entropy: Send + Sync + fmt::Debug {
    fn family(&self) -> Family;
    fn label(&self) -> &str;
    fn g(&self, p: f64) -> f64;
    fn g1(&self, p: f64) -> f64;
    fn g2(&self, p: f64) -> f64;
    fn g3(&self, p: f64) -> f64;

    /// `(l0(q), l1(q))`. The default derives them from `G` and `G'`; at the
    /// endpoints it uses `q G'(q) -> 0` as `q -> 0` (and the mirror image at
    /// 1), which holds for every continuous concave `G`.
    fn partial_losses(&self, q: f64) -> (ExtendedReal, ExtendedReal) {
        let g = self.g(q);
        let l0 = if q == 0.0 { g } else { g - q * self.g1(q) };
        let l1 = if q == 1.0 {
            g
        } else {
            g + (1.0 - q) * self.g1(q)
        };
        (ExtendedReal::new(l0), ExtendedReal::new(l1))
    }
}

pub fn partial_losses(g: &dyn Entropy, q: f64) -> Result<(ExtendedReal, ExtendedReal)> {
    ensure_unit("q", q)?;
    Ok(g.partial_losses(q))
}

/// `(1 - p) l0(q) + p l1(q)` with `0 * inf = 0`.
fn savage_form(g: &dyn Entropy, p: f64, q: f64) -> ExtendedReal {
    let (l0, l1) = g.partial_losses(q);
    l0.scale(1.0 - p) + l1.scale(p)
}

/// Expected loss `L(p, q)` in the `G(q) + (p - q) G'(q)` form; on the
/// boundary of `q` the partial-loss form is used so that limits are exact.
pub fn expected_loss(g: &dyn Entropy, p: f64, q: f64) -> Result<ExtendedReal> {
    ensure_unit("p", p)?;
    ensure_unit("q", q)?;
    if q > 0.0 && q < 1.0 {
        Ok(ExtendedReal::new(g.g(q) + (p - q) * g.g1(q)))
    } else {
        Ok(savage_form(g, p, q))
    }
}

/// Regret `L(p, q) - G(p)`, i.e. the Bregman divergence `D_{-G}(p || q)`.
///
/// For nearby interior points the closed form loses all significant digits
/// to cancellation, so the integral form `int_0^{q-p} u w(p + u) du` is used
/// instead whenever `|q - p|` is small relative to the distance to the
/// boundary.
pub fn regret(g: &dyn Entropy, p: f64, q: f64) -> Result<ExtendedReal> {
    ensure_unit("p", p)?;
    ensure_unit("q", q)?;
    if p == q {
        return Ok(ExtendedReal::ZERO);
    }
    let interior = |x: f64| x > 0.0 && x < 1.0;
    if interior(q) {
        if interior(p) {
            let room = p.min(1.0 - p).min(q).min(1.0 - q);
            if (q - p).abs() <= 0.05 * room {
                // substitute t = p + u so the factor u keeps full relative precision
                let v = integrate(|u| u * -g.g2(p + u), 0.0, q - p);
                return Ok(ExtendedReal::divergence(v));
            }
        }
        let v = g.g(q) + (p - q) * g.g1(q) - g.g(p);
        return Ok(ExtendedReal::divergence(v));
    }
    let l = savage_form(g, p, q);
    Ok(match l.finite() {
        Some(v) => ExtendedReal::divergence(v - g.g(p)),
        None => ExtendedReal::INFINITY,
    })
}

/// Weight function `w(p) = -G''(p)` on the open interval.
pub fn weight(g: &dyn Entropy, p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::OutOfDomain {
            what: "p",
            value: p,
            domain: "(0, 1)",
        });
    }
    Ok(-g.g2(p))
}

/// The infimum of admissible KL-domination constants, `w(1/2) / 2`.
/// Callers needing the strict inequality add their own slack.
pub fn universality_constant(g: &dyn Entropy) -> Result<f64> {
    let w = weight(g, 0.5)?;
    if !(w.is_finite() && w > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "{}: w(1/2) = {w} is not a positive finite number",
            g.label()
        )));
    }
    Ok(0.5 * w)
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;

    use super::*;

    #[test]
    fn partial_losses_match_table_rows() {
        let (l0, l1) = partial_losses(&Logarithmic, 0.5).unwrap();
        assert_abs_diff_eq!(l0.value(), 2f64.ln(), epsilon = 1e-15);
        assert_abs_diff_eq!(l1.value(), 2f64.ln(), epsilon = 1e-15);

        let (l0, l1) = partial_losses(&Quadratic, 0.25).unwrap();
        assert_abs_diff_eq!(l0.value(), 0.0625, epsilon = 1e-15);
        assert_abs_diff_eq!(l1.value(), 0.5625, epsilon = 1e-15);

        let (l0, l1) = partial_losses(&Boosting, 0.25).unwrap();
        assert_abs_diff_eq!(l0.value(), 2.0 * (1.0f64 / 3.0).sqrt(), epsilon = 1e-14);
        assert_abs_diff_eq!(l1.value(), 2.0 * 3f64.sqrt(), epsilon = 1e-14);
    }

    #[test]
    fn partial_losses_are_fair_and_infinite_where_expected() {
        for g in [&Quadratic as &dyn Entropy, &Logarithmic, &Boosting] {
            assert_eq!(g.partial_losses(0.0).0, ExtendedReal::ZERO);
            assert_eq!(g.partial_losses(1.0).1, ExtendedReal::ZERO);
        }
        assert!(Logarithmic.partial_losses(0.0).1.is_infinite());
        assert!(Logarithmic.partial_losses(1.0).0.is_infinite());
    }

    #[test]
    fn default_partial_losses_agree_with_closed_forms() {
        let custom = CustomEntropy::new(
            "log-copy",
            |p| Logarithmic.g(p),
            |p| Logarithmic.g1(p),
            |p| Logarithmic.g2(p),
            |p| Logarithmic.g3(p),
        );
        for q in [0.0, 0.1, 0.5, 0.93, 1.0] {
            let (a0, a1) = custom.partial_losses(q);
            let (b0, b1) = Logarithmic.partial_losses(q);
            for (a, b) in [(a0, b0), (a1, b1)] {
                if b.is_infinite() {
                    assert!(a.is_infinite());
                } else {
                    assert_abs_diff_eq!(a.value(), b.value(), epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn expected_loss_examples() {
        assert_abs_diff_eq!(
            expected_loss(&Quadratic, 0.5, 0.5).unwrap().value(),
            0.25,
            epsilon = 1e-15
        );
        assert!(expected_loss(&Logarithmic, 1.0, 0.0).unwrap().is_infinite());
        assert_abs_diff_eq!(
            expected_loss(&Quadratic, 0.3, 0.7).unwrap().value(),
            0.37,
            epsilon = 1e-15
        );
    }

    #[test]
    fn regret_examples() {
        for (p, q) in [(0.1, 0.9), (0.3, 0.35), (0.0, 0.6), (1.0, 0.2)] {
            assert_abs_diff_eq!(
                regret(&Quadratic, p, q).unwrap().value(),
                (p - q) * (p - q),
                epsilon = 1e-15
            );
        }
        let expected = 0.5 * (0.5f64 / 0.25).ln() + 0.5 * (0.5f64 / 0.75).ln();
        assert_abs_diff_eq!(
            regret(&Logarithmic, 0.5, 0.25).unwrap().value(),
            expected,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(expected, 0.14384, epsilon = 1e-5);
        assert_eq!(regret(&Boosting, 0.42, 0.42).unwrap(), ExtendedReal::ZERO);
    }

    #[test]
    fn regret_boundary_branches() {
        assert!(regret(&Logarithmic, 0.5, 0.0).unwrap().is_infinite());
        assert!(regret(&Logarithmic, 1.0, 0.0).unwrap().is_infinite());
        assert_eq!(regret(&Logarithmic, 0.0, 0.0).unwrap(), ExtendedReal::ZERO);
        // KL(0 || q) = -ln(1 - q)
        assert_abs_diff_eq!(
            regret(&Logarithmic, 0.0, 0.3).unwrap().value(),
            -(0.7f64).ln(),
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(regret(&Quadratic, 0.2, 1.0).unwrap().value(), 0.64, epsilon = 1e-15);
    }

    #[test]
    fn regret_integral_branch_is_accurate_for_tiny_gaps() {
        // KL(p || p + d) = d^2 / (2 p (1-p)) + O(d^3)
        let (p, d) = (0.3, 1e-7);
        let kl = regret(&Logarithmic, p, p + d).unwrap().value();
        let leading = d * d / (2.0 * p * (1.0 - p));
        assert!(((kl - leading) / leading).abs() < 1e-6);
    }

    #[test]
    fn weight_examples() {
        assert_abs_diff_eq!(weight(&Logarithmic, 0.5).unwrap(), 4.0, epsilon = 1e-15);
        assert_abs_diff_eq!(weight(&Quadratic, 0.123).unwrap(), 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(weight(&Boosting, 0.5).unwrap(), 8.0, epsilon = 1e-12);
        assert!(weight(&Logarithmic, 0.0).is_err());
        assert!(weight(&Logarithmic, 1.0).is_err());
    }

    #[test]
    fn universality_constants() {
        assert_abs_diff_eq!(universality_constant(&Quadratic).unwrap(), 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(universality_constant(&Logarithmic).unwrap(), 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(universality_constant(&Boosting).unwrap(), 4.0, epsilon = 1e-12);
        let flat = CustomEntropy::new("flat", |_| 0.0, |_| 0.0, |_| 0.0, |_| 0.0);
        assert!(universality_constant(&flat).is_err());
    }

    #[test]
    fn out_of_range_probabilities_are_rejected() {
        assert!(regret(&Quadratic, -0.1, 0.5).is_err());
        assert!(expected_loss(&Quadratic, 0.5, 1.5).is_err());
        assert!(partial_losses(&Quadratic, 2.0).is_err());
    }
}
