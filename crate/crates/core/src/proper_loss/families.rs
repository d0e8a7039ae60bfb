use std::fmt;

use super::{Entropy, Family};
use crate::ext::ExtendedReal;
use crate::numeric::xlogx;

/// Brier / quadratic loss: `G(p) = p(1-p)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Quadratic;

impl Entropy for Quadratic {
    fn family(&self) -> Family {
        Family::Quadratic
    }
    fn label(&self) -> &str {
        "quadratic"
    }
    fn g(&self, p: f64) -> f64 {
        p * (1.0 - p)
    }
    fn g1(&self, p: f64) -> f64 {
        1.0 - 2.0 * p
    }
    fn g2(&self, _p: f64) -> f64 {
        -2.0
    }
    fn g3(&self, _p: f64) -> f64 {
        0.0
    }
    fn partial_losses(&self, q: f64) -> (ExtendedReal, ExtendedReal) {
        (
            ExtendedReal::new(q * q),
            ExtendedReal::new((1.0 - q) * (1.0 - q)),
        )
    }
}

/// Log-loss; `G` is the Shannon entropy in nats.
#[derive(Debug, Clone, Copy, Default)]
pub struct Logarithmic;

impl Entropy for Logarithmic {
    fn family(&self) -> Family {
        Family::Logarithmic
    }
    fn label(&self) -> &str {
        "logarithmic"
    }
    fn g(&self, p: f64) -> f64 {
        -xlogx(p) - xlogx(1.0 - p)
    }
    fn g1(&self, p: f64) -> f64 {
        if p == 0.0 {
            f64::INFINITY
        } else if p == 1.0 {
            f64::NEG_INFINITY
        } else {
            ((1.0 - p) / p).ln()
        }
    }
    fn g2(&self, p: f64) -> f64 {
        -1.0 / (p * (1.0 - p))
    }
    fn g3(&self, p: f64) -> f64 {
        let u = p * (1.0 - p);
        (1.0 - 2.0 * p) / (u * u)
    }
    fn partial_losses(&self, q: f64) -> (ExtendedReal, ExtendedReal) {
        let l0 = if q == 1.0 {
            f64::INFINITY
        } else {
            -(-q).ln_1p()
        };
        let l1 = if q == 0.0 { f64::INFINITY } else { -q.ln() };
        (ExtendedReal::new(l0), ExtendedReal::new(l1))
    }
}

/// Boosting (exponential-type) loss: `G(p) = 4 sqrt(p(1-p))`.
///
/// Strictly proper and fair, but its partial losses are not convex near the
/// endpoints, so it sits outside the admissible class.
#[derive(Debug, Clone, Copy, Default)]
pub struct Boosting;

impl Entropy for Boosting {
    fn family(&self) -> Family {
        Family::Boosting
    }
    fn label(&self) -> &str {
        "boosting"
    }
    fn g(&self, p: f64) -> f64 {
        4.0 * (p * (1.0 - p)).sqrt()
    }
    fn g1(&self, p: f64) -> f64 {
        if p == 0.0 {
            f64::INFINITY
        } else if p == 1.0 {
            f64::NEG_INFINITY
        } else {
            2.0 * (1.0 - 2.0 * p) / (p * (1.0 - p)).sqrt()
        }
    }
    fn g2(&self, p: f64) -> f64 {
        -(p * (1.0 - p)).powf(-1.5)
    }
    fn g3(&self, p: f64) -> f64 {
        1.5 * (1.0 - 2.0 * p) * (p * (1.0 - p)).powf(-2.5)
    }
    fn partial_losses(&self, q: f64) -> (ExtendedReal, ExtendedReal) {
        let l0 = if q == 1.0 {
            f64::INFINITY
        } else {
            2.0 * (q / (1.0 - q)).sqrt()
        };
        let l1 = if q == 0.0 {
            f64::INFINITY
        } else {
            2.0 * ((1.0 - q) / q).sqrt()
        };
        (ExtendedReal::new(l0), ExtendedReal::new(l1))
    }
}

type ScalarFn = Box<dyn Fn(f64) -> f64 + Send + Sync>;

/// A user-supplied entropy with analytic derivatives.
///
/// `g1` must return the one-sided limits (possibly infinite) at 0 and 1;
/// partial losses use the default Savage form.
pub struct CustomEntropy {
    label: String,
    g: ScalarFn,
    g1: ScalarFn,
    g2: ScalarFn,
    g3: ScalarFn,
}

impl CustomEntropy {
    pub fn new(
        label: impl Into<String>,
        g: impl Fn(f64) -> f64 + Send + Sync + 'static,
        g1: impl Fn(f64) -> f64 + Send + Sync + 'static,
        g2: impl Fn(f64) -> f64 + Send + Sync + 'static,
        g3: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            label: label.into(),
            g: Box::new(g),
            g1: Box::new(g1),
            g2: Box::new(g2),
            g3: Box::new(g3),
        }
    }
}

impl fmt::Debug for CustomEntropy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomEntropy").field("label", &self.label).finish()
    }
}

impl Entropy for CustomEntropy {
    fn family(&self) -> Family {
        Family::Custom
    }
    fn label(&self) -> &str {
        &self.label
    }
    fn g(&self, p: f64) -> f64 {
        (self.g)(p)
    }
    fn g1(&self, p: f64) -> f64 {
        (self.g1)(p)
    }
    fn g2(&self, p: f64) -> f64 {
        (self.g2)(p)
    }
    fn g3(&self, p: f64) -> f64 {
        (self.g3)(p)
    }
}
