use serde::{Deserialize, Serialize};

use super::{Entropy, Family};
use crate::error::{Error, Result};
use crate::ext::serde_f64;
use crate::numeric::unit_grid;

/// One predicate of the admissibility check. `worst_value` is the check's
/// own statistic at `worst_point` (its sign convention is given per check in
/// [`check_admissible`]).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub pass: bool,
    pub worst_point: Option<f64>,
    #[serde(with = "serde_f64")]
    pub worst_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdmissibilityReport {
    pub family: Family,
    pub label: String,
    pub grid_step: f64,
    pub checks: Vec<CheckOutcome>,
}

impl AdmissibilityReport {
    pub fn pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }

    pub fn check(&self, name: &str) -> Option<&CheckOutcome> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn failed(&self) -> impl Iterator<Item = &CheckOutcome> {
        self.checks.iter().filter(|c| !c.pass)
    }
}

const SHUFORD_REL_TOL: f64 = 1e-4;
const CONVEXITY_TOL: f64 = 1e-9;
const FAIRNESS_TOL: f64 = 1e-12;
const ENVELOPE_REL_TOL: f64 = 1e-12;

/// Tracks the minimum of a statistic over grid points.
struct Worst {
    point: Option<f64>,
    value: f64,
}

impl Worst {
    fn new() -> Self {
        Self {
            point: None,
            value: f64::INFINITY,
        }
    }
    fn offer(&mut self, point: f64, value: f64) {
        // NaN counts as worst
        let better = value.is_nan() || value < self.value || self.point.is_none();
        if better && !(self.value.is_nan() && self.point.is_some()) {
            self.point = Some(point);
            self.value = value;
        }
    }
    fn outcome(self, name: &str, pass: impl Fn(f64) -> bool) -> CheckOutcome {
        CheckOutcome {
            name: name.to_string(),
            pass: !self.value.is_nan() && pass(self.value),
            worst_point: self.point,
            worst_value: self.value,
        }
    }
}

/// Runs the admissibility predicates on an interior grid of step `grid_step`.
///
/// Checks (statistic minimized over the grid; pass condition):
/// - `properness`: `w(p)`; pass if `> 0`.
/// - `shuford_relation`: `-max(|l0'(p)/p - w|, |-l1'(p)/(1-p) - w|) / max(1, w)`,
///   with `l0'`, `l1'` from central differences of the partial losses; pass if
///   `>= -1e-4`.
/// - `convexity`: `(w(q) + (q - p) w'(q)) / w(q)` for `p in {0, 1}`; pass if `>= -1e-9`.
/// - `fairness`: `-max(|G(0)|, |G(1)|, l0(0), l1(1))`; pass if `>= -1e-12`.
/// - `regularity`: `-max(q l1(q), (1-q) l0(1-q))` at `q = 1e-12`, with the
///   sequence over `q = 1e-4 .. 1e-12` required to be nonincreasing; pass if
///   `>= -1e-4`.
/// - `weight_envelope`: the smaller relative slack of the two envelope
///   inequalities around `w(1/2)`; pass if `>= -1e-12`.
pub fn check_admissible(g: &dyn Entropy, grid_step: f64) -> Result<AdmissibilityReport> {
    if !(grid_step > 0.0 && grid_step <= 0.1) {
        return Err(Error::InvalidArgument(format!(
            "grid_step must lie in (0, 0.1], got {grid_step}"
        )));
    }
    let grid: Vec<f64> = unit_grid(grid_step)
        .into_iter()
        .filter(|&p| p > 0.0 && p < 1.0)
        .collect();
    let w = |p: f64| -g.g2(p);

    let mut properness = Worst::new();
    let mut shuford = Worst::new();
    let mut convexity = Worst::new();
    let mut envelope = Worst::new();
    let w_half = w(0.5);

    for &p in &grid {
        let wp = w(p);
        properness.offer(p, wp);

        let h = 1e-6 * p.min(1.0 - p);
        let (l0m, l1m) = g.partial_losses(p - h);
        let (l0p, l1p) = g.partial_losses(p + h);
        let dl0 = (l0p.value() - l0m.value()) / (2.0 * h);
        let dl1 = (l1p.value() - l1m.value()) / (2.0 * h);
        let mismatch = (dl0 / p - wp).abs().max((-dl1 / (1.0 - p) - wp).abs());
        shuford.offer(p, -mismatch / wp.abs().max(1.0));

        let dw = -g.g3(p);
        for end in [0.0, 1.0] {
            let curvature = wp + (p - end) * dw;
            convexity.offer(p, curvature / wp.abs().max(f64::MIN_POSITIVE));
        }

        let (lower, upper) = if p < 0.5 {
            (w_half / (2.0 * (1.0 - p)), w_half / (2.0 * p))
        } else {
            (w_half / (2.0 * p), w_half / (2.0 * (1.0 - p)))
        };
        let slack = ((wp - lower) / lower).min((upper - wp) / upper);
        envelope.offer(p, slack);
    }

    let (l0_at_0, _) = g.partial_losses(0.0);
    let (_, l1_at_1) = g.partial_losses(1.0);
    let unfair = [g.g(0.0).abs(), g.g(1.0).abs(), l0_at_0.value(), l1_at_1.value()]
        .into_iter()
        .fold(0.0f64, |a, b| if b.is_nan() { f64::NAN } else { a.max(b.abs()) });
    let fairness = CheckOutcome {
        name: "fairness".into(),
        pass: unfair <= FAIRNESS_TOL,
        worst_point: Some(if g.g(0.0).abs() >= g.g(1.0).abs() { 0.0 } else { 1.0 }),
        worst_value: -unfair,
    };

    let regularity = {
        let qs: Vec<f64> = (4..=12).map(|e| 10f64.powi(-e)).collect();
        let seq: Vec<f64> = qs
            .iter()
            .map(|&q| {
                let a = q * g.partial_losses(q).1.value();
                let b = q * g.partial_losses(1.0 - q).0.value();
                a.max(b)
            })
            .collect();
        let last = *seq.last().unwrap();
        let monotone = seq.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9));
        CheckOutcome {
            name: "regularity".into(),
            pass: monotone && last <= 1e-4,
            worst_point: Some(*qs.last().unwrap()),
            worst_value: -last,
        }
    };

    Ok(AdmissibilityReport {
        family: g.family(),
        label: g.label().to_string(),
        grid_step,
        checks: vec![
            properness.outcome("properness", |v| v > 0.0),
            shuford.outcome("shuford_relation", |v| v >= -SHUFORD_REL_TOL),
            convexity.outcome("convexity", |v| v >= -CONVEXITY_TOL),
            fairness,
            regularity,
            envelope.outcome("weight_envelope", |v| v >= -ENVELOPE_REL_TOL),
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::proper_loss::{Boosting, CustomEntropy, Logarithmic, Quadratic};

    #[test]
    fn log_loss_is_admissible() {
        let r = check_admissible(&Logarithmic, 1e-3).unwrap();
        assert!(r.pass(), "{:#?}", r.failed().collect::<Vec<_>>());
        // the envelope is attained exactly by the log-loss weight
        assert!(r.check("weight_envelope").unwrap().worst_value.abs() < 1e-12);
    }

    #[test]
    fn quadratic_loss_is_admissible() {
        let r = check_admissible(&Quadratic, 1e-3).unwrap();
        assert!(r.pass(), "{:#?}", r.failed().collect::<Vec<_>>());
    }

    #[test]
    fn boosting_loss_fails_convexity_and_envelope() {
        // (q(1-q))^{-3/2} violates w + (q - p) w' >= 0 for q < 1/4 (p = 0)
        // and q > 3/4 (p = 1), and exceeds the w(1/2)/(2q) envelope near 0.
        let r = check_admissible(&Boosting, 1e-3).unwrap();
        for name in ["properness", "shuford_relation", "fairness", "regularity"] {
            assert!(r.check(name).unwrap().pass, "{name}");
        }
        let conv = r.check("convexity").unwrap();
        assert!(!conv.pass);
        let q = conv.worst_point.unwrap();
        assert!(!(0.25..=0.75).contains(&q));
        let env = r.check("weight_envelope").unwrap();
        assert!(!env.pass);
    }

    #[test]
    fn convex_entropy_fails_properness() {
        let g = CustomEntropy::new("neg-square", |p| -p * p, |p| -2.0 * p, |_| -(-2.0), |_| 0.0);
        let r = check_admissible(&g, 1e-3).unwrap();
        let prop = r.check("properness").unwrap();
        assert!(!prop.pass);
        assert_eq!(prop.worst_value, -2.0);
        assert!(!r.check("fairness").unwrap().pass);
    }

    #[test]
    fn rejects_bad_grid_step() {
        assert!(check_admissible(&Quadratic, 0.0).is_err());
        assert!(check_admissible(&Quadratic, 0.5).is_err());
    }

    #[test]
    fn report_serializes_with_expected_shape() {
        let r = check_admissible(&Quadratic, 0.01).unwrap();
        let v: serde_json::Value = serde_json::to_value(&r).unwrap();
        assert_eq!(v["family"], "quadratic");
        let first = &v["checks"][0];
        for key in ["name", "pass", "worst_point", "worst_value"] {
            assert!(first.get(key).is_some(), "{key}");
        }
    }
}
