use proptest::prelude::*;
use uniloss::pacbayes::{
    kl_discrete, lambda_grid, monte_carlo_validity, pac_bayes_bound, pac_bound, universal_pac_bayes_bound,
    BoundInputs, BoundKind, HarnessSpec, PosteriorRule,
};

fn base() -> BoundInputs {
    BoundInputs {
        n: 500,
        delta: 0.05,
        lambda: 1.0,
        l_max: 1.0,
        empirical_loss: 0.3,
        kl_post_prior: 0.7,
    }
}

#[test]
fn prior_posterior_has_zero_kl_and_covers() {
    let mut spec = HarnessSpec::example(0.05, BoundKind::PacBayes, 21);
    spec.posterior = PosteriorRule::Prior;
    let r = monte_carlo_validity(&spec).unwrap();
    assert_eq!(r.trials, 2000);
    assert!(r.pass, "{r:?}");
}

#[test]
fn loose_lambda_covers_everything() {
    let mut spec = HarnessSpec::example(0.5, BoundKind::PacBayes, 3);
    spec.lambda = 10.0;
    spec.trials = 500;
    let r = monte_carlo_validity(&spec).unwrap();
    assert_eq!(r.coverage, 1.0);
}

#[test]
fn single_sample_still_covers() {
    for kind in [BoundKind::Pac, BoundKind::PacBayes] {
        let mut spec = HarnessSpec::example(0.2, kind, 5);
        spec.n = 1;
        spec.trials = 1000;
        let r = monte_carlo_validity(&spec).unwrap();
        assert!(r.pass, "{r:?}");
    }
}

#[test]
fn universal_bound_dominance_holds_in_every_trial() {
    for (loss, c) in [("quadratic", 1.0 + 1e-6), ("logarithmic", 2.0 + 1e-6)] {
        let mut spec = HarnessSpec::example(0.05, BoundKind::Universal { loss: loss.into(), c_g: c }, 2);
        spec.trials = 300;
        let r = monte_carlo_validity(&spec).unwrap();
        assert_eq!(r.dominance_violations, 0, "{loss}");
        assert!(r.pass && r.max_empirical_log_loss <= r.l_max);
    }
}

#[test]
fn bound_is_unimodal_in_lambda() {
    let grid = lambda_grid(200);
    let vals: Vec<f64> = grid.iter().map(|&l| pac_bayes_bound(&BoundInputs { lambda: l, ..base() }).unwrap()).collect();
    let argmin = (0..vals.len()).fold(0, |b, i| if vals[i] < vals[b] { i } else { b });
    assert!(argmin > 0 && argmin < vals.len() - 1);
    assert!(vals[..=argmin].windows(2).all(|w| w[1] <= w[0]));
    assert!(vals[argmin..].windows(2).all(|w| w[1] >= w[0]));
}

proptest! {
    #[test]
    fn bounds_are_monotone(
        kl in 0.0f64..5.0, dkl in 0.0f64..5.0,
        n in 1usize..5000, dn in 1usize..5000,
        delta in 0.001f64..1.0, lhat in 0.0f64..1.0, lambda in 0.51f64..50.0,
    ) {
        let b = BoundInputs { n, delta, lambda, l_max: 1.0, empirical_loss: lhat, kl_post_prior: kl };
        let v = pac_bayes_bound(&b).unwrap();
        let more_kl = pac_bayes_bound(&BoundInputs { kl_post_prior: kl + dkl, ..b }).unwrap();
        let more_n = pac_bayes_bound(&BoundInputs { n: n + dn, ..b }).unwrap();
        let less_delta = pac_bayes_bound(&BoundInputs { delta: delta / 2.0, ..b }).unwrap();
        prop_assert!(more_kl >= v);
        prop_assert!(more_n <= v);
        prop_assert!(less_delta >= v);
        prop_assert!(v >= 2.0 * lambda / (2.0 * lambda - 1.0) * lhat);

        let single = pac_bound(lhat, n, 1.0, lambda, delta, 0.5).unwrap();
        prop_assert!(pac_bound(lhat, n, 1.0, lambda, delta, 0.25).unwrap() >= single);
        let u = universal_pac_bayes_bound(lhat, n, 0.1, lambda, delta, kl, 2.0).unwrap();
        prop_assert!(u.bound >= 2.0 * lhat);
    }

    #[test]
    fn discrete_kl_is_nonnegative(
        a in prop::collection::vec(0.01f64..1.0, 4),
        b in prop::collection::vec(0.01f64..1.0, 4),
    ) {
        let sa: f64 = a.iter().sum();
        let sb: f64 = b.iter().sum();
        let p: Vec<f64> = a.iter().map(|v| v / sa).collect();
        let q: Vec<f64> = b.iter().map(|v| v / sb).collect();
        prop_assert!(kl_discrete(&p, &q).unwrap().value() >= 0.0);
    }
}
