use proptest::prelude::*;
use uniloss::bregman::{GeneratorND, Square, SumSeparable, XLogX};
use uniloss::cluster::{bregman_kmeans, mean_minimizer_check, objective, Dataset, KMeansOpts};
use uniloss::registry::Registry;

/// Minimum objective over every assignment of `n` points to at most `k`
/// labels, with each label's centroid at its mean.
fn exhaustive_optimum(data: &Dataset, k: usize, f: &dyn GeneratorND) -> f64 {
    let n = data.n();
    let m = data.m();
    let mut best = f64::INFINITY;
    let mut labels = vec![0usize; n];
    loop {
        let mut sums = vec![vec![0.0; m]; k];
        let mut counts = vec![0usize; k];
        for (x, &a) in data.points().iter().zip(&labels) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(x) {
                *s += v;
            }
        }
        if counts.iter().all(|&c| c > 0) {
            let centroids: Vec<Vec<f64>> = sums
                .iter()
                .zip(&counts)
                .map(|(s, &c)| s.iter().map(|v| v / c as f64).collect())
                .collect();
            best = best.min(objective(data, &labels, &centroids, f).value());
        }
        let mut i = 0;
        loop {
            if i == n {
                return best;
            }
            labels[i] += 1;
            if labels[i] < k {
                break;
            }
            labels[i] = 0;
            i += 1;
        }
    }
}

#[test]
fn four_point_example_matches_exhaustive_search() {
    let d = Dataset::new(vec![vec![0.1], vec![0.2], vec![0.8], vec![0.9]]).unwrap();
    let f = SumSeparable::new(Square, 1);
    let c = bregman_kmeans(&d, 2, &f, &KMeansOpts::default()).unwrap();
    assert!((c.objective.value() - exhaustive_optimum(&d, 2, &f)).abs() < 1e-15);
}

#[test]
fn mean_is_the_minimizer_for_every_generator_kind() {
    let pts = Dataset::gaussian_blobs(40, 3, 2, 0.15, 8).unwrap();
    for name in ["kl", "quadratic", "mahalanobis-ns"] {
        let f = Registry::builtin().generator(name, 3).unwrap().generator;
        let r = mean_minimizer_check(pts.points(), f.as_ref()).unwrap();
        assert!(r.pass, "{name}: {r:?}");
    }
    let r = mean_minimizer_check(&[vec![0.2], vec![0.4], vec![0.9]], &SumSeparable::new(XLogX, 1)).unwrap();
    assert!(r.pass);
}

#[test]
fn quadratic_objective_example() {
    let d = Dataset::new(vec![vec![0.1], vec![0.2], vec![0.8], vec![0.9]]).unwrap();
    let f = SumSeparable::new(Square, 1);
    let v = objective(&d, &[0, 0, 1, 1], &[vec![0.15], vec![0.85]], &f).value();
    assert!((v - 0.01).abs() < 1e-15);
}

fn small_dataset() -> impl Strategy<Value = Vec<Vec<f64>>> {
    (3usize..=10, 1usize..=2).prop_flat_map(|(n, m)| prop::collection::vec(prop::collection::vec(0.0f64..=1.0, m), n))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn multistart_reaches_exhaustive_optimum(pts in small_dataset(), k in 1usize..=3) {
        let d = Dataset::new(pts).unwrap();
        prop_assume!(k <= d.n());
        let f = SumSeparable::new(Square, d.m());
        let c = bregman_kmeans(&d, k, &f, &KMeansOpts::default()).unwrap();
        let best = exhaustive_optimum(&d, k, &f);
        prop_assert!((c.objective.value() - best).abs() <= 1e-12 * (1.0 + best), "{} vs {best}", c.objective);
    }

    #[test]
    fn lloyd_invariants(pts in small_dataset(), k in 1usize..=3, seed in 0u64..1000) {
        let d = Dataset::new(pts).unwrap();
        prop_assume!(k <= d.n());
        let f = SumSeparable::new(XLogX, d.m());
        let (d, _) = d.clamped(1e-6);
        let c = bregman_kmeans(&d, k, &f, &KMeansOpts { seed, n_starts: 4, ..KMeansOpts::default() }).unwrap();
        prop_assert!(c.converged);
        prop_assert!(c.trace.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{:?}", c.trace);
        for j in 0..k {
            let members: Vec<&Vec<f64>> = d.points().iter().zip(&c.assignments).filter(|(_, &a)| a == j).map(|(x, _)| x).collect();
            prop_assert!(!members.is_empty());
            for dim in 0..d.m() {
                let mean = members.iter().map(|x| x[dim]).sum::<f64>() / members.len() as f64;
                prop_assert!((mean - c.centroids[j][dim]).abs() <= 1e-10);
            }
        }
    }
}
