//! Bregman hard clustering.
//!
//! For any Bregman divergence the best single representative of a set of
//! points is their arithmetic mean, so Lloyd's iteration (assign each point to
//! its nearest centroid, then move each centroid to its cluster mean) applies
//! unchanged. Points are measured as `D_f(x || mu)`.

use std::io::Read;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bregman::{hessian_gap_certificate, CertificateReport, GeneratorND, SampleSpec, SumSeparable, XLogX};
use crate::error::{ensure_unit_cube, Error, Result, RowError};
use crate::ext::ExtendedReal;
use crate::numeric::dot;

/// Margin applied to the data before generalized-KL clustering.
pub const KL_CLAMP: f64 = 1e-6;

/// Points in `[0, 1]^m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    points: Vec<Vec<f64>>,
    m: usize,
}

impl Dataset {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        let m = points.first().map_or(0, Vec::len);
        if m == 0 {
            return Err(Error::InvalidArgument("dataset must be nonempty with m >= 1".into()));
        }
        for p in &points {
            if p.len() != m {
                return Err(Error::DimensionMismatch(p.len(), m));
            }
            ensure_unit_cube("point", p)?;
        }
        Ok(Self { points, m })
    }

    /// Reads one point per row; a header row is accepted if it does not parse
    /// as numbers.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(false)
            .comment(Some(b'#'))
            .trim(csv::Trim::All)
            .from_reader(reader);
        let mut points = Vec::new();
        let mut errors = Vec::new();
        for (idx, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = rec.position().map_or(idx + 1, |p| p.line() as usize);
            let parsed: std::result::Result<Vec<f64>, _> = rec.iter().map(str::parse::<f64>).collect();
            match parsed {
                Ok(v) if v.iter().all(|x| (0.0..=1.0).contains(x)) => points.push(v),
                Ok(_) => errors.push(RowError { line, message: "coordinate outside [0, 1]".into() }),
                Err(_) if idx == 0 => {}
                Err(e) => errors.push(RowError { line, message: e.to_string() }),
            }
        }
        if !errors.is_empty() {
            return Err(Error::MalformedRows(errors));
        }
        Self::new(points)
    }

    /// `n` points from `n_blobs` isotropic Gaussian blobs with seeded
    /// centers, clamped to `[0.05, 0.95]^m`.
    pub fn gaussian_blobs(n: usize, m: usize, n_blobs: usize, sd: f64, seed: u64) -> Result<Self> {
        if n == 0 || n_blobs == 0 || sd.is_nan() || sd < 0.0 {
            return Err(Error::InvalidArgument("need n >= 1, n_blobs >= 1, sd >= 0".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let centers: Vec<Vec<f64>> = (0..n_blobs)
            .map(|_| (0..m).map(|_| rng.random_range(0.2..0.8)).collect())
            .collect();
        let noise = Normal::new(0.0, sd).map_err(|e| Error::InvalidArgument(e.to_string()))?;
        let points = (0..n)
            .map(|i| {
                centers[i % n_blobs]
                    .iter()
                    .map(|c| (c + noise.sample(&mut rng)).clamp(0.05, 0.95))
                    .collect()
            })
            .collect();
        Self::new(points)
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn n(&self) -> usize {
        self.points.len()
    }

    pub fn m(&self) -> usize {
        self.m
    }

    /// Copy with every coordinate clamped to `[eps, 1 - eps]`, and the number
    /// of coordinates that moved.
    pub fn clamped(&self, eps: f64) -> (Self, usize) {
        let mut moved = 0;
        let points = self
            .points
            .iter()
            .map(|p| {
                p.iter()
                    .map(|&x| {
                        let y = x.clamp(eps, 1.0 - eps);
                        moved += usize::from(y != x);
                        y
                    })
                    .collect()
            })
            .collect();
        (Self { points, m: self.m }, moved)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KMeansOpts {
    pub max_iters: usize,
    pub n_starts: usize,
    pub seed: u64,
}

impl Default for KMeansOpts {
    fn default() -> Self {
        Self {
            max_iters: 1000,
            n_starts: 32,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clustering {
    pub k: usize,
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    pub objective: ExtendedReal,
    pub iterations: usize,
    /// Seed of the start that produced this result.
    pub seed: u64,
    pub converged: bool,
    /// Objective after every assignment/update round.
    pub trace: Vec<f64>,
}

/// `sum_i D_f(x_i || mu_{a(i)})`.
pub fn objective(data: &Dataset, assignments: &[usize], centroids: &[Vec<f64>], f: &dyn GeneratorND) -> ExtendedReal {
    data.points
        .iter()
        .zip(assignments)
        .map(|(x, &a)| f.divergence(x, &centroids[a]))
        .sum()
}

fn nearest(x: &[f64], centroids: &[Vec<f64>], f: &dyn GeneratorND) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.iter().enumerate() {
        let d = f.divergence(x, c).value();
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

fn means(data: &Dataset, assignments: &[usize], k: usize) -> Vec<Vec<f64>> {
    let mut sums = vec![vec![0.0; data.m]; k];
    let mut counts = vec![0usize; k];
    for (x, &a) in data.points.iter().zip(assignments) {
        counts[a] += 1;
        for (s, v) in sums[a].iter_mut().zip(x) {
            *s += v;
        }
    }
    sums.into_iter()
        .zip(counts)
        .map(|(s, c)| s.into_iter().map(|v| v / c as f64).collect())
        .collect()
}

/// Gives every empty cluster the point farthest from its own centroid among
/// clusters that can spare one.
fn fill_empty(data: &Dataset, assignments: &mut [usize], dist: &mut [f64], k: usize) {
    loop {
        let mut counts = vec![0usize; k];
        for &a in assignments.iter() {
            counts[a] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return;
        };
        let donor = (0..data.n())
            .filter(|&i| counts[assignments[i]] > 1)
            .fold(None, |best: Option<usize>, i| match best {
                Some(b) if dist[b] >= dist[i] => Some(b),
                _ => Some(i),
            })
            .expect("n >= k guarantees a donor");
        assignments[donor] = empty;
        dist[donor] = 0.0;
    }
}

fn init_centroids(data: &Dataset, k: usize, f: &dyn GeneratorND, start: usize, seed: u64) -> Vec<Vec<f64>> {
    let pts = &data.points;
    let mut chosen: Vec<usize> = Vec::with_capacity(k);
    let mut dmin = vec![f64::INFINITY; pts.len()];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let update = |dmin: &mut [f64], c: &[f64]| {
        for (d, x) in dmin.iter_mut().zip(pts) {
            *d = d.min(f.divergence(x, c).value());
        }
    };
    if start == 0 {
        let mean = means(data, &vec![0; pts.len()], 1).remove(0);
        chosen.push(nearest(&mean, pts, f).0);
    } else {
        chosen.push(rng.random_range(0..pts.len()));
    }
    update(&mut dmin, &pts[chosen[0]]);
    while chosen.len() < k {
        let next = if start == 0 {
            // farthest point, lowest index on ties
            (0..pts.len()).fold(0, |b, i| if dmin[i] > dmin[b] { i } else { b })
        } else {
            let total: f64 = dmin.iter().sum();
            if total > 0.0 && total.is_finite() {
                let mut r = rng.random::<f64>() * total;
                let mut pick = pts.len() - 1;
                for (i, d) in dmin.iter().enumerate() {
                    if r < *d {
                        pick = i;
                        break;
                    }
                    r -= d;
                }
                pick
            } else {
                let free: Vec<usize> = (0..pts.len()).filter(|i| !chosen.contains(i)).collect();
                free[rng.random_range(0..free.len())]
            }
        };
        chosen.push(next);
        update(&mut dmin, &pts[next]);
    }
    chosen.into_iter().map(|i| pts[i].clone()).collect()
}

/// Lloyd's iteration from the given centroids.
fn lloyd(data: &Dataset, init: Vec<Vec<f64>>, f: &dyn GeneratorND, max_iters: usize, seed: u64) -> Clustering {
    let k = init.len();
    let mut centroids = init;
    let mut assignments: Vec<usize> = Vec::new();
    let mut trace = Vec::new();
    let mut iterations = 0;
    let mut converged = false;
    while iterations < max_iters {
        iterations += 1;
        let (mut next, mut dist): (Vec<usize>, Vec<f64>) =
            data.points.iter().map(|x| nearest(x, &centroids, f)).unzip();
        fill_empty(data, &mut next, &mut dist, k);
        let unchanged = next == assignments;
        assignments = next;
        centroids = means(data, &assignments, k);
        trace.push(objective(data, &assignments, &centroids, f).value());
        if unchanged {
            converged = true;
            break;
        }
    }
    Clustering {
        k,
        objective: objective(data, &assignments, &centroids, f),
        assignments,
        centroids,
        iterations,
        seed,
        converged,
        trace,
    }
}

fn check_k(data: &Dataset, k: usize, f: &dyn GeneratorND) -> Result<()> {
    if k == 0 || k > data.n() {
        return Err(Error::InvalidArgument(format!("need 1 <= k <= n = {}, got {k}", data.n())));
    }
    if f.dim() != data.m() {
        return Err(Error::DimensionMismatch(f.dim(), data.m()));
    }
    Ok(())
}

fn best_of(runs: Vec<Clustering>) -> Clustering {
    // runs arrive in start order, so keeping the first of equal objectives
    // keeps the lowest seed
    runs.into_iter()
        .reduce(|a, b| if b.objective < a.objective { b } else { a })
        .expect("at least one start")
}

/// Best of `opts.n_starts` Lloyd runs. Start 0 uses farthest-point
/// initialization from the point closest to the mean; later starts use
/// divergence-weighted seeding.
pub fn bregman_kmeans(data: &Dataset, k: usize, f: &dyn GeneratorND, opts: &KMeansOpts) -> Result<Clustering> {
    kmeans_with_warm_starts(data, k, f, opts, &[])
}

fn kmeans_with_warm_starts(
    data: &Dataset,
    k: usize,
    f: &dyn GeneratorND,
    opts: &KMeansOpts,
    warm: &[Vec<Vec<f64>>],
) -> Result<Clustering> {
    check_k(data, k, f)?;
    let starts = opts.n_starts.max(1);
    let mut runs: Vec<Clustering> = (0..starts)
        .into_par_iter()
        .map(|s| {
            let seed = opts.seed.wrapping_add(s as u64);
            lloyd(data, init_centroids(data, k, f, s, seed), f, opts.max_iters, seed)
        })
        .collect();
    runs.extend(warm.iter().map(|c| lloyd(data, c.clone(), f, opts.max_iters, opts.seed)));
    Ok(best_of(runs))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainReport {
    pub generator: String,
    pub constant: f64,
    pub k: usize,
    pub n: usize,
    /// `sum_i gen_kl(x_i || mu_KL)`.
    pub kl_objective: f64,
    /// `(1/C) sum_i D_f(x_i || mu_KL)`.
    pub f_at_kl_scaled: f64,
    /// `(1/C) sum_i D_f(x_i || mu_f)` for the best f-clustering found.
    pub f_at_f_scaled: f64,
    pub link1_pass: bool,
    pub link2_pass: bool,
    pub pass: bool,
    /// Both clusterings are local optima from multi-start Lloyd runs.
    pub local_optima: bool,
    pub clamped_coordinates: usize,
    pub kl_clustering: Clustering,
    pub f_clustering: Clustering,
    pub certificate: CertificateReport,
}

/// Checks `L_KL(mu_KL) >= L_f(mu_KL)/C >= L_f(mu_f)/C` on data clamped to
/// `[KL_CLAMP, 1 - KL_CLAMP]`. The f-clustering multistart also includes a
/// run started from the KL centroids.
pub fn universality_chain_check(
    data: &Dataset,
    k: usize,
    f: &dyn GeneratorND,
    c: f64,
    opts: &KMeansOpts,
) -> Result<ChainReport> {
    check_k(data, k, f)?;
    let certificate = hessian_gap_certificate(f, c, &SampleSpec::default())?;
    if !certificate.pass {
        return Err(Error::NotCertified(format!(
            "{} at C = {c} (min gap {:e})",
            certificate.generator, certificate.min_gap
        )));
    }
    let (data, clamped_coordinates) = data.clamped(KL_CLAMP);
    let kl = SumSeparable::new(XLogX, data.m()).with_label("kl");
    let kl_clustering = bregman_kmeans(&data, k, &kl, opts)?;
    let f_clustering = kmeans_with_warm_starts(&data, k, f, opts, std::slice::from_ref(&kl_clustering.centroids))?;

    let kl_objective = kl_clustering.objective.value();
    let f_at_kl_scaled = objective(&data, &kl_clustering.assignments, &kl_clustering.centroids, f).value() / c;
    let f_at_f_scaled = f_clustering.objective.value() / c;
    let tol = |a: f64| 1e-9 * (1.0 + a.abs());
    let link1_pass = kl_objective + tol(kl_objective) >= f_at_kl_scaled;
    let link2_pass = f_at_kl_scaled + tol(f_at_kl_scaled) >= f_at_f_scaled;
    Ok(ChainReport {
        generator: f.label().to_string(),
        constant: c,
        k,
        n: data.n(),
        kl_objective,
        f_at_kl_scaled,
        f_at_f_scaled,
        link1_pass,
        link2_pass,
        pass: link1_pass && link2_pass,
        local_optima: true,
        clamped_coordinates,
        kl_clustering,
        f_clustering,
        certificate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanMinimizerReport {
    pub generator: String,
    pub mean: Vec<f64>,
    pub mean_objective: f64,
    pub best_candidate: Vec<f64>,
    /// Smallest `objective(z) - objective(mean)` over the candidate grid.
    pub min_excess: f64,
    pub n_candidates: usize,
    pub pass: bool,
}

const BOX_HALF_WIDTH: f64 = 0.1;
const BOX_STEP: f64 = 1e-3;

/// Compares `sum_i D_f(x_i || z)` at the mean against every `z` on a grid of
/// step 1e-3 in a box of half-width 0.1 around it, clipped to `[0, 1]^m`.
///
/// Candidates are scored with the identity
/// `sum_i D_f(x_i || z) = sum_i f(x_i) - n f(z) - <sum_i x_i - n z, grad f(z)>`,
/// which costs one generator evaluation per candidate. Limited to `m <= 3`.
pub fn mean_minimizer_check(points: &[Vec<f64>], f: &dyn GeneratorND) -> Result<MeanMinimizerReport> {
    let data = Dataset::new(points.to_vec())?;
    let m = data.m();
    if f.dim() != m {
        return Err(Error::DimensionMismatch(f.dim(), m));
    }
    if m > 3 {
        return Err(Error::InvalidArgument(format!("candidate grid limited to m <= 3, got {m}")));
    }
    let n = data.n() as f64;
    let mean = means(&data, &vec![0; data.n()], 1).remove(0);
    let sum_x: Vec<f64> = mean.iter().map(|v| v * n).collect();
    let sum_f: f64 = data.points.iter().map(|x| f.f(x)).sum();
    let score = |z: &[f64]| -> f64 {
        let r: Vec<f64> = sum_x.iter().zip(z).map(|(s, zi)| s - n * zi).collect();
        let v = sum_f - n * f.f(z) - dot(&r, &f.grad(z));
        if v.is_nan() {
            f64::INFINITY
        } else {
            v
        }
    };
    let mean_objective = score(&mean);

    let steps = (2.0 * BOX_HALF_WIDTH / BOX_STEP).round() as usize;
    let axes: Vec<Vec<f64>> = mean
        .iter()
        .map(|&c| {
            let mut v: Vec<f64> = (0..=steps)
                .map(|i| (c - BOX_HALF_WIDTH + i as f64 * BOX_STEP).clamp(0.0, 1.0))
                .collect();
            v.dedup();
            v
        })
        .collect();
    let total: usize = axes.iter().map(Vec::len).product();
    let (min_excess, best_idx) = (0..total)
        .into_par_iter()
        .map(|mut idx| {
            let z: Vec<f64> = axes
                .iter()
                .map(|a| {
                    let v = a[idx % a.len()];
                    idx /= a.len();
                    v
                })
                .collect();
            score(&z) - mean_objective
        })
        .enumerate()
        .map(|(i, e)| (e, i))
        .reduce(|| (f64::INFINITY, usize::MAX), |a, b| if b.0 < a.0 || (b.0 == a.0 && b.1 < a.1) { b } else { a });
    let mut idx = best_idx;
    let best_candidate = axes
        .iter()
        .map(|a| {
            let v = a[idx % a.len()];
            idx /= a.len();
            v
        })
        .collect();
    Ok(MeanMinimizerReport {
        generator: f.label().to_string(),
        mean,
        mean_objective,
        best_candidate,
        min_excess,
        n_candidates: total,
        pass: min_excess >= -1e-10,
    })
}

#[cfg(test)]
mod tests {
    use approx::assert_abs_diff_eq;

    use super::*;
    use crate::bregman::{gen_kl, Mahalanobis, MahalanobisQ, Square};

    fn line(xs: &[f64]) -> Dataset {
        Dataset::new(xs.iter().map(|&x| vec![x]).collect()).unwrap()
    }

    #[test]
    fn four_point_example() {
        let d = line(&[0.1, 0.2, 0.8, 0.9]);
        let f = SumSeparable::new(Square, 1);
        let c = bregman_kmeans(&d, 2, &f, &KMeansOpts::default()).unwrap();
        assert_eq!(c.assignments[0], c.assignments[1]);
        assert_eq!(c.assignments[2], c.assignments[3]);
        assert_ne!(c.assignments[0], c.assignments[2]);
        let mut cs: Vec<f64> = c.centroids.iter().map(|v| v[0]).collect();
        cs.sort_by(f64::total_cmp);
        assert_abs_diff_eq!(cs[0], 0.15, epsilon = 1e-12);
        assert_abs_diff_eq!(cs[1], 0.85, epsilon = 1e-12);
        assert_abs_diff_eq!(c.objective.value(), 0.01, epsilon = 1e-12);
    }

    #[test]
    fn k_equal_one_and_n() {
        let d = Dataset::gaussian_blobs(12, 2, 3, 0.1, 3).unwrap();
        let f = SumSeparable::new(Square, 2);
        let one = bregman_kmeans(&d, 1, &f, &KMeansOpts::default()).unwrap();
        let mean = means(&d, &[0; 12], 1).remove(0);
        for (a, b) in one.centroids[0].iter().zip(&mean) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-12);
        }
        let all = bregman_kmeans(&d, 12, &f, &KMeansOpts::default()).unwrap();
        assert_eq!(all.objective.value(), 0.0);
    }

    #[test]
    fn duplicates_never_leave_empty_clusters() {
        let d = line(&[0.3, 0.3, 0.3, 0.7]);
        let f = SumSeparable::new(Square, 1);
        let c = bregman_kmeans(&d, 3, &f, &KMeansOpts::default()).unwrap();
        for j in 0..3 {
            assert!(c.assignments.contains(&j));
        }
        assert_eq!(c.objective.value(), 0.0);
    }

    #[test]
    fn kl_objective_matches_summation() {
        let d = Dataset::gaussian_blobs(30, 2, 2, 0.1, 5).unwrap();
        let f = SumSeparable::new(XLogX, 2);
        let c = bregman_kmeans(&d, 2, &f, &KMeansOpts::default()).unwrap();
        let direct: f64 = d
            .points()
            .iter()
            .zip(&c.assignments)
            .map(|(x, &a)| gen_kl(x, &c.centroids[a]).unwrap().value())
            .sum();
        assert_abs_diff_eq!(c.objective.value(), direct, epsilon = 1e-12);
    }

    #[test]
    fn chain_holds_on_blobs() {
        let d = Dataset::gaussian_blobs(200, 2, 4, 0.08, 11).unwrap();
        let sq = SumSeparable::new(Square, 2);
        let r = universality_chain_check(&d, 4, &sq, 2.0 + 1e-6, &KMeansOpts::default()).unwrap();
        assert!(r.pass, "{r:?}");
        let q = MahalanobisQ::from_rows(&[[3.0, 0.0], [0.0, 2.0]]).unwrap();
        let r = universality_chain_check(&d, 4, &Mahalanobis::new(q), 3.0 + 1e-6, &KMeansOpts::default()).unwrap();
        assert!(r.pass);
    }

    #[test]
    fn chain_refuses_uncertified_constant() {
        let d = Dataset::gaussian_blobs(20, 2, 2, 0.1, 1).unwrap();
        let sq = SumSeparable::new(Square, 2);
        assert!(matches!(
            universality_chain_check(&d, 2, &sq, 1.5, &KMeansOpts::default()),
            Err(Error::NotCertified(_))
        ));
    }

    #[test]
    fn identical_points_give_zero_chain() {
        let d = Dataset::new(vec![vec![0.4, 0.6]; 10]).unwrap();
        let sq = SumSeparable::new(Square, 2);
        let r = universality_chain_check(&d, 2, &sq, 2.0 + 1e-6, &KMeansOpts::default()).unwrap();
        // zero up to the rounding of the cluster mean
        for v in [r.kl_objective, r.f_at_kl_scaled, r.f_at_f_scaled] {
            assert!(v < 1e-30, "{v}");
        }
    }

    #[test]
    fn mean_wins_for_kl_line() {
        let f = SumSeparable::new(XLogX, 1);
        let r = mean_minimizer_check(&[vec![0.2], vec![0.4], vec![0.9]], &f).unwrap();
        assert_abs_diff_eq!(r.mean[0], 0.5, epsilon = 1e-15);
        assert!(r.pass, "{r:?}");
        assert_eq!(r.n_candidates, 201);
    }

    #[test]
    fn csv_reader_reports_bad_rows() {
        let ok = Dataset::from_csv("a,b\n0.1,0.2\n0.3,0.4\n".as_bytes()).unwrap();
        assert_eq!(ok.n(), 2);
        let Err(Error::MalformedRows(rows)) = Dataset::from_csv("0.1,0.2\n1.5,0.1\nx,y\n".as_bytes()) else {
            panic!("expected row errors");
        };
        assert_eq!(rows.iter().map(|r| r.line).collect::<Vec<_>>(), vec![2, 3]);
    }
}
