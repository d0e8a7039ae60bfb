use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::GeneratorND;
use crate::error::{Error, Result};
use crate::ext::serde_f64;
use crate::numeric::{lex_cmp, unit_grid};

/// How to sample interior points of `[0, 1]^m`.
///
/// The sample is the union of a regular grid, the `2^m` corners, `n_random`
/// uniform points and `n_random` corner-biased points (each coordinate is
/// pushed to a face with probability 1/2). Every coordinate is kept
/// `corner_margin` away from `{0, 1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleSpec {
    pub grid_step: f64,
    pub n_random: usize,
    pub seed: u64,
    pub corner_margin: f64,
}

impl Default for SampleSpec {
    fn default() -> Self {
        Self {
            grid_step: 0.1,
            n_random: 5000,
            seed: 0,
            corner_margin: 1e-6,
        }
    }
}

impl SampleSpec {
    fn validate(&self) -> Result<()> {
        if !(self.grid_step > 0.0 && self.grid_step <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "grid_step must lie in (0, 1], got {}",
                self.grid_step
            )));
        }
        if !(self.corner_margin > 0.0 && self.corner_margin < 0.5) {
            return Err(Error::InvalidArgument(format!(
                "corner_margin must lie in (0, 0.5), got {}",
                self.corner_margin
            )));
        }
        Ok(())
    }

    /// Interior sample points in a fixed order.
    pub fn points(&self, m: usize) -> Result<Vec<Vec<f64>>> {
        self.validate()?;
        let lo = self.corner_margin;
        let hi = 1.0 - lo;
        let axis: Vec<f64> = unit_grid(self.grid_step)
            .into_iter()
            .map(|x| x.clamp(lo, hi))
            .collect();

        let mut out = Vec::new();
        let mut idx = vec![0usize; m];
        'grid: loop {
            out.push(idx.iter().map(|&i| axis[i]).collect());
            for d in (0..m).rev() {
                idx[d] += 1;
                if idx[d] < axis.len() {
                    continue 'grid;
                }
                idx[d] = 0;
            }
            break;
        }
        for mask in 0..(1usize << m) {
            out.push((0..m).map(|d| if mask >> d & 1 == 1 { hi } else { lo }).collect());
        }

        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        for _ in 0..self.n_random {
            out.push((0..m).map(|_| rng.random_range(lo..=hi)).collect());
        }
        for _ in 0..self.n_random {
            out.push(
                (0..m)
                    .map(|_| {
                        if rng.random_bool(0.5) {
                            if rng.random_bool(0.5) {
                                lo
                            } else {
                                hi
                            }
                        } else {
                            rng.random_range(lo..=hi)
                        }
                    })
                    .collect(),
            );
        }
        Ok(out)
    }

    /// Pairs `(p, q)` in `[0, 1]^m x [0, 1]^m`: `n_random` uniform pairs,
    /// `n_random` boundary-biased pairs whose coordinates are often exactly 0
    /// or 1 (or at the margin), and `p = q` pairs at the grid corners.
    pub fn pairs(&self, m: usize) -> Result<Vec<(Vec<f64>, Vec<f64>)>> {
        self.validate()?;
        let lo = self.corner_margin;
        let faces = [0.0, lo, 1.0 - lo, 1.0];
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x9e37_79b9_7f4a_7c15);
        let mut out = Vec::with_capacity(2 * self.n_random + (1 << m));
        for _ in 0..self.n_random {
            let p = (0..m).map(|_| rng.random::<f64>()).collect();
            let q = (0..m).map(|_| rng.random::<f64>()).collect();
            out.push((p, q));
        }
        let biased = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..m)
                .map(|_| {
                    if rng.random_bool(1.0 / 3.0) {
                        rng.random::<f64>()
                    } else {
                        faces[rng.random_range(0..faces.len())]
                    }
                })
                .collect()
        };
        for _ in 0..self.n_random {
            let p = biased(&mut rng);
            let q = biased(&mut rng);
            out.push((p, q));
        }
        for mask in 0..(1usize << m) {
            let c: Vec<f64> = (0..m).map(|d| (mask >> d & 1) as f64).collect();
            out.push((c.clone(), c));
        }
        Ok(out)
    }
}

/// Result of checking `C * diag(1/p) - H_f(p)` for positive definiteness on
/// a finite sample. A pass is evidence on the sampled points only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateReport {
    pub generator: String,
    pub constant: f64,
    pub n_samples: usize,
    #[serde(with = "serde_f64")]
    pub min_gap: f64,
    pub worst_point: Vec<f64>,
    pub pass: bool,
    pub note: String,
}

fn smallest_eigenvalue(m: DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m)
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

pub fn hessian_gap_certificate(
    f: &dyn GeneratorND,
    c: f64,
    sampler: &SampleSpec,
) -> Result<CertificateReport> {
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidArgument(format!("C must be positive, got {c}")));
    }
    let points = sampler.points(f.dim())?;
    let gaps: Vec<Option<f64>> = points
        .par_iter()
        .map(|p| {
            let h = f.hessian(p);
            if h.iter().any(|x| !x.is_finite()) {
                return None;
            }
            let mut m = -h;
            for i in 0..p.len() {
                m[(i, i)] += c / p[i];
            }
            let sym = 0.5 * (&m + m.transpose());
            Some(smallest_eigenvalue(sym))
        })
        .collect();

    let mut worst: Option<(f64, &Vec<f64>)> = None;
    for (gap, p) in gaps.iter().zip(&points) {
        let Some(gap) = *gap else {
            return Err(Error::HessianFailure { point: p.clone() });
        };
        let better = match worst {
            None => true,
            Some((w, wp)) => gap < w || (gap == w && lex_cmp(p, wp).is_lt()),
        };
        if better {
            worst = Some((gap, p));
        }
    }
    let (min_gap, worst_point) = worst.expect("sample is never empty");
    Ok(CertificateReport {
        generator: f.label().to_string(),
        constant: c,
        n_samples: points.len(),
        min_gap,
        worst_point: worst_point.clone(),
        pass: min_gap > 0.0,
        note: "positive definiteness checked on sampled interior points only".into(),
    })
}
