use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::{breg1_unchecked, Generator1D, GeneratorKind, GeneratorND};
use crate::error::{Error, Result};
use crate::ext::ExtendedReal;
use crate::numeric::xlogx;
use crate::proper_loss::Entropy;

/// `g(p) = p^2`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Square;

impl Generator1D for Square {
    fn label(&self) -> &str {
        "square"
    }
    fn g(&self, p: f64) -> f64 {
        p * p
    }
    fn g1(&self, p: f64) -> f64 {
        2.0 * p
    }
    fn g2(&self, _p: f64) -> f64 {
        2.0
    }
    fn g3(&self, _p: f64) -> f64 {
        0.0
    }
}

/// `g(p) = p log p`; its separable divergence is the generalized KL.
#[derive(Debug, Clone, Copy, Default)]
pub struct XLogX;

impl Generator1D for XLogX {
    fn label(&self) -> &str {
        "xlogx"
    }
    fn g(&self, p: f64) -> f64 {
        xlogx(p)
    }
    fn g1(&self, p: f64) -> f64 {
        if p == 0.0 {
            f64::NEG_INFINITY
        } else {
            p.ln() + 1.0
        }
    }
    fn g2(&self, p: f64) -> f64 {
        1.0 / p
    }
    fn g3(&self, p: f64) -> f64 {
        -1.0 / (p * p)
    }
}

/// `g(p) = (1 - p) log(1 - p) + p`, with `g''(p) = 1 / (1 - p)` unbounded at 1.
#[derive(Debug, Clone, Copy, Default)]
pub struct OneMinusXLogX;

impl Generator1D for OneMinusXLogX {
    fn label(&self) -> &str {
        "one-minus-xlogx"
    }
    fn g(&self, p: f64) -> f64 {
        xlogx(1.0 - p) + p
    }
    fn g1(&self, p: f64) -> f64 {
        if p == 1.0 {
            f64::INFINITY
        } else {
            -(-p).ln_1p()
        }
    }
    fn g2(&self, p: f64) -> f64 {
        1.0 / (1.0 - p)
    }
    fn g3(&self, p: f64) -> f64 {
        1.0 / ((1.0 - p) * (1.0 - p))
    }
}

/// `-G` for a generalized entropy `G`; its divergence is the regret of `G`.
#[derive(Debug, Clone, Copy)]
pub struct NegatedEntropy<'a>(pub &'a dyn Entropy);

impl Generator1D for NegatedEntropy<'_> {
    fn label(&self) -> &str {
        self.0.label()
    }
    fn g(&self, p: f64) -> f64 {
        -self.0.g(p)
    }
    fn g1(&self, p: f64) -> f64 {
        -self.0.g1(p)
    }
    fn g2(&self, p: f64) -> f64 {
        -self.0.g2(p)
    }
    fn g3(&self, p: f64) -> f64 {
        -self.0.g3(p)
    }
}

type ScalarFn = Box<dyn Fn(f64) -> f64 + Send + Sync>;

/// A scalar generator from closures. `g1` must return the one-sided limits
/// at the endpoints.
pub struct CustomGenerator1D {
    label: String,
    g: ScalarFn,
    g1: ScalarFn,
    g2: ScalarFn,
    g3: ScalarFn,
}

impl CustomGenerator1D {
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

impl fmt::Debug for CustomGenerator1D {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomGenerator1D").field("label", &self.label).finish()
    }
}

impl Generator1D for CustomGenerator1D {
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

/// `f(p) = sum_i g(p_i)` on `[0, 1]^m`.
#[derive(Debug, Clone)]
pub struct SumSeparable {
    g: Arc<dyn Generator1D>,
    m: usize,
    label: String,
}

impl SumSeparable {
    pub fn new(g: impl Generator1D + 'static, m: usize) -> Self {
        Self::from_arc(Arc::new(g), m)
    }

    pub fn from_arc(g: Arc<dyn Generator1D>, m: usize) -> Self {
        let label = format!("sum-{}", g.label());
        Self { g, m, label }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn scalar(&self) -> &dyn Generator1D {
        self.g.as_ref()
    }
}

impl GeneratorND for SumSeparable {
    fn dim(&self) -> usize {
        self.m
    }
    fn label(&self) -> &str {
        &self.label
    }
    fn kind(&self) -> GeneratorKind {
        GeneratorKind::SumSeparable
    }
    fn f(&self, p: &[f64]) -> f64 {
        p.iter().map(|&x| self.g.g(x)).sum()
    }
    fn grad(&self, p: &[f64]) -> Vec<f64> {
        p.iter().map(|&x| self.g.g1(x)).collect()
    }
    fn hessian(&self, p: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&DVector::from_iterator(
            p.len(),
            p.iter().map(|&x| self.g.g2(x)),
        ))
    }
    fn divergence(&self, p: &[f64], q: &[f64]) -> ExtendedReal {
        p.iter()
            .zip(q)
            .map(|(&a, &b)| breg1_unchecked(self.g.as_ref(), a, b))
            .sum()
    }
    fn divergence_grad_q(&self, p: &[f64], q: &[f64]) -> Vec<f64> {
        p.iter()
            .zip(q)
            .map(|(&a, &b)| self.g.g2(b) * (b - a))
            .collect()
    }
}

/// A validated symmetric positive-definite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct MahalanobisQ {
    q: DMatrix<f64>,
    eigenvalues: Vec<f64>,
}

impl MahalanobisQ {
    pub fn new(q: DMatrix<f64>) -> Result<Self> {
        if !q.is_square() || q.nrows() == 0 {
            return Err(Error::NotPositiveDefinite(format!(
                "expected a nonempty square matrix, got {}x{}",
                q.nrows(),
                q.ncols()
            )));
        }
        if q.iter().any(|x| !x.is_finite()) {
            return Err(Error::NotPositiveDefinite("non-finite entry".into()));
        }
        let asym = (&q - q.transpose()).amax();
        if asym > 1e-12 {
            return Err(Error::NotPositiveDefinite(format!(
                "asymmetry {asym:e} exceeds 1e-12"
            )));
        }
        let mut eigenvalues: Vec<f64> = SymmetricEigen::new(q.clone()).eigenvalues.iter().copied().collect();
        eigenvalues.sort_by(f64::total_cmp);
        if eigenvalues[0] <= 0.0 {
            return Err(Error::NotPositiveDefinite(format!(
                "smallest eigenvalue {}",
                eigenvalues[0]
            )));
        }
        Ok(Self { q, eigenvalues })
    }

    pub fn from_rows<const N: usize>(rows: &[[f64; N]]) -> Result<Self> {
        Self::new(DMatrix::from_fn(rows.len(), N, |i, j| rows[i][j]))
    }

    pub fn identity(m: usize) -> Self {
        Self::new(DMatrix::identity(m, m)).expect("identity is positive definite")
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn dim(&self) -> usize {
        self.q.nrows()
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn lambda_max(&self) -> f64 {
        *self.eigenvalues.last().unwrap()
    }

    pub fn lambda_min(&self) -> f64 {
        self.eigenvalues[0]
    }
}

/// `f(p) = 1/2 p^T Q p`, so `D_f(p || q) = 1/2 (p - q)^T Q (p - q)` and `H_f = Q`.
#[derive(Debug, Clone)]
pub struct Mahalanobis {
    q: MahalanobisQ,
    label: String,
}

impl Mahalanobis {
    pub fn new(q: MahalanobisQ) -> Self {
        Self::with_label(q, "mahalanobis")
    }

    pub fn with_label(q: MahalanobisQ, label: impl Into<String>) -> Self {
        Self {
            q,
            label: label.into(),
        }
    }

    pub fn q(&self) -> &MahalanobisQ {
        &self.q
    }

    fn apply(&self, v: &[f64]) -> DVector<f64> {
        self.q.matrix() * DVector::from_column_slice(v)
    }
}

impl GeneratorND for Mahalanobis {
    fn dim(&self) -> usize {
        self.q.dim()
    }
    fn label(&self) -> &str {
        &self.label
    }
    fn kind(&self) -> GeneratorKind {
        GeneratorKind::Mahalanobis
    }
    fn f(&self, p: &[f64]) -> f64 {
        0.5 * self.apply(p).dot(&DVector::from_column_slice(p))
    }
    fn grad(&self, p: &[f64]) -> Vec<f64> {
        self.apply(p).iter().copied().collect()
    }
    fn hessian(&self, _p: &[f64]) -> DMatrix<f64> {
        self.q.matrix().clone()
    }
    fn divergence(&self, p: &[f64], q: &[f64]) -> ExtendedReal {
        let d: Vec<f64> = p.iter().zip(q).map(|(a, b)| a - b).collect();
        ExtendedReal::divergence(0.5 * self.apply(&d).dot(&DVector::from_column_slice(&d)))
    }
    fn divergence_grad_q(&self, p: &[f64], q: &[f64]) -> Vec<f64> {
        let d: Vec<f64> = q.iter().zip(p).map(|(a, b)| a - b).collect();
        self.apply(&d).iter().copied().collect()
    }
}

type VecFn<T> = Box<dyn Fn(&[f64]) -> T + Send + Sync>;

/// A multivariate generator from closures.
///
/// Only generators with finite gradients on the whole closed cube are
/// supported: divergences are evaluated with the plain definition and no
/// boundary limits are taken.
pub struct CustomGeneratorND {
    label: String,
    m: usize,
    f: VecFn<f64>,
    grad: VecFn<Vec<f64>>,
    hessian: VecFn<DMatrix<f64>>,
}

impl CustomGeneratorND {
    pub fn new(
        label: impl Into<String>,
        m: usize,
        f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        grad: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static,
        hessian: impl Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            label: label.into(),
            m,
            f: Box::new(f),
            grad: Box::new(grad),
            hessian: Box::new(hessian),
        }
    }
}

impl fmt::Debug for CustomGeneratorND {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomGeneratorND")
            .field("label", &self.label)
            .field("m", &self.m)
            .finish()
    }
}

impl GeneratorND for CustomGeneratorND {
    fn dim(&self) -> usize {
        self.m
    }
    fn label(&self) -> &str {
        &self.label
    }
    fn kind(&self) -> GeneratorKind {
        GeneratorKind::Custom
    }
    fn f(&self, p: &[f64]) -> f64 {
        (self.f)(p)
    }
    fn grad(&self, p: &[f64]) -> Vec<f64> {
        (self.grad)(p)
    }
    fn hessian(&self, p: &[f64]) -> DMatrix<f64> {
        (self.hessian)(p)
    }
}
