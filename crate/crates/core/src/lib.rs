//! Proper losses, Bregman divergences and the inequalities that let
//! log-loss (KL divergence) dominate them.
//!
//! The crate is organized bottom-up:
//!
//! - [`proper_loss`]: binary proper losses built from their generalized entropy.
//! - [`bregman`]: scalar and multivariate Bregman divergences with exact
//!   boundary handling, plus Hessian-gap certificates.
//! - [`verify`]: grid and sample based certification of the domination
//!   inequalities.
//! - [`project`]: constrained divergence minimization on the simplex.
//! - [`cluster`]: Bregman hard clustering.
//! - [`pacbayes`]: PAC and PAC-Bayes bound calculators with a Monte Carlo
//!   validity harness.
//! - [`forecast`]: probability forecast evaluation and logistic recalibration.
//! - [`registry`]: name-based lookup of the built-in entropies and generators.
//!
//! All logarithms are natural.

pub mod error;
pub mod ext;
pub mod numeric;
pub mod bregman;
pub mod proper_loss;
pub mod verify;
pub mod project;
pub mod cluster;
pub mod pacbayes;
pub mod registry;
pub mod forecast;

pub use error::{Error, Result};
pub use ext::ExtendedReal;
