//! Name-based lookup of entropies and generators.
//!
//! Callers select strategies by name (from the command line or a config
//! file) and receive trait objects. [`Registry::builtin`] holds the built-in
//! set; custom registries can add their own entries.

use std::collections::BTreeMap;
use std::sync::{Arc, OnceLock};

use crate::bregman::{
    separable_constant, Generator1D, GeneratorND, Mahalanobis, MahalanobisQ, OneMinusXLogX, Square, SumSeparable,
    XLogX,
};
use crate::error::{Error, Result};
use crate::proper_loss::{Boosting, Entropy, Logarithmic, Quadratic};

/// A multivariate generator instantiated for dimension `m`, with the
/// infimum of constants `C` for which KL dominates it.
#[derive(Clone)]
pub struct NdEntry {
    pub generator: Arc<dyn GeneratorND>,
    pub constant_bound: f64,
}

type NdFactory = Arc<dyn Fn(usize) -> Result<NdEntry> + Send + Sync>;

#[derive(Default, Clone)]
pub struct Registry {
    entropies: BTreeMap<String, Arc<dyn Entropy>>,
    aliases: BTreeMap<String, String>,
    scalar: BTreeMap<String, Arc<dyn Generator1D>>,
    nd: BTreeMap<String, NdFactory>,
}

fn unknown(kind: &str, name: &str, known: Vec<String>) -> Error {
    Error::InvalidArgument(format!("unknown {kind} '{name}'; known: {}", known.join(", ")))
}

/// The fixed 3x3 matrices used throughout the examples.
pub fn q_separable() -> MahalanobisQ {
    MahalanobisQ::from_rows(&[[3.0, 0.0, 0.0], [0.0, 2.0, 0.0], [0.0, 0.0, 1.0]]).expect("valid matrix")
}

pub fn q_coupled() -> MahalanobisQ {
    MahalanobisQ::from_rows(&[[3.0, 0.5, 0.5], [0.5, 2.0, 0.5], [0.5, 0.5, 1.0]]).expect("valid matrix")
}

fn mahalanobis_entry(q: MahalanobisQ, label: &str, m: usize) -> Result<NdEntry> {
    if m != q.dim() {
        return Err(Error::DimensionMismatch(m, q.dim()));
    }
    Ok(NdEntry {
        constant_bound: q.lambda_max(),
        generator: Arc::new(Mahalanobis::with_label(q, label)),
    })
}

fn separable_entry(g: Arc<dyn Generator1D>, label: &str, m: usize) -> Result<NdEntry> {
    if m == 0 {
        return Err(Error::InvalidArgument("dimension must be >= 1".into()));
    }
    let bound = separable_constant(g.as_ref())
        .finite()
        .ok_or_else(|| Error::InvalidArgument(format!("{label}: g''(1) is infinite")))?;
    Ok(NdEntry {
        generator: Arc::new(SumSeparable::from_arc(g, m).with_label(label)),
        constant_bound: bound,
    })
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    /// Shared instance with the built-in strategies.
    pub fn builtin() -> &'static Registry {
        static BUILTIN: OnceLock<Registry> = OnceLock::new();
        BUILTIN.get_or_init(|| {
            let mut r = Registry::new();
            r.register_entropy("quadratic", Arc::new(Quadratic));
            r.register_entropy("logarithmic", Arc::new(Logarithmic));
            r.register_entropy("boosting", Arc::new(Boosting));
            r.register_alias("log", "logarithmic");

            r.register_scalar("square", Arc::new(Square));
            r.register_scalar("xlogx", Arc::new(XLogX));
            r.register_scalar("one-minus-xlogx", Arc::new(OneMinusXLogX));

            r.register_nd("kl", Arc::new(|m| separable_entry(Arc::new(XLogX), "kl", m)));
            r.register_nd("quadratic", Arc::new(|m| separable_entry(Arc::new(Square), "quadratic", m)));
            r.register_nd("mahalanobis-s", Arc::new(|m| mahalanobis_entry(q_separable(), "mahalanobis-s", m)));
            r.register_nd("mahalanobis-ns", Arc::new(|m| mahalanobis_entry(q_coupled(), "mahalanobis-ns", m)));
            r
        })
    }

    pub fn register_entropy(&mut self, name: &str, e: Arc<dyn Entropy>) {
        self.entropies.insert(name.to_string(), e);
    }

    pub fn register_alias(&mut self, alias: &str, target: &str) {
        self.aliases.insert(alias.to_string(), target.to_string());
    }

    pub fn register_scalar(&mut self, name: &str, g: Arc<dyn Generator1D>) {
        self.scalar.insert(name.to_string(), g);
    }

    pub fn register_nd(&mut self, name: &str, factory: NdFactory) {
        self.nd.insert(name.to_string(), factory);
    }

    fn resolve<'a>(&'a self, name: &'a str) -> &'a str {
        self.aliases.get(name).map_or(name, String::as_str)
    }

    pub fn entropy(&self, name: &str) -> Result<Arc<dyn Entropy>> {
        self.entropies
            .get(self.resolve(name))
            .cloned()
            .ok_or_else(|| unknown("loss", name, self.entropy_names()))
    }

    pub fn scalar_generator(&self, name: &str) -> Result<Arc<dyn Generator1D>> {
        self.scalar
            .get(self.resolve(name))
            .cloned()
            .ok_or_else(|| unknown("scalar generator", name, self.scalar_names()))
    }

    pub fn generator(&self, name: &str, m: usize) -> Result<NdEntry> {
        let factory = self
            .nd
            .get(self.resolve(name))
            .ok_or_else(|| unknown("generator", name, self.generator_names()))?;
        factory(m)
    }

    pub fn entropy_names(&self) -> Vec<String> {
        self.entropies.keys().cloned().collect()
    }

    pub fn scalar_names(&self) -> Vec<String> {
        self.scalar.keys().cloned().collect()
    }

    pub fn generator_names(&self) -> Vec<String> {
        self.nd.keys().cloned().collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_names_resolve() {
        let r = Registry::builtin();
        assert_eq!(r.entropy("log").unwrap().label(), "logarithmic");
        assert_eq!(r.entropy_names(), vec!["boosting", "logarithmic", "quadratic"]);
        assert_eq!(r.scalar_generator("square").unwrap().label(), "square");
        let e = r.generator("mahalanobis-s", 3).unwrap();
        assert_eq!(e.generator.label(), "mahalanobis-s");
        assert!((e.constant_bound - 3.0).abs() < 1e-12);
        assert_eq!(r.generator("quadratic", 5).unwrap().constant_bound, 2.0);
        assert_eq!(r.generator("kl", 2).unwrap().constant_bound, 1.0);
    }

    #[test]
    fn unknown_names_list_alternatives() {
        let err = Registry::builtin().entropy("hinge").unwrap_err().to_string();
        assert!(err.contains("boosting, logarithmic, quadratic"), "{err}");
        assert!(Registry::builtin().generator("mahalanobis-ns", 4).is_err());
    }

    #[test]
    fn custom_entries_can_be_added() {
        let mut r = Registry::builtin().clone();
        r.register_alias("brier", "quadratic");
        assert_eq!(r.entropy("brier").unwrap().label(), "quadratic");
    }
}
