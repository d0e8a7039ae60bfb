//! Reals augmented with `+inf`.
//!
//! Divergences take values in `[0, +inf]`; `+inf` is a first-class value and
//! absorbs sums and positive scalings. Losses may also be `+inf` at the
//! boundary of the probability interval. `NaN` and `-inf` are never stored.

use std::cmp::Ordering;
use std::fmt;
use std::iter::Sum;
use std::ops::Add;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ExtendedReal(f64);

impl ExtendedReal {
    pub const ZERO: Self = Self(0.0);
    pub const INFINITY: Self = Self(f64::INFINITY);

    /// Panics on `NaN` or `-inf`; both indicate a bug upstream.
    pub fn new(v: f64) -> Self {
        assert!(
            !v.is_nan() && v != f64::NEG_INFINITY,
            "extended real must not be NaN or -inf (got {v})"
        );
        Self(v)
    }

    /// Builds a divergence value: rounding-level negatives are clamped to zero.
    pub fn divergence(v: f64) -> Self {
        Self::new(v.max(0.0))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_finite(self) -> bool {
        self.0.is_finite()
    }

    pub fn is_infinite(self) -> bool {
        self.0 == f64::INFINITY
    }

    pub fn finite(self) -> Option<f64> {
        self.is_finite().then_some(self.0)
    }

    /// `c * self` with the convention `0 * inf = 0`.
    pub fn scale(self, c: f64) -> Self {
        assert!(c >= 0.0, "scale factor must be nonnegative");
        if c == 0.0 {
            Self::ZERO
        } else {
            Self::new(c * self.0)
        }
    }
}

impl Eq for ExtendedReal {}

impl PartialOrd for ExtendedReal {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for ExtendedReal {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

impl Add for ExtendedReal {
    type Output = Self;
    fn add(self, rhs: Self) -> Self {
        Self::new(self.0 + rhs.0)
    }
}

impl Sum for ExtendedReal {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::ZERO, |a, b| a + b)
    }
}

impl From<f64> for ExtendedReal {
    fn from(v: f64) -> Self {
        Self::new(v)
    }
}

impl fmt::Display for ExtendedReal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_infinite() {
            f.write_str("inf")
        } else {
            fmt::Display::fmt(&self.0, f)
        }
    }
}

impl Serialize for ExtendedReal {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        crate::ext::serde_f64::serialize(&self.0, s)
    }
}

impl<'de> Deserialize<'de> for ExtendedReal {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let v = serde_f64::deserialize(d)?;
        if v.is_nan() || v == f64::NEG_INFINITY {
            return Err(serde::de::Error::custom("extended real must not be NaN or -inf"));
        }
        Ok(Self(v))
    }
}

/// Serializes non-finite floats as the strings `"inf"`, `"-inf"`, `"nan"`
/// so JSON output never silently turns them into `null`.
pub mod serde_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) => match s.as_str() {
                "inf" | "+inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("not a number: {other}"))),
            },
        }
    }
}
