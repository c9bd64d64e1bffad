//! Extended real values. Optimal values of indicator problems are naturally
//! extended reals: an infeasible instance has value plus infinity, an
//! unbounded relaxation minus infinity, and the perspective function y^2/x
//! takes the value plus infinity at x = 0, y != 0. Keeping the infinities
//! tagged (rather than as IEEE infinities) survives JSON, where non-finite
//! floats have no representation.

use std::cmp::Ordering;
use std::fmt;

use serde::de::{self, Deserializer, Visitor};
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};

use crate::real::Real;

/// A real number extended with both infinities.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtReal<T> {
    NegInf,
    Finite(T),
    PosInf,
}

impl<T: Real> ExtReal<T> {
    pub fn is_finite(&self) -> bool {
        matches!(self, ExtReal::Finite(_))
    }

    /// The finite payload, if any.
    pub fn finite(&self) -> Option<T> {
        match self {
            ExtReal::Finite(v) => Some(*v),
            _ => None,
        }
    }

    /// Collapses to an IEEE float, mapping the tags to IEEE infinities.
    pub fn to_float(&self) -> T {
        match self {
            ExtReal::NegInf => T::neg_infinity(),
            ExtReal::Finite(v) => *v,
            ExtReal::PosInf => T::infinity(),
        }
    }

    /// Lifts an IEEE float, mapping infinities back to tags. NaN is refused
    /// by the callers that build these; here it maps to a finite NaN.
    pub fn from_float(v: T) -> Self {
        if v == T::infinity() {
            ExtReal::PosInf
        } else if v == T::neg_infinity() {
            ExtReal::NegInf
        } else {
            ExtReal::Finite(v)
        }
    }

    /// Total order with NegInf < any finite < PosInf. Finite NaN payloads
    /// compare as equal to themselves and above other finite values, which
    /// is irrelevant in practice since producers reject NaN.
    pub fn total_cmp(&self, other: &Self) -> Ordering {
        use ExtReal::*;
        match (self, other) {
            (NegInf, NegInf) | (PosInf, PosInf) => Ordering::Equal,
            (NegInf, _) | (_, PosInf) => Ordering::Less,
            (_, NegInf) | (PosInf, _) => Ordering::Greater,
            (Finite(a), Finite(b)) => a.partial_cmp(b).unwrap_or(Ordering::Greater),
        }
    }
}

impl<T: Real> PartialOrd for ExtReal<T> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.total_cmp(other))
    }
}

impl<T: Real> fmt::Display for ExtReal<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExtReal::NegInf => write!(f, "-inf"),
            ExtReal::Finite(v) => write!(f, "{v}"),
            ExtReal::PosInf => write!(f, "inf"),
        }
    }
}

impl<T: Real + Serialize> Serialize for ExtReal<T> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            ExtReal::NegInf => s.serialize_str("-inf"),
            ExtReal::Finite(v) => v.serialize(s),
            ExtReal::PosInf => s.serialize_str("inf"),
        }
    }
}

impl<'de, T: Real> Deserialize<'de> for ExtReal<T> {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V<T>(std::marker::PhantomData<T>);
        impl<'de, T: Real> Visitor<'de> for V<T> {
            type Value = ExtReal<T>;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                write!(f, "a number, \"inf\", or \"-inf\"")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<ExtReal<T>, E> {
                Ok(ExtReal::Finite(T::of(v)))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<ExtReal<T>, E> {
                Ok(ExtReal::Finite(T::of(v as f64)))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<ExtReal<T>, E> {
                Ok(ExtReal::Finite(T::of(v as f64)))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<ExtReal<T>, E> {
                match v {
                    "inf" => Ok(ExtReal::PosInf),
                    "-inf" => Ok(ExtReal::NegInf),
                    _ => Err(E::custom(format!("unexpected extended real {v:?}"))),
                }
            }
        }
        d.deserialize_any(V(std::marker::PhantomData))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ordering_puts_infinities_at_the_ends() {
        let lo = ExtReal::NegInf;
        let a = ExtReal::Finite(-2.0f64);
        let b = ExtReal::Finite(7.0f64);
        let hi = ExtReal::PosInf;
        assert!(lo < a && a < b && b < hi);
        assert!(lo < hi);
        assert_eq!(a.total_cmp(&a), Ordering::Equal);
    }

    #[test]
    fn json_round_trip_keeps_tags() {
        let vals = [ExtReal::NegInf, ExtReal::Finite(1.25f64), ExtReal::PosInf];
        for v in vals {
            let s = serde_json::to_string(&v).unwrap();
            let back: ExtReal<f64> = serde_json::from_str(&s).unwrap();
            assert_eq!(v, back);
        }
        assert_eq!(serde_json::to_string(&ExtReal::<f64>::PosInf).unwrap(), "\"inf\"");
    }

    #[test]
    fn float_round_trip() {
        assert_eq!(ExtReal::from_float(f64::INFINITY), ExtReal::PosInf);
        assert_eq!(ExtReal::from_float(f64::NEG_INFINITY), ExtReal::NegInf);
        assert_eq!(ExtReal::from_float(3.0), ExtReal::Finite(3.0));
        assert_eq!(ExtReal::Finite(3.0f64).to_float(), 3.0);
        assert!(ExtReal::<f64>::PosInf.to_float().is_infinite());
    }
}
