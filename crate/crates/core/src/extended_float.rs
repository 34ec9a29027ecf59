//! Serde helpers for floats that may be infinite. JSON has no infinity, so
//! `±inf` is written as the strings `"inf"` / `"-inf"`; finite values stay
//! plain numbers.

use serde::de::{self, Deserializer, Visitor};
use serde::ser::{SerializeSeq, Serializer};
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Clone, Copy, Debug, PartialEq)]
pub(crate) struct ExtF64(pub f64);

impl Serialize for ExtF64 {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let v = self.0;
        if v.is_finite() {
            s.serialize_f64(v)
        } else if v.is_nan() {
            Err(serde::ser::Error::custom("NaN is not serializable"))
        } else if v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }
}

impl<'de> Deserialize<'de> for ExtF64 {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl Visitor<'_> for V {
            type Value = ExtF64;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number, \"inf\" or \"-inf\"")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<ExtF64, E> {
                Ok(ExtF64(v))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<ExtF64, E> {
                Ok(ExtF64(v as f64))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<ExtF64, E> {
                Ok(ExtF64(v as f64))
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<ExtF64, E> {
                match v {
                    "inf" | "+inf" => Ok(ExtF64(f64::INFINITY)),
                    "-inf" => Ok(ExtF64(f64::NEG_INFINITY)),
                    _ => Err(E::invalid_value(de::Unexpected::Str(v), &self)),
                }
            }
        }
        d.deserialize_any(V)
    }
}

pub(crate) fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    ExtF64(*v).serialize(s)
}

pub(crate) fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
    ExtF64::deserialize(d).map(|v| v.0)
}

pub(crate) mod vec {
    use super::*;

    pub(crate) fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(v.len()))?;
        for &x in v {
            seq.serialize_element(&ExtF64(x))?;
        }
        seq.end()
    }

    pub(crate) fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Vec::<ExtF64>::deserialize(d).map(|v| v.into_iter().map(|x| x.0).collect())
    }
}
