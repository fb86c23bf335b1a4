//! JSON encodings shared by the config and certificate formats.
//!
//! Complex numbers are written as `[re, im]` pairs. On input a bare number is
//! also accepted and read as a real entry.

use serde::de::{self, Deserializer, SeqAccess, Visitor};
use serde::ser::{SerializeSeq, Serializer};
use serde::{Deserialize, Serialize};
use std::fmt;

use crate::linalg::{CMat, C64};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexEntry(pub C64);

impl Serialize for ComplexEntry {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(2))?;
        seq.serialize_element(&self.0.re)?;
        seq.serialize_element(&self.0.im)?;
        seq.end()
    }
}

impl<'de> Deserialize<'de> for ComplexEntry {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        struct V;
        impl<'de> Visitor<'de> for V {
            type Value = ComplexEntry;

            fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
                f.write_str("a number or a [re, im] pair")
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Self::Value, E> {
                Ok(ComplexEntry(C64::new(v, 0.0)))
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Self::Value, E> {
                Ok(ComplexEntry(C64::new(v as f64, 0.0)))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Self::Value, E> {
                Ok(ComplexEntry(C64::new(v as f64, 0.0)))
            }

            fn visit_seq<A: SeqAccess<'de>>(self, mut seq: A) -> Result<Self::Value, A::Error> {
                let re: f64 = seq
                    .next_element()?
                    .ok_or_else(|| de::Error::invalid_length(0, &self))?;
                let im: f64 = seq
                    .next_element()?
                    .ok_or_else(|| de::Error::invalid_length(1, &self))?;
                if seq.next_element::<f64>()?.is_some() {
                    return Err(de::Error::invalid_length(3, &self));
                }
                Ok(ComplexEntry(C64::new(re, im)))
            }
        }
        d.deserialize_any(V)
    }
}

/// Row-major nested list; ragged input is rejected at conversion.
pub type MatrixRepr = Vec<Vec<ComplexEntry>>;

pub fn matrix_to_repr(m: &CMat) -> MatrixRepr {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| ComplexEntry(m[(i, j)])).collect())
        .collect()
}

pub fn matrix_from_repr(rows: &MatrixRepr) -> Result<CMat, String> {
    let nr = rows.len();
    let nc = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != nc) {
        return Err("ragged matrix rows".into());
    }
    Ok(CMat::from_fn(nr, nc, |i, j| rows[i][j].0))
}

/// serde adapter for `CMat` fields.
pub mod cmat {
    use super::*;

    pub fn serialize<S: Serializer>(m: &CMat, s: S) -> Result<S::Ok, S::Error> {
        matrix_to_repr(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<CMat, D::Error> {
        let repr = MatrixRepr::deserialize(d)?;
        matrix_from_repr(&repr).map_err(de::Error::custom)
    }
}
