//! Serialization helpers shared by the JSON and CSV outputs.
//!
//! Floats are written with exactly 17 significant digits so every output is
//! byte-stable and parses back to the identical bit pattern.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{ApkError, Result};

/// `x` formatted with 17 significant digits in scientific notation.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

fn number<E: serde::ser::Error>(x: f64) -> std::result::Result<serde_json::Number, E> {
    if !x.is_finite() {
        return Err(E::custom(format!("cannot serialize non-finite value {x}")));
    }
    fmt17(x).parse::<serde_json::Number>().map_err(E::custom)
}

/// `#[serde(with = "f17")]` for a single f64.
pub mod f17 {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        super::number(*x)?.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        f64::deserialize(d)
    }
}

/// `#[serde(with = "f17_vec")]` for a list of f64.
pub mod f17_vec {
    use serde::ser::SerializeSeq;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(xs: &[f64], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(xs.len()))?;
        for &x in xs {
            seq.serialize_element(&super::number::<S::Error>(x)?)?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Vec::<f64>::deserialize(d)
    }
}

/// `#[serde(with = "f17_mat")]` for a list of f64 lists.
pub mod f17_mat {
    use serde::ser::SerializeSeq;
    use serde::{Deserialize, Deserializer, Serializer};

    struct Row<'a>(&'a [f64]);

    impl serde::Serialize for Row<'_> {
        fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
            super::f17_vec::serialize(self.0, s)
        }
    }

    pub fn serialize<S: Serializer>(rows: &[Vec<f64>], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(rows.len()))?;
        for r in rows {
            seq.serialize_element(&Row(r))?;
        }
        seq.end()
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<f64>>, D::Error> {
        Vec::<Vec<f64>>::deserialize(d)
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value).map_err(|e| ApkError::Io(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Parses JSON, reporting schema violations with the offending field path.
pub fn from_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        ApkError::Schema { path, message: e.into_inner().to_string() }
    })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, to_json(value)?)?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    from_json(&std::fs::read_to_string(path)?)
}

/// Writes rows of already formatted fields as CSV.
pub fn write_csv<W: std::io::Write>(out: W, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let io = |e: csv::Error| ApkError::Io(e.to_string());
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(r).map_err(io)?;
    }
    w.flush()?;
    Ok(())
}

/// Parses a real given as a decimal literal or as an exact dyadic `p/2^q`.
pub fn parse_real(s: &str) -> Result<f64> {
    let s = s.trim();
    let bad = || ApkError::invalid(format!("cannot parse real number {s:?}"));
    if let Some((num, den)) = s.split_once('/') {
        let p: i64 = num.trim().parse().map_err(|_| bad())?;
        let q: i64 = den.trim().strip_prefix("2^").ok_or_else(bad)?.parse().map_err(|_| bad())?;
        if p.unsigned_abs() > 1 << 53 {
            return Err(ApkError::invalid(format!("numerator of {s:?} is not exactly representable")));
        }
        let x = p as f64 * crate::geometry::pow2(-q);
        if !x.is_finite() || (p != 0 && x == 0.0) {
            return Err(bad());
        }
        return Ok(x);
    }
    let x: f64 = s.parse().map_err(|_| bad())?;
    if !x.is_finite() {
        return Err(bad());
    }
    Ok(x)
}

pub fn parse_real_list(s: &str) -> Result<Vec<f64>> {
    s.split(',').filter(|t| !t.trim().is_empty()).map(parse_real).collect()
}
